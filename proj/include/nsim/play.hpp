#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nsim/session.hpp"

namespace nsim {

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlayOptions {
  int memory_n = 0;              // 0 uses the model's evaluation size
  std::vector<Episode> starts;   // held-out episodes for initial frames; empty uses fresh mazes
  EnvConfig env;
  size_t max_sessions = 256;
  uint64_t default_seed = 0;    // used by create messages without a seed
};

/// Live sessions over one read-only simulator. Each session is driven under its own lock.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const Simulator> sim, PlayOptions options = {});
  static std::unique_ptr<SessionManager> from_checkpoint(const std::filesystem::path& path, PlayOptions options = {});

  struct Created {
    std::string id;
    Frame frame;
  };
  Created create(uint64_t seed);
  /// (step counter after the step, frame)
  std::pair<uint64_t, Frame> step(const std::string& id, int action);
  void swap(const std::string& id, const Frame& image);
  void clear_swap(const std::string& id);
  void close(const std::string& id);

  size_t size() const;
  const Simulator& simulator() const { return *sim_; }
  int memory_n() const { return memory_n_; }
  const PlayOptions& options() const { return options_; }
  /// Runs `fn` on a session under its lock (for tests and monitors).
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto e = find(id);
    std::lock_guard lock(e->mu);
    return fn(e->session);
  }

 private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    std::mutex mu;
    Session session;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;

  std::shared_ptr<const Simulator> sim_;
  PlayOptions options_;
  int memory_n_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  uint64_t next_id_ = 1;
};

/// Processes one client message; failures come back as {"type":"error"} objects.
nlohmann::json handle_message(SessionManager& manager, const nlohmann::json& message);
std::string handle_text(SessionManager& manager, std::string_view text);

}  // namespace nsim
