#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nsim/play.hpp"

namespace nsim {

/// WebSocket endpoint: one JSON message in, one JSON message out, per text frame.
/// Each connection is served by its own thread; sessions it created close with it.
class PlayServer {
 public:
  explicit PlayServer(SessionManager& manager);
  ~PlayServer();
  PlayServer(const PlayServer&) = delete;
  PlayServer& operator=(const PlayServer&) = delete;

  /// Binds and starts accepting; port 0 picks a free port. Returns the bound port.
  uint16_t start(const std::string& address, uint16_t port);
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();
  uint16_t port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SessionManager& manager_;
  uint16_t port_ = 0;
};

}  // namespace nsim
