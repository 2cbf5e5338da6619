#include "nsim/play.hpp"

#include "nsim/checkpoint.hpp"
#include "nsim/image.hpp"
#include "nsim/training.hpp"

namespace nsim {

using nlohmann::json;

SessionManager::SessionManager(std::shared_ptr<const Simulator> sim, PlayOptions options)
    : sim_(std::move(sim)), options_(std::move(options)) {
  memory_n_ = options_.memory_n > 0 ? options_.memory_n : sim_->config().memory_n_eval;
}

std::unique_ptr<SessionManager> SessionManager::from_checkpoint(const std::filesystem::path& path, PlayOptions options) {
  return std::make_unique<SessionManager>(load_generator(load_checkpoint(path)), std::move(options));
}

SessionManager::Created SessionManager::create(uint64_t seed) {
  Frame initial;
  if (!options_.starts.empty()) {
    Rng rng = Rng(seed).split("start");
    initial = options_.starts[static_cast<size_t>(rng.uniform_int(static_cast<int>(options_.starts.size())))].frames.front();
  } else {
    initial = generate_maze(seed, options_.env).observe();
  }
  auto entry = std::make_shared<Entry>(Session(sim_, initial, seed, memory_n_));
  Created out;
  out.frame = entry->session.frame();
  std::lock_guard lock(mu_);
  if (sessions_.size() >= options_.max_sessions) throw StateError("session limit reached");
  out.id = "s" + std::to_string(next_id_++);
  sessions_.emplace(out.id, std::move(entry));
  return out;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
  return it->second;
}

std::pair<uint64_t, Frame> SessionManager::step(const std::string& id, int action) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  Frame f = e->session.step(action);
  return {e->session.steps(), std::move(f)};
}

void SessionManager::swap(const std::string& id, const Frame& image) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  e->session.set_swap(image);
}

void SessionManager::clear_swap(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  e->session.clear_swap();
}

void SessionManager::close(const std::string& id) {
  std::lock_guard lock(mu_);
  if (sessions_.erase(id) == 0) throw NotFoundError("no session '" + id + "'");
}

size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

namespace {

json error(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

std::string frame_b64(const Frame& f) { return base64_encode(encode_png(f)); }

const std::string& require_string(const json& m, const char* key) {
  if (!m.contains(key) || !m[key].is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return m[key].get_ref<const std::string&>();
}

}  // namespace

json handle_message(SessionManager& manager, const json& m) {
  try {
    if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) {
      return error("bad_request", "message must be an object with a string 'type'");
    }
    const std::string& type = m["type"].get_ref<const std::string&>();
    if (type == "create") {
      uint64_t seed = manager.options().default_seed;
      if (m.contains("seed")) {
        if (!m["seed"].is_number_unsigned() && !(m["seed"].is_number_integer() && m["seed"].get<int64_t>() >= 0)) {
          return error("bad_request", "field 'seed' must be an unsigned integer");
        }
        seed = m["seed"].get<uint64_t>();
      }
      const auto created = manager.create(seed);
      const ModelConfig& cfg = manager.simulator().config();
      return {{"type", "session"},     {"id", created.id},
              {"width", cfg.image_size}, {"height", cfg.image_size},
              {"actions", cfg.action_names}, {"frame", frame_b64(created.frame)}};
    }
    if (type == "action") {
      const std::string& id = require_string(m, "id");
      if (!m.contains("action") || !m["action"].is_number_integer()) {
        return error("bad_request", "field 'action' must be an integer");
      }
      const auto [step, frame] = manager.step(id, m["action"].get<int>());
      return {{"type", "frame"}, {"id", id}, {"step", step}, {"frame", frame_b64(frame)}};
    }
    if (type == "swap") {
      const std::string& id = require_string(m, "id");
      const Frame image = decode_png(base64_decode(require_string(m, "png_base64")));
      manager.swap(id, image);
      return {{"type", "ack"}, {"id", id}, {"op", "swap"}};
    }
    if (type == "clear_swap") {
      const std::string& id = require_string(m, "id");
      manager.clear_swap(id);
      return {{"type", "ack"}, {"id", id}, {"op", "clear_swap"}};
    }
    if (type == "close") {
      const std::string& id = require_string(m, "id");
      manager.close(id);
      return {{"type", "ack"}, {"id", id}, {"op", "close"}};
    }
    return error("bad_request", "unknown message type '" + type + "'");
  } catch (const NotFoundError& e) {
    return error("not_found", e.what());
  } catch (const UnsupportedConfigError& e) {
    return error("unsupported", e.what());
  } catch (const FormatError& e) {
    return error("bad_image", e.what());
  } catch (const ContractError& e) {
    return error("invalid_action", e.what());
  } catch (const std::invalid_argument& e) {
    return error("bad_request", e.what());
  } catch (const std::exception& e) {
    return error("internal", e.what());
  }
}

std::string handle_text(SessionManager& manager, std::string_view text) {
  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error& e) {
    return error("bad_request", std::string("invalid JSON: ") + e.what()).dump();
  }
  return handle_message(manager, m).dump();
}

}  // namespace nsim
