#include "nsim/session.hpp"

#include <cmath>

#include "nsim/image.hpp"

namespace nsim {

Session::Session(std::shared_ptr<const Simulator> sim, const Frame& initial, uint64_t seed, int memory_n)
    : sim_(std::move(sim)), z_rng_(Rng(seed).split("z")) {
  const ModelConfig& cfg = sim_->config();
  const Frame sized = (initial.height == cfg.image_size && initial.width == cfg.image_size)
                          ? initial
                          : resize_nearest(initial, cfg.image_size, cfg.image_size);
  frame_ = frame_to_tensor(sized);
  shown_ = frame_;
  Rng memory_rng = Rng(seed).split("memory");
  NoGradScope no_grad;
  state_ = sim_->reset(1, memory_n, memory_rng);
}

Frame Session::step(int action) {
  const ModelConfig& cfg = sim_->config();
  if (action < 0 || action >= cfg.action_count) {
    throw ContractError("action " + std::to_string(action) + " outside [0, " + std::to_string(cfg.action_count) + ")");
  }
  NoGradScope no_grad;
  Rng z_rng = z_rng_;
  const Tensor z = randn({1, cfg.z_dim}, z_rng);
  const int a[1] = {action};
  SimStep s = sim_->step(state_, a, z, frame_, Tensor(), static_cast<int>(steps_));
  double err = 0.0;
  if (cfg.use_memory) {
    double mass = 0.0;
    for (float v : s.state.memory.alpha.data()) mass += v;
    err = std::abs(mass - 1.0);
    if (err > kAlphaTolerance) {
      throw StateError("memory attention lost normalisation at step " + std::to_string(steps_) + " (|sum-1| = " +
                       std::to_string(err) + ")");
    }
  }
  detail::check_finite("session frame", s.frame.data());
  Tensor shown = s.frame;
  if (swap_.defined()) {
    const auto& parts = s.render.parts;
    shown = compose_final({parts[0].mask_logit, parts[1].mask_logit}, {swap_, parts[1].content}).frame;
  }
  z_rng_ = z_rng;
  state_ = std::move(s.state);
  frame_ = s.frame;
  shown_ = shown;
  last_render_ = std::move(s.render);
  alpha_error_ = err;
  ++steps_;
  return frame();
}

void Session::set_swap(const Frame& image) {
  if (!sim_->disentangled) throw UnsupportedConfigError("component swap needs the disentangled renderer");
  const int s = sim_->config().image_size;
  swap_ = frame_to_tensor(resize_nearest(image, s, s));
}

void Session::clear_swap() { swap_ = Tensor(); }

}  // namespace nsim
