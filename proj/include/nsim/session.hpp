#pragma once

#include <cstdint>
#include <memory>

#include "nsim/env.hpp"
#include "nsim/simulator.hpp"

namespace nsim {

/// One interactive rollout of a shared, read-only simulator.
class Session {
 public:
  Session(std::shared_ptr<const Simulator> sim, const Frame& initial, uint64_t seed, int memory_n);

  /// Advances one step with a z drawn from the session stream. Invalid actions
  /// throw ContractError and leave the session untouched.
  Frame step(int action);

  /// Static content replaced by `image` (resized to the frame size) in the frames
  /// returned by later steps. The engine keeps consuming the unswapped frame.
  void set_swap(const Frame& image);
  void clear_swap();
  bool swapping() const { return swap_.defined(); }

  /// Last frame as shown to the player (swap applied).
  Frame frame() const { return tensor_to_frame(shown_); }
  const Tensor& shown_tensor() const { return shown_; }
  /// Last frame as fed back into the engine.
  const Tensor& frame_tensor() const { return frame_; }
  const RenderOutput& last_render() const { return last_render_; }
  uint64_t steps() const { return steps_; }
  int memory_n() const { return state_.memory.n; }
  /// |sum(alpha) - 1| after the last step.
  double alpha_error() const { return alpha_error_; }
  const Simulator& simulator() const { return *sim_; }

  static constexpr double kAlphaTolerance = 1e-4;

 private:
  std::shared_ptr<const Simulator> sim_;
  SimState state_;
  Tensor frame_;
  Tensor shown_;
  Tensor swap_;
  RenderOutput last_render_;
  Rng z_rng_;
  uint64_t steps_ = 0;
  double alpha_error_ = 0.0;
};

}  // namespace nsim
