#pragma once

#include <memory>
#include <span>
#include <vector>

#include "nsim/config.hpp"
#include "nsim/dynamics.hpp"
#include "nsim/memory.hpp"
#include "nsim/renderer.hpp"

namespace nsim {

/// Full simulator state of a batch of rollouts.
struct SimState {
  EngineState engine;
  MemoryState memory;  // unused without memory
};

struct SimStep {
  SimState state;
  Tensor frame;      // x_{t+1} [B, 3, S, S]
  Tensor read;       // m_t (undefined without memory)
  RenderOutput render;
};

/// Everything a T-step rollout leaves behind for the losses.
struct Rollout {
  std::vector<Tensor> frames;   // generated x_1..x_T
  std::vector<Tensor> hidden;   // h_1..h_T
  std::vector<Tensor> reads;    // m_1..m_T
  std::vector<Tensor> alphas;   // alpha_1..alpha_T
  std::vector<Tensor> masks;    // eta per step (disentangled only)
  MemoryState final_memory;
};

/// Dynamics engine + memory + renderer: the generator.
class Simulator {
 public:
  Simulator(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// h0 = c0 = 0, fresh memory of size n, m_0 = read(alpha_0, M).
  SimState reset(int64_t batch, int memory_n, Rng& memory_rng) const;
  /// One step from `x` (the previous frame, real or generated).
  SimStep step(const SimState& state, std::span<const int> actions, const Tensor& z, const Tensor& x,
               const Tensor& static_override = Tensor(), int step_index = 0) const;

  /// frames_in[t] is the real x_t; actions[t] and zs[t] are per-batch. The first
  /// `real_inputs` steps consume real frames, later ones the model's own output.
  Rollout rollout(const std::vector<Tensor>& real_frames, const std::vector<std::vector<int>>& actions,
                  const std::vector<Tensor>& zs, int real_inputs, Rng& memory_rng) const;

  /// X^k of one renderer component with the other input zeroed.
  Tensor render_component_alone(int k, const Tensor& c) const;

  TensorList params() const;

  DynamicsEngine engine;
  MemoryModule memory;
  std::unique_ptr<SimpleRenderer> simple;
  std::unique_ptr<DisentangledRenderer> disentangled;

 private:
  ModelConfig config_;
};

}  // namespace nsim
