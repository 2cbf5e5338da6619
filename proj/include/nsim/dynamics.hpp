#pragma once

#include <span>

#include "nsim/config.hpp"
#include "nsim/nn.hpp"

namespace nsim {

/// Recurrent state of a batch of rollouts. m_prev is undefined without memory.
struct EngineState {
  Tensor h;       // [B, hidden]
  Tensor c;       // [B, hidden]
  Tensor m_prev;  // [B, memory_d]
};

/// Action-conditioned LSTM: v = h ⊙ H(a, z, m), s = C(x), fused gates over (v, s).
class DynamicsEngine {
 public:
  DynamicsEngine(const ModelConfig& config, const Rng& root);

  EngineState initial_state(int64_t batch, const Tensor& m0 = Tensor()) const;

  /// H(a, z, m): per-input embeddings, concatenated, then a two-layer MLP.
  Tensor fusion(std::span<const int> actions, const Tensor& z, const Tensor& m) const;
  Tensor fuse_inputs(const EngineState& state, std::span<const int> actions, const Tensor& z) const;
  /// s = C(x) for x [B, 3, S, S].
  Tensor encode_frame(const Tensor& x) const;
  EngineState step(const EngineState& state, std::span<const int> actions, const Tensor& z, const Tensor& x,
                   int step_index = 0) const;

  void collect(TensorList& params) const;

  // Exposed so tests can force weights.
  Tensor action_table;  // [A, E]
  Linear z_embed;
  Linear m_embed;
  Linear fusion1;
  Linear fusion2;
  std::vector<Conv2d> encoder;
  Linear encoder_out;
  Linear gates;  // [2*hidden -> 4*hidden], order i, f, o, c

 private:
  ModelConfig config_;
};

}  // namespace nsim
