#pragma once

#include <span>

#include "nsim/config.hpp"
#include "nsim/nn.hpp"

namespace nsim {

/// N x N block of D-vectors with a soft location attention, batched over rollouts.
struct MemoryState {
  int n = 0;
  Tensor M;      // [B, N*N, D]
  Tensor alpha;  // [B, N, N]

  int64_t batch() const { return alpha.dim(0); }
};

/// Attention shift: alpha' = g*conv(alpha, w) + (1-g)*alpha, renormalized.
Tensor shift_attention(const Tensor& alpha, const Tensor& kernel, const Tensor& gate);
/// M^i <- M^i (1 - alpha^i e) + alpha^i d for every location i.
Tensor memory_write(const Tensor& M, const Tensor& alpha, const Tensor& erase, const Tensor& add);
/// m = sum_i alpha^i M^i -> [B, D].
Tensor memory_read(const Tensor& M, const Tensor& alpha);

class MemoryModule {
 public:
  MemoryModule(const ModelConfig& config, const Rng& root);

  /// Fresh block: M ~ N(0, I) per sample, alpha one-hot at the centre.
  MemoryState initial_state(int64_t batch, int n, Rng& rng) const;
  MemoryState resize_block(const MemoryState& state, int new_n, Rng& rng) const;

  /// softmax(K(a)) as [B, 3, 3]; counterpart actions reuse the kernel of their
  /// partner flipped along both axes.
  Tensor shift_kernel(std::span<const int> actions) const;
  Tensor gate(const Tensor& h) const;  // [B, 1]
  std::pair<Tensor, Tensor> erase_add(const Tensor& h) const;

  struct StepOutput {
    MemoryState state;
    Tensor read;  // m_t
    Tensor kernel;
    Tensor gate;
  };
  StepOutput step(const MemoryState& state, std::span<const int> actions, const Tensor& h) const;

  Tensor read(const MemoryState& state) const { return memory_read(state.M, state.alpha); }

  void collect(TensorList& params) const;

  int canonical(int action) const { return canonical_[static_cast<size_t>(action)]; }
  bool flipped(int action) const { return flipped_[static_cast<size_t>(action)]; }

  Linear kernel1;
  Linear kernel2;
  Linear gate1;
  Linear gate2;
  Linear erase_add_net;

 private:
  ModelConfig config_;
  std::vector<int> canonical_;
  std::vector<bool> flipped_;
};

}  // namespace nsim
