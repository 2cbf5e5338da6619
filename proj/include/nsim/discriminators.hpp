#pragma once

#include <span>
#include <vector>

#include "nsim/config.hpp"
#include "nsim/nn.hpp"

namespace nsim {

struct SingleFrameLogits {
  Tensor patch;  // [B, 1, P, P]
  Tensor full;   // [B, 1]
};

struct ActionAux {
  Tensor action_logits;  // psi, [B, action_count]
  Tensor z_pred;         // phi, [B, z_dim]
};

/// Samples a negative action uniformly from all actions except `action`.
int sample_negative_action(int action, int action_count, Rng& rng);

class Discriminators {
 public:
  Discriminators(const ModelConfig& config, const Rng& root);

  /// Shared per-frame encoder: frames [N, 3, S, S] -> features [N, C, s, s].
  Tensor encode_shared(const Tensor& frames, BnMode mode) const;
  SingleFrameLogits judge_single_frame(const Tensor& features, BnMode mode) const;
  /// Action-consistency logit [B, 1] for (x_t, x_{t+1}, a).
  Tensor judge_action_pair(const Tensor& feat_t, const Tensor& feat_t1, std::span<const int> actions, BnMode mode) const;
  /// psi and phi: the action-pair network with a zero action embedding and its own last layer.
  ActionAux judge_aux(const Tensor& feat_t, const Tensor& feat_t1, BnMode mode) const;
  /// features [B*T, C, s, s] (sample-major) -> one [B, n_level] logit tensor per level.
  std::vector<Tensor> judge_temporal(const Tensor& features, int64_t batch, int64_t length, BnMode mode) const;

  /// Shortest sequence for which every configured level emits at least one logit.
  int64_t temporal_min_length() const;
  /// Receptive field, in frames, of each configured level's logits.
  std::vector<int64_t> temporal_receptive_fields() const;
  int levels() const { return config_.temporal_levels; }
  int action_count() const { return config_.action_count; }

  void collect(TensorList& params) const;
  void collect_buffers(TensorList& buffers) const;

  struct ConvBn {
    Conv2d conv;
    BatchNorm bn;
  };
  struct Conv3dBn {
    Conv3d conv;
    BatchNorm bn;
  };
  std::vector<ConvBn> encoder;
  ConvBn patch_mid;
  Conv2d patch_out;
  ConvBn full_mid;
  Conv2d full_out;
  Linear action_embed;
  ConvBn merge;
  Linear pair_hidden;
  BatchNorm pair_bn;
  Linear pair_out;
  Linear psi_out;
  Linear phi_out;
  std::vector<Conv3dBn> temporal_trunk;
  std::vector<Conv3dBn> temporal_down;  // index l-1 for level l >= 2
  std::vector<Conv3d> temporal_heads;

 private:
  Tensor pair_features(const Tensor& feat_t, const Tensor& feat_t1, const Tensor& action_embedding, BnMode mode) const;

  ModelConfig config_;
  ArchSpec arch_;
  int64_t feature_channels_ = 0;
  int64_t feature_size_ = 0;
};

}  // namespace nsim
