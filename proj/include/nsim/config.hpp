#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nsim/nn.hpp"

namespace nsim {

enum class ObjectAttention { kSoftmax, kSigmoid };

struct TemporalLevelSpec {
  bool has_down = false;  // level 1 reads the trunk directly
  Conv3dSpec down;
  Conv3dSpec head;
};

/// Layer tables for one preset. Derived from the preset name, never serialized.
struct ArchSpec {
  // Dynamics engine frame encoder C (each conv followed by LeakyReLU) then Linear(hidden).
  std::vector<ConvSpec> encoder;
  int fusion_embed = 16;  // per-input embedding width inside H
  int memory_mlp = 32;    // hidden width of K and G

  // Simple renderer: Linear -> reshape(seed) -> LeakyReLU -> transposed convs.
  int simple_seed_channels = 32;
  int simple_seed_size = 4;
  std::vector<ConvSpec> simple_decoder;

  // Disentangled renderer.
  int seed_channels = 32;
  int seed_size = 3;
  std::vector<ConvSpec> attribute_decoder;  // ends with type_dim + 1 channels
  int type_dim = 32;
  std::vector<ConvSpec> sketch_decoder;
  std::vector<ConvSpec> content_decoder;
  int final_kernel = 3;
  int final_padding = 0;

  // Discriminators.
  std::vector<ConvSpec> disc_encoder;  // each conv followed by BN + LeakyReLU
  std::vector<ConvSpec> patch_head;    // BN + LeakyReLU between layers
  std::vector<ConvSpec> full_head;
  int action_dim = 32;
  int merge_kernel = 2;
  std::vector<Conv3dSpec> temporal_trunk;
  std::vector<TemporalLevelSpec> temporal_levels;
};

struct ModelConfig {
  std::string preset = "desk";
  int action_count = 5;
  std::vector<std::string> action_names = {"left", "right", "up", "down", "stay"};
  // counterparts[a] is the inverse action of a, or -1.
  std::vector<int> counterparts = {1, 0, 3, 2, -1};
  int z_dim = 8;
  int hidden_dim = 64;
  int image_size = 16;
  int image_channels = 3;
  int memory_n = 9;
  int memory_n_eval = 25;
  int memory_d = 32;
  bool use_memory = true;
  bool use_disentangled_renderer = true;
  ObjectAttention attention = ObjectAttention::kSoftmax;
  int temporal_levels = 2;

  static ModelConfig desk();
  static ModelConfig paper();
  // Desk geometry with a handful of channels per layer, for derivative checks.
  static ModelConfig tiny();

  ArchSpec arch() const;
  void validate() const;
};

struct LossWeights {
  float lambda_action = 1.0f;
  float lambda_info = 1.0f;
  float lambda_recon = 0.05f;
  float lambda_feat = 0.05f;
  float lambda_cycle = 0.05f;
  float gamma_r1 = 10.0f;
  float mask_reg = 0.01f;
};

struct TrainConfig {
  int sequence_length = 8;
  int batch_size = 4;
  int epochs = 1;
  int max_iterations = 0;  // 0 runs all epochs
  int warmup_initial = 4;
  int warmup_final_epoch = 10;
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  uint64_t seed = 0;
  int checkpoint_interval = 0;  // iterations; 0 saves only init and final
  LossWeights weights;

  static TrainConfig desk();
  static TrainConfig paper();
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace nsim
