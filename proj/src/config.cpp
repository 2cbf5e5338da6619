#include "nsim/config.hpp"

namespace nsim {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.preset = "paper";
  c.z_dim = 32;
  c.hidden_dim = 512;
  c.image_size = 84;
  c.memory_n = 39;
  c.memory_n_eval = 99;
  c.memory_d = 512;
  c.temporal_levels = 2;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.preset = "tiny";
  c.z_dim = 2;
  c.hidden_dim = 8;
  c.memory_n = 5;
  c.memory_n_eval = 9;
  c.memory_d = 4;
  return c;
}

ArchSpec ModelConfig::arch() const {
  ArchSpec a;
  if (preset == "paper") {
    a.encoder = {{64, 3, 2, 0}, {64, 3, 1, 0}, {64, 3, 2, 0}, {64, 3, 1, 0}, {64, 3, 2, 0}};
    a.fusion_embed = 128;
    a.memory_mlp = 512;
    a.simple_seed_channels = 512;
    a.simple_seed_size = 7;
    a.simple_decoder = {{512, 3, 1, 0, 0}, {256, 3, 2, 0, 1}, {128, 4, 2, 0, 0}, {64, 4, 2, 0, 0}, {3, 3, 1, 0, 0}};
    a.seed_channels = 128;
    a.seed_size = 3;
    a.attribute_decoder = {{512, 3, 1, 0, 0}, {33, 3, 1, 0, 0}};
    a.type_dim = 32;
    a.sketch_decoder = {{256, 3, 1, 0, 0}, {128, 3, 2, 0, 1}};
    a.content_decoder = {{64, 4, 2, 0, 0}, {32, 4, 2, 0, 0}};
    a.disc_encoder = {{16, 5, 2, 0}, {32, 5, 2, 0}, {64, 3, 2, 0}, {64, 3, 2, 0}};
    a.patch_head = {{64, 2, 1, 1}, {1, 1, 2, 1}};
    a.full_head = {{64, 2, 1, 0}, {1, 2, 1, 0}};
    a.action_dim = 32;
    a.merge_kernel = 3;
    a.temporal_trunk = {{64, 2, 2, 1, 1, 0, 0}, {128, 2, 2, 1, 1, 0, 0}};
    a.temporal_levels = {
        {false, {}, {1, 4, 1, 2, 1, 0, 0}},
        {true, {256, 2, 1, 2, 1, 0, 0}, {1, 8, 1, 1, 1, 0, 0}},
        {true, {512, 3, 1, 2, 1, 0, 0}, {1, 7, 1, 1, 1, 0, 0}},
    };
  } else if (preset == "tiny") {
    a.encoder = {{4, 3, 2, 1}, {4, 3, 2, 1}, {4, 3, 2, 1}};
    a.fusion_embed = 4;
    a.memory_mlp = 8;
    a.simple_seed_channels = 4;
    a.simple_seed_size = 4;
    a.simple_decoder = {{4, 4, 2, 1, 0}, {4, 4, 2, 1, 0}, {3, 3, 1, 1, 0}};
    a.seed_channels = 4;
    a.seed_size = 3;
    a.attribute_decoder = {{4, 3, 1, 0, 0}, {5, 3, 1, 0, 0}};
    a.type_dim = 4;
    a.sketch_decoder = {{4, 2, 1, 0, 0}, {4, 3, 1, 1, 0}};
    a.content_decoder = {{4, 4, 2, 1, 0}, {4, 3, 1, 0, 0}};
    a.disc_encoder = {{4, 4, 2, 1}, {4, 4, 2, 1}, {4, 3, 1, 0}};
    a.patch_head = {{4, 3, 1, 1}, {1, 1, 1, 0}};
    a.full_head = {{4, 2, 1, 0}, {1, 1, 1, 0}};
    a.action_dim = 4;
    a.merge_kernel = 2;
    a.temporal_trunk = {{4, 2, 2, 1, 1, 0, 0}, {4, 2, 1, 1, 1, 0, 0}};
    a.temporal_levels = {
        {false, {}, {1, 4, 1, 2, 1, 0, 0}},
        {true, {4, 2, 1, 2, 1, 0, 0}, {1, 3, 1, 1, 1, 0, 0}},
    };
  } else {
    a.encoder = {{16, 3, 2, 1}, {32, 3, 2, 1}, {32, 3, 2, 1}};
    a.fusion_embed = 16;
    a.memory_mlp = 32;
    a.simple_seed_channels = 32;
    a.simple_seed_size = 4;
    a.simple_decoder = {{32, 4, 2, 1, 0}, {16, 4, 2, 1, 0}, {3, 3, 1, 1, 0}};
    a.seed_channels = 32;
    a.seed_size = 3;
    a.attribute_decoder = {{32, 3, 1, 0, 0}, {33, 3, 1, 0, 0}};
    a.type_dim = 32;
    a.sketch_decoder = {{32, 2, 1, 0, 0}, {32, 3, 1, 1, 0}};
    a.content_decoder = {{32, 4, 2, 1, 0}, {16, 3, 1, 0, 0}};
    a.disc_encoder = {{16, 4, 2, 1}, {32, 4, 2, 1}, {32, 3, 1, 0}};
    a.patch_head = {{32, 3, 1, 1}, {1, 1, 1, 0}};
    a.full_head = {{32, 2, 1, 0}, {1, 1, 1, 0}};
    a.action_dim = 32;
    a.merge_kernel = 2;
    a.temporal_trunk = {{32, 2, 2, 1, 1, 0, 0}, {64, 2, 1, 1, 1, 0, 0}};
    a.temporal_levels = {
        {false, {}, {1, 4, 1, 2, 1, 0, 0}},
        {true, {64, 2, 1, 2, 1, 0, 0}, {1, 3, 1, 1, 1, 0, 0}},
    };
  }
  return a;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (preset != "desk" && preset != "paper" && preset != "tiny") fail("unknown preset '" + preset + "'");
  if (action_count <= 0 || z_dim <= 0 || hidden_dim <= 0 || image_size <= 0 || memory_d <= 0) {
    fail("dimensions must be positive");
  }
  if (image_channels != 3) fail("image_channels must be 3");
  if (memory_n <= 0 || memory_n % 2 == 0 || memory_n_eval <= 0 || memory_n_eval % 2 == 0) {
    fail("memory block sizes must be odd and positive");
  }
  if (use_disentangled_renderer && !use_memory) fail("the disentangled renderer requires memory");
  if (static_cast<int>(counterparts.size()) != action_count) fail("counterpart table size differs from action_count");
  if (static_cast<int>(action_names.size()) != action_count) fail("action_names size differs from action_count");
  for (int a = 0; a < action_count; ++a) {
    const int b = counterparts[static_cast<size_t>(a)];
    if (b == -1) continue;
    if (b < 0 || b >= action_count || counterparts[static_cast<size_t>(b)] != a || b == a) {
      fail("counterpart table is not an involution without fixed points at action " + std::to_string(a));
    }
  }
  const int levels = static_cast<int>(arch().temporal_levels.size());
  if (temporal_levels < 1 || temporal_levels > levels) {
    fail("temporal_levels must be in [1, " + std::to_string(levels) + "]");
  }
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.sequence_length = 18;
  c.batch_size = 12;
  c.epochs = 50;
  c.warmup_initial = 9;
  c.warmup_final_epoch = 20;
  c.lr = 1e-4f;
  return c;
}

void TrainConfig::validate() const {
  if (sequence_length < 1 || batch_size < 1 || epochs < 0 || max_iterations < 0) {
    throw ContractError("train config: sequence_length and batch_size must be positive");
  }
  if (warmup_initial < 1 || warmup_final_epoch < 1) throw ContractError("train config: warm-up values must be >= 1");
  if (lr <= 0.0f) throw ContractError("train config: lr must be positive");
}

namespace {

std::string attention_name(ObjectAttention a) { return a == ObjectAttention::kSigmoid ? "sigmoid" : "softmax"; }

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"action_count", c.action_count},
                     {"action_names", c.action_names},
                     {"counterparts", c.counterparts},
                     {"z_dim", c.z_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"image_size", c.image_size},
                     {"image_channels", c.image_channels},
                     {"memory_n", c.memory_n},
                     {"memory_n_eval", c.memory_n_eval},
                     {"memory_d", c.memory_d},
                     {"use_memory", c.use_memory},
                     {"use_disentangled_renderer", c.use_disentangled_renderer},
                     {"attention", attention_name(c.attention)},
                     {"temporal_levels", c.temporal_levels}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string preset = j.value("preset", std::string("desk"));
  ModelConfig d = preset == "paper" ? ModelConfig::paper() : preset == "tiny" ? ModelConfig::tiny() : ModelConfig::desk();
  d.preset = j.value("preset", d.preset);
  d.action_count = j.value("action_count", d.action_count);
  d.action_names = j.value("action_names", d.action_names);
  d.counterparts = j.value("counterparts", d.counterparts);
  d.z_dim = j.value("z_dim", d.z_dim);
  d.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  d.image_size = j.value("image_size", d.image_size);
  d.image_channels = j.value("image_channels", d.image_channels);
  d.memory_n = j.value("memory_n", d.memory_n);
  d.memory_n_eval = j.value("memory_n_eval", d.memory_n_eval);
  d.memory_d = j.value("memory_d", d.memory_d);
  d.use_memory = j.value("use_memory", d.use_memory);
  d.use_disentangled_renderer = j.value("use_disentangled_renderer", d.use_disentangled_renderer);
  d.attention = j.value("attention", std::string("softmax")) == "sigmoid" ? ObjectAttention::kSigmoid
                                                                           : ObjectAttention::kSoftmax;
  d.temporal_levels = j.value("temporal_levels", d.temporal_levels);
  c = std::move(d);
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda_action", w.lambda_action}, {"lambda_info", w.lambda_info},
                     {"lambda_recon", w.lambda_recon},   {"lambda_feat", w.lambda_feat},
                     {"lambda_cycle", w.lambda_cycle},   {"gamma_r1", w.gamma_r1},
                     {"mask_reg", w.mask_reg}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  d.lambda_action = j.value("lambda_action", d.lambda_action);
  d.lambda_info = j.value("lambda_info", d.lambda_info);
  d.lambda_recon = j.value("lambda_recon", d.lambda_recon);
  d.lambda_feat = j.value("lambda_feat", d.lambda_feat);
  d.lambda_cycle = j.value("lambda_cycle", d.lambda_cycle);
  d.gamma_r1 = j.value("gamma_r1", d.gamma_r1);
  d.mask_reg = j.value("mask_reg", d.mask_reg);
  w = d;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"sequence_length", c.sequence_length},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"max_iterations", c.max_iterations},
                     {"warmup_initial", c.warmup_initial},
                     {"warmup_final_epoch", c.warmup_final_epoch},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"seed", c.seed},
                     {"checkpoint_interval", c.checkpoint_interval},
                     {"weights", c.weights}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  d.sequence_length = j.value("sequence_length", d.sequence_length);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.epochs = j.value("epochs", d.epochs);
  d.max_iterations = j.value("max_iterations", d.max_iterations);
  d.warmup_initial = j.value("warmup_initial", d.warmup_initial);
  d.warmup_final_epoch = j.value("warmup_final_epoch", d.warmup_final_epoch);
  d.lr = j.value("lr", d.lr);
  d.beta1 = j.value("beta1", d.beta1);
  d.beta2 = j.value("beta2", d.beta2);
  d.seed = j.value("seed", d.seed);
  d.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
  if (j.contains("weights")) d.weights = j.at("weights").get<LossWeights>();
  c = d;
}

}  // namespace nsim
