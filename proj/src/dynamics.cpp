#include "nsim/dynamics.hpp"

namespace nsim {

DynamicsEngine::DynamicsEngine(const ModelConfig& config, const Rng& root) : config_(config) {
  const ArchSpec arch = config.arch();
  const int64_t e = arch.fusion_embed;
  const int64_t hd = config.hidden_dim;
  Rng table_rng = root.split("dynamics.action_table");
  action_table = randn({config.action_count, e}, table_rng, 1.0f);
  action_table.set_requires_grad(true);
  z_embed = Linear("dynamics.z_embed", config.z_dim, e, root);
  int64_t fused = 2 * e;
  if (config.use_memory) {
    m_embed = Linear("dynamics.m_embed", config.memory_d, e, root);
    fused += e;
  }
  fusion1 = Linear("dynamics.fusion1", fused, hd, root);
  fusion2 = Linear("dynamics.fusion2", hd, hd, root);

  int64_t channels = config.image_channels;
  int64_t size = config.image_size;
  for (size_t i = 0; i < arch.encoder.size(); ++i) {
    encoder.emplace_back("dynamics.encoder" + std::to_string(i), channels, arch.encoder[i], root);
    channels = arch.encoder[i].out;
    size = encoder.back().out_size(size);
  }
  encoder_out = Linear("dynamics.encoder_out", channels * size * size, hd, root);

  gates = Linear("dynamics.gates", 2 * hd, 4 * hd, root);
  auto b = gates.bias.mutable_data();
  for (int64_t k = hd; k < 2 * hd; ++k) b[static_cast<size_t>(k)] = 1.0f;
}

EngineState DynamicsEngine::initial_state(int64_t batch, const Tensor& m0) const {
  EngineState s;
  s.h = Tensor::zeros({batch, config_.hidden_dim});
  s.c = Tensor::zeros({batch, config_.hidden_dim});
  if (config_.use_memory) s.m_prev = m0.defined() ? m0 : Tensor::zeros({batch, config_.memory_d});
  return s;
}

Tensor DynamicsEngine::fusion(std::span<const int> actions, const Tensor& z, const Tensor& m) const {
  for (int a : actions) {
    if (a < 0 || a >= config_.action_count) {
      throw ContractError("fuse_inputs: action " + std::to_string(a) + " outside [0, " +
                          std::to_string(config_.action_count) + ")");
    }
  }
  if (z.rank() != 2 || z.dim(1) != config_.z_dim || z.dim(0) != static_cast<int64_t>(actions.size())) {
    throw ShapeError("fuse_inputs: z must be [B, " + std::to_string(config_.z_dim) + "], got " + shape_str(z.shape()));
  }
  std::vector<Tensor> parts{embedding(action_table, actions), z_embed(z)};
  if (config_.use_memory) {
    if (!m.defined()) throw ContractError("fuse_inputs: memory read missing");
    parts.push_back(m_embed(m));
  }
  return fusion2(leaky_relu(fusion1(concat(parts, 1))));
}

Tensor DynamicsEngine::fuse_inputs(const EngineState& state, std::span<const int> actions, const Tensor& z) const {
  return mul(state.h, fusion(actions, z, state.m_prev));
}

Tensor DynamicsEngine::encode_frame(const Tensor& x) const {
  const int64_t s = config_.image_size;
  if (x.rank() != 4 || x.dim(1) != config_.image_channels || x.dim(2) != s || x.dim(3) != s) {
    throw ShapeError("encode_frame: expected [B, 3, " + std::to_string(s) + ", " + std::to_string(s) + "], got " +
                     shape_str(x.shape()));
  }
  Tensor y = x;
  for (const Conv2d& conv : encoder) y = leaky_relu(conv(y));
  return encoder_out(reshape(y, {x.dim(0), -1}));
}

EngineState DynamicsEngine::step(const EngineState& state, std::span<const int> actions, const Tensor& z,
                                 const Tensor& x, int step_index) const {
  try {
    const int64_t hd = config_.hidden_dim;
    const Tensor v = fuse_inputs(state, actions, z);
    const Tensor s = encode_frame(x);
    const auto g = split(gates(concat({v, s}, 1)), 1, {hd, hd, hd, hd});
    const Tensor i = sigmoid(g[0]);
    const Tensor f = sigmoid(g[1]);
    const Tensor o = sigmoid(g[2]);
    EngineState next;
    next.c = add(mul(f, state.c), mul(i, tanh(g[3])));
    next.h = mul(o, tanh(next.c));
    next.m_prev = state.m_prev;
    return next;
  } catch (const NumericError& e) {
    throw NumericError("dynamics step " + std::to_string(step_index) + ": " + e.what());
  }
}

void DynamicsEngine::collect(TensorList& params) const {
  params.push_back({"dynamics.action_table", action_table});
  z_embed.collect(params);
  if (config_.use_memory) m_embed.collect(params);
  fusion1.collect(params);
  fusion2.collect(params);
  for (const Conv2d& c : encoder) c.collect(params);
  encoder_out.collect(params);
  gates.collect(params);
}

}  // namespace nsim
