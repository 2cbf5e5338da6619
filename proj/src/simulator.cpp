#include "nsim/simulator.hpp"

namespace nsim {

namespace {

Rng model_root(uint64_t seed) { return Rng(seed).split("generator"); }

}  // namespace

Simulator::Simulator(const ModelConfig& config, uint64_t seed)
    : engine((config.validate(), config), model_root(seed)), memory(config, model_root(seed)), config_(config) {
  if (config.use_disentangled_renderer) {
    disentangled = std::make_unique<DisentangledRenderer>(config, model_root(seed));
  } else {
    simple = std::make_unique<SimpleRenderer>(config, model_root(seed));
  }
}

SimState Simulator::reset(int64_t batch, int memory_n, Rng& memory_rng) const {
  SimState s;
  Tensor m0;
  if (config_.use_memory) {
    s.memory = memory.initial_state(batch, memory_n, memory_rng);
    m0 = memory.read(s.memory);
  }
  s.engine = engine.initial_state(batch, m0);
  return s;
}

SimStep Simulator::step(const SimState& state, std::span<const int> actions, const Tensor& z, const Tensor& x,
                        const Tensor& static_override, int step_index) const {
  SimStep out;
  out.state.engine = engine.step(state.engine, actions, z, x, step_index);
  const Tensor& h = out.state.engine.h;
  if (config_.use_memory) {
    auto mem = memory.step(state.memory, actions, h);
    out.state.memory = std::move(mem.state);
    out.read = mem.read;
    out.state.engine.m_prev = mem.read;
  }
  if (disentangled) {
    out.render = disentangled->render(out.read, h, static_override);
    out.frame = out.render.frame;
  } else {
    if (static_override.defined()) throw UnsupportedConfigError("component swap needs the disentangled renderer");
    out.frame = simple->render(h);
  }
  return out;
}

Rollout Simulator::rollout(const std::vector<Tensor>& real_frames, const std::vector<std::vector<int>>& actions,
                           const std::vector<Tensor>& zs, int real_inputs, Rng& memory_rng) const {
  const size_t t_len = actions.size();
  if (t_len == 0 || zs.size() != t_len || real_frames.empty()) {
    throw ContractError("rollout: need T >= 1 actions, T noise vectors and at least x_0");
  }
  const int64_t b = real_frames[0].dim(0);
  SimState state = reset(b, config_.memory_n, memory_rng);
  Rollout r;
  Tensor x = real_frames[0];
  for (size_t t = 0; t < t_len; ++t) {
    if (t > 0) {
      const bool use_real = static_cast<int>(t) < real_inputs && t < real_frames.size();
      x = use_real ? real_frames[t] : r.frames.back();
    }
    SimStep s = step(state, actions[t], zs[t], x, Tensor(), static_cast<int>(t));
    r.frames.push_back(s.frame);
    r.hidden.push_back(s.state.engine.h);
    if (config_.use_memory) {
      r.reads.push_back(s.read);
      r.alphas.push_back(s.state.memory.alpha);
    }
    if (disentangled) r.masks.push_back(s.render.masks);
    state = std::move(s.state);
  }
  r.final_memory = state.memory;
  return r;
}

Tensor Simulator::render_component_alone(int k, const Tensor& c) const {
  if (!disentangled) throw UnsupportedConfigError("render_component_alone needs the disentangled renderer");
  return disentangled->render_component_alone(k, c);
}

TensorList Simulator::params() const {
  TensorList p;
  engine.collect(p);
  if (config_.use_memory) memory.collect(p);
  if (disentangled) disentangled->collect(p);
  if (simple) simple->collect(p);
  return p;
}

}  // namespace nsim
