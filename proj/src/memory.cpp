#include "nsim/memory.hpp"

namespace nsim {

namespace {

Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0f), 1.0f); }

}  // namespace

Tensor shift_attention(const Tensor& alpha, const Tensor& kernel, const Tensor& gate) {
  const int64_t b = alpha.dim(0);
  const Tensor g = reshape(gate, {b, 1, 1});
  const Tensor mixed = add(mul(g, filter3x3(alpha, kernel)), mul(one_minus(g), alpha));
  const Tensor total = add_scalar(sum(reshape(mixed, {b, -1}), 1, true), 1e-12f);
  return div(mixed, reshape(total, {b, 1, 1}));
}

Tensor memory_write(const Tensor& M, const Tensor& alpha, const Tensor& erase, const Tensor& add_vec) {
  const int64_t b = M.dim(0);
  const int64_t d = M.dim(2);
  const Tensor a = reshape(alpha, {b, -1, 1});
  if (a.dim(1) != M.dim(1)) throw ShapeError("memory_write: attention size differs from block size");
  const Tensor e = reshape(erase, {b, 1, d});
  const Tensor v = reshape(add_vec, {b, 1, d});
  return add(mul(M, one_minus(mul(a, e))), mul(a, v));
}

Tensor memory_read(const Tensor& M, const Tensor& alpha) {
  const int64_t b = M.dim(0);
  return reshape(matmul(reshape(alpha, {b, 1, -1}), M), {b, M.dim(2)});
}

MemoryModule::MemoryModule(const ModelConfig& config, const Rng& root) : config_(config) {
  const ArchSpec arch = config.arch();
  const int64_t hidden = arch.memory_mlp;
  kernel1 = Linear("memory.kernel1", config.action_count, hidden, root);
  kernel2 = Linear("memory.kernel2", hidden, 9, root);
  gate1 = Linear("memory.gate1", config.hidden_dim, hidden, root);
  gate2 = Linear("memory.gate2", hidden, 1, root);
  erase_add_net = Linear("memory.erase_add", config.hidden_dim, 2 * config.memory_d, root);

  canonical_.resize(static_cast<size_t>(config.action_count));
  flipped_.resize(static_cast<size_t>(config.action_count));
  for (int a = 0; a < config.action_count; ++a) {
    const int partner = config.counterparts[static_cast<size_t>(a)];
    const bool second = partner >= 0 && partner < a;
    canonical_[static_cast<size_t>(a)] = second ? partner : a;
    flipped_[static_cast<size_t>(a)] = second;
  }
}

MemoryState MemoryModule::initial_state(int64_t batch, int n, Rng& rng) const {
  if (n <= 0 || n % 2 == 0) throw ContractError("memory block size must be odd, got " + std::to_string(n));
  MemoryState s;
  s.n = n;
  s.M = randn({batch, static_cast<int64_t>(n) * n, config_.memory_d}, rng);
  std::vector<float> a(static_cast<size_t>(batch * n * n), 0.0f);
  const int64_t centre = static_cast<int64_t>(n / 2) * n + n / 2;
  for (int64_t i = 0; i < batch; ++i) a[static_cast<size_t>(i * n * n + centre)] = 1.0f;
  s.alpha = Tensor({batch, n, n}, std::move(a));
  return s;
}

MemoryState MemoryModule::resize_block(const MemoryState& state, int new_n, Rng& rng) const {
  if (new_n <= 0 || new_n % 2 == 0) throw ContractError("resize_block: N must be odd, got " + std::to_string(new_n));
  return initial_state(state.batch(), new_n, rng);
}

Tensor MemoryModule::shift_kernel(std::span<const int> actions) const {
  const int64_t b = static_cast<int64_t>(actions.size());
  std::vector<int> canon(actions.size());
  std::vector<float> flip_mask(actions.size());
  for (size_t i = 0; i < actions.size(); ++i) {
    const int a = actions[i];
    if (a < 0 || a >= config_.action_count) {
      throw ContractError("shift_kernel: action " + std::to_string(a) + " out of range");
    }
    canon[i] = canonical_[static_cast<size_t>(a)];
    flip_mask[i] = flipped_[static_cast<size_t>(a)] ? 1.0f : 0.0f;
  }
  const Tensor logits = kernel2(leaky_relu(kernel1(one_hot(canon, config_.action_count))));
  const Tensor w = reshape(softmax(logits, 1), {b, 3, 3});
  bool any_flip = false;
  bool all_flip = true;
  for (float f : flip_mask) {
    any_flip = any_flip || f != 0.0f;
    all_flip = all_flip && f != 0.0f;
  }
  if (!any_flip) return w;
  const Tensor flipped = flip(flip(w, 1), 2);
  if (all_flip) return flipped;
  const Tensor m({b, 1, 1}, flip_mask);
  return add(mul(m, flipped), mul(one_minus(m), w));
}

Tensor MemoryModule::gate(const Tensor& h) const { return sigmoid(gate2(leaky_relu(gate1(h)))); }

std::pair<Tensor, Tensor> MemoryModule::erase_add(const Tensor& h) const {
  const auto parts = split(erase_add_net(h), 1, {config_.memory_d, config_.memory_d});
  return {sigmoid(parts[0]), parts[1]};
}

MemoryModule::StepOutput MemoryModule::step(const MemoryState& state, std::span<const int> actions,
                                            const Tensor& h) const {
  StepOutput out;
  out.kernel = shift_kernel(actions);
  out.gate = gate(h);
  out.state.n = state.n;
  out.state.alpha = shift_attention(state.alpha, out.kernel, out.gate);
  const auto [e, d] = erase_add(h);
  out.state.M = memory_write(state.M, out.state.alpha, e, d);
  out.read = memory_read(out.state.M, out.state.alpha);
  return out;
}

void MemoryModule::collect(TensorList& params) const {
  kernel1.collect(params);
  kernel2.collect(params);
  gate1.collect(params);
  gate2.collect(params);
  erase_add_net.collect(params);
}

}  // namespace nsim
