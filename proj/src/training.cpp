#include "nsim/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "nsim/env.hpp"

namespace nsim {

using nlohmann::json;

void check_dataset(const std::vector<Episode>& data, int sequence_length, const ModelConfig& model) {
  if (data.empty()) throw DataError("dataset has no episodes");
  for (const Episode& ep : data) {
    if (static_cast<int>(ep.frames.size()) < sequence_length + 1) {
      throw DataError("episode " + std::to_string(ep.seed) + " has " + std::to_string(ep.frames.size()) +
                      " frames, training needs at least " + std::to_string(sequence_length + 1));
    }
    const Frame& f = ep.frames.front();
    if (f.height != model.image_size || f.width != model.image_size) {
      throw DataError("episode " + std::to_string(ep.seed) + " frames are " + std::to_string(f.height) + "x" +
                      std::to_string(f.width) + ", model expects " + std::to_string(model.image_size));
    }
    for (uint8_t a : ep.actions) {
      if (a >= model.action_count) {
        throw DataError("episode " + std::to_string(ep.seed) + " has action " + std::to_string(a) + " out of range");
      }
    }
  }
}

SequenceBatch sample_batch(const std::vector<Episode>& data, int batch, int sequence_length, Rng& rng) {
  std::vector<const Episode*> eps;
  std::vector<int> starts;
  for (int b = 0; b < batch; ++b) {
    const Episode& ep = data[static_cast<size_t>(rng.uniform_int(static_cast<int>(data.size())))];
    if (static_cast<int>(ep.frames.size()) < sequence_length + 1) {
      throw DataError("episode " + std::to_string(ep.seed) + " is shorter than T+1 frames");
    }
    eps.push_back(&ep);
    starts.push_back(rng.uniform_int(static_cast<int>(ep.frames.size()) - sequence_length));
  }
  SequenceBatch out;
  for (int t = 0; t <= sequence_length; ++t) {
    std::vector<const Frame*> frames;
    for (int b = 0; b < batch; ++b) frames.push_back(&eps[b]->frames[static_cast<size_t>(starts[b] + t)]);
    out.frames.push_back(frames_to_tensor(frames));
    if (t < sequence_length) {
      std::vector<int> acts;
      for (int b = 0; b < batch; ++b) acts.push_back(eps[b]->actions[static_cast<size_t>(starts[b] + t)]);
      out.actions.push_back(std::move(acts));
    }
  }
  return out;
}

int warmup_real_frames(int epoch, int initial, int final_epoch) {
  if (epoch < 1) throw ContractError("epochs are numbered from 1");
  if (final_epoch <= 1 || epoch >= final_epoch) return 1;
  const double frac = static_cast<double>(epoch - 1) / static_cast<double>(final_epoch - 1);
  const int k = static_cast<int>(std::lround(initial - (initial - 1) * frac));
  return std::max(1, k);
}

int warmup_real_frames(int epoch, const TrainConfig& config) {
  return warmup_real_frames(epoch, config.warmup_initial, config.warmup_final_epoch);
}

void LossTerms::add(std::string name, Tensor value) {
  total = total.defined() ? total + value : value;
  terms.emplace_back(std::move(name), std::move(value));
}

double LossTerms::value(const std::string& name) const {
  for (const auto& [n, v] : terms) {
    if (n == name) return v.item();
  }
  throw ContractError("no loss term named '" + name + "'");
}

json LossTerms::to_json() const {
  json j = json::object();
  for (const auto& [n, v] : terms) j[n] = v.item();
  j["total"] = total_value();
  return j;
}

namespace {

template <typename Fn>
Tensor named_term(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string("loss term '") + name + "': " + e.what());
  }
}

Tensor stack_time(const std::vector<Tensor>& frames, size_t first, size_t count) {
  std::vector<Tensor> parts(frames.begin() + static_cast<std::ptrdiff_t>(first),
                            frames.begin() + static_cast<std::ptrdiff_t>(first + count));
  return concat(parts, 0);
}

std::vector<int> flatten_actions(const std::vector<std::vector<int>>& actions) {
  std::vector<int> flat;
  for (const auto& a : actions) flat.insert(flat.end(), a.begin(), a.end());
  return flat;
}

// Time-major [(L)B, ...] -> sample-major [B*L, ...].
Tensor sample_major(const Tensor& packed, int64_t batch) {
  const int64_t length = packed.dim(0) / batch;
  Shape s = packed.shape();
  Shape five = {length, batch};
  five.insert(five.end(), s.begin() + 1, s.end());
  Tensor x = reshape(packed, five);
  x = permute(x, {1, 0, 2, 3, 4});
  return reshape(x, s);
}

Tensor mean_softplus(const Tensor& logits, float sign) { return mean(softplus(scale(logits, sign))); }

Tensor temporal_term(const std::vector<Tensor>& levels, float sign) {
  Tensor acc;
  for (const Tensor& l : levels) {
    Tensor v = mean_softplus(l, sign);
    acc = acc.defined() ? acc + v : v;
  }
  return scale(acc, 1.0f / static_cast<float>(levels.size()));
}

Tensor info_term(const Tensor& z_pred, const std::vector<Tensor>& zs) {
  const Tensor z = concat(zs, 0);
  return scale(squared_distance(z_pred, z), 1.0f / static_cast<float>(z.dim(0)));
}

}  // namespace

Tensor cycle_loss(const Simulator& sim, const Rollout& rollout) {
  if (!sim.disentangled || !sim.config().use_memory) {
    throw UnsupportedConfigError("cycle loss needs memory and the disentangled renderer");
  }
  const size_t t_len = rollout.reads.size();
  const int64_t b = rollout.reads.front().dim(0);
  const DisentangledRenderer frozen = sim.disentangled->frozen();
  std::vector<Tensor> replayed;
  for (size_t t = 0; t < t_len; ++t) replayed.push_back(memory_read(rollout.final_memory.M, rollout.alphas[t]));
  const Tensor x_ref = frozen.render_component_alone(DisentangledRenderer::kStatic, concat(rollout.reads, 0));
  const Tensor x_hat = frozen.render_component_alone(DisentangledRenderer::kStatic, concat(replayed, 0));
  const Tensor diff = x_ref - x_hat;
  Tensor acc;
  for (int64_t i = 0; i < diff.dim(0); ++i) {
    Tensor n = l2_norm(slice(diff, 0, i, 1));
    acc = acc.defined() ? acc + n : n;
  }
  return scale(acc, 1.0f / static_cast<float>(b));
}

Tensor mask_regularizer(const Rollout& rollout) {
  if (rollout.masks.empty()) throw UnsupportedConfigError("mask regularizer needs the disentangled renderer");
  Tensor all = concat(rollout.masks, 0);
  return mean(slice(all, 1, DisentangledRenderer::kDynamic, 1));
}

LossTerms generator_loss(const Simulator& sim, const Discriminators& disc, const SequenceBatch& real,
                         const Rollout& rollout, const std::vector<Tensor>& zs, const LossWeights& w) {
  const auto mode = BnMode::kTrainNoUpdate;
  const size_t t_len = rollout.frames.size();
  const int64_t b = real.batch();
  if (t_len != static_cast<size_t>(real.length())) throw ContractError("rollout length differs from batch length");

  std::vector<Tensor> fake_seq{real.frames[0]};
  fake_seq.insert(fake_seq.end(), rollout.frames.begin(), rollout.frames.end());
  const Tensor fake_packed = concat(fake_seq, 0);
  const Tensor feats = disc.encode_shared(fake_packed, mode);
  const int64_t tb = static_cast<int64_t>(t_len) * b;
  const Tensor feat_t = slice(feats, 0, 0, tb);
  const Tensor feat_t1 = slice(feats, 0, b, tb);
  const std::vector<int> acts = flatten_actions(real.actions);

  LossTerms out;
  out.add("gan_single", named_term("gan_single", [&] {
            const SingleFrameLogits l = disc.judge_single_frame(feat_t1, mode);
            return scale(mean_softplus(l.patch, -1.0f) + mean_softplus(l.full, -1.0f), 0.5f);
          }));
  out.add("gan_action", named_term("gan_action", [&] {
            return mean_softplus(disc.judge_action_pair(feat_t, feat_t1, acts, mode), -1.0f);
          }));
  out.add("gan_temporal", named_term("gan_temporal", [&] {
            const auto levels = disc.judge_temporal(sample_major(feats, b), b, static_cast<int64_t>(t_len) + 1, mode);
            return temporal_term(levels, -1.0f);
          }));
  const ActionAux aux = disc.judge_aux(feat_t, feat_t1, mode);
  if (w.lambda_action != 0.0f) {
    out.add("action", named_term("action", [&] { return scale(cross_entropy(aux.action_logits, acts), w.lambda_action); }));
  }
  if (w.lambda_info != 0.0f) {
    out.add("info", named_term("info", [&] { return scale(info_term(aux.z_pred, zs), w.lambda_info); }));
  }
  const Tensor real_next = stack_time(real.frames, 1, t_len);
  const Tensor fake_next = stack_time(rollout.frames, 0, t_len);
  const float per_step = 1.0f / static_cast<float>(tb);
  if (w.lambda_recon != 0.0f) {
    out.add("recon", named_term("recon", [&] {
              return scale(squared_distance(fake_next, real_next), w.lambda_recon * per_step);
            }));
  }
  if (w.lambda_feat != 0.0f) {
    out.add("feat", named_term("feat", [&] {
              Tensor real_feats;
              {
                NoGradScope ng;
                real_feats = slice(disc.encode_shared(concat(real.frames, 0), mode), 0, b, tb);
              }
              return scale(squared_distance(feat_t1, real_feats), w.lambda_feat * per_step);
            }));
  }
  if (w.lambda_cycle != 0.0f && sim.disentangled && sim.config().use_memory) {
    out.add("cycle", named_term("cycle", [&] { return scale(cycle_loss(sim, rollout), w.lambda_cycle); }));
  }
  if (w.mask_reg != 0.0f && sim.disentangled) {
    out.add("mask_reg", named_term("mask_reg", [&] { return scale(mask_regularizer(rollout), w.mask_reg); }));
  }
  return out;
}

LossTerms discriminator_loss(const Discriminators& disc, const SequenceBatch& real, const std::vector<Tensor>& fake,
                             const std::vector<Tensor>& zs, const LossWeights& w, Rng& negatives, BnMode mode) {
  const size_t t_len = fake.size();
  const int64_t b = real.batch();
  const int64_t tb = static_cast<int64_t>(t_len) * b;
  std::vector<Tensor> fake_seq{real.frames[0]};
  for (const Tensor& f : fake) fake_seq.push_back(f.detach());
  const Tensor real_feats = disc.encode_shared(concat(real.frames, 0), mode);
  const Tensor fake_feats = disc.encode_shared(concat(fake_seq, 0), mode);
  const std::vector<int> acts = flatten_actions(real.actions);
  std::vector<int> wrong;
  for (int a : acts) wrong.push_back(sample_negative_action(a, disc.action_count(), negatives));

  const Tensor rt = slice(real_feats, 0, 0, tb);
  const Tensor rt1 = slice(real_feats, 0, b, tb);
  const Tensor ft = slice(fake_feats, 0, 0, tb);
  const Tensor ft1 = slice(fake_feats, 0, b, tb);

  LossTerms out;
  out.add("single", named_term("single", [&] {
            const SingleFrameLogits lr = disc.judge_single_frame(rt1, mode);
            const SingleFrameLogits lf = disc.judge_single_frame(ft1, mode);
            Tensor patch = mean_softplus(lr.patch, -1.0f) + mean_softplus(lf.patch, 1.0f);
            Tensor full = mean_softplus(lr.full, -1.0f) + mean_softplus(lf.full, 1.0f);
            return scale(patch + full, 0.5f);
          }));
  out.add("action", named_term("action", [&] {
            Tensor pos = mean_softplus(disc.judge_action_pair(rt, rt1, acts, mode), -1.0f);
            Tensor neg = mean_softplus(disc.judge_action_pair(rt, rt1, wrong, mode), 1.0f);
            Tensor gen = mean_softplus(disc.judge_action_pair(ft, ft1, acts, mode), 1.0f);
            return scale(pos + neg + gen, 1.0f / 3.0f);
          }));
  out.add("temporal", named_term("temporal", [&] {
            const int64_t len = static_cast<int64_t>(t_len) + 1;
            const auto lr = disc.judge_temporal(sample_major(real_feats, b), b, len, mode);
            const auto lf = disc.judge_temporal(sample_major(fake_feats, b), b, len, mode);
            return temporal_term(lr, -1.0f) + temporal_term(lf, 1.0f);
          }));
  if (w.lambda_action != 0.0f) {
    out.add("aux_action", named_term("aux_action", [&] {
              return scale(cross_entropy(disc.judge_aux(rt, rt1, mode).action_logits, acts), w.lambda_action);
            }));
  }
  if (w.lambda_info != 0.0f) {
    out.add("info", named_term("info", [&] {
              return scale(info_term(disc.judge_aux(ft, ft1, mode).z_pred, zs), w.lambda_info);
            }));
  }
  return out;
}

Tensor real_score(const Discriminators& disc, const Tensor& packed, const std::vector<std::vector<int>>& actions,
                  int64_t batch, BnMode mode) {
  const int64_t t_len = static_cast<int64_t>(actions.size());
  const int64_t tb = t_len * batch;
  const Tensor feats = disc.encode_shared(packed, mode);
  const Tensor ft = slice(feats, 0, 0, tb);
  const Tensor ft1 = slice(feats, 0, batch, tb);
  const SingleFrameLogits single = disc.judge_single_frame(ft1, mode);
  Tensor s = sum(single.patch) + sum(single.full);
  s = s + sum(disc.judge_action_pair(ft, ft1, flatten_actions(actions), mode));
  for (const Tensor& l : disc.judge_temporal(sample_major(feats, batch), batch, t_len + 1, mode)) s = s + sum(l);
  return s;
}

R1Result r1_penalty(const std::function<Tensor(const Tensor&)>& score, const Tensor& x_real, float gamma,
                    const std::vector<Tensor>& params) {
  R1Result out;
  const int64_t b = x_real.dim(0);
  std::vector<bool> flags;
  for (const Tensor& p : params) flags.push_back(p.requires_grad());
  auto restore = [&] {
    for (size_t i = 0; i < params.size(); ++i) Tensor(params[i]).set_requires_grad(flags[i]);
  };
  for (const Tensor& p : params) Tensor(p).set_requires_grad(false);

  std::vector<float> g;
  try {
    Tensor x = x_real.detach().clone();
    x.set_requires_grad(true);
    Tape tape;
    {
      TapeScope scope(tape);
      const Tensor s = score(x);
      if (s.requires_grad()) tape.backward(s);
    }
    if (x.has_grad()) g.assign(x.grad().begin(), x.grad().end());
  } catch (...) {
    restore();
    throw;
  }
  restore();

  double sq = 0.0;
  for (float v : g) sq += static_cast<double>(v) * v;
  out.grad_norm = std::sqrt(sq);
  out.value = static_cast<double>(gamma) / static_cast<double>(b) * sq;
  if (params.empty() || gamma == 0.0f || out.grad_norm == 0.0) return out;

  // d/dtheta (gamma/B ||g||^2) = 2 gamma/B H_{theta x} g, estimated along u = g/||g||.
  const double h = 1e-3 * std::sqrt(static_cast<double>(x_real.numel()));
  const double c = static_cast<double>(gamma) * out.grad_norm / (static_cast<double>(b) * h);
  std::vector<std::vector<float>> saved;
  for (const Tensor& p : params) {
    saved.emplace_back(p.has_grad() ? std::vector<float>(p.grad().begin(), p.grad().end())
                                    : std::vector<float>(static_cast<size_t>(p.numel()), 0.0f));
  }
  auto param_grads_at = [&](double sign) {
    std::vector<float> xv(x_real.data().begin(), x_real.data().end());
    for (size_t i = 0; i < xv.size(); ++i) {
      xv[i] = static_cast<float>(xv[i] + sign * h * g[i] / out.grad_norm);
    }
    const Tensor x(x_real.shape(), std::move(xv));
    for (const Tensor& p : params) Tensor(p).clear_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      const Tensor s = score(x);
      if (s.requires_grad()) tape.backward(s);
    }
    std::vector<std::vector<float>> grads;
    for (const Tensor& p : params) {
      grads.emplace_back(p.has_grad() ? std::vector<float>(p.grad().begin(), p.grad().end())
                                      : std::vector<float>(static_cast<size_t>(p.numel()), 0.0f));
    }
    return grads;
  };
  const auto plus = param_grads_at(1.0);
  const auto minus = param_grads_at(-1.0);
  for (size_t i = 0; i < params.size(); ++i) {
    auto buf = Tensor(params[i]).mutable_grad();
    for (size_t j = 0; j < buf.size(); ++j) {
      buf[j] = static_cast<float>(saved[i][j] + c * (static_cast<double>(plus[i][j]) - minus[i][j]));
    }
  }
  return out;
}

namespace {

AdamOptions adam_options(const TrainConfig& c) {
  AdamOptions o;
  o.lr = c.lr;
  o.beta1 = c.beta1;
  o.beta2 = c.beta2;
  return o;
}

void ensure_grads(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) Tensor(p).mutable_grad();
}

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train)
    : model_(model),
      train_(train),
      sim_(model, train.seed),
      disc_(model, Rng(train.seed).split("disc")),
      g_params_(tensors_of(sim_.params())),
      d_params_(tensors_of(discriminator_params())),
      g_opt_(g_params_, adam_options(train)),
      d_opt_(d_params_, adam_options(train)) {
  model_.validate();
  train_.validate();
  if (disc_.temporal_min_length() > train.sequence_length + 1) {
    throw ContractError("sequence length " + std::to_string(train.sequence_length) +
                        " is shorter than the temporal discriminator needs");
  }
}

TensorList Trainer::discriminator_params() const {
  TensorList p;
  disc_.collect(p);
  return p;
}

TensorList Trainer::discriminator_buffers() const {
  TensorList p;
  disc_.collect_buffers(p);
  return p;
}

namespace {

// Swaps the simulator's renderer for a detached copy for the scope lifetime.
class FrozenRendererScope {
 public:
  explicit FrozenRendererScope(Simulator& sim) : sim_(sim), live_(std::move(sim.disentangled)) {
    sim_.disentangled = std::make_unique<DisentangledRenderer>(live_->frozen());
  }
  ~FrozenRendererScope() { sim_.disentangled = std::move(live_); }
  FrozenRendererScope(const FrozenRendererScope&) = delete;
  FrozenRendererScope& operator=(const FrozenRendererScope&) = delete;

 private:
  Simulator& sim_;
  std::unique_ptr<DisentangledRenderer> live_;
};

class FreezeScope {
 public:
  explicit FreezeScope(TensorList params) : params_(std::move(params)) { set_requires_grad(params_, false); }
  ~FreezeScope() { set_requires_grad(params_, true); }
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  TensorList params_;
};

}  // namespace

GeneratorPass Trainer::generator_gradients(const SequenceBatch& batch, int epoch, const Rng& rng) {
  const int64_t b = batch.batch();
  const int t_len = batch.length();
  GeneratorPass pass;
  Rng z_rng = rng.split("z");
  for (int t = 0; t < t_len; ++t) pass.zs.push_back(randn({b, model_.z_dim}, z_rng));
  pass.real_inputs = warmup_real_frames(epoch, train_);

  FreezeScope frozen_disc(discriminator_params());
  g_opt_.zero_grad();
  ensure_grads(g_params_);
  LossWeights main_weights = train_.weights;
  const bool with_cycle = main_weights.lambda_cycle != 0.0f && sim_.disentangled && model_.use_memory;
  main_weights.lambda_cycle = 0.0f;
  Rollout roll;
  {
    Tape tape;
    TapeScope scope(tape);
    Rng mem_rng = rng.split("memory");
    roll = sim_.rollout(batch.frames, batch.actions, pass.zs, pass.real_inputs, mem_rng);
    pass.loss = generator_loss(sim_, disc_, batch, roll, pass.zs, main_weights);
    tape.backward(pass.loss.total);
  }
  if (with_cycle) {
    FrozenRendererScope frozen_renderer(sim_);
    Tape tape;
    TapeScope scope(tape);
    Rng mem_rng = rng.split("memory");
    const Rollout replay = sim_.rollout(batch.frames, batch.actions, pass.zs, pass.real_inputs, mem_rng);
    const Tensor cycle =
        named_term("cycle", [&] { return scale(cycle_loss(sim_, replay), train_.weights.lambda_cycle); });
    if (cycle.requires_grad()) tape.backward(cycle);
    NoGradScope no_grad;
    pass.loss.add("cycle", cycle.detach());
  }
  for (const Tensor& f : roll.frames) pass.fake.push_back(f.detach());
  return pass;
}

LossTerms Trainer::discriminator_gradients(const SequenceBatch& batch, const GeneratorPass& pass, const Rng& rng) {
  Rng neg_rng = rng.split("negatives");
  for (Tensor& p : d_params_) p.zero_grad();
  ensure_grads(d_params_);
  LossTerms d_loss;
  {
    FreezeScope frozen_gen(sim_.params());
    Tape tape;
    TapeScope scope(tape);
    d_loss = discriminator_loss(disc_, batch, pass.fake, pass.zs, train_.weights, neg_rng, BnMode::kTrain);
    tape.backward(d_loss.total);
  }
  if (train_.weights.gamma_r1 != 0.0f) {
    const int64_t b = batch.batch();
    const Tensor packed = concat(batch.frames, 0);
    auto score = [&](const Tensor& x) { return real_score(disc_, x, batch.actions, b, BnMode::kTrainNoUpdate); };
    d_loss.extra = r1_penalty(score, packed, train_.weights.gamma_r1, d_params_).value;
  }
  return d_loss;
}

json Trainer::iterate(const SequenceBatch& batch, int epoch, const Rng& rng) {
  GeneratorPass pass = generator_gradients(batch, epoch, rng);
  apply_generator();
  const LossTerms d_loss = discriminator_gradients(batch, pass, rng);
  apply_discriminator();
  ++iteration_;

  json j;
  j["iteration"] = iteration_;
  j["epoch"] = epoch;
  j["real_inputs"] = pass.real_inputs;
  j["generator"] = pass.loss.to_json();
  j["discriminator"] = d_loss.to_json();
  j["discriminator"]["r1"] = d_loss.extra;
  return j;
}

Checkpoint Trainer::checkpoint(int epoch) const {
  Checkpoint c;
  c.model = model_;
  c.meta["train"] = train_;
  c.meta["iteration"] = iteration_;
  c.meta["epoch"] = epoch;
  for (const NamedTensor& t : sim_.params()) c.tensors.push_back({"generator/" + t.name, t.tensor.clone()});
  for (const NamedTensor& t : discriminator_params()) c.tensors.push_back({"discriminator/" + t.name, t.tensor.clone()});
  for (const NamedTensor& t : discriminator_buffers()) {
    c.tensors.push_back({"discriminator/" + t.name, t.tensor.clone()});
  }
  return c;
}

void Trainer::load(const Checkpoint& ckpt) {
  TensorList all;
  for (const NamedTensor& t : sim_.params()) all.push_back({"generator/" + t.name, t.tensor});
  for (const NamedTensor& t : discriminator_params()) all.push_back({"discriminator/" + t.name, t.tensor});
  for (const NamedTensor& t : discriminator_buffers()) all.push_back({"discriminator/" + t.name, t.tensor});
  assign_from(all, ckpt);
  if (ckpt.meta.contains("iteration")) iteration_ = ckpt.meta["iteration"].get<int>();
}

std::shared_ptr<Simulator> load_generator(const Checkpoint& ckpt) {
  auto sim = std::make_shared<Simulator>(ckpt.model, 0);
  TensorList named;
  for (const NamedTensor& t : sim->params()) named.push_back({"generator/" + t.name, t.tensor});
  assign_from(named, ckpt);
  return sim;
}

TrainSummary train(const std::vector<Episode>& data, const TrainConfig& train_config, const ModelConfig& model,
                   const TrainHooks& hooks) {
  train_config.validate();
  check_dataset(data, train_config.sequence_length, model);
  Trainer trainer(model, train_config);
  TrainSummary summary;
  const Rng root = Rng(train_config.seed).split("train");
  const int per_epoch = static_cast<int>((data.size() + static_cast<size_t>(train_config.batch_size) - 1) /
                                         static_cast<size_t>(train_config.batch_size));
  const auto start = std::chrono::steady_clock::now();
  if (hooks.on_checkpoint) hooks.on_checkpoint(trainer.checkpoint(0), "init");
  int epoch = 0;
  bool done = false;
  for (int e = 1; e <= train_config.epochs && !done; ++e) {
    epoch = e;
    for (int i = 0; i < per_epoch; ++i) {
      if (train_config.max_iterations > 0 && trainer.iteration() >= train_config.max_iterations) {
        done = true;
        break;
      }
      const Rng it_rng = root.split(static_cast<uint64_t>(trainer.iteration()));
      Rng batch_rng = it_rng.split("batch");
      const SequenceBatch batch =
          sample_batch(data, train_config.batch_size, train_config.sequence_length, batch_rng);
      json line = trainer.iterate(batch, e, it_rng);
      summary.generator_totals.push_back(line["generator"]["total"].get<double>());
      summary.discriminator_totals.push_back(line["discriminator"]["total"].get<double>());
      if (hooks.metrics != nullptr) {
        if (hooks.wall_time) {
          line["seconds"] =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        *hooks.metrics << line.dump() << '\n';
        hooks.metrics->flush();
      }
      if (hooks.on_checkpoint && train_config.checkpoint_interval > 0 &&
          trainer.iteration() % train_config.checkpoint_interval == 0) {
        hooks.on_checkpoint(trainer.checkpoint(e), "iter-" + std::to_string(trainer.iteration()));
      }
    }
  }
  summary.iterations = trainer.iteration();
  summary.epochs = epoch;
  summary.final_checkpoint = trainer.checkpoint(epoch);
  if (hooks.on_checkpoint && summary.iterations > 0) hooks.on_checkpoint(summary.final_checkpoint, "final");
  return summary;
}

}  // namespace nsim
