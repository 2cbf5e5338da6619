#include "nsim/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "nsim/image.hpp"

namespace nsim {

using nlohmann::json;

BinaryImage wall_image(const Frame& frame, const Palette& palette) {
  return BinaryImage{frame.height, frame.width, wall_mask(frame, palette)};
}

float cbh_distance(const BinaryImage& s, const BinaryImage& s_hat) {
  if (s.height != s_hat.height || s.width != s_hat.width || s.bits.size() != s_hat.bits.size() ||
      s.bits.size() != static_cast<size_t>(s.height * s.width)) {
    throw ContractError("cbh_distance: images differ in shape (" + std::to_string(s.height) + "x" +
                        std::to_string(s.width) + " vs " + std::to_string(s_hat.height) + "x" +
                        std::to_string(s_hat.width) + ")");
  }
  int64_t changed = 0, walls = 0;
  for (size_t i = 0; i < s.bits.size(); ++i) {
    if (s.bits[i] > 1 || s_hat.bits[i] > 1) throw ContractError("cbh_distance: images must be binary");
    changed += s.bits[i] != s_hat.bits[i];
    walls += s.bits[i];
  }
  return static_cast<float>(changed) / static_cast<float>(walls + 1);
}

Frame EnvSubject::reset(const Episode& start, uint64_t) {
  world_ = generate_maze(start.seed, config_);
  const Frame f = world_.observe();
  if (!start.frames.empty() && !(f == start.frames.front())) {
    throw ContractError("episode " + std::to_string(start.seed) + " was not produced by this environment config");
  }
  return f;
}

Frame EnvSubject::step(int action) { return env_step(world_, action); }

ModelSubject::ModelSubject(std::shared_ptr<const Simulator> sim, int memory_n)
    : sim_(std::move(sim)), memory_n_(memory_n) {}

Frame ModelSubject::reset(const Episode& start, uint64_t trial_seed) {
  if (start.frames.empty()) throw ContractError("episode has no frames");
  session_ = std::make_unique<Session>(sim_, start.frames.front(), trial_seed, memory_n_);
  return start.frames.front();
}

Frame ModelSubject::step(int action) {
  if (!session_) throw StateError("ModelSubject::step before reset");
  return session_->step(action);
}

CbhResult summarize_cbh(int k, std::vector<double> d) {
  CbhResult r;
  r.k = k;
  r.d = d;
  if (d.empty()) return r;
  double sum = 0.0;
  for (double v : d) sum += v;
  r.mean = sum / static_cast<double>(d.size());
  double sq = 0.0;
  for (double v : d) sq += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(sq / static_cast<double>(d.size()));
  std::sort(d.begin(), d.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(d.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
  };
  r.q1 = quantile(0.25);
  r.median = quantile(0.5);
  r.q3 = quantile(0.75);
  return r;
}

json CbhResult::to_json() const {
  return {{"k", k}, {"d", d}, {"mean", mean}, {"std", std}, {"q1", q1}, {"median", median}, {"q3", q3}};
}

std::vector<int> cbh_actions(int k, const std::vector<int>& counterparts, Rng& rng) {
  std::vector<int> usable;
  for (size_t a = 0; a < counterparts.size(); ++a) {
    if (counterparts[a] >= 0) usable.push_back(static_cast<int>(a));
  }
  if (usable.empty()) throw ContractError("no action has a counterpart");
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(usable[static_cast<size_t>(rng.uniform_int(static_cast<int>(usable.size())))]);
  return out;
}

std::vector<int> open_cbh_actions(int k, GridWorld& world, const std::vector<int>& counterparts, Rng& rng) {
  std::vector<int> out;
  for (int i = 0; i < k; ++i) {
    std::vector<int> open;
    for (size_t a = 0; a < counterparts.size(); ++a) {
      if (counterparts[a] < 0) continue;
      const auto [dr, dc] = action_delta(static_cast<int>(a));
      if (!world.wall(world.agent_row() + dr, world.agent_col() + dc)) open.push_back(static_cast<int>(a));
    }
    if (open.empty()) throw ContractError("agent is walled in; no open move for come-back-home");
    const int a = open[static_cast<size_t>(rng.uniform_int(static_cast<int>(open.size())))];
    world.step(a);
    out.push_back(a);
  }
  return out;
}

CbhResult run_cbh(CbhSubject& subject, const std::vector<Episode>& starts, const CbhConfig& config,
                  const std::vector<int>& counterparts, const Palette& palette) {
  if (config.k <= 0) throw ContractError("come-back-home needs K >= 1, got " + std::to_string(config.k));
  if (config.trials <= 0) throw ContractError("come-back-home needs at least one trial");
  if (starts.empty()) throw ContractError("come-back-home needs start episodes");
  const Rng root = Rng(config.seed).split("cbh");
  std::vector<double> d;
  for (int trial = 0; trial < config.trials; ++trial) {
    Rng rng = root.split(static_cast<uint64_t>(trial));
    const Episode& start = starts[static_cast<size_t>(rng.uniform_int(static_cast<int>(starts.size())))];
    std::vector<int> forward;
    if (config.open_moves) {
      GridWorld world = generate_maze(start.seed, config.env);
      if (!start.frames.empty() && !(world.observe() == start.frames.front())) {
        throw ContractError("episode " + std::to_string(start.seed) + " was not produced by the CBH environment config");
      }
      forward = open_cbh_actions(config.k, world, counterparts, rng);
    } else {
      forward = cbh_actions(config.k, counterparts, rng);
    }
    const Frame first = subject.reset(start, rng.next_u64());
    Frame last = first;
    for (int a : forward) last = subject.step(a);
    for (auto it = forward.rbegin(); it != forward.rend(); ++it) last = subject.step(counterparts[static_cast<size_t>(*it)]);
    d.push_back(cbh_distance(wall_image(first, palette), wall_image(last, palette)));
  }
  return summarize_cbh(config.k, std::move(d));
}

CbhResult random_pair_baseline(const std::vector<Episode>& data, int trials, uint64_t seed, const Palette& palette) {
  if (data.empty() || trials <= 0) throw ContractError("random-pair baseline needs episodes and trials");
  Rng rng = Rng(seed).split("random-pair");
  std::vector<double> d;
  for (int t = 0; t < trials; ++t) {
    const Episode& ep = data[static_cast<size_t>(rng.uniform_int(static_cast<int>(data.size())))];
    const int n = static_cast<int>(ep.frames.size());
    const Frame& a = ep.frames[static_cast<size_t>(rng.uniform_int(n))];
    const Frame& b = ep.frames[static_cast<size_t>(rng.uniform_int(n))];
    d.push_back(cbh_distance(wall_image(a, palette), wall_image(b, palette)));
  }
  return summarize_cbh(0, std::move(d));
}

namespace {

Frame mask_frame(const Tensor& masks, int k) {
  const Tensor m = slice(masks, 1, k, 1);
  const Tensor gray = add_scalar(scale(concat({m, m, m}, 1), 2.0f), -1.0f);
  return tensor_to_frame(gray);
}

}  // namespace

DisentanglementReport disentanglement_report(const Simulator& sim, const Episode& episode, const Frame& swap_image,
                                             uint64_t seed, int memory_n) {
  if (!sim.disentangled) throw UnsupportedConfigError("disentanglement report needs the disentangled renderer");
  if (episode.frames.empty()) throw ContractError("disentanglement report needs at least one frame");
  const ModelConfig& cfg = sim.config();
  NoGradScope no_grad;
  Rng mem_rng = Rng(seed).split("memory");
  Rng z_rng = Rng(seed).split("z");
  SimState state = sim.reset(1, memory_n, mem_rng);
  const Tensor swap = frame_to_tensor(resize_nearest(swap_image, cfg.image_size, cfg.image_size));
  DisentanglementReport report;
  double area = 0.0;
  for (size_t t = 0; t < episode.frames.size(); ++t) {
    const int a[1] = {t < episode.actions.size() ? static_cast<int>(episode.actions[t]) : static_cast<int>(kStay)};
    const Tensor x = frame_to_tensor(episode.frames[t]);
    const Tensor z = randn({1, cfg.z_dim}, z_rng);
    SimStep plain = sim.step(state, a, z, x, Tensor(), static_cast<int>(t));
    const SimStep swapped = sim.step(state, a, z, x, swap, static_cast<int>(t));
    DisentanglementRow row;
    row.input = x;
    row.static_content = plain.render.parts[DisentangledRenderer::kStatic].content;
    row.dynamic_content = plain.render.parts[DisentangledRenderer::kDynamic].content;
    row.masks = plain.render.masks;
    row.composed = plain.frame;
    row.swapped = swapped.frame;
    row.dynamic_area = mean(slice(row.masks, 1, DisentangledRenderer::kDynamic, 1)).item();
    area += row.dynamic_area;
    report.rows.push_back(std::move(row));
    state = std::move(plain.state);
  }
  report.mean_dynamic_area = area / static_cast<double>(report.rows.size());
  return report;
}

Frame DisentanglementReport::grid(int scale) const {
  std::vector<std::vector<Frame>> cells;
  for (const auto& r : rows) {
    cells.push_back({tensor_to_frame(r.input), tensor_to_frame(r.static_content), tensor_to_frame(r.dynamic_content),
                     mask_frame(r.masks, DisentangledRenderer::kStatic), mask_frame(r.masks, DisentangledRenderer::kDynamic),
                     tensor_to_frame(r.composed), tensor_to_frame(r.swapped)});
  }
  return tile(cells, scale);
}

json DisentanglementReport::to_json() const {
  json areas = json::array();
  for (const auto& r : rows) areas.push_back(r.dynamic_area);
  return {{"rows", rows.size()}, {"dynamic_area", areas}, {"mean_dynamic_area", mean_dynamic_area}};
}

}  // namespace nsim
