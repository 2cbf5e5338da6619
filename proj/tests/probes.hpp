#pragma once

// Measurement helpers shared by unit tests and the acceptance runner.

#include <set>
#include <string>
#include <vector>

#include "nsim/discriminators.hpp"
#include "test_util.hpp"

namespace probes {

// influence[level][logit] = frames whose perturbation changes that logit (sample 0).
using Influence = std::vector<std::vector<std::set<int64_t>>>;

inline Influence temporal_influence(const nsim::Discriminators& d, const nsim::Shape& feature_shape, int64_t length,
                                    nsim::Rng& rng) {
  using namespace nsim;
  NoGradScope ng;
  const int64_t c = feature_shape[0], s = feature_shape[1];
  const Tensor base = testutil::uniform({length, c, s, s}, rng);
  const std::vector<Tensor> ref = d.judge_temporal(base, 1, length, BnMode::kEval);
  Influence out(ref.size());
  for (size_t l = 0; l < ref.size(); ++l) out[l].resize(static_cast<size_t>(ref[l].numel()));
  const int64_t per_frame = c * s * s;
  for (int64_t t = 0; t < length; ++t) {
    Tensor moved = base.clone();
    auto v = moved.mutable_data();
    for (int64_t i = 0; i < per_frame; ++i) v[static_cast<size_t>(t * per_frame + i)] += rng.uniform(0.5f, 1.5f);
    const std::vector<Tensor> got = d.judge_temporal(moved, 1, length, BnMode::kEval);
    for (size_t l = 0; l < got.size(); ++l)
      for (int64_t j = 0; j < got[l].numel(); ++j)
        if (got[l].at(j) != ref[l].at(j)) out[l][static_cast<size_t>(j)].insert(t);
  }
  return out;
}

struct TemporalLayer {
  int kernel;
  int stride;
  int padding;
};

// Input frames covered by output index j of a chain of temporal convolutions.
inline std::set<int64_t> window_of(const std::vector<TemporalLayer>& chain, int64_t j, int64_t length) {
  int64_t lo = j, hi = j;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    lo = lo * it->stride - it->padding;
    hi = hi * it->stride - it->padding + it->kernel - 1;
  }
  std::set<int64_t> frames;
  for (int64_t t = std::max<int64_t>(lo, 0); t <= std::min(hi, length - 1); ++t) frames.insert(t);
  return frames;
}

inline std::vector<std::vector<TemporalLayer>> level_chains(const nsim::ArchSpec& arch, int levels) {
  std::vector<TemporalLayer> trunk;
  for (const auto& s : arch.temporal_trunk) trunk.push_back({s.kernel_t, s.stride_t, s.padding_t});
  std::vector<std::vector<TemporalLayer>> chains;
  for (int l = 0; l < levels; ++l) {
    const auto& spec = arch.temporal_levels[static_cast<size_t>(l)];
    if (spec.has_down) trunk.push_back({spec.down.kernel_t, spec.down.stride_t, spec.down.padding_t});
    auto chain = trunk;
    chain.push_back({spec.head.kernel_t, spec.head.stride_t, spec.head.padding_t});
    chains.push_back(chain);
  }
  return chains;
}

struct ReceptiveReport {
  bool match = true;
  std::vector<int64_t> widths;  // measured influence window of logit 0 per level
  std::string detail;
};

inline ReceptiveReport check_receptive_fields(const nsim::ModelConfig& cfg, int64_t length, uint64_t seed) {
  using namespace nsim;
  Discriminators d(cfg, Rng(seed).split("disc"));
  Rng rng(seed + 1);
  Tensor probe_frames = testutil::uniform({1, 3, cfg.image_size, cfg.image_size}, rng);
  Tensor feat;
  {
    NoGradScope ng;
    feat = d.encode_shared(probe_frames, BnMode::kEval);
  }
  const Influence inf = temporal_influence(d, {feat.dim(1), feat.dim(2)}, length, rng);
  const auto chains = level_chains(cfg.arch(), cfg.temporal_levels);
  ReceptiveReport rep;
  for (size_t l = 0; l < inf.size(); ++l) {
    rep.widths.push_back(static_cast<int64_t>(inf[l][0].size()));
    for (size_t j = 0; j < inf[l].size(); ++j) {
      if (inf[l][j] != window_of(chains[l], static_cast<int64_t>(j), length)) {
        rep.match = false;
        rep.detail += "level " + std::to_string(l + 1) + " logit " + std::to_string(j) + " window mismatch; ";
      }
    }
  }
  return rep;
}

}  // namespace probes
