#pragma once

#include <memory>
#include <vector>

#include "json.hpp"
#include "nsim/env.hpp"
#include "nsim/session.hpp"

namespace nsim {

struct BinaryImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;  // row-major, values in {0, 1}
};

/// Wall pixels of a frame under the nearest-palette rule.
BinaryImage wall_image(const Frame& frame, const Palette& palette = {});

/// d = sum|s - s_hat| / (sum(s) + 1).
float cbh_distance(const BinaryImage& s, const BinaryImage& s_hat);

/// Something that can be started from a dataset episode and driven by actions.
class CbhSubject {
 public:
  virtual ~CbhSubject() = default;
  /// Returns the initial observation.
  virtual Frame reset(const Episode& start, uint64_t trial_seed) = 0;
  virtual Frame step(int action) = 0;
};

/// The real gridworld, rebuilt from the episode seed.
class EnvSubject : public CbhSubject {
 public:
  explicit EnvSubject(EnvConfig config = {}) : config_(config) {}
  Frame reset(const Episode& start, uint64_t trial_seed) override;
  Frame step(int action) override;

 private:
  EnvConfig config_;
  GridWorld world_;
};

/// A simulator session started from the episode's first frame.
class ModelSubject : public CbhSubject {
 public:
  ModelSubject(std::shared_ptr<const Simulator> sim, int memory_n);
  Frame reset(const Episode& start, uint64_t trial_seed) override;
  Frame step(int action) override;

 private:
  std::shared_ptr<const Simulator> sim_;
  int memory_n_;
  std::unique_ptr<Session> session_;
};

struct CbhResult {
  int k = 0;
  std::vector<double> d;
  double mean = 0.0;
  double std = 0.0;  // population
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;

  nlohmann::json to_json() const;
};

CbhResult summarize_cbh(int k, std::vector<double> d);

struct CbhConfig {
  int k = 5;
  int trials = 20;
  uint64_t seed = 0;
  /// Draw forward actions by walking the start episode's maze, skipping blocked moves.
  bool open_moves = true;
  EnvConfig env;
};

/// K random actions that all have counterparts (stay excluded), from `rng`.
std::vector<int> cbh_actions(int k, const std::vector<int>& counterparts, Rng& rng);

/// Random walk of K unblocked moves through `world` (stay excluded); `world` ends where the walk does.
std::vector<int> open_cbh_actions(int k, GridWorld& world, const std::vector<int>& counterparts, Rng& rng);

/// Forward actions then reversed counterparts per trial; compares wall maps of the first and last frames.
CbhResult run_cbh(CbhSubject& subject, const std::vector<Episode>& starts, const CbhConfig& config,
                  const std::vector<int>& counterparts = {kCounterparts.begin(), kCounterparts.end()},
                  const Palette& palette = {});

/// d between two random frames of one random episode, per trial.
CbhResult random_pair_baseline(const std::vector<Episode>& data, int trials, uint64_t seed,
                               const Palette& palette = {});

struct DisentanglementRow {
  Tensor input;           // x_t fed to the model
  Tensor static_content;  // X^static
  Tensor dynamic_content;
  Tensor masks;           // eta [1, 2, S, S]
  Tensor composed;
  Tensor swapped;         // composed with the swap image as static content
  double dynamic_area = 0.0;
};

struct DisentanglementReport {
  std::vector<DisentanglementRow> rows;
  double mean_dynamic_area = 0.0;

  /// Columns: input, static, dynamic, static mask, dynamic mask, composed, swapped.
  Frame grid(int scale = 4) const;
  nlohmann::json to_json() const;
};

/// One row per episode frame: the model is fed x_t with action a_t (stay after the last action).
DisentanglementReport disentanglement_report(const Simulator& sim, const Episode& episode, const Frame& swap_image,
                                             uint64_t seed, int memory_n);

}  // namespace nsim
