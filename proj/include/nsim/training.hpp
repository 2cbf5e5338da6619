#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nsim/checkpoint.hpp"
#include "nsim/dataset.hpp"
#include "nsim/discriminators.hpp"
#include "nsim/optim.hpp"
#include "nsim/simulator.hpp"

namespace nsim {

/// Real frames x_0..x_T and actions a_0..a_{T-1} of a batch of episode windows.
struct SequenceBatch {
  std::vector<Tensor> frames;             // T+1 tensors [B, 3, S, S]
  std::vector<std::vector<int>> actions;  // T vectors of length B

  int64_t batch() const { return frames.front().dim(0); }
  int length() const { return static_cast<int>(actions.size()); }
};

/// Throws DataError naming the first episode with fewer than T+1 frames or a foreign shape.
void check_dataset(const std::vector<Episode>& data, int sequence_length, const ModelConfig& model);
SequenceBatch sample_batch(const std::vector<Episode>& data, int batch, int sequence_length, Rng& rng);

/// Number of leading rollout steps fed with real frames at a 1-based epoch.
int warmup_real_frames(int epoch, int initial, int final_epoch);
int warmup_real_frames(int epoch, const TrainConfig& config);

/// Weighted loss contributions; `total` is their sum.
struct LossTerms {
  std::vector<std::pair<std::string, Tensor>> terms;
  Tensor total;
  double extra = 0.0;  // contributions applied outside the tape (R1)

  void add(std::string name, Tensor value);
  double value(const std::string& name) const;
  double total_value() const { return total.item() + extra; }
  nlohmann::json to_json() const;
};

/// Sum over t of the batch-mean ||X^{m_t} - X^{m_hat_t}|| with m_hat_t = read(alpha_t, M_final).
/// Renders through a frozen copy so renderer parameters receive nothing from this term.
Tensor cycle_loss(const Simulator& sim, const Rollout& rollout);
/// Mean dynamic fine-mask value over the rollout.
Tensor mask_regularizer(const Rollout& rollout);

/// Full generator objective. Discriminator parameters should have requires_grad off.
LossTerms generator_loss(const Simulator& sim, const Discriminators& disc, const SequenceBatch& real,
                         const Rollout& rollout, const std::vector<Tensor>& zs, const LossWeights& weights);

/// Logistic discriminator objective without the R1 penalty. `fake` holds x_hat_1..x_hat_T (detached).
LossTerms discriminator_loss(const Discriminators& disc, const SequenceBatch& real, const std::vector<Tensor>& fake,
                             const std::vector<Tensor>& zs, const LossWeights& weights, Rng& negatives,
                             BnMode mode = BnMode::kTrain);

struct R1Result {
  double value = 0.0;      // gamma / B * ||grad_x S||^2
  double grad_norm = 0.0;  // ||grad_x S||
};

/// R1 penalty of a scalar score S(x) summed over the batch (leading axis of x).
/// When `params` is non-empty, d(value)/d(params) is added to their gradients
/// through a central finite-difference Hessian-vector product along grad_x S.
R1Result r1_penalty(const std::function<Tensor(const Tensor&)>& score, const Tensor& x_real, float gamma,
                    const std::vector<Tensor>& params);

/// Sum of every logit the discriminator judges as real, on frames packed time-major [(T+1)B, 3, S, S].
Tensor real_score(const Discriminators& disc, const Tensor& packed_frames, const std::vector<std::vector<int>>& actions,
                  int64_t batch, BnMode mode);

/// Output of a generator pass kept for the discriminator step.
struct GeneratorPass {
  LossTerms loss;
  std::vector<Tensor> fake;  // detached x_hat_1..x_hat_T
  std::vector<Tensor> zs;
  int real_inputs = 1;
};

/// Generator and discriminators with their optimizers; one iterate() is one G step then one D step.
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train);

  /// Fills generator gradients. The cycle term is differentiated in a second
  /// pass through a frozen renderer, so renderer gradients never see it.
  GeneratorPass generator_gradients(const SequenceBatch& batch, int epoch, const Rng& rng);
  void apply_generator() { g_opt_.step(); }
  /// Fills discriminator gradients including R1.
  LossTerms discriminator_gradients(const SequenceBatch& batch, const GeneratorPass& pass, const Rng& rng);
  void apply_discriminator() { d_opt_.step(); }

  nlohmann::json iterate(const SequenceBatch& batch, int epoch, const Rng& rng);

  Checkpoint checkpoint(int epoch) const;
  void load(const Checkpoint& ckpt);

  const Simulator& generator() const { return sim_; }
  Simulator& generator() { return sim_; }
  const Discriminators& discriminators() const { return disc_; }
  Discriminators& discriminators() { return disc_; }
  TensorList generator_params() const { return sim_.params(); }
  TensorList discriminator_params() const;
  TensorList discriminator_buffers() const;
  int iteration() const { return iteration_; }

 private:
  ModelConfig model_;
  TrainConfig train_;
  Simulator sim_;
  Discriminators disc_;
  std::vector<Tensor> g_params_;
  std::vector<Tensor> d_params_;
  Adam g_opt_;
  Adam d_opt_;
  int iteration_ = 0;
};

struct TrainHooks {
  std::function<void(const Checkpoint&, const std::string& tag)> on_checkpoint;
  std::ostream* metrics = nullptr;
  bool wall_time = true;  // include wall-clock seconds in metric lines
};

struct TrainSummary {
  int iterations = 0;
  int epochs = 0;
  std::vector<double> generator_totals;
  std::vector<double> discriminator_totals;
  Checkpoint final_checkpoint;
};

/// Generator rebuilt from the "generator/" entries of a training checkpoint.
std::shared_ptr<Simulator> load_generator(const Checkpoint& ckpt);

TrainSummary train(const std::vector<Episode>& data, const TrainConfig& train_config, const ModelConfig& model,
                   const TrainHooks& hooks = {});

}  // namespace nsim
