#include <array>
#include <cmath>

#include "doctest.h"
#include "nsim/discriminators.hpp"
#include "nsim/gradcheck.hpp"
#include "probes.hpp"
#include "test_util.hpp"

using namespace nsim;

namespace {

Discriminators make(const ModelConfig& cfg, uint64_t seed = 1) { return Discriminators(cfg, Rng(seed).split("disc")); }

double abs_grad(const Tensor& t) {
  if (!t.has_grad()) return 0.0;
  double s = 0;
  for (float g : t.grad()) s += std::abs(g);
  return s;
}

}  // namespace

TEST_CASE("negative action sampler") {
  Rng rng(1);
  std::array<int, 5> counts{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(sample_negative_action(2, 5, rng))];
  CHECK(counts[2] == 0);
  for (int a : {0, 1, 3, 4}) CHECK(std::abs(counts[static_cast<size_t>(a)] / double(n) - 0.25) < 0.02);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_negative_action(0, 2, rng) == 1);
    CHECK(sample_negative_action(1, 2, rng) == 0);
  }
  CHECK_THROWS_AS(sample_negative_action(0, 1, rng), ContractError);
  CHECK_THROWS_AS(sample_negative_action(5, 5, rng), ContractError);
}

TEST_CASE("shared encoder output and sensitivity") {
  const ModelConfig cfg = ModelConfig::desk();
  Discriminators d = make(cfg);
  Rng rng(2);
  Tensor x = testutil::uniform({2, 3, 16, 16}, rng);
  Tensor f1 = d.encode_shared(x, BnMode::kEval);
  CHECK(f1.shape() == Shape{2, 32, 2, 2});
  CHECK(testutil::bit_equal(f1, d.encode_shared(x, BnMode::kEval)));
  Tensor y = x.clone();
  y.mutable_data()[5 * 16 + 7] += 0.5f;
  CHECK_FALSE(testutil::bit_equal(f1, d.encode_shared(y, BnMode::kEval)));
  CHECK_THROWS_AS(d.encode_shared(testutil::uniform({1, 3, 12, 12}, rng), BnMode::kEval), ShapeError);
}

TEST_CASE("paper preset shapes") {
  ModelConfig cfg = ModelConfig::paper();
  Discriminators d = make(cfg);
  Rng rng(3);
  Tensor f = d.encode_shared(testutil::uniform({2, 3, 84, 84}, rng), BnMode::kEval);
  CHECK(f.shape() == Shape{2, 64, 3, 3});
  SingleFrameLogits s = d.judge_single_frame(f, BnMode::kEval);
  CHECK(s.patch.shape() == Shape{2, 1, 3, 3});
  CHECK(s.full.shape() == Shape{2, 1});
  const std::vector<int> a{1, 3};
  CHECK(d.judge_action_pair(f, f, a, BnMode::kEval).shape() == Shape{2, 1});
  ActionAux aux = d.judge_aux(f, f, BnMode::kEval);
  CHECK(aux.action_logits.shape() == Shape{2, 5});
  CHECK(aux.z_pred.shape() == Shape{2, 32});
}

TEST_CASE("desk preset head shapes") {
  const ModelConfig cfg = ModelConfig::desk();
  Discriminators d = make(cfg);
  Rng rng(4);
  Tensor f = d.encode_shared(testutil::uniform({3, 3, 16, 16}, rng), BnMode::kTrain);
  SingleFrameLogits s = d.judge_single_frame(f, BnMode::kTrain);
  CHECK(s.patch.shape() == Shape{3, 1, 2, 2});
  CHECK(s.full.shape() == Shape{3, 1});
  ActionAux aux = d.judge_aux(f, f, BnMode::kTrain);
  CHECK(aux.action_logits.dim(1) == cfg.action_count);
  CHECK(aux.z_pred.dim(1) == cfg.z_dim);
}

TEST_CASE("single-frame heads pass gradient_check into the shared encoder") {
  const ModelConfig cfg = ModelConfig::tiny();
  Discriminators d = make(cfg, 5);
  Rng rng(5);
  const Tensor x = testutil::uniform({2, 3, 16, 16}, rng);
  const Tensor pw = testutil::uniform({2, 1, 2, 2}, rng);
  std::function<Tensor()> patch = [&] {
    return sum(mul(d.judge_single_frame(d.encode_shared(x, BnMode::kTrainNoUpdate), BnMode::kTrainNoUpdate).patch, pw));
  };
  std::function<Tensor()> full = [&] {
    return sum(d.judge_single_frame(d.encode_shared(x, BnMode::kTrainNoUpdate), BnMode::kTrainNoUpdate).full);
  };
  for (const auto& f : {patch, full}) {
    auto rep = gradient_check(f, {d.encoder[0].conv.weight, d.encoder[2].conv.weight}, {1e-3f, 1e-3f, 40, 3});
    CHECK_MESSAGE(rep.pass, rep.summary());
  }
  Tape tape;
  {
    TapeScope scope(tape);
    d.encoder[0].conv.weight.set_requires_grad(true);
    tape.backward(full());
  }
  CHECK(abs_grad(d.encoder[0].conv.weight) > 0.0);
}

TEST_CASE("psi and phi share every layer but the last with the action judge") {
  const ModelConfig cfg = ModelConfig::desk();
  Discriminators d = make(cfg, 6);
  Rng rng(6);
  Tensor f = d.encode_shared(testutil::uniform({2, 3, 16, 16}, rng), BnMode::kEval);
  TensorList all;
  d.collect(all);
  set_requires_grad(all, true);
  Tape tape;
  {
    TapeScope scope(tape);
    ActionAux aux = d.judge_aux(f, f, BnMode::kEval);
    tape.backward(add(sum(aux.action_logits), sum(aux.z_pred)));
  }
  CHECK(abs_grad(d.merge.conv.weight) > 0.0);
  CHECK(abs_grad(d.pair_hidden.weight) > 0.0);
  CHECK(abs_grad(d.psi_out.weight) > 0.0);
  CHECK(abs_grad(d.phi_out.weight) > 0.0);
  CHECK_FALSE(d.pair_out.weight.has_grad());
  CHECK_FALSE(d.action_embed.weight.has_grad());
}

TEST_CASE("temporal pyramid contracts") {
  ModelConfig paper = ModelConfig::paper();
  paper.temporal_levels = 3;
  Discriminators d3 = make(paper);
  CHECK(d3.temporal_receptive_fields() == std::vector<int64_t>{6, 18, 32});
  CHECK(d3.temporal_min_length() == 32);
  paper.temporal_levels = 2;
  CHECK(make(paper).temporal_min_length() == 18);

  const ModelConfig desk = ModelConfig::desk();
  Discriminators d = make(desk);
  CHECK(d.temporal_receptive_fields() == std::vector<int64_t>{6, 8});
  Rng rng(7);
  CHECK_THROWS_AS(d.judge_temporal(testutil::uniform({2 * 5, 32, 2, 2}, rng), 2, 5, BnMode::kEval), ContractError);
  auto logits = d.judge_temporal(testutil::uniform({2 * 8, 32, 2, 2}, rng), 2, 8, BnMode::kEval);
  REQUIRE(logits.size() == 2);
  CHECK(logits[0].shape() == Shape{2, 2});
  CHECK(logits[1].shape() == Shape{2, 1});
}

TEST_CASE("zero temporal weights give zero logits") {
  const ModelConfig cfg = ModelConfig::desk();
  Discriminators d = make(cfg);
  auto zero = [](Conv3d& c) {
    for (float& v : c.weight.mutable_data()) v = 0.0f;
    for (float& v : c.bias.mutable_data()) v = 0.0f;
  };
  for (auto& l : d.temporal_trunk) zero(l.conv);
  for (auto& l : d.temporal_down) zero(l.conv);
  for (auto& h : d.temporal_heads) zero(h);
  Rng rng(8);
  for (const Tensor& t : d.judge_temporal(testutil::uniform({8, 32, 2, 2}, rng), 1, 8, BnMode::kEval))
    for (float v : t.data()) CHECK(v == 0.0f);
}

TEST_CASE("temporal receptive-field certificate at the desk preset") {
  auto rep = probes::check_receptive_fields(ModelConfig::desk(), 12, 9);
  CHECK_MESSAGE(rep.match, rep.detail);
  CHECK(rep.widths == std::vector<int64_t>{6, 8});
}

TEST_CASE("temporal receptive-field certificate at the paper preset") {
  ModelConfig cfg = ModelConfig::paper();
  cfg.temporal_levels = 3;
  auto rep = probes::check_receptive_fields(cfg, 32, 10);
  CHECK_MESSAGE(rep.match, rep.detail);
  CHECK(rep.widths == std::vector<int64_t>{6, 18, 32});
}

TEST_CASE("batch norm statistics policy") {
  BatchNorm bn("bn", 2);
  Rng rng(11);
  Tensor x = add_scalar(scale(randn({4, 2, 3, 3}, rng), 2.0f), 3.0f);
  Tensor y = bn(x, BnMode::kTrainNoUpdate);
  CHECK(bn.running_mean.at(0) == 0.0f);
  CHECK(bn.running_var.at(0) == 1.0f);
  for (int c = 0; c < 2; ++c) {
    double m = 0;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) m += y.at((n * 2 + c) * 9 + p);
    CHECK(std::abs(m / 36) < 1e-5);
  }
  bn(x, BnMode::kTrain);
  for (int c = 0; c < 2; ++c) {
    double m = 0, q = 0;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) m += x.at((n * 2 + c) * 9 + p);
    m /= 36;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 9; ++p) q += std::pow(x.at((n * 2 + c) * 9 + p) - m, 2);
    CHECK(bn.running_mean.at(c) == doctest::Approx(0.1 * m).epsilon(1e-5));
    CHECK(bn.running_var.at(c) == doctest::Approx(0.9 + 0.1 * q / 35).epsilon(1e-5));
  }
  Tensor e = bn(x, BnMode::kEval);
  const double ref = (x.at(0) - bn.running_mean.at(0)) / std::sqrt(bn.running_var.at(0) + 1e-5);
  CHECK(e.at(0) == doctest::Approx(ref).epsilon(1e-5));
}
