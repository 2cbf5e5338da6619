#include <cmath>

#include "doctest.h"
#include "nsim/dynamics.hpp"
#include "nsim/gradcheck.hpp"
#include "test_util.hpp"

using namespace nsim;

namespace {

Tensor random_frames(int64_t b, int size, Rng& rng) { return testutil::uniform({b, 3, size, size}, rng); }

void fill(Tensor t, float v) {
  for (float& x : t.mutable_data()) x = v;
}

}  // namespace

TEST_CASE("fuse_inputs is zero when the previous hidden state is zero") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine eng(cfg, Rng(1));
  Rng rng(2);
  EngineState s = eng.initial_state(2, randn({2, cfg.memory_d}, rng));
  const std::vector<int> actions{0, 3};
  Tensor v = eng.fuse_inputs(s, actions, randn({2, cfg.z_dim}, rng));
  for (float x : v.data()) CHECK(x == 0.0f);
}

TEST_CASE("fuse_inputs with an all-ones fusion output returns h") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine eng(cfg, Rng(1));
  fill(eng.fusion2.weight, 0.0f);
  fill(eng.fusion2.bias, 1.0f);
  Rng rng(3);
  EngineState s = eng.initial_state(2, randn({2, cfg.memory_d}, rng));
  s.h = testutil::uniform({2, cfg.hidden_dim}, rng);
  const std::vector<int> actions{1, 4};
  Tensor v = eng.fuse_inputs(s, actions, randn({2, cfg.z_dim}, rng));
  CHECK(testutil::bit_equal(v, s.h));
}

TEST_CASE("fuse_inputs is deterministic for a fixed seed") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine a(cfg, Rng(7)), b(cfg, Rng(7));
  Rng r1(5), r2(5);
  EngineState s1 = a.initial_state(3, randn({3, cfg.memory_d}, r1));
  EngineState s2 = b.initial_state(3, randn({3, cfg.memory_d}, r2));
  s1.h = randn({3, cfg.hidden_dim}, r1);
  s2.h = randn({3, cfg.hidden_dim}, r2);
  const std::vector<int> actions{0, 2, 4};
  Tensor z1 = randn({3, cfg.z_dim}, r1), z2 = randn({3, cfg.z_dim}, r2);
  CHECK(testutil::bit_equal(a.fuse_inputs(s1, actions, z1), b.fuse_inputs(s2, actions, z2)));
}

TEST_CASE("fuse_inputs rejects out-of-range actions") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine eng(cfg, Rng(1));
  EngineState s = eng.initial_state(1);
  const std::vector<int> bad{5};
  CHECK_THROWS_AS(eng.fuse_inputs(s, bad, Tensor::zeros({1, cfg.z_dim})), ContractError);
}

TEST_CASE("fusion omits the memory input when memory is disabled") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.use_memory = false;
  cfg.use_disentangled_renderer = false;
  DynamicsEngine eng(cfg, Rng(1));
  CHECK(eng.fusion1.in_features() == 2 * cfg.arch().fusion_embed);
  EngineState s = eng.initial_state(1);
  CHECK_FALSE(s.m_prev.defined());
  const std::vector<int> a{2};
  CHECK(eng.fusion(a, Tensor::zeros({1, cfg.z_dim}), Tensor()).shape() == Shape{1, cfg.hidden_dim});
}

TEST_CASE("encode_frame output sizes") {
  Rng rng(4);
  const ModelConfig desk = ModelConfig::desk();
  DynamicsEngine eng(desk, Rng(1));
  Tensor x = random_frames(2, 16, rng);
  Tensor s1 = eng.encode_frame(x), s2 = eng.encode_frame(x);
  CHECK(s1.shape() == Shape{2, desk.hidden_dim});
  CHECK(testutil::bit_equal(s1, s2));
  CHECK_THROWS_AS(eng.encode_frame(random_frames(1, 15, rng)), ShapeError);

  const ModelConfig paper = ModelConfig::paper();
  DynamicsEngine big(paper, Rng(1));
  CHECK(big.encode_frame(random_frames(1, 84, rng)).shape() == Shape{1, 512});
}

TEST_CASE("step with zero gate weights halves the cell") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine eng(cfg, Rng(1));
  fill(eng.gates.weight, 0.0f);
  fill(eng.gates.bias, 0.0f);
  Rng rng(6);
  EngineState s = eng.initial_state(1, randn({1, cfg.memory_d}, rng));
  s.c = testutil::uniform({1, cfg.hidden_dim}, rng, -2.0f, 2.0f);
  s.h = testutil::uniform({1, cfg.hidden_dim}, rng);
  const std::vector<int> a{0};
  EngineState n = eng.step(s, a, randn({1, cfg.z_dim}, rng), random_frames(1, 16, rng));
  for (int k = 0; k < cfg.hidden_dim; ++k) {
    const double c = s.c.at(k);
    CHECK(n.c.at(k) == doctest::Approx(0.5 * c).epsilon(1e-6));
    CHECK(n.h.at(k) == doctest::Approx(0.5 * std::tanh(0.5 * c)).epsilon(1e-6));
  }
}

TEST_CASE("step with a saturated forget gate and closed input gate keeps the cell") {
  const ModelConfig cfg = ModelConfig::desk();
  const int hd = cfg.hidden_dim;
  DynamicsEngine eng(cfg, Rng(1));
  fill(eng.gates.weight, 0.0f);
  auto b = eng.gates.bias.mutable_data();
  for (int k = 0; k < hd; ++k) {
    b[static_cast<size_t>(k)] = -200.0f;       // i
    b[static_cast<size_t>(hd + k)] = 50.0f;    // f
  }
  Rng rng(8);
  EngineState s = eng.initial_state(2, randn({2, cfg.memory_d}, rng));
  s.c = testutil::uniform({2, hd}, rng, -3.0f, 3.0f);
  const std::vector<int> a{1, 2};
  EngineState n = eng.step(s, a, randn({2, cfg.z_dim}, rng), random_frames(2, 16, rng));
  CHECK(testutil::bit_equal(n.c, s.c));
}

TEST_CASE("step gradients pass gradient_check") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.hidden_dim = 8;
  cfg.memory_d = 4;
  cfg.z_dim = 3;
  DynamicsEngine eng(cfg, Rng(2));
  Rng rng(9);
  EngineState s = eng.initial_state(2, randn({2, cfg.memory_d}, rng));
  s.h = testutil::uniform({2, cfg.hidden_dim}, rng);
  s.c = testutil::uniform({2, cfg.hidden_dim}, rng);
  const Tensor z = randn({2, cfg.z_dim}, rng);
  const Tensor x = random_frames(2, 16, rng);
  const Tensor r = testutil::uniform({2, cfg.hidden_dim}, rng);
  const std::vector<int> a{3, 0};
  auto loss = [&] { return sum(mul(eng.step(s, a, z, x).h, r)); };
  auto rep = gradient_check(loss, {eng.gates.weight, eng.gates.bias, eng.fusion2.weight, eng.encoder_out.weight},
                            {1e-3f, 1e-3f, 60, 1});
  CHECK_MESSAGE(rep.pass, rep.summary());
}

TEST_CASE("gate and hidden ranges and gradient through an unrolled sequence") {
  const ModelConfig cfg = ModelConfig::desk();
  DynamicsEngine eng(cfg, Rng(3));
  Rng rng(10);
  Tensor x0 = random_frames(2, 16, rng);
  x0.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  EngineState s = eng.initial_state(2, randn({2, cfg.memory_d}, rng));
  Tensor x = x0;
  for (int t = 0; t < 6; ++t) {
    const std::vector<int> a{t % 5, (t + 2) % 5};
    s = eng.step(s, a, randn({2, cfg.z_dim}, rng), t == 0 ? x0 : random_frames(2, 16, rng), t);
    for (float v : s.h.data()) CHECK(std::abs(v) <= 1.0f);
  }
  tape.backward(sum(s.h));
  double norm = 0;
  for (float g : x0.grad()) norm += std::abs(g);
  CHECK(norm > 0.0);
}
