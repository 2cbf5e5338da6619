#include <cmath>

#include "doctest.h"
#include "nsim/memory.hpp"
#include "test_util.hpp"

using namespace nsim;

namespace {

constexpr int kLeft = 0, kRight = 1, kUp = 2, kDown = 3, kStay = 4;

Tensor one_hot_alpha(int64_t b, int n, int row, int col) {
  Tensor a = Tensor::zeros({b, n, n});
  for (int64_t i = 0; i < b; ++i) a.mutable_data()[static_cast<size_t>(i * n * n + row * n + col)] = 1.0f;
  return a;
}

// 3x3 cross-correlation kernel that moves mass by (dr, dc).
Tensor delta_kernel(int64_t b, int dr, int dc) {
  Tensor k = Tensor::zeros({b, 3, 3});
  for (int64_t i = 0; i < b; ++i) k.mutable_data()[static_cast<size_t>(i * 9 + (1 - dr) * 3 + (1 - dc))] = 1.0f;
  return k;
}

int argmax(const Tensor& a) {
  int best = 0;
  for (int64_t i = 1; i < a.numel(); ++i)
    if (a.at(i) > a.at(best)) best = static_cast<int>(i);
  return best;
}

}  // namespace

TEST_CASE("shift kernels are distributions and counterparts are exact flips") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(1));
  const std::vector<int> all{0, 1, 2, 3, 4};
  Tensor k = mem.shift_kernel(all);
  for (int a = 0; a < 5; ++a) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += k.at(a * 9 + j);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  for (auto [a, b] : {std::pair{kUp, kDown}, std::pair{kLeft, kRight}}) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(k.at(a * 9 + i * 3 + j) == k.at(b * 9 + (2 - i) * 3 + (2 - j)));
  }
  CHECK(mem.canonical(kStay) == kStay);
  CHECK_FALSE(mem.flipped(kStay));
  CHECK(mem.flipped(kRight) != mem.flipped(kLeft));
}

TEST_CASE("counterpart table is validated as an involution") {
  ModelConfig cfg = ModelConfig::desk();
  cfg.counterparts = {1, 2, 3, 0, -1};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.counterparts = {1, 0, 3, 2, 4};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("closed gate leaves attention unchanged") {
  Rng rng(2);
  Tensor a = one_hot_alpha(2, 9, 3, 5);
  Tensor w = reshape(softmax(randn({2, 9}, rng), 1), {2, 3, 3});
  CHECK(testutil::bit_equal(shift_attention(a, w, Tensor::zeros({2, 1})), a));
}

TEST_CASE("open gate with a delta kernel moves a one-hot attention by one cell") {
  Tensor a = one_hot_alpha(1, 9, 4, 4);
  Tensor moved = shift_attention(a, delta_kernel(1, 1, 0), Tensor::ones({1, 1}));
  CHECK(testutil::bit_equal(moved, one_hot_alpha(1, 9, 5, 4)));
}

TEST_CASE("soft shift matches the nine-term oracle and stays normalized") {
  Rng rng(3);
  const int n = 7;
  Tensor a = Tensor::zeros({1, n, n});
  // Interior support so no mass leaves through the border.
  std::vector<double> raw;
  double total = 0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const float v = rng.uniform(0.1f, 1.0f);
      a.mutable_data()[static_cast<size_t>(i * n + j)] = v;
      total += v;
    }
  for (float& v : a.mutable_data()) v = static_cast<float>(v / total);
  Tensor w = reshape(softmax(randn({1, 9}, rng), 1), {1, 3, 3});
  Tensor out = shift_attention(a, w, Tensor::ones({1, 1}));
  double s = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double ref = 0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || ii >= n || jj < 0 || jj >= n) continue;
          ref += static_cast<double>(w.at((di + 1) * 3 + dj + 1)) * a.at(ii * n + jj);
        }
      CHECK(std::abs(out.at(i * n + j) - ref) < 1e-6);
      s += out.at(i * n + j);
    }
  CHECK(std::abs(s - 1.0) < 1e-6);
}

TEST_CASE("write identities") {
  Rng rng(4);
  const int n = 5, d = 6;
  Tensor M = randn({1, n * n, d}, rng);
  Tensor e = testutil::uniform({1, d}, rng, 0.0f, 1.0f), v = randn({1, d}, rng);
  Tensor a = one_hot_alpha(1, n, 2, 3);
  Tensor out = memory_write(M, a, e, v);
  for (int i = 0; i < n * n; ++i) {
    for (int k = 0; k < d; ++k) {
      if (i == 2 * n + 3) continue;
      CHECK(out.at(i * d + k) == M.at(i * d + k));
    }
  }
  Tensor replaced = memory_write(M, a, Tensor::ones({1, d}), v);
  for (int k = 0; k < d; ++k) CHECK(replaced.at((2 * n + 3) * d + k) == v.at(k));
}

TEST_CASE("write matches an elementwise oracle") {
  Rng rng(5);
  const int b = 2, n = 3, d = 4;
  Tensor M = randn({b, n * n, d}, rng);
  Tensor a = testutil::uniform({b, n, n}, rng, 0.0f, 1.0f);
  Tensor e = testutil::uniform({b, d}, rng, 0.0f, 1.0f), v = randn({b, d}, rng);
  Tensor out = memory_write(M, a, e, v);
  for (int s = 0; s < b; ++s)
    for (int i = 0; i < n * n; ++i)
      for (int k = 0; k < d; ++k) {
        const double al = a.at(s * n * n + i);
        const double ref = M.at((s * n * n + i) * d + k) * (1.0 - al * e.at(s * d + k)) + al * v.at(s * d + k);
        CHECK(std::abs(out.at((s * n * n + i) * d + k) - ref) < 1e-6);
      }
}

TEST_CASE("read identities and write-read composition") {
  Rng rng(6);
  const int n = 5, d = 3;
  Tensor M = randn({1, n * n, d}, rng);
  Tensor m = memory_read(M, one_hot_alpha(1, n, 1, 4));
  for (int k = 0; k < d; ++k) CHECK(m.at(k) == M.at((1 * n + 4) * d + k));

  Tensor uniform = Tensor::full({1, n, n}, 1.0f / (n * n));
  Tensor mu = memory_read(M, uniform);
  for (int k = 0; k < d; ++k) {
    double ref = 0;
    for (int i = 0; i < n * n; ++i) ref += M.at(i * d + k);
    CHECK(std::abs(mu.at(k) - ref / (n * n)) < 1e-6);
  }

  Tensor target = randn({1, d}, rng);
  Tensor a = one_hot_alpha(1, n, 3, 0);
  Tensor back = memory_read(memory_write(M, a, Tensor::ones({1, d}), target), a);
  CHECK(testutil::bit_equal(reshape(back, {1, d}), target));
}

TEST_CASE("initial state and block resizing") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(1));
  Rng rng(7);
  MemoryState s = mem.initial_state(2, cfg.memory_n, rng);
  CHECK(argmax(slice(s.alpha, 0, 0, 1)) == 4 * 9 + 4);
  MemoryState big = mem.resize_block(s, cfg.memory_n_eval, rng);
  CHECK(big.n == 25);
  CHECK(big.alpha.shape() == Shape{2, 25, 25});
  CHECK(argmax(slice(big.alpha, 0, 1, 1)) == 12 * 25 + 12);
  double total = 0;
  for (int i = 0; i < 625; ++i) total += big.alpha.at(i);
  CHECK(total == 1.0);
  CHECK_THROWS_AS(mem.resize_block(s, 10, rng), ContractError);

  // Same network weights drive both block sizes.
  Tensor h = randn({2, cfg.hidden_dim}, rng);
  const std::vector<int> a{0, 2};
  auto small_step = mem.step(s, a, h);
  auto big_step = mem.step(big, a, h);
  CHECK(small_step.read.shape() == Shape{2, cfg.memory_d});
  CHECK(big_step.read.shape() == Shape{2, cfg.memory_d});
  CHECK(testutil::bit_equal(small_step.kernel, big_step.kernel));

  CHECK(ModelConfig::paper().memory_n == 39);
  CHECK(ModelConfig::paper().memory_n_eval == 99);
}

TEST_CASE("loop closure in the one-hot regime") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(2));
  testutil::force_delta_regime(mem);
  Rng rng(8);
  const int n = 9;
  for (int trial = 0; trial < 50; ++trial) {
    MemoryState s = mem.initial_state(1, n, rng);
    const Tensor start = s.alpha;
    const int k = 1 + rng.uniform_int((n - 1) / 2);
    std::vector<int> seq;
    for (int i = 0; i < k; ++i) seq.push_back(rng.uniform_int(4));
    Tensor h = randn({1, cfg.hidden_dim}, rng);
    for (int a : seq) s = mem.step(s, std::vector<int>{a}, h).state;
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) s = mem.step(s, std::vector<int>{cfg.counterparts[static_cast<size_t>(*it)]}, h).state;
    CHECK(testutil::bit_equal(s.alpha, start));
  }
}

TEST_CASE("content persists while attention travels away and back") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(3));
  testutil::force_delta_regime(mem);
  Rng rng(9);
  MemoryState s = mem.initial_state(1, 9, rng);
  Tensor h = randn({1, cfg.hidden_dim}, rng);
  auto first = mem.step(s, std::vector<int>{kStay}, h);
  const Tensor stored = first.read;
  s = first.state;
  const std::vector<int> away{kUp, kUp, kLeft, kUp};
  for (int a : away) s = mem.step(s, std::vector<int>{a}, randn({1, cfg.hidden_dim}, rng)).state;
  for (auto it = away.rbegin(); it != away.rend(); ++it) {
    s = mem.step(s, std::vector<int>{cfg.counterparts[static_cast<size_t>(*it)]}, randn({1, cfg.hidden_dim}, rng)).state;
  }
  // The return step writes again; compare against the content just before that write.
  Tensor back = mem.read(s);
  CHECK(back.shape() == stored.shape());
  MemoryState probe = s;
  probe.M = first.state.M;
  CHECK(testutil::max_abs_diff(mem.read(probe), stored) < 1e-5);
}

TEST_CASE("content persistence without writes at the revisited cell") {
  Rng rng(10);
  const int n = 9, d = 4;
  Tensor M = randn({1, n * n, d}, rng);
  Tensor alpha = one_hot_alpha(1, n, 4, 4);
  Tensor stored = randn({1, d}, rng);
  M = memory_write(M, alpha, Tensor::ones({1, d}), stored);
  const int moves[4][2] = {{0, 1}, {1, 0}, {0, 1}, {-1, 0}};
  for (auto& mv : moves) {
    alpha = shift_attention(alpha, delta_kernel(1, mv[0], mv[1]), Tensor::ones({1, 1}));
    M = memory_write(M, alpha, testutil::uniform({1, d}, rng, 0.0f, 1.0f), randn({1, d}, rng));
  }
  for (int i = 3; i >= 0; --i) {
    alpha = shift_attention(alpha, delta_kernel(1, -moves[i][0], -moves[i][1]), Tensor::ones({1, 1}));
    if (i > 0) M = memory_write(M, alpha, testutil::uniform({1, d}, rng, 0.0f, 1.0f), randn({1, d}, rng));
  }
  CHECK(testutil::max_abs_diff(memory_read(M, alpha), stored) < 1e-5);
}

TEST_CASE("all memory subnetworks receive gradients") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(4));
  Rng rng(11);
  MemoryState s = mem.initial_state(2, 9, rng);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = Tensor::scalar(0.0f);
  for (int t = 0; t < 3; ++t) {
    Tensor h = randn({2, cfg.hidden_dim}, rng);
    auto out = mem.step(s, std::vector<int>{t % 4, (t + 1) % 4}, h);
    loss = add(loss, sum(mul(out.read, randn({2, cfg.memory_d}, rng))));
    s = out.state;
  }
  tape.backward(loss);
  for (const Tensor* w : {&mem.kernel1.weight, &mem.kernel2.weight, &mem.gate1.weight, &mem.gate2.weight,
                          &mem.erase_add_net.weight}) {
    REQUIRE(w->has_grad());
    double norm = 0;
    for (float g : w->grad()) norm += std::abs(g);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("attention normalization drift over many shifts") {
  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(5));
  Rng rng(12);
  MemoryState s = mem.initial_state(1, 9, rng);
  NoGradScope ng;
  double worst = 0;
  Tensor alpha = s.alpha;
  for (int t = 0; t < 10000; ++t) {
    const std::vector<int> a{rng.uniform_int(5)};
    alpha = shift_attention(alpha, mem.shift_kernel(a), Tensor::full({1, 1}, rng.uniform(0.0f, 1.0f)));
    double total = 0;
    for (float v : alpha.data()) {
      CHECK(v >= 0.0f);
      total += v;
    }
    worst = std::max(worst, std::abs(total - 1.0));
  }
  CHECK(worst <= 1e-6);
}
