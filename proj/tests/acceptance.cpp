// One pass/fail line per acceptance criterion; exit status 1 if any fails.
#include <cmath>
#include <ctime>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nsim/evaluation.hpp"
#include "nsim/gradcheck.hpp"
#include "nsim/memory.hpp"
#include "nsim/renderer.hpp"
#include "nsim/training.hpp"
#include "primitive_catalog.hpp"
#include "probes.hpp"
#include "test_util.hpp"

using namespace nsim;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      else detail.str("");
      pass = false;
      detail << what;
    }
  }
};

double cpu_seconds(std::clock_t since) { return static_cast<double>(std::clock() - since) / CLOCKS_PER_SEC; }

Tensor one_hot_alpha(int64_t b, int n, int row, int col) {
  Tensor a = Tensor::zeros({b, n, n});
  for (int64_t s = 0; s < b; ++s) a.mutable_data()[static_cast<size_t>(s * n * n + row * n + col)] = 1.0f;
  return a;
}

void autodiff_certificate(Outcome& o) {
  const std::clock_t start = std::clock();
  double worst = 0.0;
  size_t coords = 0;
  int primitives = 0;
  for (uint64_t seed = 10; seed < 13; ++seed) {
    testutil::primitive_catalog(seed, [&](const char* name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
      const GradCheckReport r = gradient_check(f, std::move(in), {1e-3f, 1e-3f});
      worst = std::max(worst, r.max_rel_error);
      coords += r.coords_checked;
      ++primitives;
      o.require(r.pass, std::string(name) + ": " + r.summary());
    });
  }
  const ModelConfig cfg = ModelConfig::tiny();
  Simulator sim(cfg, 3);
  Rng rng(15);
  const std::vector<Tensor> real{testutil::uniform({1, 3, 16, 16}, rng)};
  const std::vector<std::vector<int>> actions{{0}, {2}};
  const std::vector<Tensor> zs{randn({1, cfg.z_dim}, rng), randn({1, cfg.z_dim}, rng)};
  const Tensor probe = testutil::uniform({1, 3, 16, 16}, rng);
  auto loss = [&] {
    Rng mem_rng(1);
    const Rollout r = sim.rollout(real, actions, zs, 1, mem_rng);
    return scale(sum(mul(r.frames.back(), probe)), 1.0f / std::sqrt(static_cast<float>(probe.numel())));
  };
  std::vector<Tensor> params;
  for (const auto& p : sim.params()) params.push_back(p.tensor);
  const GradCheckReport composed = gradient_check(loss, params, {1e-3f, 1e-3f, 8, 2});
  o.require(composed.pass, "composed generator path: " + composed.summary());
  const double secs = cpu_seconds(start);
  o.require(secs < 120.0, "runtime " + std::to_string(secs) + " s");
  if (o.pass) {
    o.detail << primitives << " primitive checks (" << coords << " coords), max rel err " << std::setprecision(3)
             << std::max(worst, composed.max_rel_error) << ", composed tiny path " << composed.coords_checked
             << " coords, " << std::fixed << std::setprecision(1) << secs << " s CPU";
  }
}

void memory_algebra(Outcome& o) {
  Rng rng(4);
  const int n = 5, d = 6;
  const Tensor M = randn({2, n * n, d}, rng);
  const Tensor e = testutil::uniform({2, d}, rng, 0.0f, 1.0f), v = randn({2, d}, rng);
  o.require(testutil::bit_equal(memory_write(M, Tensor::zeros({2, n, n}), e, v), M), "alpha = 0 write is not a no-op");
  const Tensor replaced = memory_write(M, one_hot_alpha(2, n, 2, 3), Tensor::ones({2, d}), v);
  for (int64_t s = 0; s < 2; ++s)
    for (int i = 0; i < n * n; ++i)
      for (int k = 0; k < d; ++k) {
        const int64_t at = (s * n * n + i) * d + k;
        const float want = i == 2 * n + 3 ? v.at(s * d + k) : M.at(at);
        if (replaced.at(at) != want) o.require(false, "alpha = 1, e = 1 write is not an exact replace");
      }
  const Tensor back = memory_read(replaced, one_hot_alpha(2, n, 2, 3));
  o.require(testutil::bit_equal(reshape(back, {2, d}), v), "one-hot read after replace is inexact");

  const ModelConfig cfg = ModelConfig::desk();
  MemoryModule mem(cfg, Rng(5));
  const Tensor k = mem.shift_kernel(std::vector<int>{0, 1, 2, 3, 4});
  for (auto [a, b] : {std::pair{kUp, kDown}, std::pair{kLeft, kRight}})
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (k.at(a * 9 + i * 3 + j) != k.at(b * 9 + (2 - i) * 3 + (2 - j))) o.require(false, "K(a^) != flip(K(a))");
      }

  double drift = 0.0;
  {
    NoGradScope ng;
    Rng srng(12);
    Tensor alpha = mem.initial_state(1, 9, srng).alpha;
    for (int t = 0; t < 10000; ++t) {
      alpha = shift_attention(alpha, mem.shift_kernel(std::vector<int>{srng.uniform_int(5)}),
                              Tensor::full({1, 1}, srng.uniform(0.0f, 1.0f)));
      double total = 0.0;
      for (float x : alpha.data()) total += x;
      drift = std::max(drift, std::abs(total - 1.0));
    }
  }
  o.require(drift <= 1e-6, "alpha drift " + std::to_string(drift));

  MemoryModule delta(cfg, Rng(2));
  testutil::force_delta_regime(delta);
  Rng lrng(8);
  int loops = 0;
  for (int trial = 0; trial < 200; ++trial) {
    MemoryState s = delta.initial_state(1, 9, lrng);
    const Tensor start = s.alpha;
    const int kk = 1 + lrng.uniform_int(4);  // K <= (N - 1) / 2
    std::vector<int> seq;
    for (int i = 0; i < kk; ++i) seq.push_back(lrng.uniform_int(4));
    const Tensor h = randn({1, cfg.hidden_dim}, lrng);
    for (int a : seq) s = delta.step(s, std::vector<int>{a}, h).state;
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
      s = delta.step(s, std::vector<int>{cfg.counterparts[static_cast<size_t>(*it)]}, h).state;
    }
    if (testutil::bit_equal(s.alpha, start)) ++loops;
  }
  o.require(loops == 200, "loop closure exact in " + std::to_string(loops) + "/200 trials");
  if (o.pass) o.detail << "write/read identities exact, kernel flips exact, drift " << drift << " over 10k shifts, 200/200 loops closed";
}

void partition_of_unity(Outcome& o) {
  const ModelConfig cfg = ModelConfig::desk();
  DisentangledRenderer r(cfg, Rng(6));
  Rng rng(12);
  NoGradScope ng;
  double worst = 0.0;
  int states = 0;
  for (int i = 0; i < 100; ++i) {
    const float s = rng.uniform(0.1f, 4.0f);
    const RenderOutput out =
        r.render(scale(randn({10, cfg.memory_d}, rng), s), testutil::uniform({10, cfg.hidden_dim}, rng));
    const int64_t hw = out.masks.dim(2) * out.masks.dim(3);
    for (int64_t b = 0; b < 10; ++b, ++states)
      for (int64_t p = 0; p < hw; ++p) {
        const double sum = static_cast<double>(out.masks.at(b * 2 * hw + p)) + out.masks.at(b * 2 * hw + hw + p);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
  }
  o.require(worst <= 1e-5, "max |sum eta - 1| = " + std::to_string(worst));
  const Tensor x = testutil::uniform({3, 3, 8, 8}, rng), l = randn({3, 1, 8, 8}, rng);
  const ComposeResult one = compose_final({l}, {x});
  bool ones = true;
  for (float m : one.masks.data()) ones = ones && m == 1.0f;
  o.require(ones && testutil::bit_equal(one.frame, x), "single-component composition is not exact");
  if (o.pass) o.detail << states << " states, max |sum eta - 1| = " << worst << ", K=1 exact";
}

void receptive_fields(Outcome& o) {
  ModelConfig cfg = ModelConfig::paper();
  cfg.temporal_levels = 3;
  const auto rep = probes::check_receptive_fields(cfg, 32, 10);
  o.require(rep.match, rep.detail);
  o.require(rep.widths == std::vector<int64_t>{6, 18, 32}, "widths differ from 6/18/32");
  if (o.pass) o.detail << "perturbation windows 6 / 18 / 32 frames";
}

void cbh_oracle(Outcome& o) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    BinaryImage s{8, 8, std::vector<uint8_t>(64)}, t{8, 8, std::vector<uint8_t>(64)};
    const double ps = rng.uniform(), pt = rng.uniform();
    for (auto& b : s.bits) b = rng.uniform() < ps ? 1 : 0;
    for (auto& b : t.bits) b = rng.uniform() < pt ? 1 : 0;
    long changed = 0, walls = 0;
    for (size_t p = 0; p < 64; ++p) {
      changed += s.bits[p] != t.bits[p];
      walls += s.bits[p];
    }
    if (cbh_distance(s, t) != static_cast<float>(static_cast<double>(changed) / static_cast<double>(walls + 1))) {
      o.require(false, "pair " + std::to_string(i) + " differs from pixel counting");
      break;
    }
  }
  std::vector<Episode> starts;
  for (uint64_t s = 0; s < 10; ++s) starts.push_back(make_episode(400 + s, {}, 2));
  EnvSubject env;
  int trials = 0;
  for (int k : {1, 5, 10, 20, 50}) {
    const CbhResult r = run_cbh(env, starts, {k, 40, 3});
    for (double d : r.d) {
      ++trials;
      if (d != 0.0) o.require(false, "environment d = " + std::to_string(d) + " at K = " + std::to_string(k));
    }
  }
  if (o.pass) o.detail << "10000 pairs exact; environment d = 0 in " << trials << " trials over K in {1,5,10,20,50}";
}

void warmup(Outcome& o) {
  const TrainConfig paper = TrainConfig::paper();
  o.require(warmup_real_frames(1, paper) == 9, "epoch 1 != 9");
  for (int e = 20; e <= 100; ++e) {
    if (warmup_real_frames(e, paper) != 1) o.require(false, "epoch " + std::to_string(e) + " != 1");
  }
  for (int e = 1; e < 20; ++e) {
    const double linear = 9.0 - 8.0 * (e - 1) / 19.0;
    if (warmup_real_frames(e, paper) != static_cast<int>(std::floor(linear + 0.5))) {
      o.require(false, "epoch " + std::to_string(e) + " off the linear schedule");
    }
  }
  if (o.pass) o.detail << "epoch 1 -> 9, epochs 20..100 -> 1, epochs 2..19 on the rounded line";
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream os;
  write_checkpoint(os, c);
  return os.str();
}

std::vector<Episode> smoke_data() {
  std::vector<Episode> out;
  for (uint64_t i = 0; i < 32; ++i) out.push_back(make_episode(1000 + i, EnvConfig{}, 17));
  return out;
}

void training_smoke(Outcome& o) {
  const auto data = smoke_data();
  TrainConfig tc = TrainConfig::desk();
  tc.sequence_length = 8;
  tc.batch_size = 4;
  tc.epochs = 1000;
  tc.max_iterations = 200;
  tc.seed = 7;
  std::string ckpt[2];
  std::vector<double> g;
  double secs[2] = {0.0, 0.0};
  bool finite = true;
  for (int run = 0; run < 2; ++run) {
    std::ostringstream log;
    TrainHooks hooks;
    hooks.metrics = &log;
    hooks.wall_time = false;
    const std::clock_t start = std::clock();
    const TrainSummary s = train(data, tc, ModelConfig::desk(), hooks);
    secs[run] = cpu_seconds(start);
    ckpt[run] = bytes_of(s.final_checkpoint);
    o.require(s.iterations == 200, "ran " + std::to_string(s.iterations) + " iterations");
    if (run == 0) g = s.generator_totals;
    std::istringstream lines(log.str());
    std::string line;
    while (std::getline(lines, line)) {
      const auto j = nlohmann::json::parse(line);
      for (const char* side : {"generator", "discriminator"})
        for (const auto& [name, value] : j[side].items()) finite = finite && std::isfinite(value.get<double>());
    }
  }
  o.require(finite, "non-finite loss term in the metrics log");
  o.require(secs[0] < 600.0 && secs[1] < 600.0, "run took " + std::to_string(std::max(secs[0], secs[1])) + " s");
  auto window = [&](size_t end) {
    double s = 0.0;
    for (size_t i = end - 20; i < end; ++i) s += g[i];
    return s / 20.0;
  };
  const double early = g.size() >= 200 ? window(20) : 0.0, late = g.size() >= 200 ? window(200) : 0.0;
  o.require(late < early, "moving-average G loss " + std::to_string(early) + " -> " + std::to_string(late));
  o.require(ckpt[0] == ckpt[1], "checkpoints of two seeded runs differ");
  if (o.pass) {
    o.detail << std::fixed << std::setprecision(1) << "200 iterations in " << secs[0] << " s / " << secs[1]
             << " s CPU, G moving average (20) " << early << " -> " << late << ", checkpoints bit-identical ("
             << ckpt[0].size() << " bytes)";
  }
}

void cycle_partition(Outcome& o) {
  const ModelConfig cfg = ModelConfig::desk();
  TrainConfig on = TrainConfig::desk();
  on.sequence_length = 8;
  on.batch_size = 4;
  on.seed = 51;
  TrainConfig off = on;
  off.weights.lambda_cycle = 0.0f;
  Trainer a(cfg, on), b(cfg, off);
  Rng rng(52);
  const auto data = smoke_data();
  const SequenceBatch batch = sample_batch(data, 4, 8, rng);
  const GeneratorPass pa = a.generator_gradients(batch, 50, Rng(53));
  b.generator_gradients(batch, 50, Rng(53));
  o.require(pa.loss.value("cycle") > 0.0, "cycle term is zero");
  auto same = [](const Tensor& x, const Tensor& y) {
    if (x.has_grad() != y.has_grad()) return false;
    if (!x.has_grad()) return true;
    for (size_t i = 0; i < x.grad().size(); ++i) {
      if (x.grad()[i] != y.grad()[i]) return false;
    }
    return true;
  };
  const TensorList ga = a.generator_params(), gb = b.generator_params();
  int renderer = 0, renderer_equal = 0, other = 0, other_changed = 0;
  for (size_t i = 0; i < ga.size(); ++i) {
    const bool eq = same(ga[i].tensor, gb[i].tensor);
    if (ga[i].name.rfind("render", 0) == 0) {
      ++renderer;
      renderer_equal += eq;
    } else {
      ++other;
      other_changed += !eq;
    }
  }
  o.require(renderer > 0 && renderer_equal == renderer,
            std::to_string(renderer - renderer_equal) + " renderer tensors have different gradients");
  o.require(other_changed > 0, "dynamics/memory gradients unchanged by lambda_c");
  if (o.pass) {
    o.detail << renderer << "/" << renderer << " renderer tensors bit-identical, " << other_changed << "/" << other
             << " dynamics/memory tensors changed";
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"autodiff certificate", autodiff_certificate},
      {"memory algebra", memory_algebra},
      {"renderer partition of unity", partition_of_unity},
      {"temporal receptive fields", receptive_fields},
      {"CBH metric oracle equivalence", cbh_oracle},
      {"warm-up schedule", warmup},
      {"training smoke", training_smoke},
      {"cycle-loss gradient partition", cycle_partition},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << ": " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - static_cast<size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
