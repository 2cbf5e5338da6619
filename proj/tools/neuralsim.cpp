#include <pthread.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nsim/checkpoint.hpp"
#include "nsim/dataset.hpp"
#include "nsim/evaluation.hpp"
#include "nsim/image.hpp"
#include "nsim/server.hpp"
#include "nsim/training.hpp"

using namespace nsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

uint64_t episode_seed(uint64_t seed, uint64_t index) { return Rng(seed).split("episode").split(index).next_u64(); }

std::vector<Episode> fresh_episodes(int count, const EnvConfig& env, int length, uint64_t seed) {
  std::vector<Episode> out;
  for (int i = 0; i < count; ++i) out.push_back(make_episode(episode_seed(seed, static_cast<uint64_t>(i)), env, length));
  return out;
}

ModelConfig preset(const std::string& name) {
  if (name == "desk") return ModelConfig::desk();
  if (name == "paper") return ModelConfig::paper();
  if (name == "tiny") return ModelConfig::tiny();
  throw CLI::ValidationError("--preset", "unknown preset '" + name + "'");
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural game simulator: data generation, training, evaluation and play."};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a gridworld episode dataset (GGEP)");
  std::string gen_out;
  int gen_episodes = 1000, gen_grid = 15, gen_length = 17;
  uint64_t gen_seed = 0;
  std::string gen_policy = "random";
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_option("--episodes", gen_episodes, "Number of episodes")->check(CLI::PositiveNumber);
  gen->add_option("--grid-size", gen_grid, "Maze size (odd, >= 5)");
  gen->add_option("--length", gen_length, "Frames per episode")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--seed", gen_seed, "Base seed");
  gen->add_option("--policy", gen_policy, "random | loop")->check(CLI::IsMember({"random", "loop"}));

  // train
  auto* tr = app.add_subcommand("train", "Train generator and discriminators on a dataset");
  std::string tr_data, tr_out, tr_preset = "desk", tr_config;
  TrainConfig tc = TrainConfig::desk();
  bool tr_no_time = false;
  tr->add_option("--data", tr_data, "Training dataset (GGEP)")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoints and metrics.jsonl")->required();
  tr->add_option("--preset", tr_preset, "Model preset: desk | paper | tiny");
  tr->add_option("--config", tr_config, "JSON file with training settings (applied before flags)");
  auto* o_epochs = tr->add_option("--epochs", tc.epochs, "Epochs");
  auto* o_batch = tr->add_option("--batch", tc.batch_size, "Batch size");
  auto* o_len = tr->add_option("--length", tc.sequence_length, "Sequence length T");
  auto* o_iters = tr->add_option("--max-iterations", tc.max_iterations, "Stop after this many iterations (0 = all)");
  auto* o_seed = tr->add_option("--seed", tc.seed, "Seed");
  auto* o_ckpt = tr->add_option("--checkpoint-interval", tc.checkpoint_interval, "Iterations between checkpoints");
  tr->add_flag("--no-wall-time", tr_no_time, "Omit wall-clock seconds from metric lines");

  // eval-cbh
  auto* ev = app.add_subcommand("eval-cbh", "Come-back-home consistency of a checkpoint");
  std::string ev_ckpt, ev_out, ev_data;
  std::vector<int> ev_k = {5, 10, 20};
  int ev_trials = 20, ev_episodes = 50, ev_grid = 15, ev_memory = 0, ev_baseline = 1000;
  uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt, "Generator checkpoint (GGCK)")->required();
  ev->add_option("--k", ev_k, "Loop lengths K")->expected(1, 16);
  ev->add_option("--trials", ev_trials, "Trials per K")->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed, "Seed");
  ev->add_option("--out", ev_out, "Report JSON path")->required();
  ev->add_option("--data", ev_data, "Held-out dataset for start frames (default: fresh mazes)");
  ev->add_option("--episodes", ev_episodes, "Fresh start episodes when --data is absent");
  ev->add_option("--grid-size", ev_grid, "Maze size for fresh start episodes");
  ev->add_option("--memory-n", ev_memory, "Memory size (0 = model's evaluation size)");
  ev->add_option("--baseline-trials", ev_baseline, "Random-pair baseline samples");

  // report
  auto* rp = app.add_subcommand("report", "Disentanglement report of one episode as a PNG grid");
  std::string rp_ckpt, rp_out, rp_json, rp_swap, rp_data;
  int rp_length = 8, rp_scale = 4, rp_index = 0, rp_memory = 0;
  uint64_t rp_seed = 0;
  rp->add_option("--ckpt", rp_ckpt, "Generator checkpoint (disentangled renderer)")->required();
  rp->add_option("--out", rp_out, "Grid PNG path")->required();
  rp->add_option("--json", rp_json, "Mask statistics JSON path");
  rp->add_option("--swap", rp_swap, "PNG used as swapped static content (default: noise)");
  rp->add_option("--data", rp_data, "Dataset to take the episode from (default: a fresh maze)");
  rp->add_option("--index", rp_index, "Episode index in --data");
  rp->add_option("--length", rp_length, "Frames of the fresh episode")->check(CLI::PositiveNumber);
  rp->add_option("--scale", rp_scale, "Upscale factor")->check(CLI::PositiveNumber);
  rp->add_option("--seed", rp_seed, "Seed");
  rp->add_option("--memory-n", rp_memory, "Memory size (0 = model's evaluation size)");

  // serve
  auto* sv = app.add_subcommand("serve", "WebSocket play server");
  std::string sv_ckpt, sv_address = "127.0.0.1", sv_data;
  uint16_t sv_port = 8765;
  uint64_t sv_seed = 0;
  int sv_memory = 0;
  sv->add_option("--ckpt", sv_ckpt, "Generator checkpoint (GGCK)")->required();
  sv->add_option("--port", sv_port, "Port (0 = any free port)");
  sv->add_option("--seed", sv_seed, "Seed for create messages without one");
  sv->add_option("--address", sv_address, "Bind address");
  sv->add_option("--data", sv_data, "Held-out dataset for initial frames");
  sv->add_option("--memory-n", sv_memory, "Memory size (0 = model's evaluation size)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      EnvConfig env;
      env.grid_size = gen_grid;
      const Policy policy = gen_policy == "loop" ? Policy::kScriptedLoop : Policy::kRandom;
      std::vector<Episode> eps;
      eps.reserve(static_cast<size_t>(gen_episodes));
      for (int i = 0; i < gen_episodes; ++i) {
        eps.push_back(make_episode(episode_seed(gen_seed, static_cast<uint64_t>(i)), env, gen_length, policy));
      }
      if (fs::path(gen_out).has_parent_path()) fs::create_directories(fs::path(gen_out).parent_path());
      write_dataset(gen_out, eps);
      std::cout << "wrote " << gen_episodes << " episodes of " << gen_length << " frames to " << gen_out << "\n";
      return 0;
    }

    if (tr->parsed()) {
      const ModelConfig model = preset(tr_preset);
      TrainConfig cfg = tc;
      if (!tr_config.empty()) {
        std::ifstream is(tr_config);
        if (!is) throw std::runtime_error("cannot read " + tr_config);
        cfg = json::parse(is).get<TrainConfig>();
        // Explicit flags win over the file.
        if (o_epochs->count()) cfg.epochs = tc.epochs;
        if (o_batch->count()) cfg.batch_size = tc.batch_size;
        if (o_len->count()) cfg.sequence_length = tc.sequence_length;
        if (o_iters->count()) cfg.max_iterations = tc.max_iterations;
        if (o_seed->count()) cfg.seed = tc.seed;
        if (o_ckpt->count()) cfg.checkpoint_interval = tc.checkpoint_interval;
      }
      const auto data = read_dataset(fs::path(tr_data));
      fs::create_directories(tr_out);
      std::ofstream metrics(fs::path(tr_out) / "metrics.jsonl");
      TrainHooks hooks;
      hooks.metrics = &metrics;
      hooks.wall_time = !tr_no_time;
      hooks.on_checkpoint = [&](const Checkpoint& c, const std::string& tag) {
        save_checkpoint(fs::path(tr_out) / (tag + ".ggck"), c);
      };
      const TrainSummary s = train(data, cfg, model, hooks);
      std::cout << "trained " << s.iterations << " iterations over " << s.epochs << " epochs";
      if (!s.generator_totals.empty()) std::cout << "; final G " << s.generator_totals.back() << ", D " << s.discriminator_totals.back();
      std::cout << "\n";
      return 0;
    }

    if (ev->parsed()) {
      auto sim = load_generator(load_checkpoint(ev_ckpt));
      const int memory_n = ev_memory > 0 ? ev_memory : sim->config().memory_n_eval;
      EnvConfig env;
      env.grid_size = ev_grid;
      const auto starts = ev_data.empty() ? fresh_episodes(ev_episodes, env, 17, ev_seed) : read_dataset(fs::path(ev_data));
      ModelSubject model(sim, memory_n);
      EnvSubject real(env);
      json results = json::array();
      for (int k : ev_k) {
        CbhConfig cc;
        cc.k = k;
        cc.trials = ev_trials;
        cc.seed = ev_seed;
        cc.env = env;
        const CbhResult m = run_cbh(model, starts, cc);
        const CbhResult e = run_cbh(real, starts, cc);
        results.push_back({{"k", k}, {"model", m.to_json()}, {"environment", e.to_json()}});
        std::cout << "K=" << k << "  model d = " << m.mean << " +- " << m.std << "  environment d = " << e.mean << "\n";
      }
      const CbhResult base = random_pair_baseline(starts, ev_baseline, ev_seed);
      std::cout << "random-pair baseline d = " << base.mean << " +- " << base.std << "\n";
      write_json(ev_out, {{"checkpoint", ev_ckpt},
                          {"trials", ev_trials},
                          {"seed", ev_seed},
                          {"memory_n", memory_n},
                          {"results", results},
                          {"random_pair", base.to_json()}});
      return 0;
    }

    if (rp->parsed()) {
      auto sim = load_generator(load_checkpoint(rp_ckpt));
      const int memory_n = rp_memory > 0 ? rp_memory : sim->config().memory_n_eval;
      Episode ep;
      if (rp_data.empty()) {
        ep = make_episode(episode_seed(rp_seed, 0), EnvConfig{}, rp_length);
      } else {
        const auto data = read_dataset(fs::path(rp_data));
        if (rp_index < 0 || rp_index >= static_cast<int>(data.size())) throw std::runtime_error("--index out of range");
        ep = data[static_cast<size_t>(rp_index)];
      }
      Frame swap;
      if (rp_swap.empty()) {
        Rng rng = Rng(rp_seed).split("swap");
        const int s = sim->config().image_size;
        swap = Frame{s, s, std::vector<uint8_t>(static_cast<size_t>(s * s * 3))};
        for (auto& p : swap.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
      } else {
        std::ifstream is(rp_swap, std::ios::binary);
        if (!is) throw std::runtime_error("cannot read " + rp_swap);
        const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        swap = decode_png(bytes);
      }
      const auto report = disentanglement_report(*sim, ep, swap, rp_seed, memory_n);
      if (fs::path(rp_out).has_parent_path()) fs::create_directories(fs::path(rp_out).parent_path());
      write_png(rp_out, report.grid(rp_scale));
      if (!rp_json.empty()) write_json(rp_json, report.to_json());
      std::cout << report.rows.size() << " rows, mean dynamic mask area " << report.mean_dynamic_area << "\n";
      return 0;
    }

    if (sv->parsed()) {
      PlayOptions opts;
      opts.memory_n = sv_memory;
      opts.default_seed = sv_seed;
      if (!sv_data.empty()) opts.starts = read_dataset(fs::path(sv_data));
      auto manager = SessionManager::from_checkpoint(sv_ckpt, opts);
      // Block termination signals in every server thread; the main thread waits for them.
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      PlayServer server(*manager);
      const uint16_t port = server.start(sv_address, sv_port);
      std::cout << "listening on ws://" << sv_address << ":" << port << std::endl;
      int sig = 0;
      sigwait(&signals, &sig);
      server.stop();
      std::cout << "stopped\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
