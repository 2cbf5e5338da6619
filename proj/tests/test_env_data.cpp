#include <array>
#include <deque>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "nsim/checkpoint.hpp"
#include "nsim/dataset.hpp"
#include "nsim/env.hpp"
#include "test_util.hpp"

using namespace nsim;

namespace {

int reachable_floor(const GridWorld& w) {
  const int n = w.size();
  std::vector<uint8_t> seen(static_cast<size_t>(n * n), 0);
  std::deque<std::array<int, 2>> q{{w.agent_row(), w.agent_col()}};
  seen[static_cast<size_t>(w.agent_row() * n + w.agent_col())] = 1;
  int count = 0;
  while (!q.empty()) {
    const auto [r, c] = q.front();
    q.pop_front();
    ++count;
    const int dr[4] = {0, 0, -1, 1}, dc[4] = {-1, 1, 0, 0};
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (w.wall(nr, nc) || seen[static_cast<size_t>(nr * n + nc)]) continue;
      seen[static_cast<size_t>(nr * n + nc)] = 1;
      q.push_back({nr, nc});
    }
  }
  return count;
}

int floor_count(const GridWorld& w) {
  int c = 0;
  for (uint8_t v : w.walls()) c += v == 0;
  return c;
}

// Open neighbour in direction `a` of the agent, if any.
bool open_toward(const GridWorld& w, int a) {
  const auto d = action_delta(a);
  return !w.wall(w.agent_row() + d[0], w.agent_col() + d[1]);
}

std::string serialize(const std::vector<Episode>& eps) {
  std::ostringstream os;
  write_dataset(os, eps);
  return os.str();
}

}  // namespace

TEST_CASE("mazes are connected, deterministic and respect the size contract") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    for (int size : {5, 7, 15, 21}) {
      EnvConfig cfg;
      cfg.grid_size = size;
      const GridWorld w = generate_maze(seed, cfg);
      CHECK(reachable_floor(w) == floor_count(w));
      CHECK_FALSE(w.wall(w.agent_row(), w.agent_col()));
      // Perfect maze: a spanning tree over the (size-1)/2 squared rooms.
      const int rooms = (size - 1) / 2 * ((size - 1) / 2);
      CHECK(floor_count(w) == 2 * rooms - 1);
    }
  }
  const GridWorld a = generate_maze(9), b = generate_maze(9);
  CHECK(a.walls() == b.walls());
  CHECK(a.food_map() == b.food_map());
  CHECK(a.agent_row() == b.agent_row());
  EnvConfig small;
  small.grid_size = 5;
  CHECK(floor_count(generate_maze(1, small)) >= 1);
  for (int bad : {3, 6, 14}) {
    EnvConfig c;
    c.grid_size = bad;
    CHECK_THROWS_AS(generate_maze(1, c), ContractError);
  }
  CHECK(generate_maze(1).wall(-1, 3));
  CHECK(generate_maze(1).wall(3, 15));
}

TEST_CASE("counterpart table is an involution on its domain") {
  for (int a = 0; a < kActionCount; ++a) {
    const int c = kCounterparts[static_cast<size_t>(a)];
    if (c < 0) continue;
    CHECK(kCounterparts[static_cast<size_t>(c)] == a);
    const auto d = action_delta(a), dc = action_delta(c);
    CHECK(d[0] == -dc[0]);
    CHECK(d[1] == -dc[1]);
  }
  CHECK(kCounterparts[kStay] == -1);
}

TEST_CASE("environment steps: walls block, stay is a no-op, counterparts return") {
  int bumps = 0, returns = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    GridWorld w = generate_maze(seed);
    const Frame start = w.observe();
    CHECK(start.height == 16);
    CHECK(start.width == 16);
    CHECK(env_step(w, kStay) == start);
    for (int a = 0; a < 4; ++a) {
      GridWorld probe = w;
      if (!open_toward(probe, a)) {
        CHECK_FALSE(probe.step(a));
        CHECK(probe.agent_row() == w.agent_row());
        CHECK(probe.agent_col() == w.agent_col());
        CHECK(probe.observe() == start);
        ++bumps;
      } else {
        const int r0 = probe.agent_row(), c0 = probe.agent_col();
        const auto d = action_delta(a);
        CHECK(probe.step(a));
        CHECK(probe.agent_row() == r0 + d[0]);
        CHECK(probe.agent_col() == c0 + d[1]);
        CHECK_FALSE(probe.wall(probe.agent_row(), probe.agent_col()));
        probe.step(kCounterparts[static_cast<size_t>(a)]);
        CHECK(probe.agent_row() == r0);
        CHECK(probe.agent_col() == c0);
        CHECK(probe.observe() == start);
        ++returns;
      }
    }
  }
  CHECK(bumps > 0);
  CHECK(returns > 0);
}

TEST_CASE("observation layout") {
  GridWorld w = generate_maze(3);
  const Frame f = w.observe();
  const Palette pal;
  // Agent at the centre cell, padding column/row in wall colour.
  const uint8_t* centre = f.at(7, 7);
  CHECK(Rgb{centre[0], centre[1], centre[2]} == pal.agent);
  const uint8_t* pad = f.at(15, 15);
  CHECK(Rgb{pad[0], pad[1], pad[2]} == pal.wall);
  const auto mask = wall_mask(f, pal);
  CHECK(mask[static_cast<size_t>(15 * 16 + 3)] == 1);
  CHECK(mask[static_cast<size_t>(7 * 16 + 7)] == 0);
  const Tensor t = frame_to_tensor(f);
  CHECK(t.shape() == Shape{1, 3, 16, 16});
  CHECK(tensor_to_frame(t) == f);
  for (float v : t.data()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("rollouts: lengths, determinism, policy statistics, loop closure") {
  const GridWorld w = generate_maze(4);
  const Episode two = rollout(w, Policy::kRandom, 2, 1);
  CHECK(two.frames.size() == 2);
  CHECK(two.actions.size() == 1);
  CHECK(rollout(w, Policy::kRandom, 30, 5) == rollout(w, Policy::kRandom, 30, 5));
  CHECK_FALSE(rollout(w, Policy::kRandom, 30, 5) == rollout(w, Policy::kRandom, 30, 6));
  CHECK_THROWS_AS(rollout(w, Policy::kRandom, 1, 1), ContractError);

  const Episode long_ep = rollout(w, Policy::kRandom, 10001, 7);
  std::array<int, kActionCount> hist{};
  for (uint8_t a : long_ep.actions) ++hist[a];
  for (int c : hist) CHECK(std::abs(c / 10000.0 - 1.0 / kActionCount) <= 0.05 / kActionCount);

  // Replaying the stored actions through a fresh world reproduces every frame.
  GridWorld replay = w;
  for (size_t t = 0; t < long_ep.actions.size() && t < 200; ++t) {
    CHECK(env_step(replay, long_ep.actions[t]) == long_ep.frames[t + 1]);
  }

  for (uint64_t seed = 0; seed < 30; ++seed) {
    const GridWorld world = generate_maze(seed);
    const Episode loop = rollout(world, Policy::kScriptedLoop, 17, seed);
    CHECK(loop.frames.front() == loop.frames.back());
    GridWorld sim = world;
    for (uint8_t a : loop.actions) sim.step(a);
    CHECK(sim.agent_row() == world.agent_row());
    CHECK(sim.agent_col() == world.agent_col());
  }
}

TEST_CASE("dataset round trip is byte exact") {
  std::vector<Episode> eps;
  for (uint64_t s = 0; s < 5; ++s) eps.push_back(make_episode(s, EnvConfig{}, 9 + static_cast<int>(s)));
  const std::string bytes = serialize(eps);
  CHECK(bytes.substr(0, 4) == "GGEP");
  std::istringstream is(bytes);
  const auto back = read_dataset(is);
  CHECK(back == eps);
  CHECK(serialize(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "nsim_test_dataset.ggep";
  write_dataset(path, eps);
  CHECK(read_dataset(path) == eps);
  std::filesystem::remove(path);
}

TEST_CASE("dataset errors carry byte offsets and return nothing") {
  std::vector<Episode> eps;
  for (uint64_t s = 0; s < 3; ++s) eps.push_back(make_episode(s, EnvConfig{}, 9));
  const std::string bytes = serialize(eps);

  for (size_t cut : {size_t{2}, size_t{6}, size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream is(bytes.substr(0, cut));
    std::vector<Episode> got{make_episode(99, EnvConfig{}, 3)};
    try {
      got = read_dataset(is);
      FAIL("expected a format error at cut " << cut);
    } catch (const FormatError& e) {
      CHECK(e.offset() <= cut);
      CHECK(got.size() == 1);
    }
  }

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream m(bad_magic);
  try {
    read_dataset(m);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  std::string bad_version = bytes;
  bad_version[4] = 7;
  std::istringstream v(bad_version);
  try {
    read_dataset(v);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  std::string bad_action = bytes;
  bad_action.back() = static_cast<char>(9);
  std::istringstream a(bad_action);
  CHECK_THROWS_AS(read_dataset(a), FormatError);
}

TEST_CASE("streaming a 1000-episode dataset") {
  std::vector<Episode> eps;
  for (uint64_t s = 0; s < 1000; ++s) {
    Episode e;
    e.seed = s;
    e.frames.assign(2, Frame{16, 16, std::vector<uint8_t>(16 * 16 * 3, static_cast<uint8_t>(s))});
    e.actions = {static_cast<uint8_t>(s % kActionCount)};
    eps.push_back(std::move(e));
  }
  std::istringstream is(serialize(eps));
  DatasetReader reader(is);
  CHECK(reader.header().episode_count == 1000);
  CHECK(reader.header().height == 16);
  CHECK(reader.header().counterparts == std::vector<int>(kCounterparts.begin(), kCounterparts.end()));
  Episode e;
  uint64_t count = 0;
  while (reader.next(e)) {
    CHECK(e.seed == count);
    ++count;
  }
  CHECK(count == reader.header().episode_count);
}

TEST_CASE("checkpoint round trip and format errors") {
  Checkpoint c;
  c.model = ModelConfig::tiny();
  c.meta["iteration"] = 12;
  Rng rng(1);
  c.tensors.push_back({"generator/a.weight", randn({3, 4}, rng)});
  c.tensors.push_back({"discriminator/b.bias", randn({5}, rng)});
  std::ostringstream os;
  write_checkpoint(os, c);
  const std::string bytes = os.str();
  CHECK(bytes.substr(0, 4) == "GGCK");

  std::istringstream is(bytes);
  const Checkpoint back = read_checkpoint(is);
  CHECK(back.model.preset == "tiny");
  CHECK(back.model.hidden_dim == c.model.hidden_dim);
  CHECK(back.meta["iteration"] == 12);
  REQUIRE(back.tensors.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.tensors[i].name == c.tensors[i].name);
    CHECK(testutil::bit_equal(back.tensors[i].tensor, c.tensors[i].tensor));
  }
  REQUIRE(back.find("discriminator/b.bias") != nullptr);
  CHECK(back.find("missing") == nullptr);

  const auto path = std::filesystem::temp_directory_path() / "nsim_test.ggck";
  save_checkpoint(path, c);
  CHECK(load_checkpoint(path).tensors.size() == 2);
  std::filesystem::remove(path);

  std::string bad_version = bytes;
  bad_version[4] = 2;
  std::istringstream v(bad_version);
  CHECK_THROWS_AS(read_checkpoint(v), FormatError);
  std::istringstream t(bytes.substr(0, bytes.size() - 3));
  try {
    read_checkpoint(t);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() <= bytes.size() - 3);
  }

  TensorList dst{{"generator/a.weight", Tensor::zeros({3, 4})}};
  assign_from(dst, back);
  CHECK(testutil::bit_equal(dst[0].tensor, c.tensors[0].tensor));
  TensorList wrong{{"generator/a.weight", Tensor::zeros({4, 3})}};
  CHECK_THROWS_AS(assign_from(wrong, back), FormatError);
  TensorList absent{{"nope", Tensor::zeros({1})}};
  CHECK_THROWS_AS(assign_from(absent, back), FormatError);
}
