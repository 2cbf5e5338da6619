#include "nsim/env.hpp"

#include <algorithm>
#include <cmath>

namespace nsim {

GridWorld::GridWorld(const EnvConfig& config, std::vector<uint8_t> walls, std::vector<uint8_t> food, int agent_row,
                     int agent_col)
    : config_(config), walls_(std::move(walls)), food_(std::move(food)) {
  place_agent(agent_row, agent_col);
}

bool GridWorld::wall(int row, int col) const {
  const int n = config_.grid_size;
  if (row < 0 || col < 0 || row >= n || col >= n) return true;
  return walls_[static_cast<size_t>(row * n + col)] != 0;
}

bool GridWorld::food(int row, int col) const {
  const int n = config_.grid_size;
  if (row < 0 || col < 0 || row >= n || col >= n) return false;
  return food_[static_cast<size_t>(row * n + col)] != 0;
}

void GridWorld::place_agent(int row, int col) {
  if (wall(row, col)) throw ContractError("agent cannot be placed on a wall cell");
  row_ = row;
  col_ = col;
}

std::array<int, 2> action_delta(int action) {
  switch (action) {
    case kLeft: return {0, -1};
    case kRight: return {0, 1};
    case kUp: return {-1, 0};
    case kDown: return {1, 0};
    case kStay: return {0, 0};
    default: throw ContractError("action " + std::to_string(action) + " out of range");
  }
}

bool GridWorld::step(int action) {
  const auto [dr, dc] = action_delta(action);
  if (dr == 0 && dc == 0) return false;
  if (wall(row_ + dr, col_ + dc)) return false;
  row_ += dr;
  col_ += dc;
  return true;
}

Frame GridWorld::observe() const {
  const int r = config_.window_radius;
  const int ppc = config_.pixels_per_cell;
  const int span = (2 * r + 1) * ppc;
  const int size = std::max(config_.frame_size, span);
  Frame f{size, size, std::vector<uint8_t>(static_cast<size_t>(size * size * 3))};
  auto put = [&](int y, int x, const Rgb& c) {
    uint8_t* p = &f.pixels[static_cast<size_t>((y * size + x) * 3)];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  };
  const Palette& pal = config_.palette;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) put(y, x, pal.wall);
  for (int wr = 0; wr < 2 * r + 1; ++wr) {
    for (int wc = 0; wc < 2 * r + 1; ++wc) {
      const int gr = row_ + wr - r, gc = col_ + wc - r;
      const bool is_wall = wall(gr, gc);
      for (int py = 0; py < ppc; ++py)
        for (int px = 0; px < ppc; ++px) put(wr * ppc + py, wc * ppc + px, is_wall ? pal.wall : pal.floor);
      if (!is_wall && food(gr, gc)) put(wr * ppc + ppc / 2, wc * ppc + ppc / 2, pal.food);
    }
  }
  for (int py = 0; py < ppc; ++py)
    for (int px = 0; px < ppc; ++px) put(r * ppc + py, r * ppc + px, pal.agent);
  return f;
}

GridWorld generate_maze(uint64_t seed, const EnvConfig& config) {
  const int n = config.grid_size;
  if (n < 5 || n % 2 == 0) throw ContractError("maze grid_size must be odd and >= 5, got " + std::to_string(n));
  if (config.window_radius < 0 || config.pixels_per_cell < 1) throw ContractError("invalid observation geometry");
  Rng rng = Rng(seed).split("maze");
  std::vector<uint8_t> walls(static_cast<size_t>(n * n), 1);
  auto idx = [n](int r, int c) { return static_cast<size_t>(r * n + c); };
  const int cells = (n - 1) / 2;
  std::vector<std::array<int, 2>> stack;
  const int sr = 1 + 2 * rng.uniform_int(cells), sc = 1 + 2 * rng.uniform_int(cells);
  walls[idx(sr, sc)] = 0;
  stack.push_back({sr, sc});
  while (!stack.empty()) {
    const auto [r, c] = stack.back();
    std::array<std::array<int, 2>, 4> options;
    int count = 0;
    for (const auto& d : {std::array<int, 2>{0, 2}, {0, -2}, {2, 0}, {-2, 0}}) {
      const int nr = r + d[0], nc = c + d[1];
      if (nr > 0 && nc > 0 && nr < n - 1 && nc < n - 1 && walls[idx(nr, nc)]) options[static_cast<size_t>(count++)] = d;
    }
    if (count == 0) {
      stack.pop_back();
      continue;
    }
    const auto d = options[static_cast<size_t>(rng.uniform_int(count))];
    walls[idx(r + d[0] / 2, c + d[1] / 2)] = 0;
    walls[idx(r + d[0], c + d[1])] = 0;
    stack.push_back({r + d[0], c + d[1]});
  }
  std::vector<uint8_t> food(walls.size(), 0);
  std::vector<std::array<int, 2>> floor;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (!walls[idx(r, c)]) {
        floor.push_back({r, c});
        if (rng.uniform() < config.food_density) food[idx(r, c)] = 1;
      }
  const auto start = floor[static_cast<size_t>(rng.uniform_int(static_cast<int>(floor.size())))];
  return GridWorld(config, std::move(walls), std::move(food), start[0], start[1]);
}

Frame env_step(GridWorld& world, int action) {
  world.step(action);
  return world.observe();
}

Episode rollout(GridWorld world, Policy policy, int length, uint64_t seed) {
  if (length < 2) throw ContractError("rollout length must be >= 2");
  Rng rng = Rng(seed).split("policy");
  Episode ep;
  ep.seed = seed;
  ep.frames.push_back(world.observe());
  // The loop policy walks a forward path and retraces it with counterpart actions.
  std::vector<int> path;
  for (int t = 1; t < length; ++t) {
    int a;
    if (policy == Policy::kRandom) {
      a = rng.uniform_int(kActionCount);
    } else {
      const int half = (length - 1) / 2;
      if (t <= half) {
        a = rng.uniform_int(4);
        path.push_back(world.step(a) ? a : -1);
        ep.actions.push_back(static_cast<uint8_t>(a));
        ep.frames.push_back(world.observe());
        continue;
      }
      const size_t back = static_cast<size_t>(t - half);
      if (back <= path.size() && path[path.size() - back] >= 0) {
        a = kCounterparts[static_cast<size_t>(path[path.size() - back])];
      } else {
        a = kStay;
      }
    }
    ep.actions.push_back(static_cast<uint8_t>(a));
    ep.frames.push_back(env_step(world, a));
  }
  return ep;
}

Episode make_episode(uint64_t seed, const EnvConfig& config, int length, Policy policy) {
  return rollout(generate_maze(seed, config), policy, length, seed);
}

Tensor frame_to_tensor(const Frame& f) { return frames_to_tensor({&f}); }

Tensor frames_to_tensor(const std::vector<const Frame*>& frames) {
  if (frames.empty()) throw ContractError("frames_to_tensor: empty batch");
  const int h = frames[0]->height, w = frames[0]->width;
  std::vector<float> v(frames.size() * 3 * static_cast<size_t>(h * w));
  for (size_t b = 0; b < frames.size(); ++b) {
    const Frame& f = *frames[b];
    if (f.height != h || f.width != w) throw ShapeError("frames_to_tensor: mixed frame sizes");
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < h * w; ++p)
        v[(b * 3 + static_cast<size_t>(c)) * static_cast<size_t>(h * w) + static_cast<size_t>(p)] =
            f.pixels[static_cast<size_t>(p * 3 + c)] / 127.5f - 1.0f;
  }
  return Tensor({static_cast<int64_t>(frames.size()), 3, h, w}, std::move(v));
}

Frame tensor_to_frame(const Tensor& t, int64_t sample) {
  const int r = t.rank();
  if (r != 3 && r != 4) throw ShapeError("tensor_to_frame: expected [3,H,W] or [B,3,H,W]");
  const int h = static_cast<int>(t.dim(-2)), w = static_cast<int>(t.dim(-1));
  if (t.dim(-3) != 3) throw ShapeError("tensor_to_frame: expected 3 channels");
  Frame f{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w * 3))};
  const int64_t base = sample * 3 * h * w;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < h * w; ++p) {
      const float v = (t.at(base + c * h * w + p) + 1.0f) * 127.5f;
      f.pixels[static_cast<size_t>(p * 3 + c)] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
    }
  return f;
}

std::vector<uint8_t> wall_mask(const Frame& f, const Palette& palette) {
  const std::array<Rgb, 4> colours = {palette.wall, palette.floor, palette.food, palette.agent};
  std::vector<uint8_t> mask(static_cast<size_t>(f.height * f.width));
  for (int p = 0; p < f.height * f.width; ++p) {
    const uint8_t* px = &f.pixels[static_cast<size_t>(p * 3)];
    int best = 0;
    long best_d = -1;
    for (int k = 0; k < 4; ++k) {
      long d = 0;
      for (int c = 0; c < 3; ++c) {
        const long diff = static_cast<long>(px[c]) - colours[static_cast<size_t>(k)][static_cast<size_t>(c)];
        d += diff * diff;
      }
      if (best_d < 0 || d < best_d) {
        best_d = d;
        best = k;
      }
    }
    mask[static_cast<size_t>(p)] = best == 0 ? 1 : 0;
  }
  return mask;
}

}  // namespace nsim
