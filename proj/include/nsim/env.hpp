#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nsim/rng.hpp"
#include "nsim/tensor.hpp"

namespace nsim {

using Rgb = std::array<uint8_t, 3>;

struct Palette {
  Rgb wall{33, 33, 222};
  Rgb floor{0, 0, 0};
  Rgb food{255, 184, 151};
  Rgb agent{255, 255, 0};
};

/// RGB u8 image, row-major HWC.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;

  bool operator==(const Frame&) const = default;
  const uint8_t* at(int y, int x) const { return &pixels[static_cast<size_t>((y * width + x) * 3)]; }
};

enum Action : int { kLeft = 0, kRight = 1, kUp = 2, kDown = 3, kStay = 4 };
inline constexpr int kActionCount = 5;
inline const std::array<int, kActionCount> kCounterparts = {kRight, kLeft, kDown, kUp, -1};
inline const std::array<const char*, kActionCount> kActionNames = {"left", "right", "up", "down", "stay"};

struct EnvConfig {
  int grid_size = 15;
  int window_radius = 2;
  int pixels_per_cell = 3;
  int frame_size = 16;  // observation padded (with wall colour) to this square size
  float food_density = 0.3f;
  Palette palette;
};

/// Maze gridworld observed through an egocentric window.
class GridWorld {
 public:
  GridWorld() = default;
  GridWorld(const EnvConfig& config, std::vector<uint8_t> walls, std::vector<uint8_t> food, int agent_row,
            int agent_col);

  const EnvConfig& config() const { return config_; }
  int size() const { return config_.grid_size; }
  bool wall(int row, int col) const;  // out of bounds counts as wall
  bool food(int row, int col) const;
  int agent_row() const { return row_; }
  int agent_col() const { return col_; }
  const std::vector<uint8_t>& walls() const { return walls_; }
  const std::vector<uint8_t>& food_map() const { return food_; }

  /// Moves one cell unless blocked; returns whether the agent moved.
  bool step(int action);
  Frame observe() const;
  void place_agent(int row, int col);

 private:
  EnvConfig config_;
  std::vector<uint8_t> walls_;
  std::vector<uint8_t> food_;
  int row_ = 0;
  int col_ = 0;
};

/// Recursive-backtracker maze; floor cells are the odd-coordinate cells and the carved links.
GridWorld generate_maze(uint64_t seed, const EnvConfig& config = {});

/// (world', observation) after one action.
Frame env_step(GridWorld& world, int action);

/// Action delta (row, col).
std::array<int, 2> action_delta(int action);

struct Episode {
  uint64_t seed = 0;
  std::vector<Frame> frames;
  std::vector<uint8_t> actions;  // size frames - 1

  bool operator==(const Episode&) const = default;
};

enum class Policy { kRandom, kScriptedLoop };

/// Plays `length` frames (length - 1 actions) from the world's current state.
Episode rollout(GridWorld world, Policy policy, int length, uint64_t seed);

/// Generates the maze and rollout of one dataset episode from its seed.
Episode make_episode(uint64_t seed, const EnvConfig& config, int length, Policy policy = Policy::kRandom);

/// Frame [H,W,3] u8 -> tensor [1,3,H,W] in [-1, 1].
Tensor frame_to_tensor(const Frame& f);
/// Frames of one time step across a batch -> [B,3,H,W].
Tensor frames_to_tensor(const std::vector<const Frame*>& frames);
/// Tensor [3,H,W] (or [1,3,H,W]) in [-1,1] -> u8 frame, clamped.
Frame tensor_to_frame(const Tensor& t, int64_t sample = 0);

/// 1 where the nearest palette colour of a pixel is the wall colour.
std::vector<uint8_t> wall_mask(const Frame& f, const Palette& palette);

}  // namespace nsim
