#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "nsim/config.hpp"
#include "nsim/io.hpp"
#include "nsim/nn.hpp"

namespace nsim {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Named-tensor bundle plus the JSON block describing how it was produced.
struct Checkpoint {
  ModelConfig model;
  nlohmann::json meta = nlohmann::json::object();  // train config, iteration, epoch
  TensorList tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `dst` from the same-named checkpoint entry.
void assign_from(TensorList& dst, const Checkpoint& ckpt);

}  // namespace nsim
