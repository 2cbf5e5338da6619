#pragma once

#include <cstdint>
#include <string_view>

#include "nsim/tensor.hpp"

namespace nsim {

/// Counter-based generator: output i is a hash of (key, i), so streams can be
/// split without sharing state and runs are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  uint64_t next_u64() { return mix(key_ ^ mix(counter_++ + 0x632be59bd9b4e019ULL)); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float uniform(float lo, float hi) { return lo + static_cast<float>(uniform()) * (hi - lo); }
  double normal();
  // Uniform integer in [0, n).
  int uniform_int(int n);

  /// Independent child stream; does not advance this generator.
  Rng split(uint64_t stream) const;
  Rng split(std::string_view name) const { return split(hash(name)); }

  uint64_t counter() const { return counter_; }

  static uint64_t mix(uint64_t x);
  static uint64_t hash(std::string_view s);

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

Tensor randn(const Shape& shape, Rng& rng, float stddev = 1.0f);
Tensor rand_uniform(const Shape& shape, Rng& rng, float lo, float hi);

}  // namespace nsim
