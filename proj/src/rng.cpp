#include "nsim/rng.hpp"

#include <cmath>
#include <numbers>

namespace nsim {

uint64_t Rng::mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t Rng::hash(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double Rng::normal() {
  // Box-Muller; u1 is kept away from zero.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw ContractError("uniform_int: n must be positive");
  return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

Rng Rng::split(uint64_t stream) const {
  Rng child;
  child.key_ = mix(key_ ^ mix(stream ^ 0xd1b54a32d192ed03ULL));
  return child;
}

Tensor randn(const Shape& shape, Rng& rng, float stddev) {
  std::vector<float> v(static_cast<size_t>(numel(shape)));
  for (float& x : v) x = static_cast<float>(rng.normal()) * stddev;
  return Tensor(shape, std::move(v));
}

Tensor rand_uniform(const Shape& shape, Rng& rng, float lo, float hi) {
  std::vector<float> v(static_cast<size_t>(numel(shape)));
  for (float& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

}  // namespace nsim
