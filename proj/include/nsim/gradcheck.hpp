#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nsim/tensor.hpp"

namespace nsim {

/// The function under test is not deterministic, so finite differences mean nothing.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  float eps = 1e-3f;
  float tol = 1e-3f;
  // Coordinates probed per tensor; 0 checks all of them.
  int max_coords_per_tensor = 0;
  uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  size_t coords_checked = 0;
  // Location of the worst coordinate, for diagnostics.
  size_t worst_tensor = 0;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar f with central differences
/// (f(x+eps e_i) - f(x-eps e_i)) / 2eps over every tensor in `inputs`.
/// The error per coordinate is |a - n| / max(|a|, |n|, 1). Piecewise-linear
/// primitives keep the branch taken at the unperturbed point.
GradCheckReport gradient_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                               const GradCheckOptions& options = {});

/// Single-input convenience form.
GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps = 1e-3f,
                               float tol = 1e-3f);

}  // namespace nsim
