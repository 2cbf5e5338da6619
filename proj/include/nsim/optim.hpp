#pragma once

#include <vector>

#include "nsim/tensor.hpp"

namespace nsim {

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction. step() consumes the gradients it applies.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  // Clears gradients without updating (used to drop cross-network gradients).
  void zero_grad();

  int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t t_ = 0;
};

}  // namespace nsim
