#include "nsim/optim.hpp"

#include <cmath>

namespace nsim {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
  }
}

void Adam::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " of shape " + shape_str(params_[i].shape()) +
                          " has no gradient");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(t_));
  const float b1 = options_.beta1;
  const float b2 = options_.beta2;
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= static_cast<float>(options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
    p.clear_grad();
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

}  // namespace nsim
