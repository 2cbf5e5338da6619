#include "nsim/nn.hpp"

#include <cmath>

namespace nsim {

std::vector<Tensor> tensors_of(const TensorList& list) {
  std::vector<Tensor> out;
  out.reserve(list.size());
  for (const auto& nt : list) out.push_back(nt.tensor);
  return out;
}

void set_requires_grad(const TensorList& list, bool flag) {
  for (const auto& nt : list) {
    Tensor t = nt.tensor;
    t.set_requires_grad(flag);
  }
}

Tensor kaiming_uniform(const Shape& shape, int64_t fan_in, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + 0.2 * 0.2));
  const float bound = static_cast<float>(gain * std::sqrt(3.0 / static_cast<double>(std::max<int64_t>(fan_in, 1))));
  Tensor w = rand_uniform(shape, rng, -bound, bound);
  w.set_requires_grad(true);
  return w;
}

namespace {

Tensor zero_param(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

Linear::Linear(std::string n, int64_t in, int64_t out, const Rng& root, bool with_bias) : name(std::move(n)) {
  Rng rng = root.split(name);
  weight = kaiming_uniform({in, out}, in, rng);
  if (with_bias) bias = zero_param({out});
}

void Linear::collect(TensorList& params) const {
  params.push_back({name + ".weight", weight});
  if (bias.defined()) params.push_back({name + ".bias", bias});
}

Conv2d::Conv2d(std::string n, int64_t in, const ConvSpec& s, const Rng& root) : name(std::move(n)), spec(s) {
  Rng rng = root.split(name);
  weight = kaiming_uniform({s.out, in, s.kernel, s.kernel}, in * s.kernel * s.kernel, rng);
  bias = zero_param({s.out});
}

void Conv2d::collect(TensorList& params) const {
  params.push_back({name + ".weight", weight});
  params.push_back({name + ".bias", bias});
}

ConvTranspose2d::ConvTranspose2d(std::string n, int64_t in, const ConvSpec& s, const Rng& root)
    : name(std::move(n)), spec(s) {
  Rng rng = root.split(name);
  // Each output pixel sees about in*k*k/stride^2 inputs.
  const int64_t fan_in = std::max<int64_t>(1, in * s.kernel * s.kernel / (s.stride * s.stride));
  weight = kaiming_uniform({in, s.out, s.kernel, s.kernel}, fan_in, rng);
  bias = zero_param({s.out});
}

void ConvTranspose2d::collect(TensorList& params) const {
  params.push_back({name + ".weight", weight});
  params.push_back({name + ".bias", bias});
}

Conv3d::Conv3d(std::string n, int64_t in, const Conv3dSpec& s, const Rng& root) : name(std::move(n)), spec(s) {
  Rng rng = root.split(name);
  weight = kaiming_uniform({s.out, in, s.kernel_t, s.kernel_s, s.kernel_s}, in * s.kernel_t * s.kernel_s * s.kernel_s,
                           rng);
  bias = zero_param({s.out});
}

void Conv3d::collect(TensorList& params) const {
  params.push_back({name + ".weight", weight});
  params.push_back({name + ".bias", bias});
}

Shape channel_shape(int64_t channels, int rank) {
  Shape s(static_cast<size_t>(rank), 1);
  s[1] = channels;
  return s;
}

BatchNorm::BatchNorm(std::string n, int64_t channels, float m, float e)
    : name(std::move(n)), momentum(m), eps(e) {
  gamma = Tensor::ones({channels});
  gamma.set_requires_grad(true);
  beta = zero_param({channels});
  running_mean = Tensor::zeros({channels});
  running_var = Tensor::ones({channels});
}

Tensor BatchNorm::operator()(const Tensor& x, BnMode mode) const {
  const int64_t c = gamma.dim(0);
  if (x.rank() < 2 || x.dim(1) != c) {
    throw ShapeError("batch_norm " + name + ": expected " + std::to_string(c) + " channels, got " + shape_str(x.shape()));
  }
  const Shape cs = channel_shape(c, x.rank());
  Tensor normalized;
  if (mode == BnMode::kEval) {
    std::vector<float> shift(static_cast<size_t>(c)), inv(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i) {
      shift[static_cast<size_t>(i)] = -running_mean.at(i);
      inv[static_cast<size_t>(i)] = 1.0f / std::sqrt(running_var.at(i) + eps);
    }
    normalized = mul(add(x, Tensor(cs, shift)), Tensor(cs, inv));
  } else {
    normalized = normalize(x, NormKind::kBatch, eps);
    if (mode == BnMode::kTrain) {
      // Running statistics with the unbiased batch variance.
      const int64_t n = x.dim(0);
      const int64_t s = x.numel() / (n * c);
      const double count = static_cast<double>(n * s);
      Tensor rm = running_mean;
      Tensor rv = running_var;
      auto pm = rm.mutable_data();
      auto pv = rv.mutable_data();
      const auto px = x.data();
      for (int64_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i)
          for (int64_t k = 0; k < s; ++k) mean += px[static_cast<size_t>((i * c + ch) * s + k)];
        mean /= count;
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i)
          for (int64_t k = 0; k < s; ++k) {
            const double d = px[static_cast<size_t>((i * c + ch) * s + k)] - mean;
            var += d * d;
          }
        var /= std::max(1.0, count - 1.0);
        pm[static_cast<size_t>(ch)] = static_cast<float>((1.0 - momentum) * pm[static_cast<size_t>(ch)] + momentum * mean);
        pv[static_cast<size_t>(ch)] = static_cast<float>((1.0 - momentum) * pv[static_cast<size_t>(ch)] + momentum * var);
      }
    }
  }
  return add(mul(normalized, reshape(gamma, cs)), reshape(beta, cs));
}

void BatchNorm::collect(TensorList& params) const {
  params.push_back({name + ".gamma", gamma});
  params.push_back({name + ".beta", beta});
}

void BatchNorm::collect_buffers(TensorList& buffers) const {
  buffers.push_back({name + ".running_mean", running_mean});
  buffers.push_back({name + ".running_var", running_var});
}

}  // namespace nsim
