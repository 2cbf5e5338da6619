#pragma once

#include <string>
#include <vector>

#include "nsim/ops.hpp"
#include "nsim/rng.hpp"

namespace nsim {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using TensorList = std::vector<NamedTensor>;

std::vector<Tensor> tensors_of(const TensorList& list);
void set_requires_grad(const TensorList& list, bool flag);

enum class BnMode {
  kTrain,          // batch statistics, running averages updated
  kTrainNoUpdate,  // batch statistics, running averages untouched
  kEval,           // running averages
};

/// Fan-in uniform init for a leaky-ReLU(0.2) network.
Tensor kaiming_uniform(const Shape& shape, int64_t fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int64_t in, int64_t out, const Rng& root, bool bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(TensorList& params) const;
  int64_t in_features() const { return weight.dim(0); }
  int64_t out_features() const { return weight.dim(1); }

  std::string name;
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct ConvSpec {
  int out = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;  // transposed only
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int64_t in, const ConvSpec& spec, const Rng& root);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, {spec.stride, spec.padding}); }
  void collect(TensorList& params) const;
  int64_t out_size(int64_t in) const { return (in + 2 * spec.padding - spec.kernel) / spec.stride + 1; }

  std::string name;
  ConvSpec spec;
  Tensor weight;  // [out, in, k, k]
  Tensor bias;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int64_t in, const ConvSpec& spec, const Rng& root);
  Tensor operator()(const Tensor& x) const {
    return conv_transpose2d(x, weight, bias, {spec.stride, spec.padding, spec.output_padding});
  }
  void collect(TensorList& params) const;
  int64_t out_size(int64_t in) const {
    return (in - 1) * spec.stride - 2 * spec.padding + spec.kernel + spec.output_padding;
  }

  std::string name;
  ConvSpec spec;
  Tensor weight;  // [in, out, k, k]
  Tensor bias;
};

struct Conv3dSpec {
  int out = 1;
  int kernel_t = 1;
  int kernel_s = 1;
  int stride_t = 1;
  int stride_s = 1;
  int padding_t = 0;
  int padding_s = 0;
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(std::string name, int64_t in, const Conv3dSpec& spec, const Rng& root);
  Tensor operator()(const Tensor& x) const {
    return conv3d(x, weight, bias, {spec.stride_t, spec.stride_s, spec.padding_t, spec.padding_s});
  }
  void collect(TensorList& params) const;

  std::string name;
  Conv3dSpec spec;
  Tensor weight;  // [out, in, kt, ks, ks]
  Tensor bias;
};

/// Batch normalization over axis 1 with learned scale/shift, for rank 2 to 5 inputs.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int64_t channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor operator()(const Tensor& x, BnMode mode) const;
  void collect(TensorList& params) const;
  void collect_buffers(TensorList& buffers) const;

  std::string name;
  float momentum = 0.1f;
  float eps = 1e-5f;
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
};

/// Broadcast shape [1, C, 1, ...] for per-channel parameters of a rank-r input.
Shape channel_shape(int64_t channels, int rank);

}  // namespace nsim
