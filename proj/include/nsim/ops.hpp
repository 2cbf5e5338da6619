#pragma once

// Differentiable primitive catalog. Every function records itself on the
// active tape when one of its inputs requires a gradient, and throws
// NumericError if it would produce a non-finite value.

#include <span>
#include <vector>

#include "nsim/tensor.hpp"

namespace nsim {

// Elementwise, numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
Tensor add_scalar(const Tensor& x, float value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, float s) { return scale(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }

Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);

/// [M,K]x[K,N] -> [M,N], or batched [B,M,K]x[B,K,N] -> [B,M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [N,in], weight [in,out], bias [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dAttrs {
  int stride = 1;
  int padding = 0;
};

struct ConvTranspose2dAttrs {
  int stride = 1;
  int padding = 0;
  int output_padding = 0;
};

struct Conv3dAttrs {
  int stride_t = 1;
  int stride_s = 1;
  int padding_t = 0;
  int padding_s = 0;
};

/// x [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] or undefined. Cross-correlation, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs);
/// x [N,Cin,H,W], weight [Cin,Cout,k,k]; out = (H-1)*stride - 2*padding + k + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvTranspose2dAttrs attrs);
/// x [N,Cin,T,H,W], weight [Cout,Cin,kt,ks,ks].
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv3dAttrs attrs);

/// Per-sample 3x3 cross-correlation with zero padding: x [B,H,W], kernel [B,3,3] -> [B,H,W].
Tensor filter3x3(const Tensor& x, const Tensor& kernel);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor flip(const Tensor& x, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes);
/// Nearest-neighbour resampling of the two trailing axes of [N,C,H,W].
Tensor resize_nearest(const Tensor& x, int64_t height, int64_t width);

/// Full reductions return shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim);
Tensor mean(const Tensor& x, int axis, bool keepdim);

Tensor softmax(const Tensor& x, int axis);

enum class NormKind {
  kBatch,     // statistics per channel (axis 1) over all other axes
  kInstance,  // statistics per (sample, channel) over trailing axes
};
/// (x - mean) / sqrt(var + eps), biased variance, no affine parameters.
Tensor normalize(const Tensor& x, NormKind kind, float eps = 1e-5f);

/// Rows of `table` [V,E] selected by `indices` -> [len(indices),E].
Tensor embedding(const Tensor& table, std::span<const int> indices);

/// sum((a-b)^2) -> [1].
Tensor squared_distance(const Tensor& a, const Tensor& b);
/// sqrt(sum(x^2)) -> [1]; the gradient at the origin is taken as zero.
Tensor l2_norm(const Tensor& x);
/// mean(softplus(x) - t*x); targets are constants with the logits' shape.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
Tensor bce_with_logits(const Tensor& logits, float target);
/// mean over rows of -log softmax(logits)[target]; logits [N,C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// Constant helpers (never tracked).
Tensor one_hot(std::span<const int> indices, int classes);

}  // namespace nsim
