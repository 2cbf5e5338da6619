#include <Eigen/Core>
#include <string>

#include "nsim/ops.hpp"

namespace nsim {

using detail::make_result;
using detail::TensorImpl;

namespace {

using Values = std::vector<float>;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat cmap(const float* p, int64_t rows, int64_t cols) { return ConstMapMat(p, rows, cols); }
MapMat mmap(float* p, int64_t rows, int64_t cols) { return MapMat(p, rows, cols); }

// Sliding-window geometry over [C,T,H,W]; 2D convs use T = kt = 1.
struct Geometry {
  int64_t c = 1, t = 1, h = 1, w = 1;
  int64_t kt = 1, kh = 1, kw = 1;
  int64_t st = 1, ss = 1;
  int64_t pt = 0, ps = 0;
  int64_t ot = 1, oh = 1, ow = 1;

  int64_t patch() const { return c * kt * kh * kw; }
  int64_t positions() const { return ot * oh * ow; }
  int64_t volume() const { return c * t * h * w; }

  void finalize(const char* op) {
    ot = (t + 2 * pt - kt) / st + 1;
    oh = (h + 2 * ps - kh) / ss + 1;
    ow = (w + 2 * ps - kw) / ss + 1;
    if (t + 2 * pt < kt || h + 2 * ps < kh || w + 2 * ps < kw || ot <= 0 || oh <= 0 || ow <= 0) {
      throw ShapeError(std::string(op) + ": kernel larger than padded input");
    }
  }
};

void im2col(const float* src, const Geometry& g, float* cols) {
  const int64_t p = g.positions();
  int64_t row = 0;
  for (int64_t c = 0; c < g.c; ++c)
    for (int64_t dt = 0; dt < g.kt; ++dt)
      for (int64_t dh = 0; dh < g.kh; ++dh)
        for (int64_t dw = 0; dw < g.kw; ++dw, ++row) {
          float* out = cols + row * p;
          for (int64_t ot = 0; ot < g.ot; ++ot) {
            const int64_t it = ot * g.st - g.pt + dt;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              const int64_t ih = oh * g.ss - g.ps + dh;
              float* line = out + (ot * g.oh + oh) * g.ow;
              if (it < 0 || it >= g.t || ih < 0 || ih >= g.h) {
                std::fill_n(line, g.ow, 0.0f);
                continue;
              }
              const float* in = src + ((c * g.t + it) * g.h + ih) * g.w;
              for (int64_t ow = 0; ow < g.ow; ++ow) {
                const int64_t iw = ow * g.ss - g.ps + dw;
                line[ow] = (iw < 0 || iw >= g.w) ? 0.0f : in[iw];
              }
            }
          }
        }
}

// Adjoint of im2col: accumulates columns back into `dst`.
void col2im(const float* cols, const Geometry& g, float* dst) {
  const int64_t p = g.positions();
  int64_t row = 0;
  for (int64_t c = 0; c < g.c; ++c)
    for (int64_t dt = 0; dt < g.kt; ++dt)
      for (int64_t dh = 0; dh < g.kh; ++dh)
        for (int64_t dw = 0; dw < g.kw; ++dw, ++row) {
          const float* in = cols + row * p;
          for (int64_t ot = 0; ot < g.ot; ++ot) {
            const int64_t it = ot * g.st - g.pt + dt;
            if (it < 0 || it >= g.t) continue;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              const int64_t ih = oh * g.ss - g.ps + dh;
              if (ih < 0 || ih >= g.h) continue;
              const float* line = in + (ot * g.oh + oh) * g.ow;
              float* out = dst + ((c * g.t + it) * g.h + ih) * g.w;
              for (int64_t ow = 0; ow < g.ow; ++ow) {
                const int64_t iw = ow * g.ss - g.ps + dw;
                if (iw >= 0 && iw < g.w) out[iw] += line[ow];
              }
            }
          }
        }
}

void check_bias(const Tensor& bias, int64_t channels, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) + "], got " + shape_str(bias.shape()));
  }
}

// y[n] = W[Co,CK] * im2col(x[n]) + b, for inputs laid out as [N,C,T,H,W].
Tensor conv_forward(const char* op, const Tensor& x, const Tensor& weight, const Tensor& bias, Geometry g, int64_t n,
                    int64_t co, Shape out_shape) {
  check_bias(bias, co, op);
  const int64_t ck = g.patch();
  const int64_t p = g.positions();
  Values out(static_cast<size_t>(n * co * p));
  Values cols(static_cast<size_t>(ck * p));
  const float* px = x.data().data();
  auto w = cmap(weight.data().data(), co, ck);
  for (int64_t i = 0; i < n; ++i) {
    im2col(px + i * g.volume(), g, cols.data());
    auto y = mmap(out.data() + i * co * p, co, p);
    y.noalias() = w * cmap(cols.data(), ck, p);
    if (bias.defined()) y.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.data().data(), co);
  }
  TensorImpl* X = x.impl().get();
  TensorImpl* W = weight.impl().get();
  TensorImpl* B = bias.defined() ? bias.impl().get() : nullptr;
  return make_result(op, std::move(out_shape), std::move(out), {&x, &weight, &bias}, [X, W, B, g, n, co](const Values& grad) {
    const int64_t ck = g.patch();
    const int64_t p = g.positions();
    Values cols(static_cast<size_t>(ck * p));
    auto w = cmap(W->data(), co, ck);
    for (int64_t i = 0; i < n; ++i) {
      auto gy = cmap(grad.data() + i * co * p, co, p);
      if (W->requires_grad) {
        im2col(X->data() + i * g.volume(), g, cols.data());
        mmap(W->grad_buffer().data(), co, ck).noalias() += gy * cmap(cols.data(), ck, p).transpose();
      }
      if (X->requires_grad) {
        mmap(cols.data(), ck, p).noalias() = w.transpose() * gy;
        col2im(cols.data(), g, X->grad_buffer().data() + i * g.volume());
      }
      if (B != nullptr && B->requires_grad) {
        // Plain loops: Eigen reductions peel by address, which breaks run-to-run bit equality.
        auto& gb = B->grad_buffer();
        const float* row = grad.data() + i * co * p;
        for (int64_t c = 0; c < co; ++c) {
          double acc = 0.0;
          for (int64_t q = 0; q < p; ++q) acc += row[c * p + q];
          gb[static_cast<size_t>(c)] += static_cast<float>(acc);
        }
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 2) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: inner extents differ in " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Values out(static_cast<size_t>(m * n));
    mmap(out.data(), m, n).noalias() = cmap(a.data().data(), m, k) * cmap(b.data().data(), k, n);
    TensorImpl* A = a.impl().get();
    TensorImpl* B = b.impl().get();
    return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [A, B, m, k, n](const Values& g) {
      auto gy = cmap(g.data(), m, n);
      if (A->requires_grad) mmap(A->grad_buffer().data(), m, k).noalias() += gy * cmap(B->data(), k, n).transpose();
      if (B->requires_grad) mmap(B->grad_buffer().data(), k, n).noalias() += cmap(A->data(), m, k).transpose() * gy;
    });
  }
  if (a.rank() == 3 && b.rank() == 3) {
    const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != bs || b.dim(1) != k) {
      throw ShapeError("matmul: incompatible batched shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Values out(static_cast<size_t>(bs * m * n));
    for (int64_t i = 0; i < bs; ++i) {
      mmap(out.data() + i * m * n, m, n).noalias() =
          cmap(a.data().data() + i * m * k, m, k) * cmap(b.data().data() + i * k * n, k, n);
    }
    TensorImpl* A = a.impl().get();
    TensorImpl* B = b.impl().get();
    return make_result("matmul", {bs, m, n}, std::move(out), {&a, &b}, [A, B, bs, m, k, n](const Values& g) {
      for (int64_t i = 0; i < bs; ++i) {
        auto gy = cmap(g.data() + i * m * n, m, n);
        if (A->requires_grad) {
          mmap(A->grad_buffer().data() + i * m * k, m, k).noalias() += gy * cmap(B->data() + i * k * n, k, n).transpose();
        }
        if (B->requires_grad) {
          mmap(B->grad_buffer().data() + i * k * n, k, n).noalias() += cmap(A->data() + i * m * k, m, k).transpose() * gy;
        }
      }
    });
  }
  throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  const int64_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  check_bias(bias, out_dim, "linear");
  Values out(static_cast<size_t>(n * out_dim));
  auto y = mmap(out.data(), n, out_dim);
  y.noalias() = cmap(x.data().data(), n, in) * cmap(weight.data().data(), in, out_dim);
  if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data().data(), out_dim);
  TensorImpl* X = x.impl().get();
  TensorImpl* W = weight.impl().get();
  TensorImpl* B = bias.defined() ? bias.impl().get() : nullptr;
  return make_result("linear", {n, out_dim}, std::move(out), {&x, &weight, &bias}, [X, W, B, n, in, out_dim](const Values& g) {
    auto gy = cmap(g.data(), n, out_dim);
    if (X->requires_grad) mmap(X->grad_buffer().data(), n, in).noalias() += gy * cmap(W->data(), in, out_dim).transpose();
    if (W->requires_grad) mmap(W->grad_buffer().data(), in, out_dim).noalias() += cmap(X->data(), n, in).transpose() * gy;
    if (B != nullptr && B->requires_grad) {
      auto& gb = B->grad_buffer();
      for (int64_t o = 0; o < out_dim; ++o) {
        double acc = 0.0;
        for (int64_t r = 0; r < n; ++r) acc += g[static_cast<size_t>(r * out_dim + o)];
        gb[static_cast<size_t>(o)] += static_cast<float>(acc);
      }
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  }
  if (attrs.stride < 1 || attrs.padding < 0) throw ContractError("conv2d: invalid stride or padding");
  Geometry g;
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.kh = g.kw = weight.dim(2);
  g.ss = attrs.stride;
  g.ps = attrs.padding;
  g.finalize("conv2d");
  const int64_t co = weight.dim(0);
  return conv_forward("conv2d", x, weight, bias, g, x.dim(0), co, {x.dim(0), co, g.oh, g.ow});
}

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv3dAttrs attrs) {
  if (x.rank() != 5 || weight.rank() != 5 || weight.dim(1) != x.dim(1) || weight.dim(3) != weight.dim(4)) {
    throw ShapeError("conv3d: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  }
  if (attrs.stride_t < 1 || attrs.stride_s < 1 || attrs.padding_t < 0 || attrs.padding_s < 0) {
    throw ContractError("conv3d: invalid stride or padding");
  }
  Geometry g;
  g.c = x.dim(1);
  g.t = x.dim(2);
  g.h = x.dim(3);
  g.w = x.dim(4);
  g.kt = weight.dim(2);
  g.kh = g.kw = weight.dim(3);
  g.st = attrs.stride_t;
  g.ss = attrs.stride_s;
  g.pt = attrs.padding_t;
  g.ps = attrs.padding_s;
  g.finalize("conv3d");
  const int64_t co = weight.dim(0);
  return conv_forward("conv3d", x, weight, bias, g, x.dim(0), co, {x.dim(0), co, g.ot, g.oh, g.ow});
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvTranspose2dAttrs attrs) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(0) != x.dim(1) || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  if (attrs.stride < 1 || attrs.padding < 0 || attrs.output_padding < 0 || attrs.output_padding >= attrs.stride) {
    throw ContractError("conv_transpose2d: invalid stride, padding or output padding");
  }
  const int64_t n = x.dim(0), ci = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  const int64_t co = weight.dim(1), k = weight.dim(2);
  const int64_t ho = (hi - 1) * attrs.stride - 2 * attrs.padding + k + attrs.output_padding;
  const int64_t wo = (wi - 1) * attrs.stride - 2 * attrs.padding + k + attrs.output_padding;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv_transpose2d: empty output for input " + shape_str(x.shape()));
  check_bias(bias, co, "conv_transpose2d");
  // The output plays the role of a convolution input whose windows map onto x.
  Geometry g;
  g.c = co;
  g.h = ho;
  g.w = wo;
  g.kh = g.kw = k;
  g.ss = attrs.stride;
  g.ps = attrs.padding;
  g.oh = hi;
  g.ow = wi;
  const int64_t ck = g.patch();
  const int64_t p = hi * wi;
  Values out(static_cast<size_t>(n * co * ho * wo), 0.0f);
  Values cols(static_cast<size_t>(ck * p));
  auto w = cmap(weight.data().data(), ci, ck);
  for (int64_t i = 0; i < n; ++i) {
    mmap(cols.data(), ck, p).noalias() = w.transpose() * cmap(x.data().data() + i * ci * p, ci, p);
    float* y = out.data() + i * co * ho * wo;
    col2im(cols.data(), g, y);
    if (bias.defined()) {
      for (int64_t c = 0; c < co; ++c) {
        const float b = bias.data()[static_cast<size_t>(c)];
        for (int64_t q = 0; q < ho * wo; ++q) y[c * ho * wo + q] += b;
      }
    }
  }
  TensorImpl* X = x.impl().get();
  TensorImpl* W = weight.impl().get();
  TensorImpl* B = bias.defined() ? bias.impl().get() : nullptr;
  return make_result("conv_transpose2d", {n, co, ho, wo}, std::move(out), {&x, &weight, &bias},
                     [X, W, B, g, n, ci, co, p](const Values& grad) {
                       const int64_t ck = g.patch();
                       const int64_t vol = g.volume();
                       Values cols(static_cast<size_t>(ck * p));
                       for (int64_t i = 0; i < n; ++i) {
                         const float* gy = grad.data() + i * vol;
                         im2col(gy, g, cols.data());
                         auto gc = cmap(cols.data(), ck, p);
                         if (X->requires_grad) {
                           mmap(X->grad_buffer().data() + i * ci * p, ci, p).noalias() += cmap(W->data(), ci, ck) * gc;
                         }
                         if (W->requires_grad) {
                           mmap(W->grad_buffer().data(), ci, ck).noalias() += cmap(X->data() + i * ci * p, ci, p) * gc.transpose();
                         }
                         if (B != nullptr && B->requires_grad) {
                           auto& gb = B->grad_buffer();
                           const int64_t hw = vol / co;
                           for (int64_t c = 0; c < co; ++c) {
                             double acc = 0.0;
                             for (int64_t q = 0; q < hw; ++q) acc += gy[c * hw + q];
                             gb[static_cast<size_t>(c)] += static_cast<float>(acc);
                           }
                         }
                       }
                     });
}

Tensor filter3x3(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3 || kernel.rank() != 3 || kernel.dim(0) != x.dim(0) || kernel.dim(1) != 3 || kernel.dim(2) != 3) {
    throw ShapeError("filter3x3: input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(kernel.shape()));
  }
  const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
  Values out(static_cast<size_t>(x.numel()), 0.0f);
  const float* px = x.data().data();
  const float* pk = kernel.data().data();
  for (int64_t s = 0; s < b; ++s)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        float acc = 0.0f;
        for (int64_t di = 0; di < 3; ++di) {
          const int64_t ii = i + di - 1;
          if (ii < 0 || ii >= h) continue;
          for (int64_t dj = 0; dj < 3; ++dj) {
            const int64_t jj = j + dj - 1;
            if (jj < 0 || jj >= w) continue;
            acc += pk[s * 9 + di * 3 + dj] * px[(s * h + ii) * w + jj];
          }
        }
        out[static_cast<size_t>((s * h + i) * w + j)] = acc;
      }
  TensorImpl* X = x.impl().get();
  TensorImpl* K = kernel.impl().get();
  return make_result("filter3x3", x.shape(), std::move(out), {&x, &kernel}, [X, K, b, h, w](const Values& g) {
    const float* px = X->data();
    const float* pk = K->data();
    float* gx = X->requires_grad ? X->grad_buffer().data() : nullptr;
    float* gk = K->requires_grad ? K->grad_buffer().data() : nullptr;
    for (int64_t s = 0; s < b; ++s)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const float go = g[static_cast<size_t>((s * h + i) * w + j)];
          for (int64_t di = 0; di < 3; ++di) {
            const int64_t ii = i + di - 1;
            if (ii < 0 || ii >= h) continue;
            for (int64_t dj = 0; dj < 3; ++dj) {
              const int64_t jj = j + dj - 1;
              if (jj < 0 || jj >= w) continue;
              if (gx) gx[(s * h + ii) * w + jj] += go * pk[s * 9 + di * 3 + dj];
              if (gk) gk[s * 9 + di * 3 + dj] += go * px[(s * h + ii) * w + jj];
            }
          }
        }
  });
}

}  // namespace nsim
