#include "nsim/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nsim {

using detail::make_result;
using detail::TensorImpl;

namespace {

using Values = std::vector<float>;

std::string op_shape_error(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

// Row-major strides with zero stride on broadcast axes, aligned to `out_rank`.
std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const size_t r = out.size();
  std::vector<int64_t> strides(r, 0);
  int64_t s = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    const size_t src = shape.size() - 1 - i;
    const size_t dst = r - 1 - i;
    strides[dst] = shape[src] == 1 ? 0 : s;
    s *= shape[src];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) throw ShapeError(op_shape_error(op, a, b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb, Fn&& fn) {
  const int64_t n = numel(out);
  const size_t r = out.size();
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0;
  int64_t ib = 0;
  const int64_t inner = out[r - 1];
  const int64_t sa_in = sa[r - 1];
  const int64_t sb_in = sb[r - 1];
  for (int64_t o = 0; o < n; o += inner) {
    for (int64_t k = 0; k < inner; ++k) fn(o + k, ia + k * sa_in, ib + k * sb_in);
    // advance the outer multi-index
    for (int d = static_cast<int>(r) - 2; d >= 0; --d) {
      ++idx[static_cast<size_t>(d)];
      ia += sa[static_cast<size_t>(d)];
      ib += sb[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
      ia -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      ib -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp kind, const char* name) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), name);
  const auto sa = broadcast_strides(a.shape(), out);
  const auto sb = broadcast_strides(b.shape(), out);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  Values v(static_cast<size_t>(numel(out)));
  float* pv = v.data();
  const bool same = a.shape() == out && b.shape() == out;
  auto compute = [&](auto&& f) {
    if (same) {
      for (size_t i = 0; i < v.size(); ++i) pv[i] = f(pa[i], pb[i]);
    } else {
      for_each_broadcast(out, sa, sb, [&](int64_t o, int64_t i, int64_t j) { pv[o] = f(pa[i], pb[j]); });
    }
  };
  switch (kind) {
    case BinOp::kAdd: compute([](float x, float y) { return x + y; }); break;
    case BinOp::kSub: compute([](float x, float y) { return x - y; }); break;
    case BinOp::kMul: compute([](float x, float y) { return x * y; }); break;
    case BinOp::kDiv: compute([](float x, float y) { return x / y; }); break;
  }
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return make_result(name, out, std::move(v), {&a, &b}, [A, B, out, sa, sb, kind, same](const Values& g) {
    const float* pa = A->data();
    const float* pb = B->data();
    float* ga = A->requires_grad ? A->grad_buffer().data() : nullptr;
    float* gb = B->requires_grad ? B->grad_buffer().data() : nullptr;
    auto visit = [&](auto&& f) {
      if (same) {
        for (size_t i = 0; i < g.size(); ++i) f(static_cast<int64_t>(i), static_cast<int64_t>(i), static_cast<int64_t>(i));
      } else {
        for_each_broadcast(out, sa, sb, f);
      }
    };
    switch (kind) {
      case BinOp::kAdd:
        visit([&](int64_t o, int64_t i, int64_t j) {
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
        });
        break;
      case BinOp::kSub:
        visit([&](int64_t o, int64_t i, int64_t j) {
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
        });
        break;
      case BinOp::kMul:
        visit([&](int64_t o, int64_t i, int64_t j) {
          if (ga) ga[i] += g[o] * pb[j];
          if (gb) gb[j] += g[o] * pa[i];
        });
        break;
      case BinOp::kDiv:
        visit([&](int64_t o, int64_t i, int64_t j) {
          if (ga) ga[i] += g[o] / pb[j];
          if (gb) gb[j] -= g[o] * pa[i] / (pb[j] * pb[j]);
        });
        break;
    }
  });
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx given input and output.
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* name, F&& f, D deriv) {
  auto out = std::make_shared<Values>(static_cast<size_t>(x.numel()));
  const float* px = x.data().data();
  for (size_t i = 0; i < out->size(); ++i) (*out)[i] = f(px[i]);
  TensorImpl* X = x.impl().get();
  const Values* raw_out = out.get();
  return make_result(name, x.shape(), out, {&x}, [X, raw_out, deriv](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    const float* px = X->data();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(px[i], (*raw_out)[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv, "div"); }

Tensor scale(const Tensor& x, float factor) {
  return unary(x, "scale", [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& x, float value) {
  return unary(x, "add_scalar", [value](float v) { return v + value; }, [](float, float) { return 1.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  detail::BranchTrace* trace = detail::active_branch_trace();
  if (trace != nullptr) {
    auto positive = std::make_shared<std::vector<uint8_t>>();
    const auto px = x.data();
    if (trace->replay) {
      if (trace->cursor >= trace->masks.size() || trace->masks[trace->cursor].size() != px.size()) {
        throw StateError("leaky_relu: branch replay does not match the recorded call sequence");
      }
      *positive = trace->masks[trace->cursor++];
    } else {
      positive->resize(px.size());
      for (size_t i = 0; i < px.size(); ++i) (*positive)[i] = px[i] > 0.0f ? 1 : 0;
      trace->masks.push_back(*positive);
    }
    Values out(px.size());
    for (size_t i = 0; i < px.size(); ++i) out[i] = (*positive)[i] ? px[i] : slope * px[i];
    TensorImpl* X = x.impl().get();
    return make_result("leaky_relu", x.shape(), std::move(out), {&x}, [X, positive, slope](const Values& g) {
      if (!X->requires_grad) return;
      auto& gx = X->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += (*positive)[i] ? g[i] : slope * g[i];
    });
  }
  return unary(
      x, "leaky_relu", [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus", [](float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::abs(v))); },
      [](float v, float) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<size_t>(infer)] = x.numel() / known;
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  TensorImpl* X = x.impl().get();
  return make_result("reshape", shape, Values(x.data().begin(), x.data().end()), {&x}, [X](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) throw ShapeError("permute: order length differs from rank");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int o : order) {
    if (o < 0 || o >= r || seen[static_cast<size_t>(o)]) throw ShapeError("permute: invalid axis order");
    seen[static_cast<size_t>(o)] = true;
  }
  const Shape& in = x.shape();
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int d = r - 2; d >= 0; --d) in_strides[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(d + 1)] * in[static_cast<size_t>(d + 1)];
  Shape out(static_cast<size_t>(r));
  std::vector<int64_t> src_strides(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) {
    out[static_cast<size_t>(d)] = in[static_cast<size_t>(order[static_cast<size_t>(d)])];
    src_strides[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(order[static_cast<size_t>(d)])];
  }
  // src index for every destination index
  std::vector<int64_t> zero(static_cast<size_t>(r), 0);
  auto gather = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
  for_each_broadcast(out, src_strides, zero, [&](int64_t o, int64_t i, int64_t) { (*gather)[static_cast<size_t>(o)] = i; });
  Values v(static_cast<size_t>(x.numel()));
  const float* px = x.data().data();
  for (size_t o = 0; o < v.size(); ++o) v[o] = px[(*gather)[o]];
  TensorImpl* X = x.impl().get();
  return make_result("permute", out, std::move(v), {&x}, [X, gather](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (size_t o = 0; o < g.size(); ++o) gx[static_cast<size_t>((*gather)[o])] += g[o];
  });
}

namespace {

struct AxisSplit {
  int64_t outer = 1;
  int64_t len = 1;
  int64_t inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<size_t>(i)];
  a.len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

Tensor flip(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "flip");
  const AxisSplit sp = split_at(x.shape(), a);
  Values v(static_cast<size_t>(x.numel()));
  const float* px = x.data().data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t l = 0; l < sp.len; ++l)
      std::copy_n(px + (o * sp.len + (sp.len - 1 - l)) * sp.inner, sp.inner, v.data() + (o * sp.len + l) * sp.inner);
  TensorImpl* X = x.impl().get();
  return make_result("flip", x.shape(), std::move(v), {&x}, [X, sp](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t l = 0; l < sp.len; ++l)
        for (int64_t i = 0; i < sp.inner; ++i)
          gx[static_cast<size_t>((o * sp.len + (sp.len - 1 - l)) * sp.inner + i)] +=
              g[static_cast<size_t>((o * sp.len + l) * sp.inner + i)];
  });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const AxisSplit sp = split_at(x.shape(), a);
  if (start < 0 || length <= 0 || start + length > sp.len) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis of extent " + std::to_string(sp.len));
  }
  Shape out = x.shape();
  out[static_cast<size_t>(a)] = length;
  Values v(static_cast<size_t>(numel(out)));
  const float* px = x.data().data();
  for (int64_t o = 0; o < sp.outer; ++o)
    std::copy_n(px + (o * sp.len + start) * sp.inner, length * sp.inner, v.data() + o * length * sp.inner);
  TensorImpl* X = x.impl().get();
  return make_result("slice", out, std::move(v), {&x}, [X, sp, start, length](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t k = 0; k < length * sp.inner; ++k)
        gx[static_cast<size_t>((o * sp.len + start) * sp.inner + k)] += g[static_cast<size_t>(o * length * sp.inner + k)];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int r = parts[0].rank();
  const int a = normalize_axis(axis, r, "concat");
  Shape out = parts[0].shape();
  out[static_cast<size_t>(a)] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw ShapeError(op_shape_error("concat", parts[0].shape(), p.shape()));
    for (int d = 0; d < r; ++d) {
      if (d != a && p.shape()[static_cast<size_t>(d)] != parts[0].shape()[static_cast<size_t>(d)]) {
        throw ShapeError(op_shape_error("concat", parts[0].shape(), p.shape()));
      }
    }
    out[static_cast<size_t>(a)] += p.shape()[static_cast<size_t>(a)];
  }
  const AxisSplit osp = split_at(out, a);
  Values v(static_cast<size_t>(numel(out)));
  std::vector<int64_t> offsets;
  std::vector<TensorImpl*> impls;
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t len = p.shape()[static_cast<size_t>(a)];
    const float* pp = p.data().data();
    for (int64_t o = 0; o < osp.outer; ++o)
      std::copy_n(pp + o * len * osp.inner, len * osp.inner, v.data() + (o * osp.len + off) * osp.inner);
    offsets.push_back(off);
    impls.push_back(p.impl().get());
    off += len;
  }
  return make_result("concat", out, std::move(v), parts, [impls, offsets, osp, a](const Values& g) {
    for (size_t k = 0; k < impls.size(); ++k) {
      TensorImpl* P = impls[k];
      if (!P->requires_grad) continue;
      const int64_t len = P->shape[static_cast<size_t>(a)];
      auto& gp = P->grad_buffer();
      for (int64_t o = 0; o < osp.outer; ++o)
        for (int64_t i = 0; i < len * osp.inner; ++i)
          gp[static_cast<size_t>(o * len * osp.inner + i)] += g[static_cast<size_t>((o * osp.len + offsets[k]) * osp.inner + i)];
    }
  });
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes) {
  const int a = normalize_axis(axis, x.rank(), "split");
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  if (total != x.shape()[static_cast<size_t>(a)]) {
    throw ShapeError("split: sizes do not add up to extent " + std::to_string(x.shape()[static_cast<size_t>(a)]));
  }
  std::vector<Tensor> out;
  int64_t start = 0;
  for (int64_t s : sizes) {
    out.push_back(slice(x, a, start, s));
    start += s;
  }
  return out;
}

Tensor resize_nearest(const Tensor& x, int64_t height, int64_t width) {
  if (x.rank() != 4) throw ShapeError("resize_nearest: expected [N,C,H,W], got " + shape_str(x.shape()));
  const int64_t nc = x.dim(0) * x.dim(1);
  const int64_t h = x.dim(2);
  const int64_t w = x.dim(3);
  auto src = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(height * width));
  for (int64_t i = 0; i < height; ++i) {
    const int64_t si = std::min(h - 1, (i * h) / height);
    for (int64_t j = 0; j < width; ++j) {
      const int64_t sj = std::min(w - 1, (j * w) / width);
      (*src)[static_cast<size_t>(i * width + j)] = si * w + sj;
    }
  }
  Values v(static_cast<size_t>(nc * height * width));
  const float* px = x.data().data();
  for (int64_t c = 0; c < nc; ++c)
    for (int64_t p = 0; p < height * width; ++p) v[static_cast<size_t>(c * height * width + p)] = px[c * h * w + (*src)[static_cast<size_t>(p)]];
  TensorImpl* X = x.impl().get();
  const int64_t hw = height * width;
  return make_result("resize_nearest", {x.dim(0), x.dim(1), height, width}, std::move(v), {&x},
                     [X, src, nc, h, w, hw](const Values& g) {
                       if (!X->requires_grad) return;
                       auto& gx = X->grad_buffer();
                       for (int64_t c = 0; c < nc; ++c)
                         for (int64_t p = 0; p < hw; ++p)
                           gx[static_cast<size_t>(c * h * w + (*src)[static_cast<size_t>(p)])] += g[static_cast<size_t>(c * hw + p)];
                     });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  TensorImpl* X = x.impl().get();
  return make_result("sum", {1}, Values{static_cast<float>(acc)}, {&x}, [X](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (float& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  TensorImpl* X = x.impl().get();
  return make_result("mean", {1}, Values{static_cast<float>(acc / n)}, {&x}, [X, n](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    const float s = static_cast<float>(g[0] / n);
    for (float& v : gx) v += s;
  });
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool keepdim, bool average, const char* name) {
  const int a = normalize_axis(axis, x.rank(), name);
  const AxisSplit sp = split_at(x.shape(), a);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[static_cast<size_t>(a)] = 1;
  } else {
    out_shape.erase(out_shape.begin() + a);
    if (out_shape.empty()) out_shape = {1};
  }
  Values v(static_cast<size_t>(sp.outer * sp.inner));
  const float* px = x.data().data();
  const double div = average ? static_cast<double>(sp.len) : 1.0;
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      double acc = 0.0;
      for (int64_t l = 0; l < sp.len; ++l) acc += px[(o * sp.len + l) * sp.inner + i];
      v[static_cast<size_t>(o * sp.inner + i)] = static_cast<float>(acc / div);
    }
  }
  TensorImpl* X = x.impl().get();
  return make_result(name, out_shape, std::move(v), {&x}, [X, sp, div](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t l = 0; l < sp.len; ++l)
        for (int64_t i = 0; i < sp.inner; ++i)
          gx[static_cast<size_t>((o * sp.len + l) * sp.inner + i)] += static_cast<float>(g[static_cast<size_t>(o * sp.inner + i)] / div);
  });
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, false, "sum_axis"); }
Tensor mean(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, true, "mean_axis"); }

Tensor softmax(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit sp = split_at(x.shape(), a);
  auto out = std::make_shared<Values>(static_cast<size_t>(x.numel()));
  const float* px = x.data().data();
  float* py = out->data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.len * sp.inner + i;
      float mx = px[base];
      for (int64_t l = 1; l < sp.len; ++l) mx = std::max(mx, px[base + l * sp.inner]);
      double z = 0.0;
      for (int64_t l = 0; l < sp.len; ++l) {
        const float e = std::exp(px[base + l * sp.inner] - mx);
        py[base + l * sp.inner] = e;
        z += e;
      }
      const float inv = static_cast<float>(1.0 / z);
      for (int64_t l = 0; l < sp.len; ++l) py[base + l * sp.inner] *= inv;
    }
  }
  TensorImpl* X = x.impl().get();
  const Values* y = out.get();
  return make_result("softmax", x.shape(), out, {&x}, [X, y, sp](const Values& g) {
    if (!X->requires_grad) return;
    auto& gx = X->grad_buffer();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (int64_t l = 0; l < sp.len; ++l) {
          const size_t k = static_cast<size_t>(base + l * sp.inner);
          dot += static_cast<double>(g[k]) * (*y)[k];
        }
        for (int64_t l = 0; l < sp.len; ++l) {
          const size_t k = static_cast<size_t>(base + l * sp.inner);
          gx[k] += (*y)[k] * static_cast<float>(g[k] - dot);
        }
      }
    }
  });
}

Tensor normalize(const Tensor& x, NormKind kind, float eps) {
  if (x.rank() < 2) throw ShapeError("normalize: expected at least [N,C], got " + shape_str(x.shape()));
  const int64_t n = x.dim(0);
  const int64_t c = x.dim(1);
  const int64_t s = x.numel() / (n * c);
  // Each group holds a list of (offset, count) runs; both layouts are regular.
  const int64_t groups = kind == NormKind::kBatch ? c : n * c;
  const int64_t per_group = kind == NormKind::kBatch ? n * s : s;
  if (per_group < 2) throw ShapeError("normalize: need at least two elements per statistic, got " + shape_str(x.shape()));
  auto element = [=](int64_t grp, int64_t k) -> int64_t {
    if (kind == NormKind::kBatch) {
      const int64_t sample = k / s;
      return (sample * c + grp) * s + (k % s);
    }
    return grp * s + k;
  };
  auto out = std::make_shared<Values>(static_cast<size_t>(x.numel()));
  auto inv_std = std::make_shared<Values>(static_cast<size_t>(groups));
  const float* px = x.data().data();
  for (int64_t gi = 0; gi < groups; ++gi) {
    double m = 0.0;
    for (int64_t k = 0; k < per_group; ++k) m += px[element(gi, k)];
    m /= static_cast<double>(per_group);
    double var = 0.0;
    for (int64_t k = 0; k < per_group; ++k) {
      const double d = px[element(gi, k)] - m;
      var += d * d;
    }
    var /= static_cast<double>(per_group);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(gi)] = static_cast<float>(is);
    for (int64_t k = 0; k < per_group; ++k) {
      const int64_t e = element(gi, k);
      (*out)[static_cast<size_t>(e)] = static_cast<float>((px[e] - m) * is);
    }
  }
  TensorImpl* X = x.impl().get();
  const Values* y = out.get();
  return make_result(kind == NormKind::kBatch ? "batch_norm" : "instance_norm", x.shape(), out, {&x},
                     [X, y, inv_std, groups, per_group, element](const Values& g) {
                       if (!X->requires_grad) return;
                       auto& gx = X->grad_buffer();
                       for (int64_t gi = 0; gi < groups; ++gi) {
                         double mg = 0.0;
                         double mgy = 0.0;
                         for (int64_t k = 0; k < per_group; ++k) {
                           const size_t e = static_cast<size_t>(element(gi, k));
                           mg += g[e];
                           mgy += static_cast<double>(g[e]) * (*y)[e];
                         }
                         mg /= static_cast<double>(per_group);
                         mgy /= static_cast<double>(per_group);
                         const double is = (*inv_std)[static_cast<size_t>(gi)];
                         for (int64_t k = 0; k < per_group; ++k) {
                           const size_t e = static_cast<size_t>(element(gi, k));
                           gx[e] += static_cast<float>(is * (g[e] - mg - (*y)[e] * mgy));
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> indices) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V,E], got " + shape_str(table.shape()));
  const int64_t vocab = table.dim(0);
  const int64_t e = table.dim(1);
  if (indices.empty()) throw ContractError("embedding: no indices");
  for (int idx : indices) {
    if (idx < 0 || idx >= vocab) {
      throw ContractError("embedding: index " + std::to_string(idx) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  Values v(indices.size() * static_cast<size_t>(e));
  const float* pt = table.data().data();
  for (size_t i = 0; i < indices.size(); ++i) std::copy_n(pt + indices[i] * e, e, v.data() + static_cast<int64_t>(i) * e);
  TensorImpl* T = table.impl().get();
  std::vector<int> idx(indices.begin(), indices.end());
  return make_result("embedding", {static_cast<int64_t>(indices.size()), e}, std::move(v), {&table},
                     [T, idx, e](const Values& g) {
                       if (!T->requires_grad) return;
                       auto& gt = T->grad_buffer();
                       for (size_t i = 0; i < idx.size(); ++i)
                         for (int64_t k = 0; k < e; ++k) gt[static_cast<size_t>(idx[i] * e + k)] += g[i * static_cast<size_t>(e) + static_cast<size_t>(k)];
                     });
}

Tensor squared_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op_shape_error("squared_distance", a.shape(), b.shape()));
  double acc = 0.0;
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  TensorImpl* A = a.impl().get();
  TensorImpl* B = b.impl().get();
  return make_result("squared_distance", {1}, Values{static_cast<float>(acc)}, {&a, &b}, [A, B](const Values& g) {
    const float* pa = A->data();
    const float* pb = B->data();
    const size_t n = A->storage->size();
    if (A->requires_grad) {
      auto& ga = A->grad_buffer();
      for (size_t i = 0; i < n; ++i) ga[i] += 2.0f * g[0] * (pa[i] - pb[i]);
    }
    if (B->requires_grad) {
      auto& gb = B->grad_buffer();
      for (size_t i = 0; i < n; ++i) gb[i] -= 2.0f * g[0] * (pa[i] - pb[i]);
    }
  });
}

Tensor l2_norm(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += static_cast<double>(v) * v;
  const double norm = std::sqrt(acc);
  TensorImpl* X = x.impl().get();
  return make_result("l2_norm", {1}, Values{static_cast<float>(norm)}, {&x}, [X, norm](const Values& g) {
    if (!X->requires_grad || norm == 0.0) return;
    auto& gx = X->grad_buffer();
    const float* px = X->data();
    const double s = g[0] / norm;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += static_cast<float>(s * px[i]);
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) throw ShapeError(op_shape_error("bce_with_logits", logits.shape(), targets.shape()));
  const float* px = logits.data().data();
  const float* pt = targets.data().data();
  const int64_t n = logits.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double v = px[i];
    acc += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))) - pt[i] * v;
  }
  TensorImpl* X = logits.impl().get();
  auto t = std::make_shared<Values>(targets.data().begin(), targets.data().end());
  return make_result("bce_with_logits", {1}, Values{static_cast<float>(acc / static_cast<double>(n))}, {&logits},
                     [X, t, n](const Values& g) {
                       if (!X->requires_grad) return;
                       auto& gx = X->grad_buffer();
                       const float* px = X->data();
                       const double s = g[0] / static_cast<double>(n);
                       for (int64_t i = 0; i < n; ++i) {
                         const double v = px[i];
                         const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                         gx[static_cast<size_t>(i)] += static_cast<float>(s * (sig - (*t)[static_cast<size_t>(i)]));
                       }
                     });
}

Tensor bce_with_logits(const Tensor& logits, float target) {
  return bce_with_logits(logits, Tensor::full(logits.shape(), target));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N,C], got " + shape_str(logits.shape()));
  const int64_t n = logits.dim(0);
  const int64_t c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) throw ShapeError("cross_entropy: target count differs from rows");
  for (int t : targets) {
    if (t < 0 || t >= c) throw ContractError("cross_entropy: class " + std::to_string(t) + " out of range");
  }
  auto probs = std::make_shared<Values>(static_cast<size_t>(n * c));
  const float* px = logits.data().data();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = px + i * c;
    const float mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int64_t k = 0; k < c; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
    for (int64_t k = 0; k < c; ++k) (*probs)[static_cast<size_t>(i * c + k)] = static_cast<float>(std::exp(static_cast<double>(row[k]) - mx) / z);
    loss += -(static_cast<double>(row[targets[static_cast<size_t>(i)]]) - mx - std::log(z));
  }
  TensorImpl* X = logits.impl().get();
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result("cross_entropy", {1}, Values{static_cast<float>(loss / static_cast<double>(n))}, {&logits},
                     [X, probs, tg, n, c](const Values& g) {
                       if (!X->requires_grad) return;
                       auto& gx = X->grad_buffer();
                       const float s = static_cast<float>(g[0] / static_cast<double>(n));
                       for (int64_t i = 0; i < n; ++i)
                         for (int64_t k = 0; k < c; ++k) {
                           const float onehot = k == tg[static_cast<size_t>(i)] ? 1.0f : 0.0f;
                           gx[static_cast<size_t>(i * c + k)] += s * ((*probs)[static_cast<size_t>(i * c + k)] - onehot);
                         }
                     });
}

Tensor one_hot(std::span<const int> indices, int classes) {
  Values v(indices.size() * static_cast<size_t>(classes), 0.0f);
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= classes) {
      throw ContractError("one_hot: index " + std::to_string(indices[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    v[i * static_cast<size_t>(classes) + static_cast<size_t>(indices[i])] = 1.0f;
  }
  return Tensor({static_cast<int64_t>(indices.size()), classes}, std::move(v));
}

}  // namespace nsim
