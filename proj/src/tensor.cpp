#include "nsim/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace nsim {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(storage->size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : Tensor(std::move(shape), std::make_shared<std::vector<float>>(std::move(values))) {}

Tensor::Tensor(Shape shape, std::shared_ptr<std::vector<float>> storage) {
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (nsim::numel(shape) != static_cast<int64_t>(storage->size())) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(storage->size()) +
                     " values");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->storage = std::move(storage);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0f); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0f); }
Tensor Tensor::full(const Shape& shape, float value) {
  return Tensor(shape, std::vector<float>(static_cast<size_t>(nsim::numel(shape)), value));
}
Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->shape;
}

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[static_cast<size_t>(a)];
}

int64_t Tensor::numel() const { return impl_ ? impl_->size() : 0; }

std::span<const float> Tensor::data() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return {impl_->data(), impl_->storage->size()};
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw StateError("use of undefined tensor");
  return {impl_->data(), impl_->storage->size()};
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw StateError("use of undefined tensor");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && impl_->is_leaf; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape();
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape();
  impl->storage = std::make_shared<std::vector<float>>(*impl_->storage);
  return Tensor(std::move(impl));
}

void Tape::record(std::string op, std::vector<ImplPtr> inputs, ImplPtr output, BackwardFn backward) {
  if (consumed_) throw StateError("recording on a consumed tape; call reset() first");
  records_.push_back(Record{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward called on a consumed tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  const auto* target = loss.impl().get();
  bool found = false;
  for (const auto& r : records_) {
    if (r.output.get() == target) {
      found = true;
      break;
    }
  }
  if (!found) throw ContractError("backward: loss was not produced on this tape");

  loss.impl()->grad_buffer()[0] += 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto& out = *it->output;
    if (out.grad.empty()) continue;
    it->backward(out.grad);
    // Interior gradients are not needed past this point.
    if (!out.is_leaf) {
      out.grad.clear();
      out.grad.shrink_to_fit();
    }
  }
  records_.clear();
  consumed_ = true;
}

void Tape::reset() {
  records_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw StateError("backward called with no active tape");
  g_active_tape->backward(loss);
}

namespace detail {

BranchTrace*& active_branch_trace() {
  thread_local BranchTrace* trace = nullptr;
  return trace;
}

void check_finite(std::string_view op, std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError("numeric overflow: non-finite value produced by " + std::string(op));
  }
}

namespace {

Tensor finish(std::string_view op, Shape shape, std::shared_ptr<std::vector<float>> values, bool track,
              std::vector<Tape::ImplPtr> inputs, Tape::BackwardFn backward) {
  check_finite(op, *values);
  Tensor out(std::move(shape), std::move(values));
  if (track) {
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    g_active_tape->record(std::string(op), std::move(inputs), out.impl(), std::move(backward));
  }
  return out;
}

}  // namespace

Tensor make_result(std::string_view op, Shape shape, std::vector<float> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward) {
  return make_result(op, std::move(shape), std::make_shared<std::vector<float>>(std::move(values)), inputs,
                     std::move(backward));
}

Tensor make_result(std::string_view op, Shape shape, std::vector<float> values, const std::vector<Tensor>& inputs,
                   Tape::BackwardFn backward) {
  return make_result(op, std::move(shape), std::make_shared<std::vector<float>>(std::move(values)), inputs,
                     std::move(backward));
}

Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<std::vector<float>> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward) {
  bool track = false;
  std::vector<Tape::ImplPtr> impls;
  if (g_active_tape != nullptr) {
    for (const Tensor* t : inputs) {
      if (t != nullptr && t->requires_grad()) track = true;
    }
    if (track) {
      for (const Tensor* t : inputs) {
        if (t != nullptr && t->defined()) impls.push_back(t->impl());
      }
    }
  }
  return finish(op, std::move(shape), std::move(values), track, std::move(impls), std::move(backward));
}

Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<std::vector<float>> values,
                   const std::vector<Tensor>& inputs, Tape::BackwardFn backward) {
  bool track = false;
  std::vector<Tape::ImplPtr> impls;
  if (g_active_tape != nullptr) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) track = true;
    }
    if (track) {
      for (const Tensor& t : inputs) impls.push_back(t.impl());
    }
  }
  return finish(op, std::move(shape), std::move(values), track, std::move(impls), std::move(backward));
}

}  // namespace detail

}  // namespace nsim
