#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsim {

using Shape = std::vector<int64_t>;

/// Raised when operand extents do not fit the primitive's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a primitive produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Object used in a state that does not allow the operation (e.g. consumed tape).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<float>> storage;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<float> grad;  // empty means "no gradient yet"

  float* data() { return storage->data(); }
  const float* data() const { return storage->data(); }
  int64_t size() const { return static_cast<int64_t>(storage->size()); }

  // Lazily allocates a zero gradient buffer.
  std::vector<float>& grad_buffer();
};

}  // namespace detail

/// Dense row-major f32 array. Copies are shallow handles; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, float value);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  // Negative indices count from the back.
  int64_t dim(int axis) const;
  int64_t numel() const;

  std::span<const float> data() const;
  // Writes bypass the tape; only use on leaves between optimization steps.
  std::span<float> mutable_data();
  float item() const;
  float at(int64_t flat_index) const { return data()[static_cast<size_t>(flat_index)]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();
  void clear_grad();

  // Shares storage, never tracked.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  Tensor(Shape shape, std::shared_ptr<std::vector<float>> storage);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of primitive applications needed to replay gradients.
class Tape {
 public:
  using ImplPtr = std::shared_ptr<detail::TensorImpl>;
  using BackwardFn = std::function<void(const std::vector<float>& grad_output)>;

  struct Record {
    std::string op;
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<ImplPtr> inputs, ImplPtr output, BackwardFn backward);

  size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Record>& records() const { return records_; }

  /// Populates gradients of every reachable tensor, then consumes the tape.
  void backward(const Tensor& loss);
  void reset();

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target of the current thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// backward() on the thread's active tape.
void backward(const Tensor& loss);

namespace detail {

// Builds the output of a primitive: validates finiteness and records on the
// active tape when any input requires a gradient.
Tensor make_result(std::string_view op, Shape shape, std::vector<float> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward);
Tensor make_result(std::string_view op, Shape shape, std::vector<float> values,
                   const std::vector<Tensor>& inputs, Tape::BackwardFn backward);
// Shared-storage variants let a backward closure capture the output values.
Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<std::vector<float>> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward);
Tensor make_result(std::string_view op, Shape shape, std::shared_ptr<std::vector<float>> values,
                   const std::vector<Tensor>& inputs, Tape::BackwardFn backward);

void check_finite(std::string_view op, std::span<const float> values);

// Sign decisions of piecewise-linear primitives, in call order. While a trace
// is active in replay mode those primitives reuse the recorded branches.
struct BranchTrace {
  bool replay = false;
  std::vector<std::vector<uint8_t>> masks;
  size_t cursor = 0;
};
BranchTrace*& active_branch_trace();

// True when `t` participates in gradient computation of the current step.
inline bool needs_grad(const TensorImpl* t) { return t->requires_grad; }

}  // namespace detail

}  // namespace nsim
