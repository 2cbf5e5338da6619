#include "nsim/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nsim/rng.hpp"

namespace nsim {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL") << " max_rel_error=" << max_rel_error << " coords=" << coords_checked;
  if (!pass) {
    os << " worst=(tensor " << worst_tensor << ", index " << worst_index << ", analytic " << worst_analytic
       << ", numeric " << worst_numeric << ")";
  }
  return os.str();
}

namespace {

class TraceScope {
 public:
  explicit TraceScope(detail::BranchTrace* trace) : previous_(detail::active_branch_trace()) {
    if (trace != nullptr) trace->cursor = 0;
    detail::active_branch_trace() = trace;
  }
  ~TraceScope() { detail::active_branch_trace() = previous_; }
  TraceScope(const TraceScope&) = delete;
  TraceScope& operator=(const TraceScope&) = delete;

 private:
  detail::BranchTrace* previous_;
};

float evaluate(const std::function<Tensor()>& f, detail::BranchTrace* trace) {
  TraceScope ts(trace);
  NoGradScope no_grad;
  const Tensor y = f();
  if (y.numel() != 1) throw ContractError("gradient_check: function must return a scalar, got " + shape_str(y.shape()));
  return y.item();
}

}  // namespace

GradCheckReport gradient_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                               const GradCheckOptions& options) {
  // Perturbed evaluations replay the branches taken at the base point, so the
  // differences see the smooth piece whose derivative the tape reports.
  detail::BranchTrace trace;
  const float base1 = evaluate(f, &trace);
  trace.replay = true;
  const float base2 = evaluate(f, &trace);
  if (std::bit_cast<uint32_t>(base1) != std::bit_cast<uint32_t>(base2)) {
    throw OracleError("gradient_check: baseline evaluations disagree; function is not deterministic");
  }

  std::vector<bool> previous_flags;
  for (Tensor& t : inputs) {
    previous_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    TraceScope ts(&trace);
    const Tensor y = f();
    if (y.numel() != 1) throw ContractError("gradient_check: function must return a scalar");
    if (tape.size() > 0 && y.requires_grad()) tape.backward(y);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    std::vector<float> analytic(static_cast<size_t>(t.numel()), 0.0f);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<size_t> coords(analytic.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && coords.size() > static_cast<size_t>(options.max_coords_per_tensor)) {
      Rng pick = rng.split(ti);
      for (size_t i = 0; i < static_cast<size_t>(options.max_coords_per_tensor); ++i) {
        const size_t j = i + static_cast<size_t>(pick.next_u64() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(static_cast<size_t>(options.max_coords_per_tensor));
    }

    auto values = t.mutable_data();
    for (size_t i : coords) {
      const float saved = values[i];
      values[i] = saved + options.eps;
      const double fp = evaluate(f, &trace);
      values[i] = saved - options.eps;
      const double fm = evaluate(f, &trace);
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(options.eps));
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      ++report.coords_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = ti;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    inputs[ti].clear_grad();
    inputs[ti].set_requires_grad(previous_flags[ti]);
  }
  report.pass = report.max_rel_error <= options.tol;
  return report;
}

GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps, float tol) {
  Tensor probe = x.clone();
  GradCheckOptions options;
  options.eps = eps;
  options.tol = tol;
  return gradient_check([&] { return f(probe); }, {probe}, options);
}

}  // namespace nsim
