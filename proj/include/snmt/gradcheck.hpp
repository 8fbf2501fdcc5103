#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "snmt/graph.hpp"

namespace snmt {

using NamedTensor = std::pair<std::string, Tensor<double>*>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of `loss` against central differences
/// (f(p + eps) - f(p - eps)) / 2 eps for every entry of every tensor.
///
/// `loss` maps a fresh Graph<double> to a scalar node built from the given
/// tensors; its backward pass supplies the analytic gradient. `evaluate`
/// returns f at the current (perturbed) tensor values and may work in a wider
/// type than double. The relative error of an entry is
/// |a - n| / max(|a|, |n|, 1e-8); the worst one is reported.
template <typename LossFn, typename EvaluateFn>
GradCheckReport finite_diff_check(LossFn&& loss, const std::vector<NamedTensor>& params,
                                  double eps, EvaluateFn&& evaluate) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw DomainError("finite difference step must lie in [1e-7, 1e-4]");
  }
  for (const auto& [name, t] : params) {
    if (!t->requires_grad()) t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    Graph<double> g;
    auto out = loss(g);
    g.backward(out);
  }

  GradCheckReport report;
  for (const auto& [name, t] : params) {
    Matrix<double> analytic = t->grad();
    auto& value = t->value();
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value(i);
      value(i) = saved + eps;
      const long double plus = evaluate();
      value(i) = saved - eps;
      const long double minus = evaluate();
      value(i) = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw DomainError("loss is not finite when perturbing " + name + "[" +
                          std::to_string(i) + "]");
      }
      // Divide by the step actually taken, which rounding may have moved.
      const long double step = static_cast<long double>(saved + eps) - (saved - eps);
      const double numeric = static_cast<double>((plus - minus) / step);
      const double a = analytic(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (report.worst_index < 0 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

/// Same check with f evaluated through `loss` itself in double precision.
template <typename LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, const std::vector<NamedTensor>& params,
                                  double eps = 1e-6) {
  auto evaluate = [&loss]() -> long double {
    Graph<double> g(GradMode::kDisabled);
    return loss(g).item();
  };
  return finite_diff_check(loss, params, eps, evaluate);
}

}  // namespace snmt
