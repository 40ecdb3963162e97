#pragma once

#include "msm/tensor.hpp"

#include <functional>
#include <vector>

namespace msm::verify {

/// Builds a scalar from the given inputs using tensor ops.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckResult {
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||); 0 when both vanish.
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  Index evaluations = 0;
};

/// Compares reverse-mode gradients with central differences of step h.
GradCheckResult gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-4);

/// sum(y * weights): turns a tensor-valued op into a scalar with a
/// non-degenerate gradient.
Tensor project(const Tensor& y, const Tensor& weights);

}  // namespace msm::verify
