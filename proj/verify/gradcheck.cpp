#include "gradcheck.hpp"

#include <algorithm>

namespace msm::verify {

GradCheckResult gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  GradCheckResult result;
  Index total = 0;
  for (const Tensor& t : inputs) total += t.size();
  Vector analytic(total), numeric(total);

  {
    Tape tape;
    std::vector<Tensor> tracked;
    for (const Tensor& t : inputs) tracked.push_back(tape.track(t.detach()));
    const Tensor loss = f(tracked);
    tape.backward(loss);
    Index offset = 0;
    for (const Tensor& t : tracked) {
      analytic.segment(offset, t.size()) = tape.grad(t);
      offset += t.size();
    }
  }

  std::vector<Tensor> values;
  for (const Tensor& t : inputs) values.push_back(t.detach());
  Index offset = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Tensor original = values[i];
    for (Index j = 0; j < original.size(); ++j) {
      Vector plus = original.data(), minus = original.data();
      plus[j] += h;
      minus[j] -= h;
      values[i] = Tensor(original.shape(), plus);
      const double fp = f(values).item();
      values[i] = Tensor(original.shape(), minus);
      const double fm = f(values).item();
      numeric[offset + j] = (fp - fm) / (2.0 * h);
      result.evaluations += 2;
    }
    values[i] = original;
    offset += original.size();
  }

  result.analytic_norm = analytic.norm();
  const double scale = std::max(analytic.norm(), numeric.norm());
  result.relative_error = scale == 0.0 ? 0.0 : (analytic - numeric).norm() / scale;
  return result;
}

Tensor project(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

}  // namespace msm::verify
