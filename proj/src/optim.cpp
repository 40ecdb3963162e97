#include "msm/optim.hpp"

#include <cmath>

namespace msm {

std::vector<Tensor> AdamW::step(std::span<const Tensor> params, std::span<const Vector> grads) {
  if (params.size() != grads.size()) throw ShapeError("AdamW: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.push_back(Vector::Zero(p.size()));
      v_.push_back(Vector::Zero(p.size()));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("AdamW: parameter count changed between steps");
  ++step_;
  double lr = options_.lr;
  if (options_.warmup_steps > 0 && step_ < options_.warmup_steps) {
    lr *= static_cast<double>(step_) / static_cast<double>(options_.warmup_steps);
  }
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vector& g = grads[i];
    if (g.size() != params[i].size() || m_[i].size() != g.size()) {
      throw ShapeError("AdamW: gradient " + std::to_string(i) + " does not match its parameter");
    }
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    Vector theta = params[i].data() * (1.0 - lr * options_.weight_decay);
    theta.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
    out.emplace_back(params[i].shape(), std::move(theta));
  }
  return out;
}

void AdamW::restore(std::vector<Vector> first, std::vector<Vector> second, Index step) {
  if (first.size() != second.size()) throw ShapeError("AdamW::restore: moment counts differ");
  m_ = std::move(first);
  v_ = std::move(second);
  step_ = step;
}

double clip_grad_norm(std::span<Vector> grads, double max_norm) {
  double sq = 0.0;
  for (const Vector& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Vector& g : grads) g *= factor;
  }
  return norm;
}

}  // namespace msm
