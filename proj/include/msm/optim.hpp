#pragma once

#include "msm/tensor.hpp"

#include <span>
#include <vector>

namespace msm {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  /// Linear warm-up length in steps; 0 disables.
  Index warmup_steps = 0;
};

/// AdamW with decoupled weight decay: theta <- theta - lr*wd*theta, followed
/// by the bias-corrected Adam step.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Returns updated parameters; `grads[i]` must match `params[i]` in size.
  std::vector<Tensor> step(std::span<const Tensor> params, std::span<const Vector> grads);

  const AdamWOptions& options() const { return options_; }
  Index step_count() const { return step_; }
  const std::vector<Vector>& first_moments() const { return m_; }
  const std::vector<Vector>& second_moments() const { return v_; }

  /// Restores moments and step count (e.g. from a checkpoint).
  void restore(std::vector<Vector> first, std::vector<Vector> second, Index step);

 private:
  AdamWOptions options_;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
  Index step_ = 0;
};

/// Scales all gradients in place so their joint L2 norm is at most
/// `max_norm`; returns the norm before clipping.
double clip_grad_norm(std::span<Vector> grads, double max_norm);

}  // namespace msm
