#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msm/tensor.hpp"

namespace msm::verify {

namespace tolerance {
inline constexpr double kEquivalence = 1e-12;
inline constexpr double kEquivalenceSeconds = 1.0;
inline constexpr double kGradStep = 1e-4;
inline constexpr double kGradRelative = 1e-5;
inline constexpr Index kGradInstances = 20;
inline constexpr double kGradSeconds = 60.0;
inline constexpr double kMaskedAttention = 1e-10;
inline constexpr double kUnitNormHypersphere = 1e-12;
inline constexpr double kUnitNormLayer = 1e-6;
inline constexpr double kClusteringSuccessRate = 0.95;
inline constexpr double kClusteringSeconds = 30.0;
}  // namespace tolerance

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct GradCaseResult {
  std::string module;
  std::string op;
  double max_relative_error = 0.0;
  Index instances = 0;
};

/// Gradient checks for every differentiable operation, `instances` random
/// draws each, using central differences of step h.
std::vector<GradCaseResult> gradient_suite(Index instances, std::uint64_t seed, double h = tolerance::kGradStep);

CheckResult check_attention_clustering_equivalence(std::uint64_t seed = 101);
CheckResult check_gradients(std::uint64_t seed = 202);
CheckResult check_masked_attention(std::uint64_t seed = 303);
CheckResult check_unit_norm(std::uint64_t seed = 404);
CheckResult check_clustering_recovery(std::uint64_t seed = 505);
CheckResult check_hungarian(std::uint64_t seed = 606);
CheckResult check_metric_fixtures();

/// Criteria that need no training, in order.
std::vector<CheckResult> run_core_checks();

/// "[PASS] 3 masked attention ... (detail, 0.01 s)".
std::string format_result(const CheckResult& result);

}  // namespace msm::verify
