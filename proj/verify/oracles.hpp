#pragma once

#include "msm/losses.hpp"
#include "msm/tensor.hpp"

#include <random>
#include <vector>

namespace msm::verify {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Standard-normal matrix.
Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng);
/// Rows drawn uniformly from the unit sphere.
Matrix random_unit_rows(Index rows, Index cols, std::mt19937_64& rng);
/// Standard-normal entries pushed away from zero by at least `margin`.
Matrix random_away_from_zero(Index rows, Index cols, double margin, std::mt19937_64& rng);

/// Mean shift update written as explicit scalar loops:
/// normalize(sum_i x_i exp(kappa <mu, x_i>)).
std::vector<double> vmf_update_loop(const Matrix& points, const std::vector<double>& mu, double kappa);

/// Hypersphere attention evaluated row by row over the allowed keys only.
/// A row with no allowed key uses every key.
Matrix subset_attention(const Matrix& q, const Matrix& k, const Matrix& v, const BoolMatrix& allowed, double kappa);

/// Exhaustive search over all injective assignments of the smaller side.
Matching brute_force_assignment(const Matrix& cost);

/// Adjusted Rand index of two labelings of the same points.
double adjusted_rand_index(const std::vector<Index>& a, const std::vector<Index>& b);

}  // namespace msm::verify
