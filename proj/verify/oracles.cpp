#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace msm::verify {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Matrix random_unit_rows(Index rows, Index cols, std::mt19937_64& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  m.rowwise().normalize();
  return m;
}

Matrix random_away_from_zero(Index rows, Index cols, double margin, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    double v = 0.0;
    do {
      v = normal(rng);
    } while (std::abs(v) < margin);
    m.data()[i] = v;
  }
  return m;
}

std::vector<double> vmf_update_loop(const Matrix& points, const std::vector<double>& mu, double kappa) {
  const std::size_t d = mu.size();
  std::vector<double> acc(d, 0.0);
  for (Index i = 0; i < points.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += mu[j] * points(i, static_cast<Index>(j));
    const double w = std::exp(kappa * dot);
    for (std::size_t j = 0; j < d; ++j) acc[j] += w * points(i, static_cast<Index>(j));
  }
  double norm = 0.0;
  for (double a : acc) norm += a * a;
  norm = std::sqrt(norm);
  for (double& a : acc) a /= norm;
  return acc;
}

namespace {

std::vector<double> unit_row(const Matrix& m, Index r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  double norm = 0.0;
  for (Index j = 0; j < m.cols(); ++j) norm += m(r, j) * m(r, j);
  norm = std::max(std::sqrt(norm), 1e-12);
  for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(r, j) / norm;
  return out;
}

}  // namespace

Matrix subset_attention(const Matrix& q, const Matrix& k, const Matrix& v, const BoolMatrix& allowed, double kappa) {
  Matrix out(q.rows(), v.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    const auto qi = unit_row(q, i);
    std::vector<Index> keys;
    for (Index j = 0; j < k.rows(); ++j) {
      if (allowed(i, j)) keys.push_back(j);
    }
    if (keys.empty()) {
      keys.resize(static_cast<std::size_t>(k.rows()));
      std::iota(keys.begin(), keys.end(), Index{0});
    }
    std::vector<double> logits;
    for (Index j : keys) {
      const auto kj = unit_row(k, j);
      double dot = 0.0;
      for (std::size_t c = 0; c < qi.size(); ++c) dot += qi[c] * kj[c];
      logits.push_back(kappa * dot);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) total += (l = std::exp(l - top));
    std::vector<double> row(static_cast<std::size_t>(v.cols()), 0.0);
    for (std::size_t t = 0; t < keys.size(); ++t) {
      for (Index c = 0; c < v.cols(); ++c) row[static_cast<std::size_t>(c)] += logits[t] / total * v(keys[t], c);
    }
    double norm = 0.0;
    for (double r : row) norm += r * r;
    norm = std::max(std::sqrt(norm), 1e-12);
    for (Index c = 0; c < v.cols(); ++c) out(i, c) = row[static_cast<std::size_t>(c)] / norm;
  }
  return out;
}

Matching brute_force_assignment(const Matrix& cost) {
  const bool flip = cost.rows() > cost.cols();
  const Matrix c = flip ? Matrix(cost.transpose()) : cost;
  const Index n = c.rows(), m = c.cols();
  // Choose an ordered set of n distinct columns: iterate over permutations of
  // all columns and use the first n entries.
  std::vector<Index> cols(static_cast<std::size_t>(m));
  std::iota(cols.begin(), cols.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> best_cols;
  do {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += c(i, cols[static_cast<std::size_t>(i)]);
    if (total < best) {
      best = total;
      best_cols.assign(cols.begin(), cols.begin() + n);
    }
  } while (std::next_permutation(cols.begin(), cols.end()));

  Matching result;
  for (Index i = 0; i < n; ++i) {
    const Index j = best_cols[static_cast<std::size_t>(i)];
    result.pairs.emplace_back(flip ? j : i, flip ? i : j);
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  std::vector<bool> used(static_cast<std::size_t>(cost.rows()), false);
  for (const auto& [p, g] : result.pairs) used[static_cast<std::size_t>(p)] = true;
  for (Index p = 0; p < cost.rows(); ++p) {
    if (!used[static_cast<std::size_t>(p)]) result.unmatched_predictions.push_back(p);
  }
  return result;
}

double adjusted_rand_index(const std::vector<Index>& a, const std::vector<Index>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: label vectors differ in length");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<Index, Index>, double> table;
  std::map<Index, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto pairs = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [key, count] : table) index += pairs(count);
  for (const auto& [key, count] : rows) sum_rows += pairs(count);
  for (const auto& [key, count] : cols) sum_cols += pairs(count);
  const double expected = sum_rows * sum_cols / pairs(n);
  const double max_index = (sum_rows + sum_cols) / 2;
  // Both labelings trivial (one cluster each, or all singletons).
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace msm::verify
