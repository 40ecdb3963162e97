#include "doctest.h"

#include "oracles.hpp"
#include "msm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace msm;
using verify::random_matrix;

namespace {

MaskPrediction prediction_from(const Matrix& logits, const Matrix& class_logits, Index h, Index w) {
  MaskPrediction p;
  p.logits = Tensor({logits.rows(), h, w}, Eigen::Map<const Vector>(logits.data(), logits.size()));
  p.class_logits = Tensor::from_matrix(class_logits);
  p.masks = logits.array() > 0.0;
  p.scores.resize(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) p.scores[i] = 1.0 / (1.0 + std::exp(class_logits(i, 1) - class_logits(i, 0)));
  p.height = h;
  p.width = w;
  return p;
}

}  // namespace

TEST_CASE("dice_loss") {
  const Vector g = (Vector(4) << 1, 1, 0, 0).finished();
  CHECK(dice_loss(Tensor({4}, g), g).item() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(dice_loss(Tensor::zeros({4}), g).item() == doctest::Approx(1.0 - 1.0 / 3.0));
  CHECK(dice_loss(Tensor::zeros({4}), Vector::Zero(4)).item() == 0.0);
  const Vector p = (Vector(4) << 0.5, 0.5, 0.5, 0.5).finished();
  CHECK(dice_loss(Tensor({4}, p), g).item() == doctest::Approx(1.0 - 3.0 / 5.0));
}

TEST_CASE("bce_loss") {
  const Vector g = (Vector(2) << 1, 0).finished();
  CHECK(bce_loss(Tensor::zeros({2}), g).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(Tensor::from_values({2}, {800.0, -800.0}), g).item() == 0.0);
  const double big = bce_loss(Tensor::from_values({2}, {-800.0, 800.0}), g).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(800.0));
}

TEST_CASE("hungarian fixtures") {
  SUBCASE("2x2") {
    Matrix c(2, 2);
    c << 4, 1, 2, 3;
    const Matching m = hungarian(c);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0] == std::pair<Index, Index>{0, 1});
    CHECK(m.pairs[1] == std::pair<Index, Index>{1, 0});
    CHECK(matching_cost(c, m) == 3.0);
  }
  SUBCASE("3x3 textbook") {
    Matrix c(3, 3);
    c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    CHECK(matching_cost(c, hungarian(c)) == 5.0);
  }
  SUBCASE("more predictions than ground truth") {
    Matrix c(3, 1);
    c << 5, 1, 3;
    const Matching m = hungarian(c);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0] == std::pair<Index, Index>{1, 0});
    CHECK(m.unmatched_predictions == std::vector<Index>{0, 2});
  }
  SUBCASE("ties resolve by scan order") {
    const Matching m = hungarian(Matrix::Zero(2, 2));
    CHECK(m.pairs[0] == std::pair<Index, Index>{0, 0});
    CHECK(m.pairs[1] == std::pair<Index, Index>{1, 1});
  }
  SUBCASE("empty ground truth") {
    const Matching m = hungarian(Matrix(3, 0));
    CHECK(m.pairs.empty());
    CHECK(m.unmatched_predictions.size() == 3);
  }
  SUBCASE("non-finite cost") {
    Matrix c = Matrix::Zero(2, 2);
    c(0, 1) = std::nan("");
    CHECK_THROWS(hungarian(c));
  }
}

TEST_CASE("hungarian matches brute force on random rectangles") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const Index n = 1 + t % 6, m = 1 + (t / 6) % 6;
    const Matrix c = random_matrix(n, m, rng);
    const Matching ours = hungarian(c);
    CHECK(ours.pairs.size() == static_cast<std::size_t>(std::min(n, m)));
    CHECK(matching_cost(c, ours) == doctest::Approx(matching_cost(c, verify::brute_force_assignment(c))));
  }
}

TEST_CASE("masks_from_labels") {
  LabelMap l(2, 2);
  l << 0, 3, 3, 1;
  const Matrix m = masks_from_labels(l);
  REQUIRE(m.rows() == 2);
  CHECK(m.row(0) == (Eigen::RowVector4d() << 0, 0, 0, 1).finished());
  CHECK(m.row(1) == (Eigen::RowVector4d() << 0, 1, 1, 0).finished());
}

TEST_CASE("match_cost on a 2x2 problem") {
  Matrix logits(2, 2);
  logits << 20, -20, -20, 20;
  Matrix cls = Matrix::Zero(2, 2);
  const MaskPrediction pred = prediction_from(logits, cls, 1, 2);
  Matrix gt(2, 2);
  gt << 0, 1, 1, 0;
  const Matrix c = match_cost(pred, gt, LossWeights{});
  CHECK(c(0, 0) > c(0, 1));
  CHECK(c(1, 1) > c(1, 0));
  CHECK(c(0, 1) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  const Matching m = hungarian(c);
  CHECK(m.pairs[0] == std::pair<Index, Index>{0, 1});
  CHECK(m.pairs[1] == std::pair<Index, Index>{1, 0});
}

TEST_CASE("set loss") {
  std::mt19937_64 rng(9);
  SUBCASE("no ground truth leaves only the no-object term") {
    Matrix cls(3, 2);
    cls << 0, 0, 1, 0, 0, 2;
    const MaskPrediction pred = prediction_from(random_matrix(3, 4, rng), cls, 2, 2);
    const double loss = total_loss({pred}, Matrix(0, 4), LossWeights{}).item();
    double expected = 0.0;
    for (Index i = 0; i < 3; ++i) {
      expected += 0.1 * (std::log(std::exp(cls(i, 0)) + std::exp(cls(i, 1))) - cls(i, 1));
    }
    CHECK(loss == doctest::Approx(expected));
  }
  SUBCASE("invariant to permuting predictions and ground truth") {
    const Matrix logits = 3.0 * random_matrix(4, 6, rng);
    const Matrix cls = random_matrix(4, 2, rng);
    Matrix gt = (random_matrix(3, 6, rng).array() > 0.0).cast<double>();
    const double base = total_loss({prediction_from(logits, cls, 2, 3)}, gt, LossWeights{}).item();
    const Eigen::PermutationMatrix<Eigen::Dynamic> pp = [] {
      Eigen::PermutationMatrix<Eigen::Dynamic> p(4);
      p.indices() << 2, 0, 3, 1;
      return p;
    }();
    Matrix gt_swapped = gt;
    gt_swapped.row(0).swap(gt_swapped.row(2));
    const double permuted =
        total_loss({prediction_from(pp * logits, pp * cls, 2, 3)}, gt_swapped, LossWeights{}).item();
    CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("perfect prediction costs less than a wrong one") {
    Matrix gt(1, 4);
    gt << 1, 1, 0, 0;
    Matrix good(1, 4), bad(1, 4);
    good << 8, 8, -8, -8;
    bad << -8, -8, 8, 8;
    Matrix cls(1, 2);
    cls << 4, -4;
    CHECK(total_loss({prediction_from(good, cls, 2, 2)}, gt, LossWeights{}).item() <
          total_loss({prediction_from(bad, cls, 2, 2)}, gt, LossWeights{}).item());
  }
  SUBCASE("auxiliary terms add the earlier predictions") {
    Matrix gt(1, 4);
    gt << 1, 0, 0, 1;
    const MaskPrediction a = prediction_from(random_matrix(2, 4, rng), random_matrix(2, 2, rng), 2, 2);
    const MaskPrediction b = prediction_from(random_matrix(2, 4, rng), random_matrix(2, 2, rng), 2, 2);
    const double la = total_loss({a}, gt, LossWeights{}).item();
    const double lb = total_loss({b}, gt, LossWeights{}).item();
    CHECK(total_loss({a, b}, gt, LossWeights{}, false).item() == doctest::Approx(lb));
    CHECK(total_loss({a, b}, gt, LossWeights{}, true).item() == doctest::Approx(la + lb));
  }
}
