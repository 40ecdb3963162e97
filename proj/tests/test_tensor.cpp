#include "doctest.h"

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "msm/tensor.hpp"
#include "msm/tensor_io.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace msm;

TEST_CASE("matmul hand cases") {
  const Tensor i2 = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(i2, m).data() == m.data());
  const Tensor a = Tensor::from_values({1, 2}, {1, 2});
  const Tensor b = Tensor::from_values({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows") {
  const Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 0, 0, 0});
  const Tensor s = softmax_rows(x);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-15));
  CHECK(s[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-15));
  CHECK(s[3] == doctest::Approx(1.0 / 3.0));

  SUBCASE("two-column cases") {
    const Tensor half = softmax_rows(Tensor::from_values({1, 2}, {0, 0}));
    CHECK(half[0] == 0.5);
    CHECK(half[1] == 0.5);
    Matrix mask(1, 2);
    mask << 0, -kMaskSentinel;
    const Tensor single = softmax_rows(Tensor::from_values({1, 2}, {5, 7}), &mask);
    CHECK(single[0] == 1.0);
    CHECK(single[1] == 0.0);
  }

  SUBCASE("fully masked row falls back to the unmasked softmax") {
    Matrix mask(2, 3);
    mask << 0, -kMaskSentinel, 0, -kMaskSentinel, -kMaskSentinel, -kMaskSentinel;
    std::vector<bool> flags;
    const Tensor y = softmax_rows(x, &mask, &flags);
    REQUIRE(flags.size() == 2);
    CHECK_FALSE(flags[0]);
    CHECK(flags[1]);
    CHECK(y[4] == doctest::Approx(1.0 / 3.0));
    CHECK(y[1] == 0.0);
  }

  SUBCASE("rows sum to one") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
      const Tensor r = softmax_rows(Tensor::from_matrix(3.0 * verify::random_matrix(4, 7, rng)));
      const Vector sums = r.matrix().rowwise().sum();
      CHECK((sums.array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("l2_normalize_rows") {
  const Tensor y = l2_normalize_rows(Tensor::from_values({3, 2}, {3, 4, 0.6, 0.8, 0, 0}));
  CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y[4] == 0.0);
  CHECK(y[5] == 0.0);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = verify::random_matrix(5, 6, rng) * std::pow(10.0, (t % 7) - 3);
    const Tensor n = l2_normalize_rows(Tensor::from_matrix(m));
    CHECK((n.matrix().rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("elementwise values and domain errors") {
  const Tensor x = Tensor::from_values({2}, {-1, 2});
  CHECK(relu(x)[0] == 0.0);
  CHECK(relu(x)[1] == 2.0);
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(sigmoid(Tensor::scalar(-800.0)).item() >= 0.0);
  CHECK(std::isfinite(sigmoid(Tensor::scalar(800.0)).item()));
  CHECK_THROWS_AS(log(x), DomainError);
  CHECK_THROWS_AS(add(x, Tensor::zeros({3})), ShapeError);
  CHECK(sum(x).item() == 1.0);
  CHECK(mean(x).item() == 0.5);
}

TEST_CASE("backward basics") {
  Tape tape;
  const Tensor x = tape.track(Tensor::from_values({3}, {1, -2, 3}));
  tape.backward(sum(x));
  CHECK(tape.grad(x) == Vector::Ones(3));

  Tape tape2;
  const Tensor y = tape2.track(Tensor::from_values({3}, {1, -2, 3}));
  tape2.backward(sum(mul(y, y)));
  CHECK(tape2.grad(y) == 2.0 * y.data());

  SUBCASE("usage errors") {
    Tape t;
    CHECK_THROWS_AS(t.backward(Tensor::scalar(1.0)), UsageError);
    const Tensor v = t.track(Tensor::ones({2}));
    CHECK_THROWS_AS(t.backward(mul(v, v)), UsageError);
  }

  SUBCASE("tensors on different tapes cannot be mixed") {
    Tape a, b;
    const Tensor u = a.track(Tensor::ones({2}));
    const Tensor v = b.track(Tensor::ones({2}));
    CHECK_THROWS(add(u, v));
  }
}

TEST_CASE("composite hypersphere-style expression matches finite differences") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const Tensor q = Tensor::from_matrix(verify::random_matrix(3, 4, rng));
    const Tensor k = Tensor::from_matrix(verify::random_matrix(5, 4, rng));
    const Tensor r = Tensor::from_matrix(verify::random_matrix(3, 4, rng));
    const auto res = verify::gradcheck(
        [&](const std::vector<Tensor>& in) {
          const Tensor w = softmax_rows(scale(matmul(l2_normalize_rows(in[0]), transpose(l2_normalize_rows(in[1]))), 5.0));
          return verify::project(l2_normalize_rows(matmul(w, in[1])), r);
        },
        {q, k});
    CHECK(res.relative_error <= 1e-5);
  }
}

TEST_CASE("forward evaluation is bit-identical across runs") {
  std::mt19937_64 rng(2);
  const Tensor a = Tensor::from_matrix(verify::random_matrix(6, 5, rng));
  const Tensor b = Tensor::from_matrix(verify::random_matrix(5, 6, rng));
  const Tensor first = softmax_rows(matmul(a, b));
  const Tensor second = softmax_rows(matmul(a, b));
  CHECK(first.data() == second.data());
}

TEST_CASE("structural ops") {
  const Tensor a = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(transpose(a).shape() == Shape{2, 3});
  CHECK(transpose(a)[1] == 3.0);
  CHECK(slice(a, 1, 3)[0] == 3.0);
  CHECK(reshape(a, {2, 3}).shape() == Shape{2, 3});
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
  const std::vector<Tensor> parts{a, a};
  CHECK(concat(parts).shape() == Shape{6, 2});
  const std::vector<Index> rows{2, 0};
  CHECK(gather_rows(a, rows)[0] == 5.0);
  CHECK(row_sums(a)[2] == 11.0);
  CHECK(add_row_vector(a, Tensor::from_values({2}, {10, 20}))[1] == 22.0);
}

TEST_CASE("MSMT round trip and format errors") {
  std::mt19937_64 rng(4);
  const Tensor t(Shape{2, 3, 4}, verify::random_matrix(24, 1, rng).col(0));
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "MSMT");
  CHECK(bytes.size() == 4 + 3 + 3 * 8 + 24 * 8);
  CHECK(static_cast<unsigned char>(bytes[7]) == 2);  // first dim, little-endian
  const Tensor back = read_tensor(ss);
  CHECK(back.shape() == t.shape());
  CHECK(back.data() == t.data());

  std::stringstream bad("MSMX\x01\x01\x00");
  CHECK_THROWS_AS(read_tensor(bad), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor(truncated), FormatError);

  std::stringstream scalar_stream;
  write_tensor(scalar_stream, Tensor::scalar(2.5));
  CHECK(read_tensor(scalar_stream).item() == 2.5);
}
