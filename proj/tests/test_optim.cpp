#include "doctest.h"

#include "msm/optim.hpp"

#include <cmath>
#include <vector>

using namespace msm;

TEST_CASE("first AdamW step moves by about lr") {
  AdamWOptions opts;
  opts.weight_decay = 0.0;
  AdamW adam(opts);
  const std::vector<Tensor> params{Tensor::from_values({3}, {1.0, -2.0, 0.5})};
  const std::vector<Vector> grads{(Vector(3) << 0.3, -7.0, 1e-3).finished()};
  const auto next = adam.step(params, grads);
  const Vector delta = next[0].data() - params[0].data();
  CHECK(delta[0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(delta[1] == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(delta[2] == doctest::Approx(-1e-4 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-6));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("decoupled weight decay shrinks parameters without gradient") {
  AdamWOptions opts;
  opts.lr = 0.1;
  opts.weight_decay = 0.5;
  AdamW adam(opts);
  const std::vector<Tensor> params{Tensor::from_values({2}, {2.0, -4.0})};
  const std::vector<Vector> grads{Vector::Zero(2)};
  const auto next = adam.step(params, grads);
  CHECK(next[0].data()[0] == doctest::Approx(2.0 * (1 - 0.05)));
  CHECK(next[0].data()[1] == doctest::Approx(-4.0 * (1 - 0.05)));
}

TEST_CASE("warm-up scales the early steps") {
  AdamWOptions opts;
  opts.weight_decay = 0.0;
  opts.warmup_steps = 10;
  AdamW adam(opts);
  const std::vector<Tensor> params{Tensor::from_values({1}, {0.0})};
  const std::vector<Vector> grads{Vector::Ones(1)};
  const auto next = adam.step(params, grads);
  CHECK(next[0].data()[0] == doctest::Approx(-1e-5).epsilon(1e-6));
}

TEST_CASE("AdamW converges on a quadratic") {
  AdamWOptions opts;
  opts.lr = 0.05;
  opts.weight_decay = 0.0;
  AdamW adam(opts);
  const Vector target = (Vector(3) << 1.0, -2.0, 3.0).finished();
  std::vector<Tensor> params{Tensor::zeros({3})};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<Vector> grads{2.0 * (params[0].data() - target)};
    params = adam.step(params, grads);
  }
  CHECK((params[0].data() - target).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("argument checks") {
  AdamW adam;
  const std::vector<Tensor> params{Tensor::zeros({2})};
  const std::vector<Vector> wrong{Vector::Zero(3)};
  CHECK_THROWS(adam.step(params, wrong));
  const std::vector<Vector> none;
  CHECK_THROWS(adam.step(params, none));
}

TEST_CASE("restore continues from saved moments") {
  const std::vector<Tensor> params{Tensor::from_values({2}, {0.5, 0.25})};
  const std::vector<Vector> grads{(Vector(2) << 1.0, -0.5).finished()};
  AdamW a;
  const auto p1 = a.step(params, grads);
  AdamW b;
  b.restore(a.first_moments(), a.second_moments(), a.step_count());
  CHECK(a.step(p1, grads)[0].data() == b.step(p1, grads)[0].data());
}

TEST_CASE("clip_grad_norm") {
  std::vector<Vector> g{(Vector(2) << 3.0, 0.0).finished(), (Vector(1) << 4.0).finished()};
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));

  std::vector<Vector> small{(Vector(1) << 0.5).finished()};
  CHECK(clip_grad_norm(small, 1.0) == 0.5);
  CHECK(small[0][0] == 0.5);
}
