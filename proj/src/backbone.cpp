#include "msm/backbone.hpp"

#include <cmath>

namespace msm {

namespace {

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Tensor he_normal(Shape shape, Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Vector v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Patch matrix [H*W x kh*kw*C], column order (dy, dx, c), zeros outside.
Matrix im2col(const Vector& x, Index h, Index w, Index c, Index kh, Index kw) {
  Matrix patches = Matrix::Zero(h * w, kh * kw * c);
  const Index ry = kh / 2, rx = kw / 2;
  for (Index y = 0; y < h; ++y) {
    for (Index xx = 0; xx < w; ++xx) {
      auto row = patches.row(y * w + xx);
      for (Index dy = 0; dy < kh; ++dy) {
        const Index sy = y + dy - ry;
        if (sy < 0 || sy >= h) continue;
        for (Index dx = 0; dx < kw; ++dx) {
          const Index sx = xx + dx - rx;
          if (sx < 0 || sx >= w) continue;
          row.segment((dy * kw + dx) * c, c) = x.segment((sy * w + sx) * c, c).transpose();
        }
      }
    }
  }
  return patches;
}

Vector col2im(const Matrix& patches, Index h, Index w, Index c, Index kh, Index kw) {
  Vector x = Vector::Zero(h * w * c);
  const Index ry = kh / 2, rx = kw / 2;
  for (Index y = 0; y < h; ++y) {
    for (Index xx = 0; xx < w; ++xx) {
      const auto row = patches.row(y * w + xx);
      for (Index dy = 0; dy < kh; ++dy) {
        const Index sy = y + dy - ry;
        if (sy < 0 || sy >= h) continue;
        for (Index dx = 0; dx < kw; ++dx) {
          const Index sx = xx + dx - rx;
          if (sx < 0 || sx >= w) continue;
          x.segment((sy * w + sx) * c, c) += row.segment((dy * kw + dx) * c, c).transpose();
        }
      }
    }
  }
  return x;
}

}  // namespace

BackboneParams BackboneParams::init(Index input_channels, Index hidden, Index dim, std::mt19937_64& rng) {
  BackboneParams p;
  p.conv1_w = he_normal({3, 3, input_channels, hidden}, 9 * input_channels, rng);
  p.conv1_b = Tensor::zeros({hidden});
  p.conv2_w = he_normal({3, 3, hidden, hidden}, 9 * hidden, rng);
  p.conv2_b = Tensor::zeros({hidden});
  p.proj_w = he_normal({1, 1, hidden, dim}, hidden, rng);
  p.proj_b = Tensor::zeros({dim});
  return p;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 3 || kernel.rank() != 4) throw ShapeError("conv2d: expects [H,W,C] input and [kh,kw,Cin,Cout] kernel");
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Index kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != c) throw ShapeError("conv2d: kernel input channels " + to_string(kernel.shape()) +
                                           " vs input " + to_string(x.shape()));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel sizes must be odd");
  if (bias.size() != cout) throw ShapeError("conv2d: bias length must equal output channels");

  Matrix patches = im2col(x.data(), h, w, c, kh, kw);
  ConstMatrixMap k(kernel.data().data(), kh * kw * c, cout);
  Matrix out = patches * k;
  out.rowwise() += bias.data().transpose();

  Tape* tape = common_tape({&x, &kernel, &bias});
  if (tape == nullptr) return Tensor({h, w, cout}, flatten(out));
  return tape->record({h, w, cout}, flatten(out),
                      [x, kernel, bias, patches = std::move(patches), h, w, c, kh, kw, cout](const Vector& g,
                                                                                              Tape& t) {
                        ConstMatrixMap G(g.data(), h * w, cout);
                        ConstMatrixMap k(kernel.data().data(), kh * kw * c, cout);
                        if (kernel.tracked()) t.accumulate(kernel, flatten(patches.transpose() * G));
                        if (bias.tracked()) t.accumulate(bias, Vector(G.colwise().sum().transpose()));
                        if (x.tracked()) t.accumulate(x, col2im(G * k.transpose(), h, w, c, kh, kw));
                      });
}

Tensor append_coordinate_channels(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("append_coordinate_channels: expects [H,W,C]");
  const Index h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Vector out(h * w * (c + 2));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index p = y * w + x;
      out.segment(p * (c + 2), c) = image.data().segment(p * c, c);
      out[p * (c + 2) + c] = static_cast<double>(x) / static_cast<double>(w);
      out[p * (c + 2) + c + 1] = static_cast<double>(y) / static_cast<double>(h);
    }
  }
  if (!image.tracked()) return Tensor({h, w, c + 2}, std::move(out));
  return image.tape()->record({h, w, c + 2}, std::move(out), [image, c](const Vector& g, Tape& t) {
    const Index pixels = g.size() / (c + 2);
    Vector gi(pixels * c);
    for (Index p = 0; p < pixels; ++p) gi.segment(p * c, c) = g.segment(p * (c + 2), c);
    t.accumulate(image, std::move(gi));
  });
}

FeatureMap embed(const Tensor& image, const BackboneParams& params) {
  if (image.rank() != 3 || image.dim(2) != params.input_channels()) {
    throw ShapeError("embed: image " + to_string(image.shape()) + " does not match backbone input channels");
  }
  const Index h = image.dim(0), w = image.dim(1);
  Tensor x = relu(conv2d(image, params.conv1_w, params.conv1_b));
  x = relu(conv2d(x, params.conv2_w, params.conv2_b));
  x = conv2d(x, params.proj_w, params.proj_b);
  const Index d = x.dim(2);
  return FeatureMap{l2_normalize_rows(reshape(x, {h * w, d})), h, w};
}

}  // namespace msm
