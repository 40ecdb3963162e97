#include "msm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace msm {

namespace {

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

ConstMatrixMap as_matrix(const Vector& v, Index rows, Index cols) {
  return ConstMatrixMap(v.data(), rows, cols);
}

Index rows_of(const Shape& s) { return s.empty() ? 1 : s.front(); }
Index cols_of(const Shape& s) {
  Index rows = rows_of(s);
  return rows == 0 ? 0 : shape_size(s) / rows;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class Fn>
Tensor make(std::initializer_list<const Tensor*> inputs, Shape shape, Vector value, Fn&& backward) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Tensor(std::move(shape), std::move(value));
  return tape->record(std::move(shape), std::move(value), std::forward<Fn>(backward));
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, Vector data) : shape_(std::move(shape)) {
  for (Index d : shape_) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive: " + to_string(shape_));
  }
  if (shape_size(shape_) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape_));
  }
  data_ = std::make_shared<const Vector>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  Index n = shape_size(shape);
  return Tensor(std::move(shape), Vector::Constant(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, Vector::Constant(1, value)); }

Tensor Tensor::from_matrix(const Eigen::Ref<const Matrix>& m) {
  return Tensor({m.rows(), m.cols()}, flatten(m));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  std::copy(values.begin(), values.end(), v.data());
  return Tensor(std::move(shape), std::move(v));
}

Index Tensor::dim(Index axis) const {
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

const Vector& Tensor::data() const {
  static const Vector kEmpty;
  return data_ ? *data_ : kEmpty;
}

ConstMatrixMap Tensor::matrix() const {
  return as_matrix(data(), rows_of(shape_), cols_of(shape_));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data()[0];
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

// ---- Tape -----------------------------------------------------------------

Tensor Tape::track(const Tensor& value) {
  Tensor out = value.detach();
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back({value.size(), nullptr});
  return out;
}

Tensor Tape::record(Shape shape, Vector value, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value));
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back({out.size(), std::move(backward)});
  return out;
}

void Tape::accumulate(const Tensor& target, const Vector& contribution) {
  if (target.tape() != this) return;
  Vector& g = grads_[target.node()];
  if (g.size() == 0) {
    g = contribution;
  } else {
    g += contribution;
  }
}

void Tape::accumulate(const Tensor& target, Vector&& contribution) {
  if (target.tape() != this) return;
  Vector& g = grads_[target.node()];
  if (g.size() == 0) {
    g = std::move(contribution);
  } else {
    g += contribution;
  }
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw UsageError("backward() called on a tensor not recorded on this tape");
  if (loss.size() != 1) throw UsageError("backward() requires a scalar loss, got " + to_string(loss.shape()));
  grads_.assign(nodes_.size(), Vector());
  grads_[loss.node()] = Vector::Ones(1);
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    if (grads_[i].size() == 0 || !nodes_[i].backward) continue;
    nodes_[i].backward(grads_[i], *this);
  }
}

Vector Tape::grad(const Tensor& t) const {
  if (t.tape() != this) throw UsageError("grad() requested for a tensor not tracked on this tape");
  if (t.node() < grads_.size() && grads_[t.node()].size() != 0) return grads_[t.node()];
  return Vector::Zero(t.size());
}

Tensor Tape::grad_tensor(const Tensor& t) const { return Tensor(t.shape(), grad(t)); }

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) throw UsageError("inputs tracked on different tapes");
    tape = t->tape();
  }
  return tape;
}

Tape* common_tape(std::span<const Tensor> inputs) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (t.tape() == nullptr) continue;
    if (tape != nullptr && tape != t.tape()) throw UsageError("inputs tracked on different tapes");
    tape = t.tape();
  }
  return tape;
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Matrix out = a.matrix() * b.matrix();
  const Index m = a.dim(0), n = b.dim(1);
  return make({&a, &b}, {m, n}, flatten(out), [a, b, m, n](const Vector& g, Tape& tape) {
    ConstMatrixMap G = as_matrix(g, m, n);
    if (a.tracked()) tape.accumulate(a, flatten(G * b.matrix().transpose()));
    if (b.tracked()) tape.accumulate(b, flatten(a.matrix().transpose() * G));
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const Index r = a.dim(0), c = a.dim(1);
  Matrix out = a.matrix().transpose();
  return make({&a}, {c, r}, flatten(out), [a, r, c](const Vector& g, Tape& tape) {
    tape.accumulate(a, flatten(as_matrix(g, c, r).transpose()));
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make({&a, &b}, a.shape(), a.data() + b.data(), [a, b](const Vector& g, Tape& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make({&a, &b}, a.shape(), a.data() - b.data(), [a, b](const Vector& g, Tape& tape) {
    tape.accumulate(a, g);
    if (b.tracked()) tape.accumulate(b, Vector(-g));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Vector out = a.data().cwiseProduct(b.data());
  return make({&a, &b}, a.shape(), std::move(out), [a, b](const Vector& g, Tape& tape) {
    if (a.tracked()) tape.accumulate(a, Vector(g.cwiseProduct(b.data())));
    if (b.tracked()) tape.accumulate(b, Vector(g.cwiseProduct(a.data())));
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  const Index r = rows_of(a.shape()), c = cols_of(a.shape());
  if (bias.size() != c) {
    throw ShapeError("add_row_vector: bias " + to_string(bias.shape()) + " vs " + to_string(a.shape()));
  }
  Matrix out = a.matrix();
  out.rowwise() += bias.data().transpose();
  return make({&a, &bias}, a.shape(), flatten(out), [a, bias, r, c](const Vector& g, Tape& tape) {
    tape.accumulate(a, g);
    if (bias.tracked()) tape.accumulate(bias, Vector(as_matrix(g, r, c).colwise().sum().transpose()));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make({&a}, a.shape(), a.data() * factor,
              [a, factor](const Vector& g, Tape& tape) { tape.accumulate(a, Vector(g * factor)); });
}

Tensor add_scalar(const Tensor& a, double value) {
  return make({&a}, a.shape(), (a.data().array() + value).matrix(),
              [a](const Vector& g, Tape& tape) { tape.accumulate(a, g); });
}

Tensor relu(const Tensor& a) {
  Vector out = a.data().cwiseMax(0.0);
  return make({&a}, a.shape(), std::move(out), [a](const Vector& g, Tape& tape) {
    tape.accumulate(a, Vector((a.data().array() > 0.0).select(g, 0.0)));
  });
}

Tensor sigmoid(const Tensor& a) {
  Vector out = a.data().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Tensor result = make({&a}, a.shape(), out, [a, out](const Vector& g, Tape& tape) {
    tape.accumulate(a, Vector(g.array() * out.array() * (1.0 - out.array())));
  });
  return result;
}

Tensor exp(const Tensor& a) {
  Vector out = a.data().array().exp().matrix();
  return make({&a}, a.shape(), out, [a, out](const Vector& g, Tape& tape) {
    tape.accumulate(a, Vector(g.cwiseProduct(out)));
  });
}

Tensor log(const Tensor& a) {
  if ((a.data().array() <= 0.0).any()) throw DomainError("log of non-positive value");
  return make({&a}, a.shape(), a.data().array().log().matrix(), [a](const Vector& g, Tape& tape) {
    tape.accumulate(a, Vector(g.cwiseQuotient(a.data())));
  });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  const Index n = a.size();
  return make({&a}, Shape{}, Vector::Constant(1, a.data().sum()),
              [a, n](const Vector& g, Tape& tape) { tape.accumulate(a, Vector::Constant(n, g[0])); });
}

Tensor mean(const Tensor& a) {
  const Index n = a.size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return make({&a}, Shape{}, Vector::Constant(1, a.data().mean()), [a, n](const Vector& g, Tape& tape) {
    tape.accumulate(a, Vector::Constant(n, g[0] / static_cast<double>(n)));
  });
}

Tensor row_sums(const Tensor& a) {
  const Index r = rows_of(a.shape()), c = cols_of(a.shape());
  Vector out = a.matrix().rowwise().sum();
  return make({&a}, {r}, std::move(out), [a, r, c](const Vector& g, Tape& tape) {
    Matrix G = g.replicate(1, c);
    tape.accumulate(a, flatten(G));
  });
}

// ---- structure ------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make({&a}, std::move(shape), a.data(), [a](const Vector& g, Tape& tape) { tape.accumulate(a, g); });
}

Tensor slice(const Tensor& a, Index begin, Index end) {
  const Index rows = rows_of(a.shape()), cols = cols_of(a.shape());
  if (a.rank() == 0 || begin < 0 || end > rows || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     to_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[0] = end - begin;
  Vector out = a.data().segment(begin * cols, (end - begin) * cols);
  const Index total = a.size();
  return make({&a}, std::move(shape), std::move(out), [a, begin, cols, total](const Vector& g, Tape& tape) {
    Vector full = Vector::Zero(total);
    full.segment(begin * cols, g.size()) = g;
    tape.accumulate(a, std::move(full));
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape tail(parts[0].shape().begin() + (parts[0].rank() ? 1 : 0), parts[0].shape().end());
  Index rows = 0, total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat: incompatible part " + to_string(p.shape()));
    }
    rows += p.dim(0);
    total += p.size();
  }
  Vector out(total);
  Index offset = 0;
  for (const Tensor& p : parts) {
    out.segment(offset, p.size()) = p.data();
    offset += p.size();
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tape* tape = common_tape(parts);
  if (tape == nullptr) return Tensor(std::move(shape), std::move(out));
  std::vector<Tensor> saved(parts.begin(), parts.end());
  return tape->record(std::move(shape), std::move(out), [saved](const Vector& g, Tape& t) {
    Index off = 0;
    for (const Tensor& p : saved) {
      if (p.tracked()) t.accumulate(p, Vector(g.segment(off, p.size())));
      off += p.size();
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  const Index n = rows_of(a.shape()), cols = cols_of(a.shape());
  if (a.rank() == 0 || rows.empty()) throw ShapeError("gather_rows: empty selection or scalar input");
  std::vector<Index> idx(rows.begin(), rows.end());
  Vector out(static_cast<Index>(idx.size()) * cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw ShapeError("gather_rows: index out of range");
    out.segment(static_cast<Index>(i) * cols, cols) = a.data().segment(idx[i] * cols, cols);
  }
  Shape shape = a.shape();
  shape[0] = static_cast<Index>(idx.size());
  const Index total = a.size();
  return make({&a}, std::move(shape), std::move(out), [a, idx, cols, total](const Vector& g, Tape& tape) {
    Vector full = Vector::Zero(total);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      full.segment(idx[i] * cols, cols) += g.segment(static_cast<Index>(i) * cols, cols);
    }
    tape.accumulate(a, std::move(full));
  });
}

// ---- row-wise normalizations ----------------------------------------------

Tensor softmax_rows(const Tensor& x, const Matrix* additive_mask, std::vector<bool>* fully_masked) {
  require_rank2(x, "softmax_rows");
  const Index r = x.dim(0), c = x.dim(1);
  if (additive_mask != nullptr && (additive_mask->rows() != r || additive_mask->cols() != c)) {
    throw ShapeError("softmax_rows: mask shape does not match logits " + to_string(x.shape()));
  }
  if (fully_masked != nullptr) fully_masked->assign(static_cast<std::size_t>(r), false);
  Matrix out(r, c);
  ConstMatrixMap in = x.matrix();
  for (Index i = 0; i < r; ++i) {
    Eigen::RowVectorXd row = in.row(i);
    bool masked = false;
    if (additive_mask != nullptr) {
      const bool all_masked = (additive_mask->row(i).array() <= -kMaskSentinel).all();
      if (all_masked) {
        if (fully_masked != nullptr) (*fully_masked)[static_cast<std::size_t>(i)] = true;
      } else {
        row += additive_mask->row(i);
        masked = true;
      }
    }
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    // The vectorized exp can return denormals instead of 0 for blocked keys.
    if (masked) row = (additive_mask->row(i).array() <= -kMaskSentinel).select(0.0, row);
    out.row(i) = row / row.sum();
  }
  Vector y = flatten(out);
  return make({&x}, x.shape(), y, [x, y, r, c](const Vector& g, Tape& tape) {
    ConstMatrixMap Y = as_matrix(y, r, c);
    ConstMatrixMap G = as_matrix(g, r, c);
    Eigen::VectorXd dots = (G.array() * Y.array()).rowwise().sum();
    Matrix dx = Y.array() * (G.colwise() - dots).array();
    tape.accumulate(x, flatten(dx));
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank2(x, "log_softmax_rows");
  const Index r = x.dim(0), c = x.dim(1);
  Matrix out = x.matrix();
  for (Index i = 0; i < r; ++i) {
    const double m = out.row(i).maxCoeff();
    const double lse = m + std::log((out.row(i).array() - m).exp().sum());
    out.row(i).array() -= lse;
  }
  Vector y = flatten(out);
  return make({&x}, x.shape(), y, [x, y, r, c](const Vector& g, Tape& tape) {
    ConstMatrixMap Y = as_matrix(y, r, c);
    ConstMatrixMap G = as_matrix(g, r, c);
    Eigen::VectorXd gsum = G.rowwise().sum();
    Matrix dx = G - (Y.array().exp().colwise() * gsum.array()).matrix();
    tape.accumulate(x, flatten(dx));
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const Index r = rows_of(x.shape()), c = cols_of(x.shape());
  if (x.rank() == 0) throw ShapeError("l2_normalize_rows on a scalar");
  ConstMatrixMap in = x.matrix();
  Vector norms = in.rowwise().norm();
  Vector denom = norms.cwiseMax(eps);
  Matrix out = in.array().colwise() / denom.array();
  Vector y = flatten(out);
  return make({&x}, x.shape(), y, [x, y, norms, denom, eps, r, c](const Vector& g, Tape& tape) {
    ConstMatrixMap Y = as_matrix(y, r, c);
    ConstMatrixMap G = as_matrix(g, r, c);
    Matrix dx(r, c);
    for (Index i = 0; i < r; ++i) {
      if (norms[i] >= eps) {
        dx.row(i) = (G.row(i) - Y.row(i) * Y.row(i).dot(G.row(i))) / denom[i];
      } else {
        dx.row(i) = G.row(i) / eps;
      }
    }
    tape.accumulate(x, flatten(dx));
  });
}

}  // namespace msm
