#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using Shape = std::vector<Index>;

/// Large finite negative used in place of -inf for additive attention masks.
inline constexpr double kMaskSentinel = 1e9;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string to_string(const Shape& shape);
Index shape_size(const Shape& shape);

class Tape;

/// Dense row-major array of doubles. Values are immutable once built and the
/// storage is shared, so copies are cheap. A tensor produced on a Tape carries
/// a handle to its node there.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vector data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_matrix(const Eigen::Ref<const Matrix>& m);
  static Tensor from_values(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  const Vector& data() const;
  double operator[](Index flat) const { return data()[flat]; }
  /// Rank-2 view: leading axis as rows, remaining axes flattened into columns.
  ConstMatrixMap matrix() const;
  /// Value of a single-element tensor.
  double item() const;

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }
  /// Copy of the value with no tape handle.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const Vector> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Reverse-mode record of executed operations. Nodes are appended in
/// execution order, which is a valid topological order, so backward() walks
/// them in reverse. Single-threaded; one tape per training step.
class Tape {
 public:
  /// Receives the upstream gradient of the node's output and pushes
  /// contributions into its parents via accumulate().
  using BackwardFn = std::function<void(const Vector& upstream, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf. The returned tensor shares storage with `value`.
  Tensor track(const Tensor& value);

  /// Records an op output. Inputs that are untracked are ignored by backward.
  Tensor record(Shape shape, Vector value, BackwardFn backward);

  void accumulate(const Tensor& target, const Vector& contribution);
  void accumulate(const Tensor& target, Vector&& contribution);

  void backward(const Tensor& loss);

  /// Gradient for a tracked tensor; zeros if nothing flowed into it.
  Vector grad(const Tensor& t) const;
  Tensor grad_tensor(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Index size = 0;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Vector> grads_;
};

/// Finds the tape shared by the tracked inputs (nullptr if none); throws on
/// inputs tracked on different tapes.
Tape* common_tape(std::initializer_list<const Tensor*> inputs);
Tape* common_tape(std::span<const Tensor> inputs);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[r×c] + bias broadcast over rows; bias has c elements.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError on non-positive entries.
Tensor log(const Tensor& a);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Per-row sums of the rank-2 view; shape [rows].
Tensor row_sums(const Tensor& a);

// ---- structure ------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// Rows [begin, end) along the leading axis.
Tensor slice(const Tensor& a, Index begin, Index end);
/// Concatenation along the leading axis.
Tensor concat(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);

// ---- row-wise normalizations ----------------------------------------------

/// Row softmax of x + additive_mask. A row where every mask entry is the
/// negative sentinel is computed without its mask. If `fully_masked` is
/// given it receives one flag per row.
Tensor softmax_rows(const Tensor& x, const Matrix* additive_mask = nullptr,
                    std::vector<bool>* fully_masked = nullptr);
Tensor log_softmax_rows(const Tensor& x);
/// g(x): each row divided by max(||row||, eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

}  // namespace msm
