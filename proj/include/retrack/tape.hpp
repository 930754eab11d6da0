#ifndef RETRACK_TAPE_HPP
#define RETRACK_TAPE_HPP

#include "retrack/matrix.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace retrack {

class Tape;

/// Handle to a matrix recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 result.
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of matrix operations.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the
/// record visits every consumer before its producers. A Tape is owned by a
/// single evaluation and must not be shared between threads.
class Tape {
 public:
  /// Propagates the upstream gradient of a node into its inputs. `output` is
  /// the node's own forward value.
  using Backward =
      std::function<void(const Matrix& upstream, const Matrix& output, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input; never receives a gradient.
  Var constant(Matrix value);
  /// Tracked input (a parameter or a probed variable).
  Var leaf(Matrix value);

  /// Appends an operation result. `op` names the operation for diagnostics.
  Var record(const char* op, Matrix value, bool requires_grad, Backward backward);

  /// Seeds a 1x1 output with 1 and sweeps the record backwards.
  void backward(Var output);
  void backward(Var output, const Matrix& seed);

  /// Gradient accumulated at `v` by the last sweep (zeros if it got none).
  Matrix grad(Var v) const;

  /// Adds `g` into the gradient slot of `v`; for use inside Backward closures.
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate(Var v, const Eigen::MatrixBase<Expr>& g) {
    accumulate(v, Matrix(g));
  }

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  void check_owner(Var v) const;

  std::deque<Node> nodes_;
};

enum class NormGuard {
  kReject,  // near-zero rows throw DegenerateRowError
  kClamp,   // rows are divided by max(norm, eps)
};

// Elementwise and scalar arithmetic.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var hadamard(Var a, Var b);
Var add_scalar(Var a, double c);
Var exp(Var a);
Var logistic(Var a);
Var softplus(Var a);
Var relu(Var a);
Var square(Var a);
Var reciprocal(Var a);
/// Elementwise clamp to [lo, hi]; gradient passes only where the input is inside.
Var clamp(Var a, double lo, double hi);

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// a + row, with a 1 x cols `row` added to every row of `a`.
Var add_row(Var a, Var row);
/// a with every row multiplied elementwise by the 1 x cols `row`.
Var mul_row(Var a, Var row);
/// x * weight + bias.
Var affine(Var x, Var weight, Var bias);

// Row-wise normalizations.
Var l2_normalize_rows(Var a, double eps = 1e-12, NormGuard guard = NormGuard::kReject);
/// Zero-mean, unit-variance rows (no gain or offset).
Var layer_norm_rows(Var a, double eps = 1e-5);
Var softmax_rows(Var a);

// Reductions.
/// n x 1 column of row maxima; the gradient goes to the lowest-index maximum.
Var max_rows(Var a);
Var sum(Var a);
Var mean(Var a);
/// Sum of each group of `group` consecutive rows: (n*group) x c -> n x c.
Var segment_sum_rows(Var a, Eigen::Index group);
Var segment_mean_rows(Var a, Eigen::Index group);
/// n x 1 column holding the diagonal of a square matrix.
Var diagonal(Var a);

// Block-structured products over row-stacked samples.
/// Stacked (n*block) x d inputs; block i of the result is a_i * b_i^T ((n*block) x block).
Var block_matmul_nt(Var a, Var b, Eigen::Index block);
/// Stacked p ((n*block) x block) and v ((n*block) x d); block i is p_i * v_i.
Var block_matmul(Var p, Var v, Eigen::Index block);
/// For g of shape (n*block) x (m*block): entry (i, j) is the mean over the rows of
/// block (i, j) of the row maximum. The gradient follows the lowest-index maximum.
Var block_max_mean(Var g, Eigen::Index block);

// Slicing and concatenation.
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Mean over rows of the softmax cross-entropy of each row against targets[row].
Var cross_entropy_rows(Var logits, std::span<const Eigen::Index> targets);

/// Identity in value, blocks the gradient.
Var stop_gradient(Var a);

}  // namespace retrack

#endif  // RETRACK_TAPE_HPP
