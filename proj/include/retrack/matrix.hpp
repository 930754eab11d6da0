#ifndef RETRACK_MATRIX_HPP
#define RETRACK_MATRIX_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace retrack {

// Row-major dense storage; 64-bit everywhere except file boundaries.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using MatrixF = MatrixX<float>;

/// Thrown when operand shapes do not conform; the message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A row whose L2 norm is below the configured epsilon.
class DegenerateRowError : public std::domain_error {
 public:
  DegenerateRowError(Eigen::Index row, double norm);
  Eigen::Index row() const { return row_; }
  double norm() const { return norm_; }

 private:
  Eigen::Index row_;
  double norm_;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

[[noreturn]] void throw_shape_error(const char* op, Eigen::Index ar, Eigen::Index ac,
                                    Eigen::Index br, Eigen::Index bc);

template <typename A, typename B>
void require_same_shape(const char* op, const Eigen::MatrixBase<A>& a,
                        const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw_shape_error(op, a.rows(), a.cols(), b.rows(), b.cols());
  }
}

/// Checked matrix product.
template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b)
    -> MatrixX<typename A::Scalar> {
  if (a.cols() != b.rows()) {
    throw_shape_error("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  }
  return a * b;
}

/// Scales every row to unit L2 norm. Rows with norm <= eps are rejected.
template <typename Derived>
auto rowwise_l2_normalize(const Eigen::MatrixBase<Derived>& m, double eps = 1e-12)
    -> MatrixX<typename Derived::Scalar> {
  MatrixX<typename Derived::Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = static_cast<double>(m.row(r).norm());
    if (!(n > eps)) throw DegenerateRowError(r, n);
    out.row(r) = m.row(r) / static_cast<typename Derived::Scalar>(n);
  }
  return out;
}

/// -log softmax(logits)[target], evaluated with max subtraction.
double softmax_cross_entropy_row(const Eigen::Ref<const Vector>& logits, Eigen::Index target);

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace retrack

#endif  // RETRACK_MATRIX_HPP
