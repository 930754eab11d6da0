#include "retrack/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace retrack {

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar(): expected 1x1, got " + shape_string(v));
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Matrix value) { return record("constant", std::move(value), false, {}); }

Var Tape::leaf(Matrix value) { return record("leaf", std::move(value), true, {}); }

Var Tape::record(const char* op, Matrix value, bool requires_grad, Backward backward) {
  if (!value.allFinite()) {
    throw NonFiniteError(std::string(op) + ": produced a non-finite value");
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

void Tape::backward(Var output) {
  check_owner(output);
  if (output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("backward: expected a 1x1 output, got " + shape_string(output.value()));
  }
  backward(output, Matrix::Ones(1, 1));
}

void Tape::backward(Var output, const Matrix& seed) {
  check_owner(output);
  require_same_shape("backward", output.value(), seed);
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  Node& out = nodes_[output.id_];
  if (!out.requires_grad) return;
  out.grad = seed;
  out.has_grad = true;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(node.grad, node.value, *this);
  }
}

Matrix Tape::grad(Var v) const {
  check_owner(v);
  const Node& node = nodes_[v.id_];
  if (!node.has_grad) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return;
  if (node.has_grad) {
    node.grad += g;
  } else {
    node.grad = g;
    node.has_grad = true;
  }
}

namespace {

Tape& owner(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

Tape& owner(Var a, Var b) {
  Tape& t = owner(a);
  if (b.tape() != &t) throw std::invalid_argument("operands recorded on different tapes");
  return t;
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.requires_grad()) return true;
  }
  return false;
}

void require_block_rows(const char* op, const Matrix& m, Eigen::Index block) {
  if (block <= 0 || m.rows() % block != 0) {
    throw ShapeError(std::string(op) + ": " + shape_string(m) +
                     " rows are not a multiple of block " + std::to_string(block));
  }
}

}  // namespace

Var operator+(Var a, Var b) {
  Tape& t = owner(a, b);
  require_same_shape("add", a.value(), b.value());
  return t.record("add", a.value() + b.value(), any_grad({a, b}),
                  [a, b](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, g);
                    tp.accumulate(b, g);
                  });
}

Var operator-(Var a, Var b) {
  Tape& t = owner(a, b);
  require_same_shape("sub", a.value(), b.value());
  return t.record("sub", a.value() - b.value(), any_grad({a, b}),
                  [a, b](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, g);
                    tp.accumulate(b, -g);
                  });
}

Var operator-(Var a) { return -1.0 * a; }

Var operator*(double c, Var a) {
  Tape& t = owner(a);
  return t.record("scale", c * a.value(), a.requires_grad(),
                  [a, c](const Matrix& g, const Matrix&, Tape& tp) { tp.accumulate(a, c * g); });
}

Var hadamard(Var a, Var b) {
  Tape& t = owner(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  return t.record("hadamard", a.value().cwiseProduct(b.value()), any_grad({a, b}),
                  [a, b](const Matrix& g, const Matrix&, Tape& tp) {
                    if (a.requires_grad()) tp.accumulate(a, g.cwiseProduct(b.value()));
                    if (b.requires_grad()) tp.accumulate(b, g.cwiseProduct(a.value()));
                  });
}

Var add_scalar(Var a, double c) {
  Tape& t = owner(a);
  Matrix v = a.value().array() + c;
  return t.record("add_scalar", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) { tp.accumulate(a, g); });
}

Var exp(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().array().exp();
  return t.record("exp", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix& y, Tape& tp) {
                    tp.accumulate(a, g.cwiseProduct(y));
                  });
}

Var logistic(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.record("logistic", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix& y, Tape& tp) {
                    tp.accumulate(a, g.array() * y.array() * (1.0 - y.array()));
                  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = owner(a);
  Matrix v = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record("clamp", std::move(v), a.requires_grad(),
                  [a, lo, hi](const Matrix& g, const Matrix&, Tape& tp) {
                    const auto& x = a.value().array();
                    tp.accumulate(a, ((x >= lo) && (x <= hi)).select(g.array(), 0.0));
                  });
}

Var softplus(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().unaryExpr([](double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return t.record("softplus", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix d = a.value().unaryExpr([](double x) {
                      if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                      const double e = std::exp(x);
                      return e / (1.0 + e);
                    });
                    tp.accumulate(a, g.cwiseProduct(d));
                  });
}

Var relu(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().cwiseMax(0.0);
  return t.record("relu", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
                  });
}

Var square(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().array().square();
  return t.record("square", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
                  });
}

Var reciprocal(Var a) {
  Tape& t = owner(a);
  Matrix v = a.value().cwiseInverse();
  return t.record("reciprocal", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix& y, Tape& tp) {
                    tp.accumulate(a, -g.cwiseProduct(y.cwiseProduct(y)));
                  });
}

Var matmul(Var a, Var b) {
  Tape& t = owner(a, b);
  Matrix v = retrack::matmul(a.value(), b.value());
  return t.record("matmul", std::move(v), any_grad({a, b}),
                  [a, b](const Matrix& g, const Matrix&, Tape& tp) {
                    if (a.requires_grad()) tp.accumulate(a, g * b.value().transpose());
                    if (b.requires_grad()) tp.accumulate(b, a.value().transpose() * g);
                  });
}

Var transpose(Var a) {
  Tape& t = owner(a);
  return t.record("transpose", a.value().transpose(), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, g.transpose());
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = owner(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw_shape_error("add_row", a.rows(), a.cols(), row.rows(), row.cols());
  }
  Matrix v = a.value().rowwise() + row.value().row(0);
  return t.record("add_row", std::move(v), any_grad({a, row}),
                  [a, row](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, g);
                    if (row.requires_grad()) tp.accumulate(row, g.colwise().sum());
                  });
}

Var mul_row(Var a, Var row) {
  Tape& t = owner(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw_shape_error("mul_row", a.rows(), a.cols(), row.rows(), row.cols());
  }
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return t.record("mul_row", std::move(v), any_grad({a, row}),
                  [a, row](const Matrix& g, const Matrix&, Tape& tp) {
                    if (a.requires_grad()) {
                      tp.accumulate(a, Matrix(g.array().rowwise() * row.value().row(0).array()));
                    }
                    if (row.requires_grad()) {
                      tp.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
                    }
                  });
}

Var affine(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var l2_normalize_rows(Var a, double eps, NormGuard guard) {
  Tape& t = owner(a);
  const Matrix& x = a.value();
  Vector scale(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (n > eps) {
      scale(r) = n;
    } else if (guard == NormGuard::kReject) {
      throw DegenerateRowError(r, n);
    } else {
      scale(r) = eps;
    }
  }
  Matrix v = x.array().colwise() / scale.array();
  return t.record("l2_normalize_rows", std::move(v), a.requires_grad(),
                  [a, scale, eps](const Matrix& g, const Matrix& y, Tape& tp) {
                    Matrix gx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      if (scale(r) > eps) {
                        const double proj = y.row(r).dot(g.row(r));
                        gx.row(r) = (g.row(r) - proj * y.row(r)) / scale(r);
                      } else {
                        gx.row(r) = g.row(r) / scale(r);
                      }
                    }
                    tp.accumulate(a, gx);
                  });
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = owner(a);
  const Matrix& x = a.value();
  const auto n = static_cast<double>(x.cols());
  Vector inv_std(x.rows());
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const auto centered = (x.row(r).array() - mu).matrix();
    const double var = centered.squaredNorm() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    v.row(r) = centered * inv_std(r);
  }
  return t.record("layer_norm_rows", std::move(v), a.requires_grad(),
                  [a, inv_std](const Matrix& g, const Matrix& y, Tape& tp) {
                    Matrix gx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double g_mean = g.row(r).mean();
                      const double gy_mean = g.row(r).dot(y.row(r)) / static_cast<double>(g.cols());
                      gx.row(r) = inv_std(r) *
                                  (g.row(r).array() - g_mean - y.row(r).array() * gy_mean).matrix();
                    }
                    tp.accumulate(a, gx);
                  });
}

Var softmax_rows(Var a) {
  Tape& t = owner(a);
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double top = x.row(r).maxCoeff();
    v.row(r) = (x.row(r).array() - top).exp().matrix();
    v.row(r) /= v.row(r).sum();
  }
  return t.record("softmax_rows", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix& y, Tape& tp) {
                    Matrix gx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double dot = g.row(r).dot(y.row(r));
                      gx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
                    }
                    tp.accumulate(a, gx);
                  });
}

Var max_rows(Var a) {
  Tape& t = owner(a);
  const Matrix& x = a.value();
  std::vector<Eigen::Index> where(static_cast<std::size_t>(x.rows()));
  Matrix v(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    where[static_cast<std::size_t>(r)] = argmax(x.row(r));
    v(r, 0) = x(r, where[static_cast<std::size_t>(r)]);
  }
  return t.record("max_rows", std::move(v), a.requires_grad(),
                  [a, where = std::move(where)](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx = Matrix::Zero(a.rows(), a.cols());
                    for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                      gx(r, where[static_cast<std::size_t>(r)]) = g(r, 0);
                    }
                    tp.accumulate(a, gx);
                  });
}

Var sum(Var a) {
  Tape& t = owner(a);
  return t.record("sum", Matrix::Constant(1, 1, a.value().sum()), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return (1.0 / n) * sum(a);
}

Var segment_sum_rows(Var a, Eigen::Index group) {
  Tape& t = owner(a);
  require_block_rows("segment_sum_rows", a.value(), group);
  const Eigen::Index n = a.rows() / group;
  Matrix v(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    v.row(i) = a.value().middleRows(i * group, group).colwise().sum();
  }
  return t.record("segment_sum_rows", std::move(v), a.requires_grad(),
                  [a, group](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx(a.rows(), a.cols());
                    for (Eigen::Index r = 0; r < gx.rows(); ++r) gx.row(r) = g.row(r / group);
                    tp.accumulate(a, gx);
                  });
}

Var segment_mean_rows(Var a, Eigen::Index group) {
  return (1.0 / static_cast<double>(group)) * segment_sum_rows(a, group);
}

Var diagonal(Var a) {
  Tape& t = owner(a);
  if (a.rows() != a.cols()) throw ShapeError("diagonal: not square " + shape_string(a.value()));
  Matrix v = a.value().diagonal();
  return t.record("diagonal", std::move(v), a.requires_grad(),
                  [a](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx = Matrix::Zero(a.rows(), a.cols());
                    gx.diagonal() = g.col(0);
                    tp.accumulate(a, gx);
                  });
}

Var block_matmul_nt(Var a, Var b, Eigen::Index block) {
  Tape& t = owner(a, b);
  require_same_shape("block_matmul_nt", a.value(), b.value());
  require_block_rows("block_matmul_nt", a.value(), block);
  const Eigen::Index n = a.rows() / block;
  Matrix v(a.rows(), block);
  for (Eigen::Index i = 0; i < n; ++i) {
    v.middleRows(i * block, block).noalias() =
        a.value().middleRows(i * block, block) * b.value().middleRows(i * block, block).transpose();
  }
  return t.record("block_matmul_nt", std::move(v), any_grad({a, b}),
                  [a, b, block, n](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix ga(a.rows(), a.cols());
                    Matrix gb(b.rows(), b.cols());
                    for (Eigen::Index i = 0; i < n; ++i) {
                      const auto gi = g.middleRows(i * block, block);
                      ga.middleRows(i * block, block).noalias() =
                          gi * b.value().middleRows(i * block, block);
                      gb.middleRows(i * block, block).noalias() =
                          gi.transpose() * a.value().middleRows(i * block, block);
                    }
                    if (a.requires_grad()) tp.accumulate(a, ga);
                    if (b.requires_grad()) tp.accumulate(b, gb);
                  });
}

Var block_matmul(Var p, Var v, Eigen::Index block) {
  Tape& t = owner(p, v);
  require_block_rows("block_matmul", p.value(), block);
  if (p.cols() != block || v.rows() != p.rows()) {
    throw_shape_error("block_matmul", p.rows(), p.cols(), v.rows(), v.cols());
  }
  const Eigen::Index n = p.rows() / block;
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleRows(i * block, block).noalias() =
        p.value().middleRows(i * block, block) * v.value().middleRows(i * block, block);
  }
  return t.record("block_matmul", std::move(out), any_grad({p, v}),
                  [p, v, block, n](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gp(p.rows(), p.cols());
                    Matrix gv(v.rows(), v.cols());
                    for (Eigen::Index i = 0; i < n; ++i) {
                      const auto gi = g.middleRows(i * block, block);
                      gp.middleRows(i * block, block).noalias() =
                          gi * v.value().middleRows(i * block, block).transpose();
                      gv.middleRows(i * block, block).noalias() =
                          p.value().middleRows(i * block, block).transpose() * gi;
                    }
                    if (p.requires_grad()) tp.accumulate(p, gp);
                    if (v.requires_grad()) tp.accumulate(v, gv);
                  });
}

Var block_max_mean(Var g_in, Eigen::Index block) {
  Tape& t = owner(g_in);
  const Matrix& x = g_in.value();
  require_block_rows("block_max_mean", x, block);
  if (x.cols() % block != 0) {
    throw ShapeError("block_max_mean: " + shape_string(x) + " cols are not a multiple of block " +
                     std::to_string(block));
  }
  const Eigen::Index n = x.rows() / block;
  const Eigen::Index m = x.cols() / block;
  // Column (within its block) of each row maximum, per (row, column-block).
  std::vector<Eigen::Index> where(static_cast<std::size_t>(x.rows() * m));
  Matrix v = Matrix::Zero(n, m);
  const double inv = 1.0 / static_cast<double>(block);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto seg = x.row(r).segment(j * block, block);
      const Eigen::Index k = argmax(seg);
      where[static_cast<std::size_t>(r * m + j)] = k;
      v(r / block, j) += inv * seg(k);
    }
  }
  return t.record("block_max_mean", std::move(v), g_in.requires_grad(),
                  [g_in, block, m, inv, where = std::move(where)](const Matrix& g, const Matrix&,
                                                                  Tape& tp) {
                    Matrix gx = Matrix::Zero(g_in.rows(), g_in.cols());
                    for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                      for (Eigen::Index j = 0; j < m; ++j) {
                        gx(r, j * block + where[static_cast<std::size_t>(r * m + j)]) =
                            inv * g(r / block, j);
                      }
                    }
                    tp.accumulate(g_in, gx);
                  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = owner(a);
  if (start < 0 || count <= 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") outside " + shape_string(a.value()));
  }
  Matrix v = a.value().middleCols(start, count);
  return t.record("slice_cols", std::move(v), a.requires_grad(),
                  [a, start, count](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx = Matrix::Zero(a.rows(), a.cols());
                    gx.middleCols(start, count) = g;
                    tp.accumulate(a, gx);
                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = owner(a);
  if (start < 0 || count <= 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") outside " + shape_string(a.value()));
  }
  Matrix v = a.value().middleRows(start, count);
  return t.record("slice_rows", std::move(v), a.requires_grad(),
                  [a, start, count](const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx = Matrix::Zero(a.rows(), a.cols());
                    gx.middleRows(start, count) = g;
                    tp.accumulate(a, gx);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = owner(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    owner(parts.front(), p);
    if (p.rows() != rows) throw_shape_error("concat_cols", rows, cols, p.rows(), p.cols());
    cols += p.cols();
    grad = grad || p.requires_grad();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record("concat_cols", std::move(v), grad,
                  [pv = std::vector<Var>(parts.begin(), parts.end())](
                      const Matrix& g, const Matrix&, Tape& tp) {
                    Eigen::Index off = 0;
                    for (const Var& p : pv) {
                      if (p.requires_grad()) tp.accumulate(p, g.middleCols(off, p.cols()));
                      off += p.cols();
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = owner(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    owner(parts.front(), p);
    if (p.cols() != cols) throw_shape_error("concat_rows", rows, cols, p.rows(), p.cols());
    rows += p.rows();
    grad = grad || p.requires_grad();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t.record("concat_rows", std::move(v), grad,
                  [pv = std::vector<Var>(parts.begin(), parts.end())](
                      const Matrix& g, const Matrix&, Tape& tp) {
                    Eigen::Index off = 0;
                    for (const Var& p : pv) {
                      if (p.requires_grad()) tp.accumulate(p, g.middleRows(off, p.rows()));
                      off += p.rows();
                    }
                  });
}

Var cross_entropy_rows(Var logits, std::span<const Eigen::Index> targets) {
  Tape& t = owner(logits);
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                     shape_string(x));
  }
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::Index target = targets[static_cast<std::size_t>(r)];
    const Vector row = x.row(r).transpose();
    total += softmax_cross_entropy_row(row, target);
    const double top = row.maxCoeff();
    probs.row(r) = (row.array() - top).exp().matrix().transpose();
    probs.row(r) /= probs.row(r).sum();
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  return t.record("cross_entropy_rows", Matrix::Constant(1, 1, total * inv),
                  logits.requires_grad(),
                  [logits, probs, inv, tg = std::vector<Eigen::Index>(targets.begin(), targets.end())](
                      const Matrix& g, const Matrix&, Tape& tp) {
                    Matrix gx = probs;
                    for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                      gx(r, tg[static_cast<std::size_t>(r)]) -= 1.0;
                    }
                    tp.accumulate(logits, (g(0, 0) * inv) * gx);
                  });
}

Var stop_gradient(Var a) { return owner(a).constant(a.value()); }

}  // namespace retrack
