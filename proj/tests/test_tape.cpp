#include "retrack/gradcheck.hpp"
#include "retrack/tape.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace retrack;
using retrack::testing::probe;
using retrack::testing::random_matrix;

namespace {

struct Case {
  const char* name;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  TapeProgram program;
  // Leaves that must stay positive (reciprocal) are shifted into [1, inf).
  bool positive = false;
};

std::vector<Case> primitive_cases() {
  const std::vector<Eigen::Index> targets = {2, 0, 1, 1};
  return {
      {"add", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return probe(v[0] + v[1], 1); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape&, std::span<const Var> v) { return probe(v[0] - v[1], 2); }},
      {"neg", {{3, 4}}, [](Tape&, std::span<const Var> v) { return probe(-v[0], 3); }},
      {"scale", {{3, 4}}, [](Tape&, std::span<const Var> v) { return probe(2.5 * v[0], 4); }},
      {"hadamard", {{3, 4}, {3, 4}},
       [](Tape&, std::span<const Var> v) { return probe(hadamard(v[0], v[1]), 5); }},
      {"add_scalar", {{2, 3}}, [](Tape&, std::span<const Var> v) { return probe(add_scalar(v[0], 0.7), 6); }},
      {"exp", {{3, 3}}, [](Tape&, std::span<const Var> v) { return probe(exp(0.5 * v[0]), 7); }},
      {"logistic", {{3, 3}}, [](Tape&, std::span<const Var> v) { return probe(logistic(v[0]), 8); }},
      {"softplus", {{3, 3}}, [](Tape&, std::span<const Var> v) { return probe(softplus(v[0]), 9); }},
      {"relu", {{3, 3}}, [](Tape&, std::span<const Var> v) { return probe(relu(v[0]), 10); }},
      {"square", {{3, 3}}, [](Tape&, std::span<const Var> v) { return probe(square(v[0]), 11); }},
      {"reciprocal", {{3, 3}},
       [](Tape&, std::span<const Var> v) { return probe(reciprocal(v[0]), 12); }, true},
      {"clamp", {{3, 4}},
       [](Tape&, std::span<const Var> v) { return probe(clamp(v[0], -0.8, 0.9), 33); }},
      {"matmul", {{3, 4}, {4, 2}},
       [](Tape&, std::span<const Var> v) { return probe(matmul(v[0], v[1]), 13); }},
      {"transpose", {{3, 4}}, [](Tape&, std::span<const Var> v) { return probe(transpose(v[0]), 14); }},
      {"add_row", {{3, 4}, {1, 4}},
       [](Tape&, std::span<const Var> v) { return probe(add_row(v[0], v[1]), 15); }},
      {"mul_row", {{3, 4}, {1, 4}},
       [](Tape&, std::span<const Var> v) { return probe(mul_row(v[0], v[1]), 16); }},
      {"affine", {{3, 4}, {4, 5}, {1, 5}},
       [](Tape&, std::span<const Var> v) { return probe(affine(v[0], v[1], v[2]), 17); }},
      {"l2_normalize_rows", {{4, 3}},
       [](Tape&, std::span<const Var> v) { return probe(l2_normalize_rows(v[0]), 18); }},
      {"l2_normalize_rows clamp", {{4, 3}},
       [](Tape&, std::span<const Var> v) {
         return probe(l2_normalize_rows(v[0], 1e-8, NormGuard::kClamp), 19);
       }},
      {"layer_norm_rows", {{4, 6}},
       [](Tape&, std::span<const Var> v) { return probe(layer_norm_rows(v[0]), 20); }},
      {"softmax_rows", {{3, 5}},
       [](Tape&, std::span<const Var> v) { return probe(softmax_rows(v[0]), 21); }},
      {"max_rows", {{4, 5}}, [](Tape&, std::span<const Var> v) { return probe(max_rows(v[0]), 22); }},
      {"sum", {{3, 4}}, [](Tape&, std::span<const Var> v) { return sum(square(v[0])); }},
      {"mean", {{3, 4}}, [](Tape&, std::span<const Var> v) { return mean(square(v[0])); }},
      {"segment_sum_rows", {{6, 3}},
       [](Tape&, std::span<const Var> v) { return probe(segment_sum_rows(v[0], 2), 23); }},
      {"segment_mean_rows", {{6, 3}},
       [](Tape&, std::span<const Var> v) { return probe(segment_mean_rows(v[0], 3), 24); }},
      {"diagonal", {{4, 4}}, [](Tape&, std::span<const Var> v) { return probe(diagonal(v[0]), 25); }},
      {"block_matmul_nt", {{6, 4}, {6, 4}},
       [](Tape&, std::span<const Var> v) { return probe(block_matmul_nt(v[0], v[1], 2), 26); }},
      {"block_matmul", {{6, 2}, {6, 4}},
       [](Tape&, std::span<const Var> v) { return probe(block_matmul(v[0], v[1], 2), 27); }},
      {"block_max_mean", {{6, 9}},
       [](Tape&, std::span<const Var> v) { return probe(block_max_mean(v[0], 3), 28); }},
      {"slice_cols", {{3, 6}},
       [](Tape&, std::span<const Var> v) { return probe(slice_cols(v[0], 2, 3), 29); }},
      {"slice_rows", {{5, 3}},
       [](Tape&, std::span<const Var> v) { return probe(slice_rows(v[0], 1, 3), 30); }},
      {"concat_cols", {{3, 2}, {3, 4}},
       [](Tape&, std::span<const Var> v) {
         const Var parts[] = {v[0], v[1], v[0]};
         return probe(concat_cols(parts), 31);
       }},
      {"concat_rows", {{2, 3}, {4, 3}},
       [](Tape&, std::span<const Var> v) {
         const Var parts[] = {v[1], v[0]};
         return probe(concat_rows(parts), 32);
       }},
      {"cross_entropy_rows", {{4, 3}},
       [targets](Tape&, std::span<const Var> v) { return cross_entropy_rows(v[0], targets); }},
  };
}

}  // namespace

TEST_CASE("every primitive passes gradcheck over 10 seeds") {
  for (const Case& c : primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<Matrix> params;
      for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        Matrix m = random_matrix(c.shapes[i].first, c.shapes[i].second, seed * 31 + i);
        if (c.positive) m = (m.array().abs() + 1.0).matrix();
        params.push_back(m);
      }
      const GradcheckResult r = gradcheck(c.program, params);
      INFO(c.name << " seed " << seed << " worst " << r.worst_analytic << " vs " << r.worst_numeric);
      CHECK(r.max_rel_error < 1e-6);
    }
  }
}

TEST_CASE("backward seeds gradients of the right shape once per input") {
  Tape t;
  const Var x = t.leaf(random_matrix(3, 4, 1));
  const Var y = t.leaf(random_matrix(4, 2, 2));
  // x is used twice; its gradient is the sum of both paths.
  const Var out = sum(matmul(x, y)) + sum(x);
  t.backward(out);
  const Matrix gx = t.grad(x);
  const Matrix gy = t.grad(y);
  CHECK(gx.rows() == 3);
  CHECK(gx.cols() == 4);
  const Matrix expect_x = Matrix::Ones(3, 2) * y.value().transpose() + Matrix::Ones(3, 4);
  CHECK((gx - expect_x).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix expect_y = x.value().transpose() * Matrix::Ones(3, 2);
  CHECK((gy - expect_y).cwiseAbs().maxCoeff() < 1e-12);

  // A second sweep does not accumulate on top of the first.
  t.backward(out);
  CHECK((t.grad(x) - expect_x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero upstream gives zero gradients") {
  Tape t;
  const Var x = t.leaf(random_matrix(3, 3, 4));
  const Var y = softmax_rows(exp(x));
  t.backward(y, Matrix::Zero(3, 3));
  CHECK(t.grad(x).isZero(0.0));
}

TEST_CASE("constants receive no gradient and stop_gradient blocks flow") {
  Tape t;
  const Var x = t.leaf(random_matrix(2, 2, 5));
  const Var c = t.constant(random_matrix(2, 2, 6));
  const Var out = sum(hadamard(stop_gradient(x), c)) + sum(c);
  CHECK_FALSE(out.requires_grad());
  const Var out2 = sum(hadamard(stop_gradient(x), x));
  t.backward(out2);
  CHECK((t.grad(x) - x.value()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(t.grad(c).isZero(0.0));
}

TEST_CASE("backward needs a scalar output") {
  Tape t;
  const Var x = t.leaf(random_matrix(2, 2, 7));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("non-finite values are rejected where they appear") {
  Tape t;
  const Var x = t.leaf(Matrix::Zero(1, 2));
  CHECK_THROWS_AS(reciprocal(x), NonFiniteError);
  const Var big = t.leaf(Matrix::Constant(1, 1, 1000.0));
  CHECK_THROWS_AS(exp(big), NonFiniteError);
}

TEST_CASE("normalization guards") {
  Tape t;
  Matrix m = random_matrix(3, 4, 8);
  m.row(1).setZero();
  const Var x = t.leaf(m);
  CHECK_THROWS_AS(l2_normalize_rows(x), DegenerateRowError);
  const Var y = l2_normalize_rows(x, 1e-8, NormGuard::kClamp);
  CHECK(y.value().row(1).isZero(0.0));
  CHECK(std::abs(y.value().row(0).norm() - 1.0) < 1e-14);
}

TEST_CASE("max subgradient goes to the lowest index on ties") {
  Tape t;
  Matrix m(1, 3);
  m << 2.0, 2.0, 1.0;
  const Var x = t.leaf(m);
  t.backward(sum(max_rows(x)));
  const Matrix g = t.grad(x);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(0, 2) == 0.0);
}

TEST_CASE("block products agree with per-block Eigen products") {
  Tape t;
  const Matrix a = random_matrix(6, 4, 9);
  const Matrix b = random_matrix(6, 4, 10);
  const Matrix g = block_matmul_nt(t.constant(a), t.constant(b), 3).value();
  REQUIRE(g.rows() == 6);
  REQUIRE(g.cols() == 3);
  for (int blk = 0; blk < 2; ++blk) {
    const Matrix expect = a.middleRows(blk * 3, 3) * b.middleRows(blk * 3, 3).transpose();
    CHECK((g.middleRows(blk * 3, 3) - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
  // Across all pairs: block_max_mean over x rows vs (B*Q) y rows.
  const Matrix x = random_matrix(4, 3, 11);  // 2 samples, Q=2
  const Matrix y = random_matrix(6, 3, 12);  // 3 samples, Q=2
  const Matrix mm = block_max_mean(t.constant(x * y.transpose()), 2).value();
  REQUIRE(mm.rows() == 2);
  REQUIRE(mm.cols() == 3);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Matrix block = x.middleRows(i * 2, 2) * y.middleRows(j * 2, 2).transpose();
      const double expect = 0.5 * (block.row(0).maxCoeff() + block.row(1).maxCoeff());
      CHECK(std::abs(mm(i, j) - expect) < 1e-14);
    }
  }
}

TEST_CASE("cross entropy rows matches a direct evaluation") {
  Tape t;
  const Matrix l = random_matrix(3, 4, 13);
  const std::vector<Eigen::Index> targets = {3, 0, 2};
  const double v = cross_entropy_rows(t.constant(l), targets).scalar();
  double direct = 0.0;
  for (int r = 0; r < 3; ++r) {
    double z = 0.0;
    for (int c = 0; c < 4; ++c) z += std::exp(l(r, c));
    direct += -std::log(std::exp(l(r, targets[r])) / z);
  }
  CHECK(std::abs(v - direct / 3.0) < 1e-12);
}

TEST_CASE("gradcheck flags a wrong gradient") {
  // A deliberately broken op: forward x^2, backward claims 3x.
  TapeProgram broken = [](Tape& tape, std::span<const Var> v) {
    const Var x = v[0];
    const Matrix value = x.value().cwiseProduct(x.value());
    const Var y = tape.record("broken", value, x.requires_grad(),
                              [x](const Matrix& up, const Matrix&, Tape& t) {
                                t.accumulate(x, up.cwiseProduct(3.0 * x.value()));
                              });
    return sum(y);
  };
  const Matrix p = random_matrix(2, 2, 14);
  CHECK(gradcheck(broken, std::vector<Matrix>{p}).max_rel_error > 0.1);
}
