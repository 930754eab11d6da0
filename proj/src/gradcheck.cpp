#include "retrack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace retrack {

namespace {

std::vector<double> evaluate(const TapeMultiProgram& f, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.constant(p));
  std::vector<double> values;
  for (const Var& out : f(tape, vars)) {
    values.push_back(out.scalar());
    if (!std::isfinite(values.back())) {
      throw NonFiniteError("gradcheck: non-finite objective at a probe");
    }
  }
  return values;
}

}  // namespace

std::vector<GradcheckResult> gradcheck_multi(const TapeMultiProgram& f,
                                             std::span<const Matrix> params, double h) {
  std::vector<GradcheckResult> results;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(tape.leaf(p));
    const std::vector<Var> outs = f(tape, vars);
    for (const Var& out : outs) {
      if (!std::isfinite(out.scalar())) throw NonFiniteError("gradcheck: non-finite objective");
      GradcheckResult r;
      if (out.requires_grad()) tape.backward(out);
      for (const Var& v : vars) {
        r.gradients.push_back(out.requires_grad() ? tape.grad(v)
                                                  : Matrix::Zero(v.rows(), v.cols()));
      }
      results.push_back(std::move(r));
    }
  }

  std::vector<Matrix> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    Matrix& m = work[p];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + h;
        const std::vector<double> up = evaluate(f, work);
        m(r, c) = saved - h;
        const std::vector<double> down = evaluate(f, work);
        m(r, c) = saved;

        for (std::size_t o = 0; o < results.size(); ++o) {
          GradcheckResult& res = results[o];
          const double numeric = (up[o] - down[o]) / (2.0 * h);
          const double analytic = res.gradients[p](r, c);
          const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
          ++res.entries;
          if (rel > res.max_rel_error || res.entries == 1) {
            res.max_rel_error = rel;
            res.worst_param = p;
            res.worst_row = r;
            res.worst_col = c;
            res.worst_analytic = analytic;
            res.worst_numeric = numeric;
          }
        }
      }
    }
  }
  return results;
}

GradcheckResult gradcheck(const TapeProgram& f, std::span<const Matrix> params, double h) {
  auto multi = [&f](Tape& tape, std::span<const Var> vars) {
    return std::vector<Var>{f(tape, vars)};
  };
  return std::move(gradcheck_multi(multi, params, h).front());
}

}  // namespace retrack
