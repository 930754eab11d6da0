#ifndef RETRACK_GRADCHECK_HPP
#define RETRACK_GRADCHECK_HPP

#include "retrack/tape.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace retrack {

/// A scalar-valued computation recorded on `tape` from the given parameters.
using TapeProgram = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradcheckResult {
  /// max over entries of |analytic - numeric| / max(1, |numeric|)
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries = 0;
  /// Analytic gradient per parameter, in input order.
  std::vector<Matrix> gradients;
};

/// Compares reverse-mode gradients of `f` against central differences with step `h`.
/// Throws NonFiniteError if `f` is not finite at some probe.
GradcheckResult gradcheck(const TapeProgram& f, std::span<const Matrix> params, double h = 1e-5);

/// Several scalar outputs sharing one forward pass; each probe evaluates all of them once.
using TapeMultiProgram = std::function<std::vector<Var>(Tape& tape, std::span<const Var> params)>;

/// One result per output of `f`, in output order.
std::vector<GradcheckResult> gradcheck_multi(const TapeMultiProgram& f,
                                             std::span<const Matrix> params, double h = 1e-5);

}  // namespace retrack

#endif  // RETRACK_GRADCHECK_HPP
