#ifndef RETRACK_GEOMETRY_HPP
#define RETRACK_GEOMETRY_HPP

#include "retrack/composer.hpp"

#include <string>

namespace retrack {

enum class SimilarityMode {
  kTokenMaxMean,  // mean over rows of x of the best-matching row of y
  kPooledCosine,  // cosine of the row means
};

std::string to_string(SimilarityMode mode);
SimilarityMode similarity_mode_from_string(const std::string& s);

struct SimilarityConfig {
  SimilarityMode mode = SimilarityMode::kTokenMaxMean;
  double eps = 1e-8;
};

/// Pairwise S between every sample of `x` and every sample of `y`.
/// Inputs are row-stacked (n*Q) x D and (m*Q) x D; the result is n x m.
Var similarity_matrix(Var x, Var y, Eigen::Index queries, const SimilarityConfig& cfg,
                      NormGuard guard = NormGuard::kReject);

/// S(x, y) for one Q x D pair.
double similarity(const Matrix& x, const Matrix& y, const SimilarityConfig& cfg);

/// Mean in-batch softmax cross-entropy of similarities / tau with diagonal targets.
Var contrastive_loss(Var similarities, double tau);

/// Distance-oriented alignment over a batch of composed and target features.
Var loss_dis(Var f_c, Var f_t, Eigen::Index queries, const SimilarityConfig& cfg, double tau);

struct GeometrySet {
  Var a_c;  // (A_r - F_c) + (A_m - F_c)
  Var a_t;  // F_t - F_c
};

/// Parallelogram composition of the anchor displacements. `use_ref` /
/// `use_mod` drop a displacement from the sum; at least one must be kept.
GeometrySet build_geometry(const AnchorSet& anchors, Var f_c, Var f_t, bool use_ref = true,
                           bool use_mod = true);

/// Direction-oriented calibration. Near-zero direction rows are normalized
/// with a clamped norm; their count is written to `degenerate_rows` if given.
Var loss_dir(Var a_c, Var a_t, Eigen::Index queries, const SimilarityConfig& cfg, double tau,
             int* degenerate_rows = nullptr);

/// Rows of `m` whose L2 norm is at or below eps.
int count_degenerate_rows(const Matrix& m, double eps);

}  // namespace retrack

#endif  // RETRACK_GEOMETRY_HPP
