#include "retrack/geometry.hpp"

#include <numeric>
#include <stdexcept>
#include <vector>

namespace retrack {

std::string to_string(SimilarityMode mode) {
  return mode == SimilarityMode::kTokenMaxMean ? "token-max-mean" : "pooled-cosine";
}

SimilarityMode similarity_mode_from_string(const std::string& s) {
  if (s == "token-max-mean") return SimilarityMode::kTokenMaxMean;
  if (s == "pooled-cosine") return SimilarityMode::kPooledCosine;
  throw std::invalid_argument("unknown similarity mode '" + s + "'");
}

Var similarity_matrix(Var x, Var y, Eigen::Index queries, const SimilarityConfig& cfg,
                      NormGuard guard) {
  if (x.cols() != y.cols()) throw_shape_error("similarity", x.rows(), x.cols(), y.rows(), y.cols());
  if (cfg.mode == SimilarityMode::kPooledCosine) {
    const Var px = l2_normalize_rows(segment_mean_rows(x, queries), cfg.eps, guard);
    const Var py = l2_normalize_rows(segment_mean_rows(y, queries), cfg.eps, guard);
    return matmul(px, transpose(py));
  }
  const Var nx = l2_normalize_rows(x, cfg.eps, guard);
  const Var ny = l2_normalize_rows(y, cfg.eps, guard);
  return block_max_mean(matmul(nx, transpose(ny)), queries);
}

double similarity(const Matrix& x, const Matrix& y, const SimilarityConfig& cfg) {
  require_same_shape("similarity", x, y);
  Tape tape;
  return similarity_matrix(tape.constant(x), tape.constant(y), x.rows(), cfg).scalar();
}

Var contrastive_loss(Var similarities, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (similarities.rows() != similarities.cols()) {
    throw ShapeError("contrastive_loss: similarity matrix is not square " +
                     shape_string(similarities.value()));
  }
  std::vector<Eigen::Index> targets(static_cast<std::size_t>(similarities.rows()));
  std::iota(targets.begin(), targets.end(), Eigen::Index{0});
  return cross_entropy_rows((1.0 / tau) * similarities, targets);
}

Var loss_dis(Var f_c, Var f_t, Eigen::Index queries, const SimilarityConfig& cfg, double tau) {
  return contrastive_loss(similarity_matrix(f_c, f_t, queries, cfg), tau);
}

GeometrySet build_geometry(const AnchorSet& anchors, Var f_c, Var f_t, bool use_ref,
                           bool use_mod) {
  if (!use_ref && !use_mod) {
    throw std::invalid_argument("build_geometry: both anchor displacements removed");
  }
  GeometrySet g;
  if (use_ref && use_mod) {
    g.a_c = (anchors.a_r - f_c) + (anchors.a_m - f_c);
  } else {
    g.a_c = use_ref ? anchors.a_r - f_c : anchors.a_m - f_c;
  }
  g.a_t = f_t - f_c;
  return g;
}

int count_degenerate_rows(const Matrix& m, double eps) {
  int n = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!(m.row(r).norm() > eps)) ++n;
  }
  return n;
}

Var loss_dir(Var a_c, Var a_t, Eigen::Index queries, const SimilarityConfig& cfg, double tau,
             int* degenerate_rows) {
  if (degenerate_rows != nullptr) {
    *degenerate_rows = count_degenerate_rows(a_c.value(), cfg.eps) +
                       count_degenerate_rows(a_t.value(), cfg.eps);
  }
  return contrastive_loss(similarity_matrix(a_c, a_t, queries, cfg, NormGuard::kClamp), tau);
}

}  // namespace retrack
