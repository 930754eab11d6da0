#ifndef RETRACK_COMPOSER_HPP
#define RETRACK_COMPOSER_HPP

#include "retrack/params.hpp"

#include <cstdint>

namespace retrack {

/// Sizes of the learnable networks. Features are Q x D per sample.
struct ModelShape {
  Eigen::Index queries = 8;
  Eigen::Index dim = 16;
  Eigen::Index heads = 4;
  Eigen::Index ffn_mult = 4;

  Eigen::Index head_dim() const { return dim / heads; }
  Eigen::Index ffn_width() const { return ffn_mult * dim; }
  Eigen::Index point_hidden() const { return 2 * queries; }
  void validate() const;
};

/// Draws every composer, decoder, and point-weight parameter.
///
/// Weight matrices are N(0, 1/fan_in); biases and layer-norm offsets are 0,
/// layer-norm gains 1. The final point-weight layer starts at zero, so every
/// point weight is 0.5 before the first update.
ParamSet init_params(const ModelShape& shape, std::uint64_t seed);

/// Multi-head cross-attention, per sample: queries from `query_src`,
/// keys and values from `kv_src`; both stacked (n*Q) x D.
Var cross_attention(Var query_src, Var kv_src, const ParamVars& p, const std::string& prefix,
                    const ModelShape& shape);

/// gain * layer_norm(x) + offset.
Var layer_norm(Var x, const ParamVars& p, const std::string& prefix);

/// Two affine layers with a softplus between them.
Var feed_forward(Var x, const ParamVars& p, const std::string& prefix);

/// Toy composer: one post-norm cross-attention block with reference queries
/// and modification keys/values, followed by a post-norm feed-forward block.
Var compose(Var f_r, Var f_m, const ParamVars& p, const ModelShape& shape);

/// Pre-norm single-layer cross-attention decoder: the branch feature queries
/// the composed feature. Shared between the reference and modification branches.
Var disentangle(Var f_query, Var f_c, const ParamVars& p, const ModelShape& shape);

/// logistic(MLP(F_c * F_branch^T)) per sample; `prefix` selects the branch MLP.
Var point_weights(Var f_c, Var f_branch, const ParamVars& p, const std::string& prefix,
                  const ModelShape& shape);

/// Anchors and the quantities they are built from. Members of a skipped
/// branch are left empty.
struct AnchorSet {
  Var a_r;
  Var a_m;
  Var p_r;
  Var p_m;
  Var w_r;
  Var w_m;
};

/// A_r = F_c + W_r (.) P_r and A_m = F_c + W_m (.) P_m. An empty contribution
/// leaves that anchor at F_c.
AnchorSet build_anchors(Var f_c, Var p_r, Var p_m, Var w_r, Var w_m);

/// Names of the parameter groups, for bookkeeping.
inline const char* const kComposePrefix = "compose";
inline const char* const kDecoderPrefix = "decoder";
inline const char* const kPointRefPrefix = "pw_ref";
inline const char* const kPointModPrefix = "pw_mod";

/// Single-sample forward on a throwaway tape.
Matrix compose(const Matrix& f_r, const Matrix& f_m, const ParamSet& params,
               const ModelShape& shape);

}  // namespace retrack

#endif  // RETRACK_COMPOSER_HPP
