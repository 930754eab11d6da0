#include "retrack/composer.hpp"

#include "retrack/random.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace retrack {

void ModelShape::validate() const {
  if (queries < 1) throw std::invalid_argument("Q must be >= 1");
  if (dim < 2) throw std::invalid_argument("D must be >= 2");
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("D=" + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (ffn_mult < 1) throw std::invalid_argument("feed-forward multiplier must be >= 1");
}

namespace {

void add_linear(ParamSet& p, NormalSampler& rng, const std::string& name, Eigen::Index in,
                Eigen::Index out) {
  p[name + ".w"] = rng.matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)));
  p[name + ".b"] = Matrix::Zero(1, out);
}

void add_norm(ParamSet& p, const std::string& name, Eigen::Index dim) {
  p[name + ".gain"] = Matrix::Ones(1, dim);
  p[name + ".offset"] = Matrix::Zero(1, dim);
}

void add_attention(ParamSet& p, NormalSampler& rng, const std::string& name, Eigen::Index dim) {
  for (const char* proj : {"q", "k", "v", "o"}) add_linear(p, rng, name + "." + proj, dim, dim);
}

void add_ffn(ParamSet& p, NormalSampler& rng, const std::string& name, const ModelShape& s) {
  add_linear(p, rng, name + ".in", s.dim, s.ffn_width());
  add_linear(p, rng, name + ".out", s.ffn_width(), s.dim);
}

void add_point_mlp(ParamSet& p, NormalSampler& rng, const std::string& name, const ModelShape& s) {
  add_linear(p, rng, name + ".hidden", s.queries, s.point_hidden());
  p[name + ".gate.w"] = Matrix::Zero(s.point_hidden(), s.dim);
  p[name + ".gate.b"] = Matrix::Zero(1, s.dim);
}

Var linear(Var x, const ParamVars& p, const std::string& name) {
  return affine(x, param(p, name + ".w"), param(p, name + ".b"));
}

}  // namespace

ParamSet init_params(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  NormalSampler rng(derive_seed(seed, stream::kInit));
  ParamSet p;
  const std::string c = kComposePrefix;
  add_attention(p, rng, c + ".attn", shape.dim);
  add_norm(p, c + ".ln1", shape.dim);
  add_ffn(p, rng, c + ".ffn", shape);
  add_norm(p, c + ".ln2", shape.dim);

  const std::string d = kDecoderPrefix;
  add_norm(p, d + ".ln_q", shape.dim);
  add_norm(p, d + ".ln_kv", shape.dim);
  add_attention(p, rng, d + ".attn", shape.dim);
  add_norm(p, d + ".ln_ffn", shape.dim);
  add_ffn(p, rng, d + ".ffn", shape);
  add_norm(p, d + ".ln_out", shape.dim);

  add_point_mlp(p, rng, kPointRefPrefix, shape);
  add_point_mlp(p, rng, kPointModPrefix, shape);
  return p;
}

Var cross_attention(Var query_src, Var kv_src, const ParamVars& p, const std::string& prefix,
                    const ModelShape& shape) {
  const Var q = linear(query_src, p, prefix + ".q");
  const Var k = linear(kv_src, p, prefix + ".k");
  const Var v = linear(kv_src, p, prefix + ".v");
  const Eigen::Index dh = shape.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(shape.heads));
  for (Eigen::Index h = 0; h < shape.heads; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    const Var weights = softmax_rows(scale * block_matmul_nt(qh, kh, shape.queries));
    heads.push_back(block_matmul(weights, vh, shape.queries));
  }
  const Var merged = shape.heads == 1 ? heads.front() : concat_cols(heads);
  return linear(merged, p, prefix + ".o");
}

Var layer_norm(Var x, const ParamVars& p, const std::string& prefix) {
  return add_row(mul_row(layer_norm_rows(x), param(p, prefix + ".gain")),
                 param(p, prefix + ".offset"));
}

Var feed_forward(Var x, const ParamVars& p, const std::string& prefix) {
  return linear(softplus(linear(x, p, prefix + ".in")), p, prefix + ".out");
}

Var compose(Var f_r, Var f_m, const ParamVars& p, const ModelShape& shape) {
  const std::string c = kComposePrefix;
  const Var h = layer_norm(f_r + cross_attention(f_r, f_m, p, c + ".attn", shape), p, c + ".ln1");
  return layer_norm(h + feed_forward(h, p, c + ".ffn"), p, c + ".ln2");
}

Var disentangle(Var f_query, Var f_c, const ParamVars& p, const ModelShape& shape) {
  const std::string d = kDecoderPrefix;
  const Var memory = layer_norm(f_c, p, d + ".ln_kv");
  Var x = f_query + cross_attention(layer_norm(f_query, p, d + ".ln_q"), memory, p, d + ".attn",
                                    shape);
  x = x + feed_forward(layer_norm(x, p, d + ".ln_ffn"), p, d + ".ffn");
  return layer_norm(x, p, d + ".ln_out");
}

namespace {
constexpr double kGateLogitBound = 30.0;
}  // namespace

Var point_weights(Var f_c, Var f_branch, const ParamVars& p, const std::string& prefix,
                  const ModelShape& shape) {
  const Var affinity = block_matmul_nt(f_c, f_branch, shape.queries);
  const Var hidden = softplus(linear(affinity, p, prefix + ".hidden"));
  // Bounded logits keep every weight strictly inside (0, 1) in double precision.
  return logistic(clamp(linear(hidden, p, prefix + ".gate"), -kGateLogitBound, kGateLogitBound));
}

AnchorSet build_anchors(Var f_c, Var p_r, Var p_m, Var w_r, Var w_m) {
  AnchorSet a{.a_r = f_c, .a_m = f_c, .p_r = p_r, .p_m = p_m, .w_r = w_r, .w_m = w_m};
  if (p_r.valid()) a.a_r = f_c + hadamard(w_r, p_r);
  if (p_m.valid()) a.a_m = f_c + hadamard(w_m, p_m);
  return a;
}

Matrix compose(const Matrix& f_r, const Matrix& f_m, const ParamSet& params,
               const ModelShape& shape) {
  require_same_shape("compose", f_r, f_m);
  if (f_r.cols() != shape.dim || f_r.rows() % shape.queries != 0) {
    throw_shape_error("compose", f_r.rows(), f_r.cols(), shape.queries, shape.dim);
  }
  Tape tape;
  const ParamVars p = bind(tape, params, false);
  return compose(tape.constant(f_r), tape.constant(f_m), p, shape).value();
}

}  // namespace retrack
