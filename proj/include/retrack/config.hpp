#ifndef RETRACK_CONFIG_HPP
#define RETRACK_CONFIG_HPP

#include "retrack/composer.hpp"
#include "retrack/evidence.hpp"
#include "retrack/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace retrack {

/// Switches that remove one piece of the pipeline (ablation variants).
struct AblationFlags {
  bool wo_c_ref = false;    // no reference contribution
  bool wo_c_mod = false;    // no modification contribution
  bool wo_scd = false;      // raw features instead of disentangled contributions
  bool wo_ldis = false;     // drop the distance-oriented term
  bool wo_a_ref = false;    // drop the reference displacement from A_c
  bool wo_a_mod = false;    // drop the modification displacement from A_c
  bool wo_ldir = false;     // drop the direction-oriented term
  bool wo_evi_ref = false;  // drop the reference reliability term
  bool wo_evi_mod = false;  // drop the modification reliability term
  bool wo_levi = false;     // drop the evidence term

  bool operator==(const AblationFlags&) const = default;
};

struct RunConfig {
  double kappa = 0.5;
  double lambda = 1.0;
  double tau = 0.1;

  Eigen::Index queries = 8;
  Eigen::Index dim = 16;
  Eigen::Index frames = 4;  // N_f; only the paper-scale preset derives Q from it
  Eigen::Index heads = 4;
  std::size_t batch_size = 32;

  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  std::size_t steps = 2000;
  std::size_t validate_every = 200;

  std::uint64_t seed = 0;
  SimilarityMode similarity = SimilarityMode::kTokenMaxMean;
  EvidenceActivation activation = EvidenceActivation::kExp;
  EvidenceStopGradient evidence_stop = EvidenceStopGradient::kNone;
  AblationFlags ablation;

  std::string dataset;
  std::string output;

  ModelShape shape() const { return ModelShape{queries, dim, heads, 4}; }
  SimilarityConfig similarity_config() const { return SimilarityConfig{similarity, 1e-8}; }

  /// Checks ranges and flag combinations; wo_scd clears wo_c_ref / wo_c_mod.
  /// Throws std::invalid_argument.
  void validate();
};

nlohmann::json to_json(const RunConfig& cfg);
/// Reads flat keys; keys absent from `j` keep the values already in `cfg`.
void update_from_json(RunConfig& cfg, const nlohmann::json& j);

/// Named presets: "desk" (defaults) and "paper-scale".
RunConfig preset(const std::string& name);

/// Ablation variant names: full, wo_C_ref, wo_C_mod, wo_SCD, wo_Ldis, wo_A_ref,
/// wo_A_mod, wo_Ldir, wo_Evi_ref, wo_Evi_mod, wo_Levi, w_RELU, w_Softplus.
const std::vector<std::string>& variant_names();
RunConfig apply_variant(RunConfig base, const std::string& variant);

}  // namespace retrack

#endif  // RETRACK_CONFIG_HPP
