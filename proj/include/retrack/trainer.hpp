#ifndef RETRACK_TRAINER_HPP
#define RETRACK_TRAINER_HPP

#include "retrack/config.hpp"
#include "retrack/retrieval.hpp"
#include "retrack/synth_data.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace retrack {

/// A loss term became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string term, const std::string& what);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Every intermediate of one forward pass. Terms removed by the
/// configuration hold a constant 0 and their sub-networks are never built.
struct LossTerms {
  Var total;
  Var dis;
  Var dir;
  Var evi;
  Var f_c;
  AnchorSet anchors;
  GeometrySet geometry;
  Var reliability_ref;
  Var reliability_mod;
  Var similarity;  // B x B, S(F_ci, F_tj)
  int degenerate_directions = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double dis = 0.0;
  double dir = 0.0;
  double evi = 0.0;
};

/// L = L_dis + kappa * L_dir + lambda * L_evi on one batch.
LossTerms total_loss(Tape& tape, const TripletBatch& batch, const ParamVars& params,
                     const RunConfig& cfg);
LossBreakdown breakdown(const LossTerms& terms);

/// Decoupled-weight-decay Adam moments.
struct AdamState {
  ParamSet first;
  ParamSet second;
  std::size_t step = 0;
};

AdamState init_adam(const ParamSet& params);
void adamw_step(ParamSet& params, const ParamSet& grads, AdamState& state, const RunConfig& cfg);
/// Scales `grads` in place so their global L2 norm is at most max_norm; returns the norm before.
double clip_global_norm(ParamSet& grads, double max_norm);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  ParamSet params;
  AdamState optimizer;
  std::size_t step = 0;
  RunConfig config;
  /// CRC32 of the metrics CSV text written up to `step`.
  std::uint32_t history_digest = 0;
};

/// Writes ckpt.json and params.bin into `dir`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct MetricsRow {
  std::size_t step = 0;
  std::optional<LossBreakdown> loss;
  std::optional<RecallReport> validation;
};

inline constexpr const char* kMetricsHeader = "step,L_total,L_dis,L_dir,L_evi,val_R1,val_R5,val_R10";
std::string metrics_csv_line(const MetricsRow& row);

struct TrainOptions {
  /// Continue from this state instead of a fresh initialization.
  const Checkpoint* resume = nullptr;
  /// Stop once this many updates have been applied (0: run cfg.steps).
  std::size_t stop_at = 0;
  /// Progress lines; null for silence.
  std::ostream* log = nullptr;
  /// Write metrics.csv and final/ + best/ checkpoints under cfg.output.
  bool write_outputs = false;
  /// Called after each forward pass, before the update.
  std::function<void(std::size_t step, const TripletBatch&, const LossTerms&)> on_step;
};

struct TrainResult {
  Checkpoint final_state;
  ParamSet best_params;
  double best_val_r1 = -1.0;
  std::vector<MetricsRow> metrics;
  std::string metrics_csv;
  /// Parameters whose gradient was identically zero on every step.
  std::vector<std::string> gradient_free;
  int degenerate_directions = 0;
};

/// Runs the training loop on an in-memory dataset.
TrainResult train(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

/// One variant trained on one seed.
struct VariantRun {
  std::string variant;
  std::uint64_t seed = 0;
  RecallReport test;
};

struct AblationReport {
  std::uint32_t dataset_crc32 = 0;
  std::vector<std::string> variants;  // "full" first
  std::vector<VariantRun> runs;

  /// Mean of recall@k over the seeds of a variant.
  double mean_recall(const std::string& variant, std::size_t k) const;
  nlohmann::json to_json() const;
};

inline const std::vector<std::size_t> kReportKs = {1, 5, 10};

/// Trains the full model and each variant for every seed; reports test recall.
AblationReport ablate(const RunConfig& base, std::span<const std::string> variants,
                      const Dataset& data, std::span<const std::uint64_t> seeds,
                      std::size_t jobs = 1, std::ostream* log = nullptr);

struct SweepPoint {
  double kappa = 0.0;
  double lambda = 0.0;
  RecallReport test;
};

/// Grid over kappa x lambda; an empty list keeps the base value.
std::vector<SweepPoint> sweep(const RunConfig& base, std::span<const double> kappas,
                              std::span<const double> lambdas, const Dataset& data,
                              std::size_t jobs = 1, std::ostream* log = nullptr);

}  // namespace retrack

#endif  // RETRACK_TRAINER_HPP
