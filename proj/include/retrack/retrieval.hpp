#ifndef RETRACK_RETRIEVAL_HPP
#define RETRACK_RETRIEVAL_HPP

#include "retrack/composer.hpp"
#include "retrack/geometry.hpp"
#include "retrack/synth_data.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace retrack {

/// Candidate gallery with rows pre-normalized for the configured similarity.
class RetrievalIndex {
 public:
  RetrievalIndex(std::span<const Matrix> candidates, std::span<const std::size_t> ids,
                 const SimilarityConfig& cfg);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::size_t>& ids() const { return ids_; }
  const SimilarityConfig& config() const { return cfg_; }
  Eigen::Index queries() const { return queries_; }

  /// S(query, candidate) for every candidate, in index order.
  Vector scores(const Matrix& query) const;
  /// Stacked (n*Q) x D queries against the gallery: n x size().
  Matrix score_matrix(const Matrix& stacked_queries) const;

  /// Position of `id` in the index; throws std::out_of_range if absent.
  std::size_t position(std::size_t id) const;

 private:
  SimilarityConfig cfg_;
  Eigen::Index queries_ = 0;
  Eigen::Index dim_ = 0;
  std::vector<std::size_t> ids_;
  Matrix rows_;  // normalized candidate rows (or pooled rows), stacked
};

/// build_index(): rejects empty input, duplicate ids, and inconsistent shapes.
RetrievalIndex build_index(std::span<const Matrix> candidates, std::span<const std::size_t> ids,
                           const SimilarityConfig& cfg);

struct RankedList {
  std::vector<std::size_t> ids;
  std::vector<double> scores;
};

/// Candidates by descending score, ties by ascending id.
RankedList rank(const Matrix& query, const RetrievalIndex& index);
RankedList rank_scores(const Vector& scores, std::span<const std::size_t> ids);

/// 1-based rank of the candidate at `target_pos` under the same ordering as rank().
std::size_t target_rank(const Eigen::Ref<const Vector>& scores, std::span<const std::size_t> ids,
                        std::size_t target_pos);

struct BiasDiagnostics {
  double mean_sim_reference = 0.0;     // S(F_c, F_r)
  double mean_sim_modification = 0.0;  // S(F_c, F_m)
  double mean_sim_target = 0.0;        // S(F_c, F_t)
};

struct RecallReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  double mean_recall = 0.0;
  std::vector<std::size_t> ranks;
  BiasDiagnostics bias;

  double at(std::size_t k) const;
};

/// Recall from 1-based target ranks.
RecallReport recall_at_k(std::span<const std::size_t> ranks, std::span<const std::size_t> ks);
/// Recall from full ranked lists; throws std::out_of_range if a target id is missing.
RecallReport recall_at_k(std::span<const RankedList> lists, std::span<const std::size_t> targets,
                         std::span<const std::size_t> ks);

inline const std::vector<std::size_t> kDefaultKs = {1, 5, 10, 50};

/// Gallery for a split: targets carry ids 0..n-1, hard negatives follow.
RetrievalIndex split_gallery(const SplitData& split, const SimilarityConfig& cfg);

/// Composed features for every sample of a split, stacked (n*Q) x D.
Matrix compose_split(const SplitData& split, const ParamSet& params, const ModelShape& shape);

/// Composes every query of `split`, ranks it against the split gallery, and
/// fills the recall report including bias diagnostics.
RecallReport evaluate_split(const SplitData& split, const ParamSet& params,
                            const ModelShape& shape, const SimilarityConfig& cfg,
                            std::span<const std::size_t> ks = kDefaultKs);

/// Writes `path` (CSV, queries x candidates) and `path` + ".json" naming rows and columns.
void export_similarity_matrix(const Matrix& stacked_queries,
                              std::span<const std::size_t> query_ids,
                              const RetrievalIndex& index, const std::filesystem::path& path);

/// Writes recall.json-style content.
std::string recall_report_json(const RecallReport& report, const SimilarityConfig& cfg);

}  // namespace retrack

#endif  // RETRACK_RETRIEVAL_HPP
