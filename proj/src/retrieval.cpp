#include "retrack/retrieval.hpp"

#include "retrack/binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace retrack {

RetrievalIndex::RetrievalIndex(std::span<const Matrix> candidates,
                               std::span<const std::size_t> ids, const SimilarityConfig& cfg)
    : cfg_(cfg), ids_(ids.begin(), ids.end()) {
  if (candidates.empty()) throw std::invalid_argument("build_index: no candidates");
  if (candidates.size() != ids.size()) {
    throw std::invalid_argument("build_index: " + std::to_string(candidates.size()) +
                                " candidates but " + std::to_string(ids.size()) + " ids");
  }
  std::set<std::size_t> seen;
  for (std::size_t id : ids) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("build_index: duplicate id " + std::to_string(id));
    }
  }
  queries_ = candidates.front().rows();
  dim_ = candidates.front().cols();
  const Eigen::Index per = cfg_.mode == SimilarityMode::kPooledCosine ? 1 : queries_;
  rows_.resize(static_cast<Eigen::Index>(candidates.size()) * per, dim_);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Matrix& c = candidates[i];
    require_same_shape("build_index", candidates.front(), c);
    const auto at = static_cast<Eigen::Index>(i) * per;
    if (per == 1) {
      rows_.row(at) = rowwise_l2_normalize(Matrix(c.colwise().mean()), cfg_.eps);
    } else {
      rows_.middleRows(at, per) = rowwise_l2_normalize(c, cfg_.eps);
    }
  }
}

Vector RetrievalIndex::scores(const Matrix& query) const {
  if (query.rows() != queries_ || query.cols() != dim_) {
    throw_shape_error("rank", query.rows(), query.cols(), queries_, dim_);
  }
  const auto n = static_cast<Eigen::Index>(ids_.size());
  Vector out(n);
  if (cfg_.mode == SimilarityMode::kPooledCosine) {
    const Matrix pooled = rowwise_l2_normalize(Matrix(query.colwise().mean()), cfg_.eps);
    out = rows_ * pooled.row(0).transpose();
    return out;
  }
  const Matrix q = rowwise_l2_normalize(query, cfg_.eps);
  const Matrix g = q * rows_.transpose();  // Q x (n*Q)
  const double inv = 1.0 / static_cast<double>(queries_);
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < queries_; ++r) {
      acc += g.row(r).segment(j * queries_, queries_).maxCoeff();
    }
    out(j) = inv * acc;
  }
  return out;
}

Matrix RetrievalIndex::score_matrix(const Matrix& stacked_queries) const {
  if (stacked_queries.rows() % queries_ != 0) {
    throw_shape_error("score_matrix", stacked_queries.rows(), stacked_queries.cols(), queries_,
                      dim_);
  }
  const Eigen::Index n = stacked_queries.rows() / queries_;
  Matrix out(n, static_cast<Eigen::Index>(ids_.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = scores(stacked_queries.middleRows(i * queries_, queries_)).transpose();
  }
  return out;
}

std::size_t RetrievalIndex::position(std::size_t id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw std::out_of_range("id " + std::to_string(id) + " not in index");
  return static_cast<std::size_t>(it - ids_.begin());
}

RetrievalIndex build_index(std::span<const Matrix> candidates, std::span<const std::size_t> ids,
                           const SimilarityConfig& cfg) {
  return RetrievalIndex(candidates, ids, cfg);
}

RankedList rank_scores(const Vector& scores, std::span<const std::size_t> ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores(static_cast<Eigen::Index>(a));
    const double sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return ids[a] < ids[b];
  });
  RankedList out;
  for (std::size_t i : order) {
    out.ids.push_back(ids[i]);
    out.scores.push_back(scores(static_cast<Eigen::Index>(i)));
  }
  return out;
}

RankedList rank(const Matrix& query, const RetrievalIndex& index) {
  return rank_scores(index.scores(query), index.ids());
}

std::size_t target_rank(const Eigen::Ref<const Vector>& scores, std::span<const std::size_t> ids,
                        std::size_t target_pos) {
  const double st = scores(static_cast<Eigen::Index>(target_pos));
  const std::size_t tid = ids[target_pos];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const double s = scores(static_cast<Eigen::Index>(j));
    if (s > st || (s == st && ids[j] < tid)) ++ahead;
  }
  return ahead + 1;
}

double RecallReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw std::out_of_range("recall@" + std::to_string(k) + " not computed");
}

RecallReport recall_at_k(std::span<const std::size_t> ranks, std::span<const std::size_t> ks) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: no queries");
  RecallReport r;
  r.ks.assign(ks.begin(), ks.end());
  r.ranks.assign(ranks.begin(), ranks.end());
  for (std::size_t k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t x) { return x <= k; });
    r.recall.push_back(static_cast<double>(hits) / static_cast<double>(ranks.size()));
  }
  if (!r.recall.empty()) {
    r.mean_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) /
                    static_cast<double>(r.recall.size());
  }
  return r;
}

RecallReport recall_at_k(std::span<const RankedList> lists, std::span<const std::size_t> targets,
                         std::span<const std::size_t> ks) {
  if (lists.size() != targets.size()) {
    throw std::invalid_argument("recall_at_k: one target per ranked list required");
  }
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& ids = lists[i].ids;
    auto it = std::find(ids.begin(), ids.end(), targets[i]);
    if (it == ids.end()) {
      throw std::out_of_range("target id " + std::to_string(targets[i]) + " missing from index");
    }
    ranks.push_back(static_cast<std::size_t>(it - ids.begin()) + 1);
  }
  return recall_at_k(ranks, ks);
}

RetrievalIndex split_gallery(const SplitData& split, const SimilarityConfig& cfg) {
  std::vector<Matrix> candidates;
  std::vector<std::size_t> ids;
  candidates.reserve(split.size() + split.negatives.size());
  for (const TripletSample& s : split.samples) {
    candidates.push_back(s.f_t);
    ids.push_back(s.id);
  }
  for (std::size_t i = 0; i < split.negatives.size(); ++i) {
    candidates.push_back(split.negatives[i]);
    ids.push_back(split.size() + i);
  }
  return RetrievalIndex(candidates, ids, cfg);
}

Matrix compose_split(const SplitData& split, const ParamSet& params, const ModelShape& shape) {
  constexpr std::size_t kChunk = 256;
  const Eigen::Index q = shape.queries;
  Matrix out(static_cast<Eigen::Index>(split.size()) * q, shape.dim);
  for (std::size_t begin = 0; begin < split.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, split.size() - begin);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    const TripletBatch b = gather_batch(split, idx);
    out.middleRows(static_cast<Eigen::Index>(begin) * q, static_cast<Eigen::Index>(count) * q) =
        compose(b.f_r, b.f_m, params, shape);
  }
  return out;
}

RecallReport evaluate_split(const SplitData& split, const ParamSet& params,
                            const ModelShape& shape, const SimilarityConfig& cfg,
                            std::span<const std::size_t> ks) {
  const RetrievalIndex index = split_gallery(split, cfg);
  const Matrix composed = compose_split(split, params, shape);
  const Eigen::Index q = shape.queries;
  std::vector<std::size_t> ranks;
  ranks.reserve(split.size());
  BiasDiagnostics bias;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Matrix fc = composed.middleRows(static_cast<Eigen::Index>(i) * q, q);
    const Vector s = index.scores(fc);
    ranks.push_back(target_rank(s, index.ids(), i));
    const TripletSample& t = split.samples[i];
    bias.mean_sim_reference += similarity(fc, t.f_r, cfg);
    bias.mean_sim_modification += similarity(fc, t.f_m, cfg);
    bias.mean_sim_target += similarity(fc, t.f_t, cfg);
  }
  const auto n = static_cast<double>(split.size());
  bias.mean_sim_reference /= n;
  bias.mean_sim_modification /= n;
  bias.mean_sim_target /= n;
  RecallReport report = recall_at_k(ranks, ks);
  report.bias = bias;
  return report;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void export_similarity_matrix(const Matrix& stacked_queries,
                              std::span<const std::size_t> query_ids,
                              const RetrievalIndex& index, const std::filesystem::path& path) {
  const Matrix s = index.score_matrix(stacked_queries);
  if (static_cast<Eigen::Index>(query_ids.size()) != s.rows()) {
    throw std::invalid_argument("export_similarity_matrix: one id per query required");
  }
  std::string csv;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (c > 0) csv += ',';
      csv += format_double(s(r, c));
    }
    csv += '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path, csv);
  nlohmann::json side;
  side["rows"] = std::vector<std::size_t>(query_ids.begin(), query_ids.end());
  side["columns"] = index.ids();
  side["similarity"] = to_string(index.config().mode);
  side["row_role"] = "query";
  side["column_role"] = "candidate";
  auto side_path = path;
  side_path += ".json";
  write_file(side_path, side.dump(2) + "\n");
}

std::string recall_report_json(const RecallReport& report, const SimilarityConfig& cfg) {
  nlohmann::json j;
  j["ks"] = report.ks;
  j["values"] = report.recall;
  j["mean"] = report.mean_recall;
  j["queries"] = report.ranks.size();
  j["similarity"] = to_string(cfg.mode);
  j["diagnostics"] = {{"mean_S_Fc_Fr", report.bias.mean_sim_reference},
                      {"mean_S_Fc_Fm", report.bias.mean_sim_modification},
                      {"mean_S_Fc_Ft", report.bias.mean_sim_target}};
  return j.dump(2) + "\n";
}

}  // namespace retrack
