#ifndef RETRACK_SYNTH_DATA_HPP
#define RETRACK_SYNTH_DATA_HPP

#include "retrack/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace retrack {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct GeneratorConfig {
  Eigen::Index latent_dim = 8;  // d_z
  Eigen::Index queries = 8;     // Q
  Eigen::Index dim = 16;        // D
  std::size_t n_train = 4096;
  std::size_t n_val = 512;
  std::size_t n_test = 512;
  double noise = 0.05;  // sigma
  double bias = 0.5;    // beta
  std::size_t hard_negatives = 3;
  /// Hard negative latents are z_r + radius * N(0, I).
  double hard_negative_radius = 0.5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Latent triple obeying z_t = z_r + mixing * z_m.
struct LatentTriplet {
  Vector z_r;
  Vector z_m;
  Vector z_t;
};

struct TripletSample {
  Matrix f_r;  // Q x D
  Matrix f_m;
  Matrix f_t;
  LatentTriplet latent;
  std::size_t id = 0;
};

/// Fixed maps drawn once per dataset.
///
/// Reference and target are the same modality and share one encoder, and
/// the modification encoder writes into the same aligned space through the
/// mixing matrix, so a modification's features point along the change it
/// asks for.
struct Projections {
  Matrix encode_ref;     // D x d_z
  Matrix encode_mod;     // D x d_z, = encode_target * mixing
  Matrix encode_target;  // D x d_z, = encode_ref
  Matrix mixing;         // d_z x d_z
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

struct SplitData {
  std::vector<TripletSample> samples;
  /// hard negative k of sample i lives at i * hard_negatives + k.
  std::vector<Matrix> negatives;
  std::vector<Vector> negative_latents;

  std::size_t size() const { return samples.size(); }
};

struct DatasetManifest {
  GeneratorConfig config;
  Projections maps;
  std::uint32_t format_version = kDatasetFormatVersion;
  std::uint32_t payload_crc32 = 0;
};

struct Dataset {
  DatasetManifest manifest;
  SplitData train;
  SplitData val;
  SplitData test;

  const SplitData& split(Split s) const;
};

/// Draws the full dataset in memory. Feature values are rounded through
/// 32-bit storage so the in-memory copy equals what load_dataset returns.
Dataset generate_dataset(const GeneratorConfig& cfg);

/// generate_dataset + write_dataset.
DatasetManifest generate_dataset(const GeneratorConfig& cfg, const std::filesystem::path& dir);

/// Writes manifest.json and data.bin into `dir` (created if missing).
DatasetManifest write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Throws ChecksumError / FormatError on corrupt or foreign files.
Dataset load_dataset(const std::filesystem::path& dir);

/// Unrounded noiseless features for a latent content vector: Q identical rows.
Matrix encode_rows(const Matrix& encoder, const Vector& latent, Eigen::Index queries);

/// Aligned batch of samples stacked row-wise: each tensor is (B*Q) x D.
struct TripletBatch {
  Matrix f_r;
  Matrix f_m;
  Matrix f_t;
  std::vector<std::size_t> ids;
  Eigen::Index queries = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(ids.size()); }
};

TripletBatch gather_batch(const SplitData& split, std::span<const std::size_t> indices);

/// Deterministically shuffled minibatches over one epoch; the last batch may be short.
class BatchSampler {
 public:
  BatchSampler(const SplitData& split, std::size_t batch_size, std::uint64_t epoch_seed);

  std::size_t size() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  std::span<const std::size_t> indices(std::size_t batch) const;
  TripletBatch operator[](std::size_t batch) const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const SplitData* split_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

}  // namespace retrack

#endif  // RETRACK_SYNTH_DATA_HPP
