#include "retrack/synth_data.hpp"

#include "retrack/binary_io.hpp"
#include "retrack/random.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace retrack {

namespace {

constexpr std::string_view kMagic = "RTRK";

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw FormatError(std::string("manifest: bad shape for ") + name);
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError(std::string("manifest: bad shape for ") + name);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::size_t split_count(const GeneratorConfig& cfg, Split s) {
  switch (s) {
    case Split::kTrain: return cfg.n_train;
    case Split::kVal: return cfg.n_val;
    case Split::kTest: return cfg.n_test;
  }
  return 0;
}

std::size_t negative_count(const GeneratorConfig& cfg, Split s) {
  return s == Split::kTrain ? 0 : split_count(cfg, s) * cfg.hard_negatives;
}

constexpr std::array<Split, 3> kSplits = {Split::kTrain, Split::kVal, Split::kTest};

Projections draw_projections(const GeneratorConfig& cfg) {
  NormalSampler rng(derive_seed(cfg.seed, stream::kProjections));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  Projections p;
  p.encode_ref = rng.matrix(cfg.dim, cfg.latent_dim, scale);
  p.mixing = rng.matrix(cfg.latent_dim, cfg.latent_dim, scale);
  p.encode_target = p.encode_ref;
  p.encode_mod = p.encode_target * p.mixing;
  return p;
}

Matrix noisy_rows(const Matrix& encoder, const Vector& latent, Eigen::Index queries, double noise,
                  NormalSampler& rng) {
  Matrix rows = encode_rows(encoder, latent, queries);
  if (noise > 0.0) rows += rng.matrix(rows.rows(), rows.cols(), noise);
  return round_to_f32(rows);
}

SplitData draw_split(const GeneratorConfig& cfg, const Projections& maps, Split s) {
  const auto split_id = static_cast<std::uint64_t>(s);
  SplitData out;
  const std::size_t n = split_count(cfg, s);
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NormalSampler latent_rng(derive_seed(cfg.seed, stream::kLatents, split_id, i));
    TripletSample sample;
    sample.id = i;
    sample.latent.z_r = latent_rng.matrix(cfg.latent_dim, 1);
    sample.latent.z_m = latent_rng.matrix(cfg.latent_dim, 1);
    sample.latent.z_t = sample.latent.z_r + maps.mixing * sample.latent.z_m;

    // Reference-biased target content: a fraction `bias` of the composed
    // latent is replaced by the reference latent.
    const Vector target_content = (1.0 - cfg.bias) * sample.latent.z_t + cfg.bias * sample.latent.z_r;

    NormalSampler noise_rng(derive_seed(cfg.seed, stream::kNoise, split_id, i));
    sample.f_r = noisy_rows(maps.encode_ref, sample.latent.z_r, cfg.queries, cfg.noise, noise_rng);
    sample.f_m = noisy_rows(maps.encode_mod, sample.latent.z_m, cfg.queries, cfg.noise, noise_rng);
    sample.f_t = noisy_rows(maps.encode_target, target_content, cfg.queries, cfg.noise, noise_rng);

    if (s != Split::kTrain) {
      NormalSampler neg_rng(derive_seed(cfg.seed, stream::kNegatives, split_id, i));
      for (std::size_t k = 0; k < cfg.hard_negatives; ++k) {
        Vector z = sample.latent.z_r + cfg.hard_negative_radius * neg_rng.matrix(cfg.latent_dim, 1);
        out.negatives.push_back(
            noisy_rows(maps.encode_target, z, cfg.queries, cfg.noise, neg_rng));
        out.negative_latents.push_back(std::move(z));
      }
    }
    out.samples.push_back(std::move(sample));
  }
  return out;
}

json manifest_to_json(const DatasetManifest& m) {
  const GeneratorConfig& c = m.config;
  json j;
  j["format_version"] = m.format_version;
  j["d_z"] = c.latent_dim;
  j["Q"] = c.queries;
  j["D"] = c.dim;
  j["n_train"] = c.n_train;
  j["n_val"] = c.n_val;
  j["n_test"] = c.n_test;
  j["sigma"] = c.noise;
  j["beta"] = c.bias;
  j["hard_negatives"] = c.hard_negatives;
  j["hard_negative_radius"] = c.hard_negative_radius;
  j["seed"] = c.seed;
  j["payload_crc32"] = m.payload_crc32;
  j["projections"] = {{"E_r", matrix_to_json(m.maps.encode_ref)},
                      {"E_m", matrix_to_json(m.maps.encode_mod)},
                      {"E_t", matrix_to_json(m.maps.encode_target)},
                      {"M_mod", matrix_to_json(m.maps.mixing)}};
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != kDatasetFormatVersion) {
      throw FormatError("manifest: unsupported format version " +
                        std::to_string(m.format_version));
    }
    GeneratorConfig& c = m.config;
    c.latent_dim = j.at("d_z").get<Eigen::Index>();
    c.queries = j.at("Q").get<Eigen::Index>();
    c.dim = j.at("D").get<Eigen::Index>();
    c.n_train = j.at("n_train").get<std::size_t>();
    c.n_val = j.at("n_val").get<std::size_t>();
    c.n_test = j.at("n_test").get<std::size_t>();
    c.noise = j.at("sigma").get<double>();
    c.bias = j.at("beta").get<double>();
    c.hard_negatives = j.at("hard_negatives").get<std::size_t>();
    c.hard_negative_radius = j.at("hard_negative_radius").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    m.payload_crc32 = j.at("payload_crc32").get<std::uint32_t>();
    const json& p = j.at("projections");
    m.maps.encode_ref = matrix_from_json(p.at("E_r"), c.dim, c.latent_dim, "E_r");
    m.maps.encode_mod = matrix_from_json(p.at("E_m"), c.dim, c.latent_dim, "E_m");
    m.maps.encode_target = matrix_from_json(p.at("E_t"), c.dim, c.latent_dim, "E_t");
    m.maps.mixing = matrix_from_json(p.at("M_mod"), c.latent_dim, c.latent_dim, "M_mod");
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.config.validate();
  return m;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("d_z must be >= 2");
  if (queries < 1) throw std::invalid_argument("Q must be >= 1");
  if (dim < 2) throw std::invalid_argument("D must be >= 2");
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw std::invalid_argument("sample counts must be >= 1");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("sigma must be >= 0");
  if (!(bias >= 0.0 && bias <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
  if (!(hard_negative_radius >= 0.0) || !std::isfinite(hard_negative_radius)) {
    throw std::invalid_argument("hard negative radius must be >= 0");
  }
}

const SplitData& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  throw std::invalid_argument("unknown split");
}

Matrix encode_rows(const Matrix& encoder, const Vector& latent, Eigen::Index queries) {
  const Vector row = encoder * latent;
  return row.transpose().replicate(queries, 1);
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.manifest.config = cfg;
  d.manifest.maps = draw_projections(cfg);
  d.train = draw_split(cfg, d.manifest.maps, Split::kTrain);
  d.val = draw_split(cfg, d.manifest.maps, Split::kVal);
  d.test = draw_split(cfg, d.manifest.maps, Split::kTest);
  return d;
}

DatasetManifest generate_dataset(const GeneratorConfig& cfg, const std::filesystem::path& dir) {
  return write_dataset(generate_dataset(cfg), dir);
}

DatasetManifest write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  ByteWriter payload;
  for (Split s : kSplits) {
    for (const TripletSample& t : data.split(s).samples) {
      payload.f32_matrix(t.f_r);
      payload.f32_matrix(t.f_m);
      payload.f32_matrix(t.f_t);
    }
  }
  for (Split s : kSplits) {
    for (const Matrix& n : data.split(s).negatives) payload.f32_matrix(n);
  }
  for (Split s : kSplits) {
    for (const TripletSample& t : data.split(s).samples) {
      payload.f64_matrix(t.latent.z_r);
      payload.f64_matrix(t.latent.z_m);
      payload.f64_matrix(t.latent.z_t);
    }
    for (const Vector& z : data.split(s).negative_latents) payload.f64_matrix(z);
  }

  DatasetManifest manifest = data.manifest;
  manifest.format_version = kDatasetFormatVersion;
  manifest.payload_crc32 = crc32(payload.buffer());

  ByteWriter file;
  file.bytes(kMagic);
  file.u32(kDatasetFormatVersion);
  file.bytes(payload.buffer());
  file.u32(manifest.payload_crc32);
  write_file(dir / "data.bin", file.buffer());
  write_file(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto data_path = dir / "data.bin";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(data_path)) {
    throw MissingInputError("no dataset at " + dir.string());
  }
  json j;
  try {
    j = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }

  Dataset d;
  d.manifest = manifest_from_json(j);
  const GeneratorConfig& cfg = d.manifest.config;

  const std::string bytes = read_file(data_path);
  if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes).substr(0, 4) != kMagic) {
    throw FormatError("data.bin: bad magic");
  }
  ByteReader head(std::string_view(bytes).substr(4, 4));
  const std::uint32_t version = head.u32();
  if (version != kDatasetFormatVersion) {
    throw FormatError("data.bin: unsupported format version " + std::to_string(version));
  }
  const std::string_view payload = std::string_view(bytes).substr(8, bytes.size() - 12);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc32(payload);
  if (stored != actual || stored != d.manifest.payload_crc32) {
    throw ChecksumError("data.bin: checksum mismatch");
  }

  ByteReader in(payload);
  for (Split s : kSplits) {
    SplitData& sd = s == Split::kTrain ? d.train : (s == Split::kVal ? d.val : d.test);
    const std::size_t n = split_count(cfg, s);
    sd.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      TripletSample& t = sd.samples[i];
      t.id = i;
      t.f_r = in.f32_matrix(cfg.queries, cfg.dim);
      t.f_m = in.f32_matrix(cfg.queries, cfg.dim);
      t.f_t = in.f32_matrix(cfg.queries, cfg.dim);
    }
  }
  for (Split s : kSplits) {
    SplitData& sd = s == Split::kTrain ? d.train : (s == Split::kVal ? d.val : d.test);
    const std::size_t n = negative_count(cfg, s);
    for (std::size_t i = 0; i < n; ++i) sd.negatives.push_back(in.f32_matrix(cfg.queries, cfg.dim));
  }
  for (Split s : kSplits) {
    SplitData& sd = s == Split::kTrain ? d.train : (s == Split::kVal ? d.val : d.test);
    for (TripletSample& t : sd.samples) {
      t.latent.z_r = in.f64_matrix(cfg.latent_dim, 1);
      t.latent.z_m = in.f64_matrix(cfg.latent_dim, 1);
      t.latent.z_t = in.f64_matrix(cfg.latent_dim, 1);
    }
    const std::size_t n = negative_count(cfg, s);
    for (std::size_t i = 0; i < n; ++i) sd.negative_latents.push_back(in.f64_matrix(cfg.latent_dim, 1));
  }
  if (in.remaining() != 0) throw FormatError("data.bin: trailing bytes");
  return d;
}

TripletBatch gather_batch(const SplitData& split, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("gather_batch: empty batch");
  const TripletSample& first = split.samples.at(indices.front());
  const Eigen::Index q = first.f_r.rows();
  const Eigen::Index d = first.f_r.cols();
  const auto b = static_cast<Eigen::Index>(indices.size());
  TripletBatch batch;
  batch.queries = q;
  batch.f_r.resize(b * q, d);
  batch.f_m.resize(b * q, d);
  batch.f_t.resize(b * q, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    const TripletSample& s = split.samples.at(indices[static_cast<std::size_t>(i)]);
    batch.f_r.middleRows(i * q, q) = s.f_r;
    batch.f_m.middleRows(i * q, q) = s.f_m;
    batch.f_t.middleRows(i * q, q) = s.f_t;
    batch.ids.push_back(s.id);
  }
  return batch;
}

BatchSampler::BatchSampler(const SplitData& split, std::size_t batch_size,
                           std::uint64_t epoch_seed)
    : split_(&split), batch_size_(batch_size), order_(split.size()) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  Rng rng(derive_seed(epoch_seed, stream::kShuffle));
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order_[i - 1], order_[j]);
  }
}

std::span<const std::size_t> BatchSampler::indices(std::size_t batch) const {
  if (batch >= size()) throw std::out_of_range("batch index out of range");
  const std::size_t begin = batch * batch_size_;
  const std::size_t count = std::min(batch_size_, order_.size() - begin);
  return std::span<const std::size_t>(order_).subspan(begin, count);
}

TripletBatch BatchSampler::operator[](std::size_t batch) const {
  return gather_batch(*split_, indices(batch));
}

}  // namespace retrack
