#include "retrack/binary_io.hpp"
#include "retrack/geometry.hpp"
#include "retrack/retrieval.hpp"
#include "retrack/synth_data.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

using namespace retrack;
using retrack::testing::scratch_dir;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig g;
  g.n_train = 64;
  g.n_val = 16;
  g.n_test = 24;
  g.seed = 3;
  return g;
}

double cosine(const Matrix& a, const Matrix& b) {
  return similarity(a, b, SimilarityConfig{SimilarityMode::kPooledCosine, 1e-12});
}

}  // namespace

TEST_CASE("composition rule holds exactly on every latent") {
  const Dataset d = generate_dataset(small_config());
  const Matrix& mix = d.manifest.maps.mixing;
  for (const SplitData* s : {&d.train, &d.val, &d.test}) {
    for (const TripletSample& t : s->samples) {
      CHECK(t.latent.z_t == t.latent.z_r + mix * t.latent.z_m);
    }
  }
}

TEST_CASE("noiseless unbiased single-row targets equal the encoded composed latent") {
  GeneratorConfig g = small_config();
  g.noise = 0.0;
  g.bias = 0.0;
  g.queries = 1;
  const Dataset d = generate_dataset(g);
  for (const TripletSample& t : d.test.samples) {
    const Matrix expect = encode_rows(d.manifest.maps.encode_target,
                                      t.latent.z_r + d.manifest.maps.mixing * t.latent.z_m, 1);
    // Features are stored in 32-bit floats.
    CHECK(t.f_t == round_to_f32(expect));
    CHECK((t.f_t - expect).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("rows of a feature share one latent plus independent noise") {
  GeneratorConfig g = small_config();
  g.noise = 0.0;
  const Dataset d = generate_dataset(g);
  const TripletSample& t = d.train.samples[5];
  for (Eigen::Index r = 1; r < t.f_r.rows(); ++r) CHECK(t.f_r.row(r) == t.f_r.row(0));

  const Dataset noisy = generate_dataset(small_config());
  const TripletSample& n = noisy.train.samples[5];
  CHECK(n.f_r.row(1) != n.f_r.row(0));
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  const auto dir = scratch_dir("synth_det");
  const GeneratorConfig g = small_config();
  generate_dataset(g, dir / "a");
  generate_dataset(g, dir / "b");
  CHECK(read_file(dir / "a" / "data.bin") == read_file(dir / "b" / "data.bin"));
  CHECK(read_file(dir / "a" / "manifest.json") == read_file(dir / "b" / "manifest.json"));

  GeneratorConfig other = g;
  other.seed = 4;
  generate_dataset(other, dir / "c");
  CHECK(read_file(dir / "a" / "data.bin") != read_file(dir / "c" / "data.bin"));
}

TEST_CASE("load(generate(cfg)) round-trips bit-exactly") {
  const auto dir = scratch_dir("synth_roundtrip");
  const Dataset d = generate_dataset(small_config());
  const DatasetManifest m = write_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.manifest.payload_crc32 == m.payload_crc32);
  CHECK(back.manifest.maps.encode_ref == d.manifest.maps.encode_ref);
  CHECK(back.manifest.maps.mixing == d.manifest.maps.mixing);
  CHECK(back.manifest.config.bias == d.manifest.config.bias);
  for (const auto& [a, b] : {std::pair{&d.train, &back.train}, std::pair{&d.test, &back.test}}) {
    REQUIRE(a->size() == b->size());
    for (std::size_t i = 0; i < a->size(); ++i) {
      CHECK(a->samples[i].f_r == b->samples[i].f_r);
      CHECK(a->samples[i].f_m == b->samples[i].f_m);
      CHECK(a->samples[i].f_t == b->samples[i].f_t);
      CHECK(a->samples[i].latent.z_t == b->samples[i].latent.z_t);
      CHECK(a->samples[i].id == b->samples[i].id);
    }
    REQUIRE(a->negatives.size() == b->negatives.size());
    for (std::size_t i = 0; i < a->negatives.size(); ++i) CHECK(a->negatives[i] == b->negatives[i]);
  }
}

TEST_CASE("data.bin layout starts with magic and version") {
  const auto dir = scratch_dir("synth_layout");
  const GeneratorConfig g = small_config();
  const Dataset d = generate_dataset(g);
  write_dataset(d, dir);
  const std::string bytes = read_file(dir / "data.bin");
  CHECK(bytes.substr(0, 4) == "RTRK");
  ByteReader r(std::string_view(bytes).substr(4));
  CHECK(r.u32() == kDatasetFormatVersion);
  // First payload float is train sample 0, f_r, row 0, col 0.
  CHECK(r.f32() == static_cast<float>(d.train.samples[0].f_r(0, 0)));
  const std::string_view payload = std::string_view(bytes).substr(8, bytes.size() - 12);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
  CHECK(tail.u32() == crc32(payload));
}

TEST_CASE("corrupt or foreign files are rejected") {
  const auto dir = scratch_dir("synth_corrupt");
  generate_dataset(small_config(), dir);
  std::string bytes = read_file(dir / "data.bin");

  std::string flipped = bytes;
  flipped[100] = static_cast<char>(flipped[100] ^ 0x01);
  write_file(dir / "data.bin", flipped);
  CHECK_THROWS_AS(load_dataset(dir), ChecksumError);

  std::string version = bytes;
  version[4] = 9;
  write_file(dir / "data.bin", version);
  CHECK_THROWS_AS(load_dataset(dir), FormatError);

  std::string magic = bytes;
  magic[0] = 'X';
  write_file(dir / "data.bin", magic);
  CHECK_THROWS_AS(load_dataset(dir), FormatError);

  write_file(dir / "data.bin", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_dataset(dir), IoError);

  CHECK_THROWS_AS(load_dataset(dir / "nowhere"), MissingInputError);
}

TEST_CASE("invalid generator parameters are rejected") {
  GeneratorConfig g = small_config();
  g.latent_dim = 1;
  CHECK_THROWS_AS(generate_dataset(g), std::invalid_argument);
  g = small_config();
  g.dim = 1;
  CHECK_THROWS_AS(generate_dataset(g), std::invalid_argument);
  g = small_config();
  g.n_test = 0;
  CHECK_THROWS_AS(generate_dataset(g), std::invalid_argument);
  g = small_config();
  g.bias = 1.5;
  CHECK_THROWS_AS(generate_dataset(g), std::invalid_argument);
}

TEST_CASE("full reference bias makes targets look like references") {
  GeneratorConfig g = small_config();
  g.bias = 1.0;
  g.n_test = 100;
  const Dataset d = generate_dataset(g);
  double to_ref = 0.0, to_composed = 0.0;
  for (const TripletSample& t : d.test.samples) {
    to_ref += cosine(t.f_t, t.f_r);
    to_composed += cosine(t.f_t, encode_rows(d.manifest.maps.encode_target, t.latent.z_t, g.queries));
  }
  CHECK(to_ref / 100.0 > to_composed / 100.0);
}

TEST_CASE("batch sampler contract") {
  const Dataset d = generate_dataset(small_config());
  const BatchSampler a(d.train, 10, 0), b(d.train, 10, 0), c(d.train, 10, 1);
  CHECK(a.size() == 7);  // ceil(64 / 10)
  CHECK(BatchSampler(d.train, 64, 0).size() == 1);
  CHECK(BatchSampler(d.train, 1, 0).size() == 64);
  bool differs = false;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ia = a.indices(i), ib = b.indices(i), ic = c.indices(i);
    CHECK(std::equal(ia.begin(), ia.end(), ib.begin(), ib.end()));
    if (!std::equal(ia.begin(), ia.end(), ic.begin(), ic.end())) differs = true;
    all.insert(all.end(), ia.begin(), ia.end());
  }
  CHECK(differs);
  CHECK(a.indices(6).size() == 4);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(64);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);

  const TripletBatch batch = a[0];
  CHECK(batch.size() == 10);
  CHECK(batch.f_r.rows() == 10 * 8);
  CHECK(batch.f_r.middleRows(8, 8) == d.train.samples[batch.ids[1]].f_r);
}

TEST_CASE("noiseless oracle composition retrieves every target first") {
  GeneratorConfig g = small_config();
  g.noise = 0.0;
  g.bias = 0.0;
  g.n_test = 128;
  const Dataset d = generate_dataset(g);
  const SimilarityConfig sim{};
  const RetrievalIndex index = split_gallery(d.test, sim);
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const TripletSample& t = d.test.samples[i];
    const Matrix query = encode_rows(d.manifest.maps.encode_target,
                                     t.latent.z_r + d.manifest.maps.mixing * t.latent.z_m, g.queries);
    ranks.push_back(target_rank(index.scores(query), index.ids(), i));
  }
  const std::vector<std::size_t> ks = {1};
  CHECK(recall_at_k(ranks, ks).at(1) == 1.0);
}

TEST_CASE("hard negatives sit closer to the reference than other targets") {
  const Dataset d = generate_dataset(small_config());
  const SimilarityConfig sim{};
  const std::size_t k = d.manifest.config.hard_negatives;
  double hard = 0.0, global = 0.0;
  std::size_t n_hard = 0, n_global = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const Matrix& f_r = d.test.samples[i].f_r;
    for (std::size_t j = 0; j < k; ++j, ++n_hard) hard += similarity(f_r, d.test.negatives[i * k + j], sim);
    for (std::size_t j = 0; j < d.test.size(); ++j) {
      if (j == i) continue;
      global += similarity(f_r, d.test.samples[j].f_t, sim);
      ++n_global;
    }
  }
  CHECK(hard / static_cast<double>(n_hard) > global / static_cast<double>(n_global));
  CHECK(d.train.negatives.empty());
  CHECK(d.test.negatives.size() == d.test.size() * k);
}
