// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "retrack/dempster.hpp"
#include "retrack/diagnostics.hpp"
#include "retrack/evidence.hpp"
#include "retrack/random.hpp"
#include "retrack/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

using namespace retrack;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void gradient_fidelity() {
  const RunConfig cfg;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LossGradcheckReport r = loss_gradcheck(cfg, seed, 3, 1e-5);
    for (const TermGradcheck& t : r.terms) {
      if (t.result.max_rel_error > worst) {
        worst = t.result.max_rel_error;
        where = t.term + " / " + t.worst_param + " (seed " + std::to_string(seed) + ")";
      }
    }
  }
  const double secs = seconds_since(t0);
  report("gradient fidelity", worst < 1e-4 && secs < 120.0,
         fmt("10 seeds, max rel. error %.3e at %s (< 1e-4), %.1f s (< 120 s)", worst,
             where.c_str(), secs));
}

void evidence_normalization() {
  NormalSampler s(derive_seed(2024, stream::kGradcheck, 11));
  double worst_sum = 0.0, worst_closed = 0.0;
  bool in_range = true;
  for (int i = 0; i < 1000; ++i) {
    const auto q = static_cast<Eigen::Index>(1 + i % 16);
    Vector e(q);
    for (Eigen::Index k = 0; k < q; ++k) {
      // Mix of zero, tiny and large evidence.
      const double u = s.uniform();
      e(k) = u < 0.1 ? 0.0 : std::exp(4.0 * s());
    }
    const EvidenceReport r = belief_and_reliability(e);
    worst_sum = std::max(worst_sum, std::abs(r.belief.sum() + r.uncertainty - 1.0));
    in_range = in_range && r.reliability >= 0.0 && r.reliability < 1.0;
    const DirichletParams d = evidence_to_dirichlet(e);
    worst_closed = std::max(worst_closed, std::abs(d.reliability() - r.reliability));
  }
  report("evidence normalization",
         worst_sum <= 1e-12 && worst_closed <= 1e-12 && in_range,
         fmt("1000 vectors, max |sum b + u - 1| %.2e, max |closed form - Dirichlet| %.2e, "
             "reliability in [0,1): %s",
             worst_sum, worst_closed, in_range ? "yes" : "no"));
}

MassFunction random_mass(NormalSampler& s, int frame) {
  MassFunction m(frame);
  const Subset full = (Subset{1} << frame) - 1;
  std::vector<double> w(full + 1, 0.0);
  double total = 0.0;
  for (Subset a = 1; a <= full; ++a) {
    if (s.uniform() < 0.5 || a == full) {
      w[a] = s.uniform() + 1e-3;
      total += w[a];
    }
  }
  for (Subset a = 1; a <= full; ++a) {
    if (w[a] > 0.0) m.set(a, w[a] / total);
  }
  return m;
}

void dempster_oracle() {
  NormalSampler s(derive_seed(2024, stream::kGradcheck, 12));
  double worst = 0.0;
  int cases = 0;
  for (int frame = 1; frame <= 4; ++frame) {
    for (int n = 2; n <= 5; ++n) {
      for (int trial = 0; trial < 25; ++trial, ++cases) {
        std::vector<MassFunction> src;
        for (int i = 0; i < n; ++i) src.push_back(random_mass(s, frame));
        const Combination fold = dempster_combine_all(src);
        const Combination brute = dempster_brute_force(src);
        worst = std::max(worst, max_mass_difference(fold.mass, brute.mass));
        worst = std::max(worst, std::abs(fold.conflict - brute.conflict));
      }
    }
  }
  MassFunction m1(2), m2(2);
  const Subset a = 1, not_a = 2;
  m1.set(a, 0.6);
  m1.set(not_a, 0.4);
  m2.set(a, 0.7);
  m2.set(not_a, 0.3);
  const Combination c = dempster_combine(m1, m2);
  const double k_err = std::abs(c.conflict - 0.46);
  const double a_err = std::abs(c.mass[a] - 7.0 / 9.0);
  report("Dempster oracle", worst <= 1e-12 && k_err <= 1e-12 && a_err <= 1e-9,
         fmt("%d fold-vs-enumeration cases, max deviation %.2e; worked example K=%.6f, "
             "m(A)=%.6f",
             cases, worst, c.conflict, c.mass[a]));
}

const Dataset& desk_data() {
  static const Dataset d = generate_dataset(GeneratorConfig{});
  return d;
}

void geometry_identities() {
  RunConfig cfg;
  cfg.steps = 100;
  cfg.validate_every = 0;
  double worst = 0.0;
  std::size_t batches = 0;
  TrainOptions opts;
  opts.on_step = [&](std::size_t, const TripletBatch&, const LossTerms& t) {
    const AnchorSet& a = t.anchors;
    const Matrix expect = a.w_r.value().cwiseProduct(a.p_r.value()) +
                          a.w_m.value().cwiseProduct(a.p_m.value());
    worst = std::max(worst, (t.geometry.a_c.value() - expect).cwiseAbs().maxCoeff());
    ++batches;
  };
  train(cfg, desk_data(), opts);

  // Uniform logits: every similarity equal, so each row is a uniform softmax.
  double worst_ln = 0.0;
  for (Eigen::Index b : {2, 7, 32, 64}) {
    for (double tau : {0.05, 0.1, 1.0}) {
      for (double v : {-0.3, 0.0, 0.9}) {
        Tape tape;
        const Var s = tape.constant(Matrix::Constant(b, b, v));
        worst_ln = std::max(worst_ln, std::abs(contrastive_loss(s, tau).scalar() -
                                               std::log(static_cast<double>(b))));
      }
    }
    // Identical samples on both sides give the same through the full similarity path.
    Tape tape;
    const Matrix one = NormalSampler(static_cast<std::uint64_t>(b)).matrix(8, 16);
    const Matrix stacked = one.replicate(b, 1);
    const Var x = tape.constant(stacked);
    const Var y = tape.constant(stacked);
    worst_ln = std::max(worst_ln, std::abs(loss_dis(x, y, 8, SimilarityConfig{}, 0.1).scalar() -
                                           std::log(static_cast<double>(b))));
    worst_ln = std::max(worst_ln, std::abs(loss_dir(x, y, 8, SimilarityConfig{}, 0.1).scalar() -
                                           std::log(static_cast<double>(b))));
  }
  report("geometry identities", batches == 100 && worst <= 1e-12 && worst_ln <= 1e-9,
         fmt("A_c identity max error %.2e over %zu batches; uniform-logit |L - ln B| max %.2e",
             worst, batches, worst_ln));
}

struct TrainedDesk {
  TrainResult result;
  RecallReport test;
  double seconds = 0.0;
};

const TrainedDesk& desk_run() {
  static const TrainedDesk run = [] {
    TrainedDesk t;
    const RunConfig cfg;
    const auto t0 = Clock::now();
    t.result = train(cfg, desk_data());
    t.test = evaluate_split(desk_data().test, t.result.final_state.params, cfg.shape(),
                            cfg.similarity_config(), kReportKs);
    t.seconds = seconds_since(t0);
    return t;
  }();
  return run;
}

double latent_oracle_recall() {
  GeneratorConfig g;
  g.noise = 0.0;
  g.bias = 0.0;
  const Dataset d = generate_dataset(g);
  const SplitData& split = d.test;
  std::vector<const Vector*> gallery;
  for (const TripletSample& s : split.samples) gallery.push_back(&s.latent.z_t);
  for (const Vector& v : split.negative_latents) gallery.push_back(&v);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const LatentTriplet& l = split.samples[i].latent;
    const Vector query = l.z_r + d.manifest.maps.mixing * l.z_m;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double dist = (*gallery[j] - query).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

void end_to_end() {
  const TrainedDesk& t = desk_run();
  const double r1 = t.test.at(1);
  const double oracle = latent_oracle_recall();
  report("end-to-end learning", r1 >= 0.80 && t.seconds < 900.0 && oracle == 1.0,
         fmt("desk run test R@1 %.4f (>= 0.80) on %zu queries in %.1f s (< 900 s); "
             "noiseless latent oracle R@1 %.4f (= 1)",
             r1, t.test.ranks.size(), t.seconds, oracle));
}

void ablation_ordering() {
  const RunConfig cfg;
  const std::vector<std::string> variants{"wo_SCD", "wo_Ldir", "wo_Levi", "wo_Ldis"};
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const AblationReport r = ablate(cfg, variants, desk_data(), seeds);
  const double full = r.mean_recall("full", 1);
  bool ok = true;
  std::string detail = fmt("full %.4f", full);
  for (const std::string& v : {"wo_SCD", "wo_Ldir", "wo_Levi"}) {
    const double m = r.mean_recall(v, 1);
    ok = ok && full >= m;
    detail += fmt(", %s %.4f", v.c_str(), m);
  }
  const double dis = r.mean_recall("wo_Ldis", 1);
  ok = ok && full - dis >= 0.3;
  detail += fmt(", wo_Ldis %.4f (drop %.4f, needs >= 0.3); mean R@1 over seeds 0,1,2", dis,
                full - dis);
  report("ablation ordering", ok, detail);
}

void bias_direction() {
  const RunConfig cfg;
  const TrainedDesk& t = desk_run();
  const RecallReport untrained =
      evaluate_split(desk_data().test, init_params(cfg.shape(), cfg.seed), cfg.shape(),
                     cfg.similarity_config(), kReportKs);
  const double dm = t.test.bias.mean_sim_modification - untrained.bias.mean_sim_modification;
  report("bias-calibration direction", dm > 0.0 && t.test.at(1) > untrained.at(1),
         fmt("beta=%.2f test set: mean S(F_c,F_m) trained %.4f vs untrained %.4f (margin %.4f); "
             "R@1 trained %.4f vs untrained %.4f",
             desk_data().manifest.config.bias, t.test.bias.mean_sim_modification,
             untrained.bias.mean_sim_modification, dm, t.test.at(1), untrained.at(1)));
}

void determinism() {
  RunConfig cfg;
  cfg.steps = 200;
  cfg.validate_every = 50;
  const TrainResult a = train(cfg, desk_data());
  const TrainResult b = train(cfg, desk_data());
  const std::vector<std::size_t> ks{1, 5, 10, 50};
  auto recall_json = [&](const TrainResult& r) {
    return recall_report_json(evaluate_split(desk_data().test, r.final_state.params, cfg.shape(),
                                             cfg.similarity_config(), ks),
                              cfg.similarity_config());
  };
  const bool csv_same = a.metrics_csv == b.metrics_csv;
  const bool recall_same = recall_json(a) == recall_json(b);

  // Stop at k, round-trip through disk, take one more step.
  const std::size_t k = 137;
  TrainOptions head;
  head.stop_at = k;
  const TrainResult part = train(cfg, desk_data(), head);
  const auto dir = std::filesystem::temp_directory_path() / "retrack_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(part.final_state, dir);
  const Checkpoint ck = load_checkpoint(dir);
  TrainOptions next;
  next.resume = &ck;
  next.stop_at = k + 1;
  const TrainResult one = train(cfg, desk_data(), next);
  TrainOptions ref_opts;
  ref_opts.stop_at = k + 1;
  const TrainResult ref = train(cfg, desk_data(), ref_opts);
  const bool step_same = one.metrics.size() == 1 &&
                         metrics_csv_line(one.metrics[0]) == metrics_csv_line(ref.metrics[k]) &&
                         one.final_state.params == ref.final_state.params &&
                         one.final_state.optimizer.first == ref.final_state.optimizer.first &&
                         one.final_state.optimizer.second == ref.final_state.optimizer.second;
  std::filesystem::remove_all(dir);
  report("determinism", csv_same && recall_same && step_same,
         fmt("loss CSV identical: %s; recall.json identical: %s; reload at step %zu reproduces "
             "the next step bit-exactly: %s",
             csv_same ? "yes" : "no", recall_same ? "yes" : "no", k, step_same ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  gradient_fidelity();
  evidence_normalization();
  dempster_oracle();
  geometry_identities();
  end_to_end();
  ablation_ordering();
  bias_direction();
  determinism();
  std::printf("%d of 8 criteria failed (%.0f s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
