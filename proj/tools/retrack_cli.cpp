// retrack: generate synthetic triplets, train, evaluate, ablate and self-check.

#include "retrack/binary_io.hpp"
#include "retrack/config.hpp"
#include "retrack/dempster.hpp"
#include "retrack/diagnostics.hpp"
#include "retrack/retrieval.hpp"
#include "retrack/synth_data.hpp"
#include "retrack/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retrack;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kMissingInput = 3,
  kCheckFailed = 4,
  kDiverged = 5,
  kIoFailure = 6,
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Result documents keep wall-clock data under one key so reruns compare equal without it.
void write_result(const fs::path& path, json body, const std::string& started) {
  body["timestamps"] = {{"started", started}, {"finished", utc_now()}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, body.dump(2) + "\n");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, bool config_has_seed,
                           std::uint64_t config_seed) {
  if (flag) return *flag;
  if (config_has_seed) return config_seed;
  if (const char* env = std::getenv("RETRACK_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("RETRACK_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

/// Options shared by every command that builds a RunConfig.
struct RunFlags {
  std::string config_path;
  std::string preset;
  std::string data;
  std::string out;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<double> kappa, lambda, tau, lr, weight_decay, clip_norm;
  std::optional<std::size_t> steps, batch, validate_every;
  std::optional<long> queries, dim, heads;
  std::optional<std::string> similarity, activation, evidence_stop;

  void attach(CLI::App* app, bool with_out = true) {
    app->add_option("--config", config_path, "JSON run config (flat RunConfig keys)");
    app->add_option("--preset", preset, "Start from a preset: desk or paper-scale");
    app->add_option("--data", data, "Dataset directory written by `gen`");
    if (with_out) app->add_option("--out", out, "Output directory");
    app->add_option("--variant", variant, "Ablation variant applied on top of the config");
    app->add_option("--seed", seed, "Run seed (falls back to config, then RETRACK_SEED, then 0)");
    app->add_option("--kappa", kappa, "Weight of the direction-oriented term");
    app->add_option("--lambda", lambda, "Weight of the evidence term");
    app->add_option("--tau", tau, "Temperature");
    app->add_option("--lr", lr, "AdamW learning rate");
    app->add_option("--weight-decay", weight_decay, "AdamW decoupled weight decay");
    app->add_option("--clip-norm", clip_norm, "Global gradient-norm clip (0 disables)");
    app->add_option("--steps", steps, "Optimizer steps");
    app->add_option("--batch", batch, "Batch size B");
    app->add_option("--validate-every", validate_every, "Validation interval in steps (0 disables)");
    app->add_option("--queries", queries, "Tokens per sample Q");
    app->add_option("--dim", dim, "Feature width D");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--similarity", similarity, "token-max-mean or pooled-cosine");
    app->add_option("--activation", activation, "Evidence activation: exp, relu or softplus");
    app->add_option("--evidence-stop-gradient", evidence_stop,
                    "none, reliability or similarity");
  }

  RunConfig build() const {
    RunConfig cfg = preset.empty() ? RunConfig{} : retrack::preset(preset);
    bool config_seed = false;
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        throw FormatError(config_path + ": " + e.what());
      }
      config_seed = j.contains("seed");
      update_from_json(cfg, j);
    }
    if (!variant.empty()) cfg = apply_variant(cfg, variant);
    cfg.seed = resolve_seed(seed, config_seed, cfg.seed);
    if (kappa) cfg.kappa = *kappa;
    if (lambda) cfg.lambda = *lambda;
    if (tau) cfg.tau = *tau;
    if (lr) cfg.learning_rate = *lr;
    if (weight_decay) cfg.weight_decay = *weight_decay;
    if (clip_norm) cfg.clip_norm = *clip_norm;
    if (steps) cfg.steps = *steps;
    if (batch) cfg.batch_size = *batch;
    if (validate_every) cfg.validate_every = *validate_every;
    if (queries) cfg.queries = *queries;
    if (dim) cfg.dim = *dim;
    if (heads) cfg.heads = *heads;
    if (similarity) cfg.similarity = similarity_mode_from_string(*similarity);
    if (activation) cfg.activation = evidence_activation_from_string(*activation);
    if (evidence_stop) cfg.evidence_stop = evidence_stop_gradient_from_string(*evidence_stop);
    if (!data.empty()) cfg.dataset = data;
    if (!out.empty()) cfg.output = out;
    cfg.validate();
    return cfg;
  }
};

Dataset load_run_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw MissingInputError("no dataset given (--data or config \"dataset\")");
  return load_dataset(cfg.dataset);
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  for (const std::string& item : CLI::detail::split(list, ',')) {
    std::size_t used = 0;
    const std::string s = CLI::detail::trim_copy(item);
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : CLI::detail::split(list, ',')) {
    const std::string s = CLI::detail::trim_copy(item);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw std::invalid_argument("not a seed: '" + s + "'");
    out.push_back(v);
  }
  return out;
}

json recall_json(const RecallReport& r) {
  json j;
  j["ks"] = r.ks;
  j["values"] = r.recall;
  j["mean"] = r.mean_recall;
  j["mean_S_Fc_Fm"] = r.bias.mean_sim_modification;
  return j;
}

// ---- gen -------------------------------------------------------------------

struct GenFlags {
  std::string out;
  std::optional<std::uint64_t> seed;
  GeneratorConfig g;
};

int cmd_gen(const GenFlags& f) {
  GeneratorConfig g = f.g;
  g.seed = resolve_seed(f.seed, false, 0);
  g.validate();
  const DatasetManifest m = generate_dataset(g, f.out);
  std::cout << "wrote " << g.n_train << "/" << g.n_val << "/" << g.n_test
            << " train/val/test triplets to " << f.out << " (crc32 " << m.payload_crc32 << ")\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  RunFlags run;
  std::string resume;
  std::size_t stop_at = 0;
  bool quiet = false;
};

int cmd_train(const TrainFlags& f) {
  const std::string started = utc_now();
  RunConfig cfg = f.run.build();
  const Dataset data = load_run_dataset(cfg);
  if (cfg.output.empty()) throw std::invalid_argument("train needs --out (or config \"output\")");

  std::optional<Checkpoint> resume;
  TrainOptions opts;
  if (!f.resume.empty()) {
    resume = load_checkpoint(f.resume);
    opts.resume = &*resume;
  }
  opts.stop_at = f.stop_at;
  opts.log = f.quiet ? nullptr : &std::cout;
  opts.write_outputs = true;

  const TrainResult r = train(cfg, data, opts);

  json result;
  result["steps"] = r.final_state.step;
  result["best_val_R1"] = r.best_val_r1;
  result["metrics_crc32"] = r.final_state.history_digest;
  result["gradient_free_parameters"] = r.gradient_free;
  result["degenerate_direction_rows"] = r.degenerate_directions;
  if (!r.metrics.empty() && r.metrics.back().validation) {
    result["final_val"] = recall_json(*r.metrics.back().validation);
  }
  json body;
  body["command"] = "train";
  body["config"] = to_json(cfg);
  body["dataset_crc32"] = data.manifest.payload_crc32;
  body["result"] = result;
  write_result(fs::path(cfg.output) / "train.json", body, started);

  std::cout << "trained " << r.final_state.step << " steps; best val R@1 " << r.best_val_r1
            << "; outputs in " << cfg.output << "\n";
  for (const std::string& name : r.gradient_free) {
    std::cout << "warning: parameter " << name << " never received gradient\n";
  }
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split = "test";
  std::string ks = "1,5,10,50";
  std::string export_csv;
  std::optional<std::string> similarity;
};

int cmd_eval(const EvalFlags& f) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  RunConfig cfg = ckpt.config;
  if (f.similarity) cfg.similarity = similarity_mode_from_string(*f.similarity);
  const std::string data_dir = f.data.empty() ? cfg.dataset : f.data;
  if (data_dir.empty()) throw MissingInputError("no dataset given (--data)");
  const Dataset data = load_dataset(data_dir);

  Split which;
  if (f.split == "test") {
    which = Split::kTest;
  } else if (f.split == "val") {
    which = Split::kVal;
  } else if (f.split == "train") {
    which = Split::kTrain;
  } else {
    throw std::invalid_argument("unknown split '" + f.split + "'");
  }
  std::vector<std::size_t> ks;
  for (double k : parse_doubles(f.ks)) {
    if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k))) {
      throw std::invalid_argument("k must be a positive integer");
    }
    ks.push_back(static_cast<std::size_t>(k));
  }

  const SplitData& split = data.split(which);
  const SimilarityConfig sim = cfg.similarity_config();
  const RecallReport report = evaluate_split(split, ckpt.params, cfg.shape(), sim, ks);
  const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(out);
  write_file(out / "recall.json", recall_report_json(report, sim));

  if (!f.export_csv.empty()) {
    const RetrievalIndex index = split_gallery(split, sim);
    std::vector<std::size_t> ids;
    for (const TripletSample& s : split.samples) ids.push_back(s.id);
    export_similarity_matrix(compose_split(split, ckpt.params, cfg.shape()), ids, index,
                             f.export_csv);
  }
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    std::cout << "R@" << report.ks[i] << " = " << report.recall[i] << "\n";
  }
  std::cout << "mean S(F_c,F_r) " << report.bias.mean_sim_reference << ", S(F_c,F_m) "
            << report.bias.mean_sim_modification << ", S(F_c,F_t) "
            << report.bias.mean_sim_target << "\n";
  return kOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblateFlags {
  RunFlags run;
  std::string seeds = "0,1,2";
  std::vector<std::string> variants;
  std::size_t jobs = 1;
  bool check = false;
};

int cmd_ablate(const AblateFlags& f) {
  const std::string started = utc_now();
  const RunConfig cfg = f.run.build();
  const Dataset data = load_run_dataset(cfg);
  std::vector<std::string> variants = f.variants;
  if (variants.empty()) variants = variant_names();
  const std::vector<std::uint64_t> seeds = parse_seeds(f.seeds);
  const AblationReport report = ablate(cfg, variants, data, seeds, f.jobs, &std::cout);

  json body;
  body["command"] = "ablate";
  body["config"] = to_json(cfg);
  body["seeds"] = seeds;
  body["result"] = report.to_json();

  int status = kOk;
  if (f.check) {
    const double full = report.mean_recall("full", 1);
    json checks = json::array();
    auto check = [&](const std::string& name, bool ok) {
      checks.push_back({{"check", name}, {"passed", ok}});
      std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
      if (!ok) status = kCheckFailed;
    };
    for (const char* v : {"wo_SCD", "wo_Ldir", "wo_Levi"}) {
      if (std::find(report.variants.begin(), report.variants.end(), v) != report.variants.end()) {
        check(std::string("full R@1 >= ") + v, full >= report.mean_recall(v, 1));
      }
    }
    if (std::find(report.variants.begin(), report.variants.end(), "wo_Ldis") !=
        report.variants.end()) {
      check("wo_Ldis R@1 drop >= 0.3", full - report.mean_recall("wo_Ldis", 1) >= 0.3);
    }
    body["checks"] = checks;
  }
  const fs::path out = cfg.output.empty() ? fs::path(".") : fs::path(cfg.output);
  write_result(out / "ablation.json", body, started);

  std::cout << "variant        R@1      R@5      R@10\n";
  for (const std::string& v : report.variants) {
    std::printf("%-12s %8.4f %8.4f %8.4f\n", v.c_str(), report.mean_recall(v, 1),
                report.mean_recall(v, 5), report.mean_recall(v, 10));
  }
  return status;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  RunFlags run;
  std::size_t count = 1;
  std::size_t batch = 3;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckFlags& f) {
  const std::string started = utc_now();
  const RunConfig cfg = f.run.build();
  json runs = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < f.count; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const LossGradcheckReport r = loss_gradcheck(cfg, seed, f.batch);
    json terms = json::array();
    for (const TermGradcheck& t : r.terms) {
      terms.push_back({{"term", t.term},
                       {"max_rel_error", t.result.max_rel_error},
                       {"worst_parameter", t.worst_param},
                       {"worst_entry", {t.result.worst_row, t.result.worst_col}},
                       {"analytic", t.result.worst_analytic},
                       {"numeric", t.result.worst_numeric}});
      std::printf("seed %llu %-8s max rel. error %.3e (%s)\n",
                  static_cast<unsigned long long>(seed), t.term.c_str(), t.result.max_rel_error,
                  t.worst_param.c_str());
    }
    runs.push_back({{"seed", seed}, {"parameters", r.parameters}, {"terms", terms}});
    worst = std::max(worst, r.max_rel_error());
  }
  const bool ok = worst < f.tolerance;
  json body;
  body["command"] = "gradcheck";
  body["config"] = to_json(cfg);
  body["batch"] = f.batch;
  body["tolerance"] = f.tolerance;
  body["max_rel_error"] = worst;
  body["passed"] = ok;
  body["runs"] = runs;
  const fs::path out = cfg.output.empty() ? fs::path(".") : fs::path(cfg.output);
  write_result(out / "gradcheck.json", body, started);
  std::printf("%s max rel. error %.3e (tolerance %.1e)\n", ok ? "PASS" : "FAIL", worst, f.tolerance);
  return ok ? kOk : kCheckFailed;
}

// ---- dst-oracle ------------------------------------------------------------

struct DstFlags {
  std::optional<std::uint64_t> seed;
  int trials = 200;
  double tolerance = 1e-12;
  std::string out;
};

int cmd_dst(const DstFlags& f) {
  const std::string started = utc_now();
  const std::uint64_t seed = resolve_seed(f.seed, false, 0);
  const DstSelfTestReport r = run_dst_self_test(seed, f.trials, f.tolerance);
  json checks = json::array();
  for (const DstSelfTestCheck& c : r.checks) {
    std::printf("%s %-40s max deviation %.3e %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.max_deviation, c.detail.c_str());
    checks.push_back({{"check", c.name},
                      {"passed", c.passed},
                      {"max_deviation", c.max_deviation},
                      {"detail", c.detail}});
  }
  std::printf("%s overall max deviation %.3e\n", r.passed() ? "PASS" : "FAIL", r.max_deviation());
  json body;
  body["command"] = "dst-oracle";
  body["seed"] = seed;
  body["trials"] = f.trials;
  body["tolerance"] = f.tolerance;
  body["passed"] = r.passed();
  body["max_deviation"] = r.max_deviation();
  body["checks"] = checks;
  const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
  write_result(out / "dst_oracle.json", body, started);
  return r.passed() ? kOk : kCheckFailed;
}

// ---- sweep -----------------------------------------------------------------

struct SweepFlags {
  RunFlags run;
  std::string kappas;
  std::string lambdas;
  std::size_t jobs = 1;
};

int cmd_sweep(const SweepFlags& f) {
  const std::string started = utc_now();
  const RunConfig cfg = f.run.build();
  const Dataset data = load_run_dataset(cfg);
  const std::vector<double> ks = f.kappas.empty() ? std::vector<double>{} : parse_doubles(f.kappas);
  const std::vector<double> ls = f.lambdas.empty() ? std::vector<double>{} : parse_doubles(f.lambdas);
  for (double k : ks) {
    if (!(k >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
  }
  for (double l : ls) {
    if (!(l >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  }
  const std::vector<SweepPoint> points = sweep(cfg, ks, ls, data, f.jobs, &std::cout);

  json rows = json::array();
  std::cout << "kappa    lambda   mean recall\n";
  for (const SweepPoint& p : points) {
    json row = {{"kappa", p.kappa}, {"lambda", p.lambda}, {"mean_recall", p.test.mean_recall}};
    for (std::size_t i = 0; i < p.test.ks.size(); ++i) {
      row["R@" + std::to_string(p.test.ks[i])] = p.test.recall[i];
    }
    rows.push_back(row);
    std::printf("%-8g %-8g %.4f\n", p.kappa, p.lambda, p.test.mean_recall);
  }
  json body;
  body["command"] = "sweep";
  body["config"] = to_json(cfg);
  body["rows"] = rows;
  const fs::path out = cfg.output.empty() ? fs::path(".") : fs::path(cfg.output);
  write_result(out / "sweep.json", body, started);
  return kOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composed-retrieval calibration on synthetic triplets.\n"
               "Exit status: 0 ok, 2 usage, 3 missing input, 4 check failed, 5 divergence, "
               "6 I/O or format error."};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic triplet dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed (falls back to RETRACK_SEED, then 0)");
  gen_cmd->add_option("--latent-dim", gen.g.latent_dim, "Latent width d_z")->capture_default_str();
  gen_cmd->add_option("--queries", gen.g.queries, "Tokens per sample Q")->capture_default_str();
  gen_cmd->add_option("--dim", gen.g.dim, "Feature width D")->capture_default_str();
  gen_cmd->add_option("--n-train", gen.g.n_train, "Training triplets")->capture_default_str();
  gen_cmd->add_option("--n-val", gen.g.n_val, "Validation triplets")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.g.n_test, "Test triplets")->capture_default_str();
  gen_cmd->add_option("--sigma", gen.g.noise, "Feature noise")->capture_default_str();
  gen_cmd->add_option("--beta", gen.g.bias, "Reference leakage into the target")
      ->capture_default_str();
  gen_cmd->add_option("--hard-negatives", gen.g.hard_negatives, "Hard negatives per val/test query")
      ->capture_default_str();
  gen_cmd->add_option("--hard-negative-radius", gen.g.hard_negative_radius,
                      "Latent distance of hard negatives from the reference")
      ->capture_default_str();

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train the composer and calibration heads");
  train_flags.run.attach(train_cmd);
  train_cmd->add_option("--resume", train_flags.resume, "Checkpoint directory to continue from");
  train_cmd->add_option("--stop-at", train_flags.stop_at, "Stop after this many total steps");
  train_cmd->add_flag("--quiet", train_flags.quiet, "No progress lines");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Rank a split's gallery with a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory (default: from the checkpoint)");
  eval_cmd->add_option("--out", eval.out, "Directory for recall.json");
  eval_cmd->add_option("--split", eval.split, "test, val or train")->capture_default_str();
  eval_cmd->add_option("--ks", eval.ks, "Comma-separated recall cutoffs")->capture_default_str();
  eval_cmd->add_option("--export-csv", eval.export_csv,
                       "Write the query x candidate similarity matrix here (+ .json sidecar)");
  eval_cmd->add_option("--similarity", eval.similarity, "Override: token-max-mean or pooled-cosine");

  AblateFlags abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Train the full model and ablation variants");
  abl.run.attach(abl_cmd);
  abl_cmd->add_option("--seeds", abl.seeds, "Comma-separated seeds")->capture_default_str();
  abl_cmd->add_option("--variants", abl.variants, "Variants to run (default: all)")->delimiter(',');
  abl_cmd->add_option("--jobs", abl.jobs, "Concurrent runs")->capture_default_str();
  abl_cmd->add_flag("--check", abl.check, "Exit 4 unless the expected ordering holds");

  GradcheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare loss gradients with finite differences");
  gc.run.attach(gc_cmd);
  gc_cmd->add_option("--count", gc.count, "Number of consecutive seeds")->capture_default_str();
  gc_cmd->add_option("--batch-size", gc.batch, "Triplets in the probe batch")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

  DstFlags dst;
  auto* dst_cmd = app.add_subcommand("dst-oracle", "Dempster combination and evidence self-tests");
  dst_cmd->add_option("--seed", dst.seed, "Seed (falls back to RETRACK_SEED, then 0)");
  dst_cmd->add_option("--trials", dst.trials, "Random trials per check")->capture_default_str();
  dst_cmd->add_option("--tolerance", dst.tolerance, "Maximum deviation")->capture_default_str();
  dst_cmd->add_option("--out", dst.out, "Directory for dst_oracle.json");

  SweepFlags sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Grid over kappa and lambda");
  sw.run.attach(sw_cmd);
  sw_cmd->remove_option(sw_cmd->get_option("--kappa"));
  sw_cmd->remove_option(sw_cmd->get_option("--lambda"));
  sw_cmd->add_option("--kappa", sw.kappas, "Comma-separated kappa values");
  sw_cmd->add_option("--lambda", sw.lambdas, "Comma-separated lambda values");
  sw_cmd->add_option("--jobs", sw.jobs, "Concurrent runs")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*gen_cmd) return guarded([&] { return cmd_gen(gen); });
  if (*train_cmd) return guarded([&] { return cmd_train(train_flags); });
  if (*eval_cmd) return guarded([&] { return cmd_eval(eval); });
  if (*abl_cmd) return guarded([&] { return cmd_ablate(abl); });
  if (*gc_cmd) return guarded([&] { return cmd_gradcheck(gc); });
  if (*dst_cmd) return guarded([&] { return cmd_dst(dst); });
  if (*sw_cmd) return guarded([&] { return cmd_sweep(sw); });
  return kUsage;
}
