#include "retrack/trainer.hpp"

#include "retrack/binary_io.hpp"
#include "retrack/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <future>
#include <mutex>
#include <ostream>
#include <thread>

namespace retrack {

using nlohmann::json;

DivergenceError::DivergenceError(std::string term, const std::string& what)
    : std::runtime_error("loss diverged in " + term + ": " + what), term_(std::move(term)) {}

namespace {

template <typename Fn>
Var guarded(const char* term, Fn&& fn) {
  try {
    return fn();
  } catch (const NonFiniteError& e) {
    throw DivergenceError(term, e.what());
  }
}

}  // namespace

LossTerms total_loss(Tape& tape, const TripletBatch& batch, const ParamVars& p,
                     const RunConfig& cfg) {
  const ModelShape shape = cfg.shape();
  if (batch.queries != shape.queries || batch.f_r.cols() != shape.dim) {
    throw_shape_error("total_loss", batch.queries, batch.f_r.cols(), shape.queries, shape.dim);
  }
  const AblationFlags& a = cfg.ablation;
  const SimilarityConfig sim = cfg.similarity_config();
  const Eigen::Index q = shape.queries;

  LossTerms t;
  const Var f_r = tape.constant(batch.f_r);
  const Var f_m = tape.constant(batch.f_m);
  const Var f_t = tape.constant(batch.f_t);
  const Var zero = tape.constant(Matrix::Zero(1, 1));
  t.dis = t.dir = t.evi = zero;

  t.f_c = guarded("F_c", [&] { return compose(f_r, f_m, p, shape); });
  const Var f_c = t.f_c;

  const bool use_dis = !a.wo_ldis;
  const bool use_dir = !a.wo_ldir && cfg.kappa != 0.0;
  const bool use_evi = !a.wo_levi && cfg.lambda != 0.0;
  const bool evi_ref = use_evi && !a.wo_evi_ref;
  const bool evi_mod = use_evi && !a.wo_evi_mod;
  const bool dir_ref = use_dir && !a.wo_a_ref && !a.wo_c_ref;
  const bool dir_mod = use_dir && !a.wo_a_mod && !a.wo_c_mod;
  const bool need_ref = (dir_ref || evi_ref) && !a.wo_c_ref;
  const bool need_mod = (dir_mod || evi_mod) && !a.wo_c_mod;

  Var p_r, p_m, w_r, w_m;
  guarded("anchors", [&] {
    if (need_ref) {
      p_r = a.wo_scd ? f_r : disentangle(f_r, f_c, p, shape);
      w_r = point_weights(f_c, f_r, p, kPointRefPrefix, shape);
    }
    if (need_mod) {
      p_m = a.wo_scd ? f_m : disentangle(f_m, f_c, p, shape);
      w_m = point_weights(f_c, f_m, p, kPointModPrefix, shape);
    }
    return zero;
  });
  t.anchors = build_anchors(f_c, p_r, p_m, w_r, w_m);

  if (use_dis || use_evi) {
    t.similarity = guarded("S(F_c,F_t)", [&] { return similarity_matrix(f_c, f_t, q, sim); });
  }
  if (use_dis) t.dis = guarded("L_dis", [&] { return contrastive_loss(t.similarity, cfg.tau); });
  if (use_dir) {
    t.dir = guarded("L_dir", [&] {
      t.geometry = build_geometry(t.anchors, f_c, f_t, dir_ref, dir_mod);
      return loss_dir(t.geometry.a_c, t.geometry.a_t, q, sim, cfg.tau, &t.degenerate_directions);
    });
  }
  if (use_evi) {
    t.evi = guarded("L_evi", [&] {
      if (evi_ref) {
        t.reliability_ref =
            reliability(channel_evidence(t.anchors.a_r, f_t, q, cfg.tau, cfg.activation), q);
      }
      if (evi_mod) {
        t.reliability_mod =
            reliability(channel_evidence(t.anchors.a_m, f_t, q, cfg.tau, cfg.activation), q);
      }
      return loss_evi(t.reliability_ref, t.reliability_mod, diagonal(t.similarity),
                      cfg.evidence_stop);
    });
  }

  Var total;
  auto add = [&](Var term) { total = total.valid() ? total + term : term; };
  if (use_dis) add(t.dis);
  if (use_dir) add(cfg.kappa * t.dir);
  if (use_evi) add(cfg.lambda * t.evi);
  t.total = total.valid() ? total : zero;
  return t;
}

LossBreakdown breakdown(const LossTerms& t) {
  return LossBreakdown{t.total.scalar(), t.dis.scalar(), t.dir.scalar(), t.evi.scalar()};
}

AdamState init_adam(const ParamSet& params) {
  AdamState s;
  for (const auto& [name, value] : params) {
    s.first[name] = Matrix::Zero(value.rows(), value.cols());
    s.second[name] = Matrix::Zero(value.rows(), value.cols());
  }
  return s;
}

void adamw_step(ParamSet& params, const ParamSet& grads, AdamState& state, const RunConfig& cfg) {
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (auto& [name, value] : params) {
    const Matrix& g = grads.at(name);
    Matrix& m = state.first.at(name);
    Matrix& v = state.second.at(name);
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    const Matrix step =
        (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps) + cfg.weight_decay * value.array();
    value -= cfg.learning_rate * step;
  }
}

double clip_global_norm(ParamSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) g *= scale;
  }
  return norm;
}

namespace {

constexpr std::string_view kParamsMagic = "RTRKP";

struct NamedTensor {
  std::string name;
  const Matrix* value;
};

std::vector<NamedTensor> checkpoint_tensors(const Checkpoint& c) {
  std::vector<NamedTensor> out;
  for (const auto& [n, v] : c.params) out.push_back({"param/" + n, &v});
  for (const auto& [n, v] : c.optimizer.first) out.push_back({"adam.m/" + n, &v});
  for (const auto& [n, v] : c.optimizer.second) out.push_back({"adam.v/" + n, &v});
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto tensors = checkpoint_tensors(c);
  ByteWriter body;
  body.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    body.u32(static_cast<std::uint32_t>(t.name.size()));
    body.bytes(t.name);
    body.u32(static_cast<std::uint32_t>(t.value->rows()));
    body.u32(static_cast<std::uint32_t>(t.value->cols()));
  }
  for (const auto& t : tensors) body.f64_matrix(*t.value);
  const std::uint32_t crc = crc32(body.buffer());

  ByteWriter file;
  file.bytes(kParamsMagic);
  file.u32(kCheckpointFormatVersion);
  file.bytes(body.buffer());
  file.u32(crc);
  write_file(dir / "params.bin", file.buffer());

  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["step"] = c.step;
  j["adam_step"] = c.optimizer.step;
  j["history_digest"] = c.history_digest;
  j["params_crc32"] = crc;
  j["config"] = to_json(c.config);
  json names = json::array();
  for (const auto& t : tensors) {
    names.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}});
  }
  j["tensors"] = std::move(names);
  write_file(dir / "ckpt.json", j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto meta_path = dir / "ckpt.json";
  const auto bin_path = dir / "params.bin";
  if (!std::filesystem::exists(meta_path) || !std::filesystem::exists(bin_path)) {
    throw MissingInputError("no checkpoint at " + dir.string());
  }
  json j;
  try {
    j = json::parse(read_file(meta_path));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("ckpt.json: ") + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format_version").get<std::uint32_t>() != kCheckpointFormatVersion) {
      throw FormatError("ckpt.json: unsupported format version");
    }
    c.step = j.at("step").get<std::size_t>();
    c.optimizer.step = j.at("adam_step").get<std::size_t>();
    c.history_digest = j.at("history_digest").get<std::uint32_t>();
    update_from_json(c.config, j.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("ckpt.json: ") + e.what());
  }

  const std::string bytes = read_file(bin_path);
  const std::size_t head = kParamsMagic.size() + 4;
  if (bytes.size() < head + 4 || std::string_view(bytes).substr(0, kParamsMagic.size()) != kParamsMagic) {
    throw FormatError("params.bin: bad magic");
  }
  ByteReader version(std::string_view(bytes).substr(kParamsMagic.size(), 4));
  if (version.u32() != kCheckpointFormatVersion) {
    throw FormatError("params.bin: unsupported format version");
  }
  const std::string_view body = std::string_view(bytes).substr(head, bytes.size() - head - 4);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
  const std::uint32_t stored = tail.u32();
  if (stored != crc32(body) || stored != j.at("params_crc32").get<std::uint32_t>()) {
    throw ChecksumError("params.bin: checksum mismatch");
  }

  ByteReader in(body);
  const std::uint32_t count = in.u32();
  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
  };
  std::vector<Entry> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = std::string(in.bytes(in.u32()));
    e.rows = in.u32();
    e.cols = in.u32();
    table.push_back(std::move(e));
  }
  for (const Entry& e : table) {
    Matrix m = in.f64_matrix(e.rows, e.cols);
    const auto slash = e.name.find('/');
    const std::string group = e.name.substr(0, slash);
    const std::string name = e.name.substr(slash + 1);
    if (group == "param") {
      c.params[name] = std::move(m);
    } else if (group == "adam.m") {
      c.optimizer.first[name] = std::move(m);
    } else if (group == "adam.v") {
      c.optimizer.second[name] = std::move(m);
    } else {
      throw FormatError("params.bin: unknown tensor group in '" + e.name + "'");
    }
  }
  if (in.remaining() != 0) throw FormatError("params.bin: trailing bytes");
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_line(const MetricsRow& row) {
  std::string line = std::to_string(row.step);
  if (row.loss) {
    line += "," + fmt(row.loss->total) + "," + fmt(row.loss->dis) + "," + fmt(row.loss->dir) + "," +
            fmt(row.loss->evi);
  } else {
    line += ",,,,";
  }
  if (row.validation) {
    for (std::size_t k : kReportKs) line += "," + fmt(row.validation->at(k));
  } else {
    line += ",,,";
  }
  return line;
}

TrainResult train(const RunConfig& cfg_in, const Dataset& data, const TrainOptions& opts) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const ModelShape shape = cfg.shape();
  const GeneratorConfig& gen = data.manifest.config;
  if (gen.queries != cfg.queries || gen.dim != cfg.dim) {
    throw std::invalid_argument("dataset is " + shape_string(gen.queries, gen.dim) +
                                " per sample but the run expects " +
                                shape_string(cfg.queries, cfg.dim));
  }
  const SimilarityConfig sim = cfg.similarity_config();

  TrainResult result;
  ParamSet params;
  AdamState adam;
  std::size_t step = 0;
  if (opts.resume != nullptr) {
    params = opts.resume->params;
    adam = opts.resume->optimizer;
    step = opts.resume->step;
  } else {
    params = init_params(shape, cfg.seed);
    adam = init_adam(params);
  }
  const std::size_t end = opts.stop_at > 0 ? std::min(opts.stop_at, cfg.steps) : cfg.steps;
  const std::size_t per_epoch = (data.train.size() + cfg.batch_size - 1) / cfg.batch_size;

  std::map<std::string, bool> got_gradient;
  for (const auto& [name, v] : params) got_gradient[name] = false;

  std::string csv = std::string(kMetricsHeader) + "\n";
  result.best_params = params;

  auto validate = [&](std::size_t at) {
    RecallReport r = evaluate_split(data.val, params, shape, sim, kReportKs);
    if (r.at(1) > result.best_val_r1) {
      result.best_val_r1 = r.at(1);
      result.best_params = params;
    }
    if (opts.log != nullptr) {
      *opts.log << "step " << at << " val R@1=" << r.at(1) << " R@5=" << r.at(5)
                << " R@10=" << r.at(10) << "\n";
    }
    return r;
  };

  std::optional<BatchSampler> sampler;
  std::size_t sampler_epoch = static_cast<std::size_t>(-1);
  for (; step < end; ++step) {
    MetricsRow row;
    row.step = step;
    if (cfg.validate_every > 0 && step % cfg.validate_every == 0) row.validation = validate(step);

    const std::size_t epoch = step / per_epoch;
    if (epoch != sampler_epoch) {
      sampler.emplace(data.train, cfg.batch_size, derive_seed(cfg.seed, epoch));
      sampler_epoch = epoch;
    }
    const TripletBatch batch = (*sampler)[step % per_epoch];

    Tape tape;
    const ParamVars vars = retrack::bind(tape, params, true);
    const LossTerms terms = total_loss(tape, batch, vars, cfg);
    row.loss = breakdown(terms);
    if (opts.on_step) opts.on_step(step, batch, terms);
    result.degenerate_directions += terms.degenerate_directions;
    if (!std::isfinite(row.loss->total)) throw DivergenceError("L_total", "non-finite total");

    ParamSet grads;
    if (terms.total.requires_grad()) tape.backward(terms.total);
    for (const auto& [name, v] : vars) {
      grads[name] = tape.grad(v);
      if (!grads[name].allFinite()) throw DivergenceError("gradient of " + name, "non-finite");
      if (!got_gradient[name] && grads[name].cwiseAbs().maxCoeff() > 0.0) got_gradient[name] = true;
    }
    if (cfg.clip_norm > 0.0) clip_global_norm(grads, cfg.clip_norm);
    adamw_step(params, grads, adam, cfg);

    csv += metrics_csv_line(row) + "\n";
    result.metrics.push_back(std::move(row));
  }
  if (end == cfg.steps && cfg.validate_every > 0 && !result.metrics.empty()) {
    MetricsRow row;
    row.step = end;
    row.validation = validate(end);
    csv += metrics_csv_line(row) + "\n";
    result.metrics.push_back(std::move(row));
  }
  if (result.best_val_r1 < 0.0) result.best_params = params;

  for (const auto& [name, seen] : got_gradient) {
    if (!seen) result.gradient_free.push_back(name);
  }
  result.metrics_csv = csv;
  result.final_state = Checkpoint{params, adam, step, cfg, crc32(csv)};

  if (opts.write_outputs) {
    if (cfg.output.empty()) throw std::invalid_argument("no output directory configured");
    const std::filesystem::path out(cfg.output);
    std::filesystem::create_directories(out);
    write_file(out / "metrics.csv", csv);
    save_checkpoint(result.final_state, out / "final");
    Checkpoint best = result.final_state;
    best.params = result.best_params;
    save_checkpoint(best, out / "best");
  }
  return result;
}

double AblationReport::mean_recall(const std::string& variant, std::size_t k) const {
  double acc = 0.0;
  int n = 0;
  for (const VariantRun& r : runs) {
    if (r.variant == variant) {
      acc += r.test.at(k);
      ++n;
    }
  }
  if (n == 0) throw std::out_of_range("no runs for variant '" + variant + "'");
  return acc / n;
}

json AblationReport::to_json() const {
  json j;
  j["dataset_crc32"] = dataset_crc32;
  json rows = json::array();
  for (const std::string& v : variants) {
    json row;
    row["variant"] = v;
    for (std::size_t k : kReportKs) row["R@" + std::to_string(k)] = mean_recall(v, k);
    json per_seed = json::array();
    for (const VariantRun& r : runs) {
      if (r.variant != v) continue;
      json s;
      s["seed"] = r.seed;
      for (std::size_t k : kReportKs) s["R@" + std::to_string(k)] = r.test.at(k);
      s["mean_S_Fc_Fm"] = r.test.bias.mean_sim_modification;
      per_seed.push_back(std::move(s));
    }
    row["seeds"] = std::move(per_seed);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

namespace {

/// Runs `tasks` on up to `jobs` threads; results keep task order.
template <typename R>
std::vector<R> run_parallel(std::vector<std::function<R()>> tasks, std::size_t jobs) {
  std::vector<R> out(tasks.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) out[i] = tasks[i]();
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < std::min(jobs, tasks.size()); ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) out[i] = tasks[i]();
    }));
  }
  for (auto& w : workers) w.get();
  return out;
}

}  // namespace

AblationReport ablate(const RunConfig& base, std::span<const std::string> variants,
                      const Dataset& data, std::span<const std::uint64_t> seeds, std::size_t jobs,
                      std::ostream* log) {
  if (seeds.empty()) throw std::invalid_argument("ablate: at least one seed required");
  AblationReport report;
  report.dataset_crc32 = data.manifest.payload_crc32;
  report.variants.push_back("full");
  for (const std::string& v : variants) {
    if (v == "full") continue;
    apply_variant(base, v);
    report.variants.push_back(v);
  }
  std::mutex log_mutex;
  std::vector<std::function<VariantRun()>> tasks;
  for (const std::string& v : report.variants) {
    for (std::uint64_t seed : seeds) {
      tasks.push_back([&, v, seed] {
        RunConfig cfg = apply_variant(base, v);
        cfg.seed = seed;
        cfg.validate_every = 0;
        const TrainResult r = train(cfg, data);
        VariantRun run{v, seed,
                       evaluate_split(data.test, r.final_state.params, cfg.shape(),
                                      cfg.similarity_config(), kReportKs)};
        if (log != nullptr) {
          std::lock_guard lock(log_mutex);
          *log << v << " seed " << seed << " test R@1=" << run.test.at(1) << "\n";
        }
        return run;
      });
    }
  }
  report.runs = run_parallel(std::move(tasks), jobs);
  return report;
}

std::vector<SweepPoint> sweep(const RunConfig& base, std::span<const double> kappas,
                              std::span<const double> lambdas, const Dataset& data,
                              std::size_t jobs, std::ostream* log) {
  const std::vector<double> ks = kappas.empty() ? std::vector<double>{base.kappa}
                                                : std::vector<double>(kappas.begin(), kappas.end());
  const std::vector<double> ls = lambdas.empty()
                                     ? std::vector<double>{base.lambda}
                                     : std::vector<double>(lambdas.begin(), lambdas.end());
  std::mutex log_mutex;
  std::vector<std::function<SweepPoint()>> tasks;
  for (double k : ks) {
    for (double l : ls) {
      tasks.push_back([&, k, l] {
        RunConfig cfg = base;
        cfg.kappa = k;
        cfg.lambda = l;
        cfg.validate_every = 0;
        const TrainResult r = train(cfg, data);
        SweepPoint pt{k, l,
                      evaluate_split(data.test, r.final_state.params, cfg.shape(),
                                     cfg.similarity_config(), kReportKs)};
        if (log != nullptr) {
          std::lock_guard lock(log_mutex);
          *log << "kappa=" << k << " lambda=" << l << " mean recall=" << pt.test.mean_recall
               << "\n";
        }
        return pt;
      });
    }
  }
  return run_parallel(std::move(tasks), jobs);
}

}  // namespace retrack
