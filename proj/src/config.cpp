#include "retrack/config.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace retrack {

using nlohmann::json;

void RunConfig::validate() {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip norm must be >= 0");
  if (frames < 1) throw std::invalid_argument("N_f must be >= 1");
  shape().validate();

  AblationFlags& a = ablation;
  if (a.wo_scd) {
    a.wo_c_ref = false;
    a.wo_c_mod = false;
  }
  if (a.wo_c_ref && a.wo_c_mod) {
    throw std::invalid_argument("wo_C_ref and wo_C_mod together remove every contribution");
  }
  const bool ref_dir = !a.wo_a_ref && !a.wo_c_ref;
  const bool mod_dir = !a.wo_a_mod && !a.wo_c_mod;
  if (!a.wo_ldir && !ref_dir && !mod_dir) {
    throw std::invalid_argument("the direction-oriented term has no anchor displacement left");
  }
  if (a.wo_evi_ref && a.wo_evi_mod) {
    throw std::invalid_argument("wo_Evi_ref with wo_Evi_mod: use wo_Levi instead");
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["kappa"] = c.kappa;
  j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["Q"] = c.queries;
  j["D"] = c.dim;
  j["N_f"] = c.frames;
  j["heads"] = c.heads;
  j["B"] = c.batch_size;
  j["lr"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["clip_norm"] = c.clip_norm;
  j["steps"] = c.steps;
  j["validate_every"] = c.validate_every;
  j["seed"] = c.seed;
  j["similarity"] = to_string(c.similarity);
  j["activation"] = to_string(c.activation);
  j["evidence_stop_gradient"] = to_string(c.evidence_stop);
  j["wo_C_ref"] = c.ablation.wo_c_ref;
  j["wo_C_mod"] = c.ablation.wo_c_mod;
  j["wo_SCD"] = c.ablation.wo_scd;
  j["wo_Ldis"] = c.ablation.wo_ldis;
  j["wo_A_ref"] = c.ablation.wo_a_ref;
  j["wo_A_mod"] = c.ablation.wo_a_mod;
  j["wo_Ldir"] = c.ablation.wo_ldir;
  j["wo_Evi_ref"] = c.ablation.wo_evi_ref;
  j["wo_Evi_mod"] = c.ablation.wo_evi_mod;
  j["wo_Levi"] = c.ablation.wo_levi;
  j["dataset"] = c.dataset;
  j["output"] = c.output;
  return j;
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void update_from_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::vector<std::string> known = {
      "kappa", "lambda", "tau", "Q", "D", "N_f", "heads", "B", "lr", "weight_decay",
      "adam_beta1", "adam_beta2", "adam_eps", "clip_norm", "steps", "validate_every", "seed",
      "similarity", "activation", "evidence_stop_gradient", "wo_C_ref", "wo_C_mod", "wo_SCD",
      "wo_Ldis", "wo_A_ref", "wo_A_mod", "wo_Ldir", "wo_Evi_ref", "wo_Evi_mod", "wo_Levi",
      "dataset", "output"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  read(j, "kappa", c.kappa);
  read(j, "lambda", c.lambda);
  read(j, "tau", c.tau);
  read(j, "Q", c.queries);
  read(j, "D", c.dim);
  read(j, "N_f", c.frames);
  read(j, "heads", c.heads);
  read(j, "B", c.batch_size);
  read(j, "lr", c.learning_rate);
  read(j, "weight_decay", c.weight_decay);
  read(j, "adam_beta1", c.adam_beta1);
  read(j, "adam_beta2", c.adam_beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "clip_norm", c.clip_norm);
  read(j, "steps", c.steps);
  read(j, "validate_every", c.validate_every);
  read(j, "seed", c.seed);
  std::string s;
  if (j.contains("similarity")) {
    read(j, "similarity", s);
    c.similarity = similarity_mode_from_string(s);
  }
  if (j.contains("activation")) {
    read(j, "activation", s);
    c.activation = evidence_activation_from_string(s);
  }
  if (j.contains("evidence_stop_gradient")) {
    read(j, "evidence_stop_gradient", s);
    c.evidence_stop = evidence_stop_gradient_from_string(s);
  }
  read(j, "wo_C_ref", c.ablation.wo_c_ref);
  read(j, "wo_C_mod", c.ablation.wo_c_mod);
  read(j, "wo_SCD", c.ablation.wo_scd);
  read(j, "wo_Ldis", c.ablation.wo_ldis);
  read(j, "wo_A_ref", c.ablation.wo_a_ref);
  read(j, "wo_A_mod", c.ablation.wo_a_mod);
  read(j, "wo_Ldir", c.ablation.wo_ldir);
  read(j, "wo_Evi_ref", c.ablation.wo_evi_ref);
  read(j, "wo_Evi_mod", c.ablation.wo_evi_mod);
  read(j, "wo_Levi", c.ablation.wo_levi);
  read(j, "dataset", c.dataset);
  read(j, "output", c.output);
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "paper-scale") {
    c.frames = 4;
    c.queries = 32 * c.frames;
    c.dim = 256;
    c.heads = 8;
    c.batch_size = 64;
    c.learning_rate = 2e-5;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "full",     "wo_C_ref", "wo_C_mod",   "wo_SCD",     "wo_Ldis",  "wo_A_ref", "wo_A_mod",
      "wo_Ldir",  "wo_Evi_ref", "wo_Evi_mod", "wo_Levi", "w_RELU",   "w_Softplus"};
  return names;
}

RunConfig apply_variant(RunConfig c, const std::string& v) {
  AblationFlags& a = c.ablation;
  if (v == "full") {
  } else if (v == "wo_C_ref") {
    a.wo_c_ref = true;
  } else if (v == "wo_C_mod") {
    a.wo_c_mod = true;
  } else if (v == "wo_SCD") {
    a.wo_scd = true;
  } else if (v == "wo_Ldis") {
    a.wo_ldis = true;
  } else if (v == "wo_A_ref") {
    a.wo_a_ref = true;
  } else if (v == "wo_A_mod") {
    a.wo_a_mod = true;
  } else if (v == "wo_Ldir") {
    a.wo_ldir = true;
  } else if (v == "wo_Evi_ref") {
    a.wo_evi_ref = true;
  } else if (v == "wo_Evi_mod") {
    a.wo_evi_mod = true;
  } else if (v == "wo_Levi") {
    a.wo_levi = true;
  } else if (v == "w_RELU") {
    c.activation = EvidenceActivation::kRelu;
  } else if (v == "w_Softplus") {
    c.activation = EvidenceActivation::kSoftplus;
  } else {
    throw std::invalid_argument("unknown ablation variant '" + v + "'");
  }
  return c;
}

}  // namespace retrack
