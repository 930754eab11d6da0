#include "retrack/evidence.hpp"

#include <cmath>
#include <stdexcept>

namespace retrack {

std::string to_string(EvidenceActivation act) {
  switch (act) {
    case EvidenceActivation::kExp: return "exp";
    case EvidenceActivation::kRelu: return "relu";
    case EvidenceActivation::kSoftplus: return "softplus";
  }
  return "?";
}

EvidenceActivation evidence_activation_from_string(const std::string& s) {
  if (s == "exp") return EvidenceActivation::kExp;
  if (s == "relu") return EvidenceActivation::kRelu;
  if (s == "softplus") return EvidenceActivation::kSoftplus;
  throw std::invalid_argument("unknown evidence activation '" + s + "'");
}

std::string to_string(EvidenceStopGradient s) {
  switch (s) {
    case EvidenceStopGradient::kNone: return "none";
    case EvidenceStopGradient::kReliability: return "reliability";
    case EvidenceStopGradient::kSimilarity: return "similarity";
  }
  return "?";
}

EvidenceStopGradient evidence_stop_gradient_from_string(const std::string& s) {
  if (s == "none") return EvidenceStopGradient::kNone;
  if (s == "reliability") return EvidenceStopGradient::kReliability;
  if (s == "similarity") return EvidenceStopGradient::kSimilarity;
  throw std::invalid_argument("unknown stop-gradient target '" + s + "'");
}

Var channel_evidence(Var anchor, Var f_t, Eigen::Index queries, double tau,
                     EvidenceActivation act) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const Var na = l2_normalize_rows(anchor);
  const Var nt = l2_normalize_rows(f_t);
  const Var logits = (1.0 / tau) * max_rows(block_matmul_nt(na, nt, queries));
  switch (act) {
    case EvidenceActivation::kExp: return exp(logits);
    case EvidenceActivation::kRelu: return relu(logits);
    case EvidenceActivation::kSoftplus: return softplus(logits);
  }
  throw std::invalid_argument("unknown evidence activation");
}

Vector channel_evidence(const Matrix& anchor, const Matrix& f_t, double tau,
                        EvidenceActivation act) {
  require_same_shape("channel_evidence", anchor, f_t);
  Tape tape;
  return channel_evidence(tape.constant(anchor), tape.constant(f_t), anchor.rows(), tau, act)
      .value()
      .col(0);
}

Var reliability(Var evidence, Eigen::Index queries) {
  const Var strength = segment_sum_rows(add_scalar(evidence, 1.0), queries);
  return add_scalar(-static_cast<double>(queries) * reciprocal(strength), 1.0);
}

EvidenceReport belief_and_reliability(const Vector& evidence, EvidenceStream stream) {
  if (evidence.size() == 0) throw std::invalid_argument("empty evidence vector");
  if ((evidence.array() < 0.0).any() || !evidence.allFinite()) {
    throw std::invalid_argument("evidence must be finite and >= 0");
  }
  const double strength = (evidence.array() + 1.0).sum();
  EvidenceReport r;
  r.evidence = evidence;
  r.belief = evidence / strength;
  r.uncertainty = static_cast<double>(evidence.size()) / strength;
  r.reliability = r.belief.sum();
  r.stream = stream;
  return r;
}

double DirichletParams::reliability() const {
  return 1.0 - static_cast<double>(alpha.size()) / total_strength;
}

DirichletParams evidence_to_dirichlet(const Vector& evidence) {
  if ((evidence.array() < 0.0).any() || !evidence.allFinite()) {
    throw std::invalid_argument("evidence must be finite and >= 0");
  }
  DirichletParams d;
  d.alpha = evidence.array() + 1.0;
  d.total_strength = d.alpha.sum();
  return d;
}

Var loss_evi(Var reliability_ref, Var reliability_mod, Var similarity, EvidenceStopGradient stop) {
  if (!reliability_ref.valid() && !reliability_mod.valid()) {
    throw std::invalid_argument("loss_evi: both evidence terms removed");
  }
  const Var s = stop == EvidenceStopGradient::kSimilarity ? stop_gradient(similarity) : similarity;
  auto term = [&](Var r) {
    const Var rr = stop == EvidenceStopGradient::kReliability ? stop_gradient(r) : r;
    return sum(square(rr - s));
  };
  Var total;
  if (reliability_ref.valid()) total = term(reliability_ref);
  if (reliability_mod.valid()) {
    const Var t = term(reliability_mod);
    total = total.valid() ? total + t : t;
  }
  return (1.0 / static_cast<double>(similarity.rows())) * total;
}

}  // namespace retrack
