#ifndef RETRACK_EVIDENCE_HPP
#define RETRACK_EVIDENCE_HPP

#include "retrack/tape.hpp"

#include <string>

namespace retrack {

enum class EvidenceActivation { kExp, kRelu, kSoftplus };

std::string to_string(EvidenceActivation act);
EvidenceActivation evidence_activation_from_string(const std::string& s);

enum class EvidenceStream { kReference, kModification };

/// Per-channel evidence of an anchor against the target.
///
/// Rows of both inputs are L2-normalized; channel q of each sample gets
/// act(max over target rows of <anchor_q, target_row> / tau). Inputs are
/// row-stacked (n*Q) x D, the result is (n*Q) x 1.
Var channel_evidence(Var anchor, Var f_t, Eigen::Index queries, double tau,
                     EvidenceActivation act = EvidenceActivation::kExp);

/// Single-sample evidence vector (length Q).
Vector channel_evidence(const Matrix& anchor, const Matrix& f_t, double tau,
                        EvidenceActivation act = EvidenceActivation::kExp);

/// Per-sample reliability 1 - Q / sum_q (e_q + 1) for stacked (n*Q) x 1 evidence; n x 1.
Var reliability(Var evidence, Eigen::Index queries);

struct EvidenceReport {
  Vector evidence;
  Vector belief;
  double uncertainty = 1.0;
  double reliability = 0.0;
  EvidenceStream stream = EvidenceStream::kReference;
};

/// Belief masses b_q = e_q / sum(e + 1), uncertainty Q / sum(e + 1), and
/// reliability sum(b). Throws std::invalid_argument on negative evidence.
EvidenceReport belief_and_reliability(const Vector& evidence,
                                      EvidenceStream stream = EvidenceStream::kReference);

/// Dirichlet view of per-channel evidence: alpha = e + 1.
struct DirichletParams {
  Vector alpha;
  double total_strength = 0.0;

  /// 1 - K / S, the closed form obtained from the total strength.
  double reliability() const;
};

DirichletParams evidence_to_dirichlet(const Vector& evidence);

enum class EvidenceStopGradient { kNone, kReliability, kSimilarity };

std::string to_string(EvidenceStopGradient s);
EvidenceStopGradient evidence_stop_gradient_from_string(const std::string& s);

/// Mean over samples of (R_r - S)^2 + (R_m - S)^2 with n x 1 reliabilities and
/// similarities. An empty reliability drops its term; both empty is an error.
Var loss_evi(Var reliability_ref, Var reliability_mod, Var similarity,
             EvidenceStopGradient stop = EvidenceStopGradient::kNone);

}  // namespace retrack

#endif  // RETRACK_EVIDENCE_HPP
