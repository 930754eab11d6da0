#ifndef RETRACK_DIAGNOSTICS_HPP
#define RETRACK_DIAGNOSTICS_HPP

#include "retrack/config.hpp"
#include "retrack/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace retrack {

struct TermGradcheck {
  std::string term;  // L_dis, L_dir, L_evi, L_total
  GradcheckResult result;
  std::string worst_param;
};

/// Gradients of every loss term against central differences for one seed.
struct LossGradcheckReport {
  std::uint64_t seed = 0;
  std::size_t batch = 0;
  std::size_t parameters = 0;
  std::vector<TermGradcheck> terms;

  double max_rel_error() const;
};

/// Draws a small batch and a randomly perturbed parameter set from `seed`,
/// then checks all loss terms at once. Zero-initialized layers are perturbed
/// too, so every parameter carries gradient.
LossGradcheckReport loss_gradcheck(const RunConfig& cfg, std::uint64_t seed, std::size_t batch = 3,
                                   double h = 1e-5);

}  // namespace retrack

#endif  // RETRACK_DIAGNOSTICS_HPP
