#ifndef RETRACK_DEMPSTER_HPP
#define RETRACK_DEMPSTER_HPP

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace retrack {

/// Subset of a hypothesis frame as a bitmask; bit i is hypothesis i.
using Subset = std::uint32_t;

/// Basic probability assignment over the non-empty subsets of a small frame.
class MassFunction {
 public:
  static constexpr int kMaxFrame = 8;

  explicit MassFunction(int frame_size);

  /// All mass on the whole frame.
  static MassFunction vacuous(int frame_size);

  int frame_size() const { return frame_size_; }
  Subset frame() const { return (Subset{1} << frame_size_) - 1; }

  /// Sets m(subset). The empty set and subsets outside the frame are rejected.
  void set(Subset subset, double mass);
  double operator[](Subset subset) const;
  const std::map<Subset, double>& focal() const { return masses_; }

  double total() const;
  /// Throws std::domain_error unless masses are >= 0 and sum to 1 within tol.
  void validate(double tol = 1e-12) const;

 private:
  int frame_size_;
  std::map<Subset, double> masses_;
};

/// Rejected fusion of fully conflicting sources.
class TotalConflictError : public std::domain_error {
 public:
  explicit TotalConflictError(double conflict);
  double conflict() const { return conflict_; }

 private:
  double conflict_;
};

struct Combination {
  MassFunction mass;
  /// Mass falling on the empty intersection before renormalization.
  double conflict = 0.0;
};

/// Dempster's rule for two sources on the same frame.
Combination dempster_combine(const MassFunction& a, const MassFunction& b);

/// Left fold of dempster_combine. `conflict` is 1 - prod(1 - K_i).
Combination dempster_combine_all(std::span<const MassFunction> sources);

/// One-shot enumeration over every tuple of focal sets, one per source.
Combination dempster_brute_force(std::span<const MassFunction> sources);

/// max |a(A) - b(A)| over all non-empty subsets.
double max_mass_difference(const MassFunction& a, const MassFunction& b);

struct DstSelfTestCheck {
  std::string name;
  bool passed = false;
  double max_deviation = 0.0;
  std::string detail;
};

struct DstSelfTestReport {
  std::vector<DstSelfTestCheck> checks;
  bool passed() const;
  double max_deviation() const;
};

/// Random and worked-example checks of the fusion rule and of the
/// evidence/Dirichlet closed forms.
DstSelfTestReport run_dst_self_test(std::uint64_t seed, int trials = 200,
                                    double tolerance = 1e-12);

}  // namespace retrack

#endif  // RETRACK_DEMPSTER_HPP
