#include "retrack/dempster.hpp"

#include "retrack/evidence.hpp"
#include "retrack/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace retrack {

MassFunction::MassFunction(int frame_size) : frame_size_(frame_size) {
  if (frame_size < 1 || frame_size > kMaxFrame) {
    throw std::invalid_argument("frame size must lie in [1, " + std::to_string(kMaxFrame) + "]");
  }
}

MassFunction MassFunction::vacuous(int frame_size) {
  MassFunction m(frame_size);
  m.set(m.frame(), 1.0);
  return m;
}

void MassFunction::set(Subset subset, double mass) {
  if (subset == 0) throw std::invalid_argument("the empty set carries no mass");
  if ((subset & ~frame()) != 0) throw std::invalid_argument("subset outside the frame");
  if (mass == 0.0) {
    masses_.erase(subset);
  } else {
    masses_[subset] = mass;
  }
}

double MassFunction::operator[](Subset subset) const {
  auto it = masses_.find(subset);
  return it == masses_.end() ? 0.0 : it->second;
}

double MassFunction::total() const {
  double t = 0.0;
  for (const auto& [s, m] : masses_) t += m;
  return t;
}

void MassFunction::validate(double tol) const {
  for (const auto& [s, m] : masses_) {
    if (!(m >= 0.0)) throw std::domain_error("negative mass on subset " + std::to_string(s));
  }
  if (std::abs(total() - 1.0) > tol) {
    throw std::domain_error("masses sum to " + std::to_string(total()));
  }
}

TotalConflictError::TotalConflictError(double conflict)
    : std::domain_error("total conflict (K = " + std::to_string(conflict) +
                        "): the evidence cannot be fused"),
      conflict_(conflict) {}

namespace {

void require_same_frame(const MassFunction& a, const MassFunction& b) {
  if (a.frame_size() != b.frame_size()) {
    throw std::invalid_argument("mass functions are defined on different frames");
  }
}

Combination normalize(MassFunction joint, double conflict, int frame_size) {
  if (conflict >= 1.0 || joint.focal().empty()) throw TotalConflictError(conflict);
  const double scale = 1.0 / (1.0 - conflict);
  MassFunction out(frame_size);
  for (const auto& [s, m] : joint.focal()) out.set(s, m * scale);
  return Combination{std::move(out), conflict};
}

}  // namespace

Combination dempster_combine(const MassFunction& a, const MassFunction& b) {
  require_same_frame(a, b);
  std::map<Subset, double> joint;
  double conflict = 0.0;
  for (const auto& [sa, ma] : a.focal()) {
    for (const auto& [sb, mb] : b.focal()) {
      const Subset both = sa & sb;
      if (both == 0) {
        conflict += ma * mb;
      } else {
        joint[both] += ma * mb;
      }
    }
  }
  MassFunction unnormalized(a.frame_size());
  for (const auto& [s, m] : joint) unnormalized.set(s, m);
  return normalize(std::move(unnormalized), conflict, a.frame_size());
}

Combination dempster_combine_all(std::span<const MassFunction> sources) {
  if (sources.empty()) throw std::invalid_argument("no sources to combine");
  Combination acc{sources.front(), 0.0};
  double keep = 1.0;
  for (std::size_t i = 1; i < sources.size(); ++i) {
    Combination next = dempster_combine(acc.mass, sources[i]);
    keep *= 1.0 - next.conflict;
    acc.mass = std::move(next.mass);
  }
  acc.conflict = 1.0 - keep;
  return acc;
}

Combination dempster_brute_force(std::span<const MassFunction> sources) {
  if (sources.empty()) throw std::invalid_argument("no sources to combine");
  const int n = sources.front().frame_size();
  for (const MassFunction& s : sources) require_same_frame(sources.front(), s);

  // Every non-empty subset for every source, zero masses included.
  const Subset frame = sources.front().frame();
  const std::size_t k = sources.size();
  std::vector<Subset> pick(k, 1);
  std::vector<double> joint(static_cast<std::size_t>(frame) + 1, 0.0);
  double conflict = 0.0;
  while (true) {
    double product = 1.0;
    Subset meet = frame;
    for (std::size_t i = 0; i < k; ++i) {
      product *= sources[i][pick[i]];
      meet &= pick[i];
    }
    if (meet == 0) {
      conflict += product;
    } else {
      joint[meet] += product;
    }
    std::size_t i = 0;
    while (i < k && pick[i] == frame) pick[i++] = 1;
    if (i == k) break;
    ++pick[i];
  }
  MassFunction unnormalized(n);
  for (Subset s = 1; s <= frame; ++s) {
    if (joint[s] != 0.0) unnormalized.set(s, joint[s]);
  }
  return normalize(std::move(unnormalized), conflict, n);
}

double max_mass_difference(const MassFunction& a, const MassFunction& b) {
  require_same_frame(a, b);
  double worst = 0.0;
  for (Subset s = 1; s <= a.frame(); ++s) worst = std::max(worst, std::abs(a[s] - b[s]));
  return worst;
}

bool DstSelfTestReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

double DstSelfTestReport::max_deviation() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.max_deviation);
  return worst;
}

namespace {

/// Random BPA with a handful of focal sets; the whole frame always keeps some
/// mass so that no combination is in total conflict.
MassFunction random_mass(NormalSampler& rng, int frame_size) {
  MassFunction m(frame_size);
  const Subset frame = m.frame();
  const int focal = 1 + static_cast<int>(rng.uniform() * 4.0);
  std::vector<std::pair<Subset, double>> draws;
  double total = 0.0;
  for (int i = 0; i < focal; ++i) {
    const Subset s = 1 + static_cast<Subset>(rng.uniform() * static_cast<double>(frame));
    const double w = 0.05 + rng.uniform();
    draws.emplace_back(std::min(s, frame), w);
    total += w;
  }
  const double whole = 0.05 + 0.3 * rng.uniform();
  draws.emplace_back(frame, whole);
  total += whole;
  std::map<Subset, double> merged;
  for (const auto& [s, w] : draws) merged[s] += w / total;
  for (const auto& [s, w] : merged) m.set(s, w);
  return m;
}

}  // namespace

DstSelfTestReport run_dst_self_test(std::uint64_t seed, int trials, double tolerance) {
  DstSelfTestReport report;
  NormalSampler rng(seed);

  auto add = [&](std::string name, double deviation, bool ok, std::string detail = {}) {
    report.checks.push_back({std::move(name), ok && deviation <= tolerance, deviation,
                             std::move(detail)});
  };

  // Worked two-hypothesis example.
  {
    MassFunction m1(2), m2(2);
    m1.set(0b01, 0.6);
    m1.set(0b10, 0.4);
    m2.set(0b01, 0.7);
    m2.set(0b10, 0.3);
    const Combination c = dempster_combine(m1, m2);
    const double dev =
        std::max({std::abs(c.conflict - 0.46), std::abs(c.mass[0b01] - 0.42 / 0.54),
                  std::abs(c.mass[0b10] - 0.12 / 0.54)});
    std::ostringstream os;
    os << "K=" << c.conflict << " m(A)=" << c.mass[0b01];
    add("worked-example", dev, true, os.str());
  }

  // Vacuous source is neutral.
  {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const int n = 1 + t % 4;
      const MassFunction m = random_mass(rng, n);
      worst = std::max(worst, max_mass_difference(dempster_combine(m, MassFunction::vacuous(n)).mass, m));
    }
    add("vacuous-neutral", worst, true);
  }

  // Total conflict is rejected.
  {
    MassFunction a(3), b(3);
    a.set(0b001, 1.0);
    b.set(0b100, 1.0);
    bool rejected = false;
    double k = 0.0;
    try {
      dempster_combine(a, b);
    } catch (const TotalConflictError& e) {
      rejected = true;
      k = e.conflict();
    }
    add("total-conflict-rejected", 0.0, rejected && k == 1.0);
  }

  // Iterated pairwise fusion against one-shot enumeration, plus algebra.
  {
    double iterated = 0.0;
    double commutative = 0.0;
    double associative = 0.0;
    double normalized = 0.0;
    for (int t = 0; t < trials; ++t) {
      const int n = 1 + t % 4;
      const std::size_t sources = 2 + static_cast<std::size_t>(t / 4) % 4;
      std::vector<MassFunction> ms;
      for (std::size_t i = 0; i < sources; ++i) ms.push_back(random_mass(rng, n));
      const Combination fold = dempster_combine_all(ms);
      const Combination brute = dempster_brute_force(ms);
      iterated = std::max({iterated, max_mass_difference(fold.mass, brute.mass),
                           std::abs(fold.conflict - brute.conflict)});
      normalized = std::max(normalized, std::abs(fold.mass.total() - 1.0));

      commutative = std::max(commutative, max_mass_difference(dempster_combine(ms[0], ms[1]).mass,
                                                              dempster_combine(ms[1], ms[0]).mass));
      if (sources >= 3) {
        const auto left = dempster_combine(dempster_combine(ms[0], ms[1]).mass, ms[2]).mass;
        const auto right = dempster_combine(ms[0], dempster_combine(ms[1], ms[2]).mass).mass;
        associative = std::max(associative, max_mass_difference(left, right));
      }
    }
    add("iterated-equals-brute-force", iterated, true);
    add("commutative", commutative, true);
    add("associative", associative, true);
    add("fused-mass-normalized", normalized, true);
  }

  // Subjective-logic side: belief + uncertainty = 1, and the Dirichlet
  // closed form agrees with the summed beliefs.
  {
    double norm = 0.0;
    double closed = 0.0;
    bool in_range = true;
    for (int t = 0; t < 1000; ++t) {
      const Eigen::Index q = 1 + t % 16;
      Vector e(q);
      for (Eigen::Index i = 0; i < q; ++i) e(i) = std::exp(10.0 * (2.0 * rng.uniform() - 1.0));
      const EvidenceReport r = belief_and_reliability(e);
      const DirichletParams d = evidence_to_dirichlet(e);
      norm = std::max(norm, std::abs(r.belief.sum() + r.uncertainty - 1.0));
      closed = std::max(closed, std::abs(r.reliability - d.reliability()));
      in_range = in_range && r.reliability >= 0.0 && r.reliability < 1.0;
    }
    add("belief-plus-uncertainty", norm, true);
    add("reliability-closed-form", closed, in_range);
  }
  return report;
}

}  // namespace retrack
