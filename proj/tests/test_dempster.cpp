#include "retrack/dempster.hpp"
#include "retrack/random.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace retrack;

namespace {

// Independent oracle: expand every tuple of focal elements, intersect, accumulate.
std::vector<double> enumerate(const std::vector<MassFunction>& sources, double* conflict) {
  const int n = sources.front().frame_size();
  std::vector<double> raw(std::size_t{1} << n, 0.0);
  std::vector<std::vector<std::pair<Subset, double>>> focal;
  for (const MassFunction& m : sources) {
    focal.emplace_back(m.focal().begin(), m.focal().end());
  }
  std::vector<std::size_t> idx(sources.size(), 0);
  while (true) {
    Subset inter = sources.front().frame();
    double w = 1.0;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      inter &= focal[s][idx[s]].first;
      w *= focal[s][idx[s]].second;
    }
    raw[inter] += w;
    std::size_t s = 0;
    while (s < idx.size() && ++idx[s] == focal[s].size()) idx[s++] = 0;
    if (s == idx.size()) break;
  }
  *conflict = raw[0];
  for (std::size_t a = 1; a < raw.size(); ++a) raw[a] /= (1.0 - raw[0]);
  raw[0] = 0.0;
  return raw;
}

MassFunction random_mass(NormalSampler& s, int frame) {
  MassFunction m(frame);
  const Subset full = (Subset{1} << frame) - 1;
  std::vector<double> w(full + 1, 0.0);
  double total = 0.0;
  for (Subset a = 1; a <= full; ++a) {
    if (s.uniform() < 0.6 || a == full) {
      w[a] = s.uniform() + 1e-3;
      total += w[a];
    }
  }
  for (Subset a = 1; a <= full; ++a) {
    if (w[a] > 0.0) m.set(a, w[a] / total);
  }
  return m;
}

}  // namespace

TEST_CASE("worked two-source example") {
  MassFunction m1(2), m2(2);
  m1.set(0b01, 0.6);
  m1.set(0b10, 0.4);
  m2.set(0b01, 0.7);
  m2.set(0b10, 0.3);
  const Combination c = dempster_combine(m1, m2);
  CHECK(std::abs(c.conflict - 0.46) < 1e-12);
  CHECK(std::abs(c.mass[0b01] - 0.42 / 0.54) < 1e-12);
  CHECK(std::abs(c.mass[0b01] - 0.777778) < 1e-6);
  CHECK(std::abs(c.mass[0b10] - 0.12 / 0.54) < 1e-12);
  CHECK(c.mass[0b11] == 0.0);
}

TEST_CASE("vacuous mass is neutral") {
  NormalSampler s(2);
  for (int frame = 1; frame <= 4; ++frame) {
    const MassFunction m = random_mass(s, frame);
    const Combination c = dempster_combine(m, MassFunction::vacuous(frame));
    CHECK(c.conflict == 0.0);
    CHECK(max_mass_difference(c.mass, m) < 1e-15);
  }
}

TEST_CASE("total conflict is rejected with its value") {
  MassFunction a(3), b(3);
  a.set(0b001, 1.0);
  b.set(0b100, 1.0);
  CHECK_THROWS_AS(dempster_combine(a, b), TotalConflictError);
  try {
    dempster_combine(a, b);
  } catch (const TotalConflictError& e) {
    CHECK(e.conflict() == 1.0);
  }
}

TEST_CASE("mass function validation") {
  MassFunction m(2);
  CHECK_THROWS(m.set(0, 0.5));
  CHECK_THROWS(m.set(0b100, 0.5));
  m.set(0b01, 0.5);
  CHECK_THROWS(m.validate());
  m.set(0b11, 0.5);
  CHECK_NOTHROW(m.validate());
  CHECK_THROWS(MassFunction(0));
  CHECK_THROWS(MassFunction(MassFunction::kMaxFrame + 1));
  CHECK_THROWS(dempster_combine(MassFunction::vacuous(2), MassFunction::vacuous(3)));
}

TEST_CASE("iterated combination equals one-shot enumeration") {
  NormalSampler s(7);
  for (int frame = 1; frame <= 4; ++frame) {
    for (int sources = 2; sources <= 5; ++sources) {
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<MassFunction> ms;
        for (int i = 0; i < sources; ++i) ms.push_back(random_mass(s, frame));
        double k = 0.0;
        const std::vector<double> oracle = enumerate(ms, &k);
        const Combination it = dempster_combine_all(ms);
        const Combination bf = dempster_brute_force(ms);
        for (Subset a = 1; a < oracle.size(); ++a) {
          CHECK(std::abs(it.mass[a] - oracle[a]) < 1e-12);
          CHECK(std::abs(bf.mass[a] - oracle[a]) < 1e-12);
        }
        CHECK(std::abs(it.conflict - k) < 1e-12);
        CHECK(std::abs(bf.conflict - k) < 1e-12);
        CHECK_NOTHROW(it.mass.validate(1e-12));
      }
    }
  }
}

TEST_CASE("combination is commutative and associative") {
  NormalSampler s(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int frame = 1 + trial % 4;
    const MassFunction a = random_mass(s, frame), b = random_mass(s, frame), c = random_mass(s, frame);
    CHECK(max_mass_difference(dempster_combine(a, b).mass, dempster_combine(b, a).mass) < 1e-12);
    const MassFunction left = dempster_combine(dempster_combine(a, b).mass, c).mass;
    const MassFunction right = dempster_combine(a, dempster_combine(b, c).mass).mass;
    CHECK(max_mass_difference(left, right) < 1e-12);
  }
}

TEST_CASE("self-test suite passes") {
  const DstSelfTestReport r = run_dst_self_test(0);
  CHECK(r.passed());
  CHECK(r.max_deviation() < 1e-12);
  CHECK(r.checks.size() >= 8);
}
