#ifndef RETRACK_TEST_UTIL_HPP
#define RETRACK_TEST_UTIL_HPP

#include "retrack/random.hpp"
#include "retrack/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace retrack::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                            double stddev = 1.0) {
  NormalSampler s(seed);
  return s.matrix(rows, cols, stddev);
}

/// A generic scalar read-out: sum(v .* W) for a fixed random W.
inline Var probe(Var v, std::uint64_t seed) {
  return sum(hadamard(v, v.tape()->constant(random_matrix(v.rows(), v.cols(), seed ^ 0x9e37))));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("retrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace retrack::testing

#endif  // RETRACK_TEST_UTIL_HPP
