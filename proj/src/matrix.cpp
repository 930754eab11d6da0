#include "retrack/matrix.hpp"

#include <cmath>
#include <sstream>

namespace retrack {

DegenerateRowError::DegenerateRowError(Eigen::Index row, double norm)
    : std::domain_error("row " + std::to_string(row) + " has near-zero norm " +
                        std::to_string(norm)),
      row_(row),
      norm_(norm) {}

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

void throw_shape_error(const char* op, Eigen::Index ar, Eigen::Index ac, Eigen::Index br,
                       Eigen::Index bc) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(ar, ac) + " vs " +
                   shape_string(br, bc));
}

double softmax_cross_entropy_row(const Eigen::Ref<const Vector>& logits, Eigen::Index target) {
  if (target < 0 || target >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy_row: target " + std::to_string(target) +
                            " outside " + std::to_string(logits.size()) + " logits");
  }
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return lse - logits(target);
}

}  // namespace retrack
