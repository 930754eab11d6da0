#ifndef RETRACK_BINARY_IO_HPP
#define RETRACK_BINARY_IO_HPP

#include "retrack/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace retrack {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored and recomputed CRC32 disagree.
class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

/// A required file or directory does not exist.
class MissingInputError : public IoError {
 public:
  using IoError::IoError;
};

/// Unknown magic bytes or format version.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

std::uint32_t crc32(std::string_view bytes);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view b) { buf_.append(b); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);

  template <typename Derived>
  void f32_matrix(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f32(static_cast<float>(m(r, c)));
  }
  template <typename Derived>
  void f64_matrix(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(static_cast<double>(m(r, c)));
  }

  const std::string& buffer() const { return buf_; }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian byte source over a borrowed buffer. Reads past the end throw FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::string_view bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  Matrix f32_matrix(Eigen::Index rows, Eigen::Index cols);
  Matrix f64_matrix(Eigen::Index rows, Eigen::Index cols);

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames into place.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Rounds every entry through 32-bit storage.
Matrix round_to_f32(const Matrix& m);

}  // namespace retrack

#endif  // RETRACK_BINARY_IO_HPP
