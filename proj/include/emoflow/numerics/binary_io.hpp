#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Little-endian primitive IO shared by the binary record formats. Readers
// throw DataError on truncation instead of returning partial values.

namespace emoflow::numerics {

class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  /// u32 length prefix followed by the raw bytes.
  void string(const std::string& s);
  void matrix_data(const Eigen::MatrixXd& m);  // row-major f64
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : ByteReader(buf.data(), buf.size()) {}
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32();
  std::int64_t i64();
  double f64();
  void bytes(void* out, std::size_t n);
  std::string string();
  Eigen::MatrixXd matrix_data(Eigen::Index rows, Eigen::Index cols);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  void seek(std::size_t pos);

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

}  // namespace emoflow::numerics
