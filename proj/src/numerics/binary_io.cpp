#include "emoflow/numerics/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emoflow/errors.hpp"

namespace emoflow::numerics {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}
void ByteWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void ByteWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void ByteWriter::i32(std::int32_t v) { bytes(&v, sizeof v); }
void ByteWriter::i64(std::int64_t v) { bytes(&v, sizeof v); }
void ByteWriter::f64(double v) { bytes(&v, sizeof v); }
void ByteWriter::string(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}
void ByteWriter::matrix_data(const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

void ByteReader::bytes(void* out, std::size_t n) {
  if (n > remaining()) throw DataError("truncated record: needed " + std::to_string(n) + " bytes at offset " +
                                       std::to_string(pos_) + ", have " + std::to_string(remaining()));
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}
std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}
std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}
std::int32_t ByteReader::i32() {
  std::int32_t v;
  bytes(&v, sizeof v);
  return v;
}
std::int64_t ByteReader::i64() {
  std::int64_t v;
  bytes(&v, sizeof v);
  return v;
}
double ByteReader::f64() {
  double v;
  bytes(&v, sizeof v);
  return v;
}
std::string ByteReader::string() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}
Eigen::MatrixXd ByteReader::matrix_data(Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw DataError("negative matrix shape in record");
  if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 8 > remaining())
    throw DataError("truncated record: matrix data exceeds file size");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
  return m;
}
void ByteReader::seek(std::size_t pos) {
  if (pos > size_) throw DataError("seek past end of record");
  pos_ = pos;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failed for " + path);
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace emoflow::numerics
