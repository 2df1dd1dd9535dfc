#include "uprec/serialize.hpp"

#include <array>

namespace uprec {

BinaryWriter::BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
  if (!out_) throw DataError("cannot open for writing: " + path);
}

BinaryWriter::~BinaryWriter() = default;

void BinaryWriter::u8(uint8_t v) { out_.put(static_cast<char>(v)); }

void BinaryWriter::u32(uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(b.data(), 4);
}

void BinaryWriter::u64(uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(b.data(), 8);
}

void BinaryWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::bytes(const void* data, size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::i32_vec(const std::vector<int32_t>& v) {
  u64(v.size());
  for (int32_t x : v) i32(x);
}

void BinaryWriter::u8_vec(const std::vector<uint8_t>& v) {
  u64(v.size());
  for (uint8_t x : v) u8(x);
}

void BinaryWriter::u64_vec(const std::vector<uint64_t>& v) {
  u64(v.size());
  for (uint64_t x : v) u64(x);
}

void BinaryWriter::f64_vec(const std::vector<double>& v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void BinaryWriter::mat(const Mat& m) {
  u64(static_cast<uint64_t>(m.rows()));
  u64(static_cast<uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
}

void BinaryWriter::vec(const Vec& v) {
  u64(static_cast<uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

BinaryReader::BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw DataError("cannot open for reading: " + path);
}

void BinaryReader::fail(const std::string& what) {
  throw DataError("corrupt or truncated file (" + what + "): " + path_);
}

uint8_t BinaryReader::u8() {
  int c = in_.get();
  if (c == EOF) fail("u8");
  return static_cast<uint8_t>(c);
}

uint32_t BinaryReader::u32() {
  std::array<unsigned char, 4> b;
  in_.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in_) fail("u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t BinaryReader::u64() {
  std::array<unsigned char, 8> b;
  in_.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in_) fail("u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double BinaryReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string BinaryReader::str() {
  uint64_t n = u64();
  std::string s(n, '\0');
  in_.read(s.data(), static_cast<std::streamsize>(n));
  if (!in_) fail("str");
  return s;
}

void BinaryReader::bytes(void* data, size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in_) fail("bytes");
}

std::vector<int32_t> BinaryReader::i32_vec() {
  uint64_t n = u64();
  std::vector<int32_t> v(n);
  for (auto& x : v) x = i32();
  return v;
}

std::vector<uint8_t> BinaryReader::u8_vec() {
  uint64_t n = u64();
  std::vector<uint8_t> v(n);
  for (auto& x : v) x = u8();
  return v;
}

std::vector<uint64_t> BinaryReader::u64_vec() {
  uint64_t n = u64();
  std::vector<uint64_t> v(n);
  for (auto& x : v) x = u64();
  return v;
}

std::vector<double> BinaryReader::f64_vec() {
  uint64_t n = u64();
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

Mat BinaryReader::mat() {
  uint64_t r = u64();
  uint64_t c = u64();
  Mat m(r, c);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = f64();
  return m;
}

Vec BinaryReader::vec() {
  uint64_t n = u64();
  Vec v(n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  return v;
}

bool BinaryReader::exhausted() { return in_.peek() == std::ifstream::traits_type::eof(); }

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace uprec
