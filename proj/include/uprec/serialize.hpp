#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "uprec/common.hpp"

namespace uprec {

// Little-endian fixed-width binary writer/reader for the dataset artifact and
// checkpoint containers. Doubles round-trip bit-exactly.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);
  ~BinaryWriter();

  void u8(uint8_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);
  void bytes(const void* data, size_t n);

  void i32_vec(const std::vector<int32_t>& v);
  void u8_vec(const std::vector<uint8_t>& v);
  void u64_vec(const std::vector<uint64_t>& v);
  void f64_vec(const std::vector<double>& v);
  void mat(const Mat& m);
  void vec(const Vec& v);

  bool good() const { return out_.good(); }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  int32_t i32() { return static_cast<int32_t>(u32()); }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64();
  std::string str();
  void bytes(void* data, size_t n);

  std::vector<int32_t> i32_vec();
  std::vector<uint8_t> u8_vec();
  std::vector<uint64_t> u64_vec();
  std::vector<double> f64_vec();
  Mat mat();
  Vec vec();

  bool exhausted();

 private:
  std::ifstream in_;
  std::string path_;
  void fail(const std::string& what);
};

// FNV-1a 64-bit, used for artifact integrity and determinism checks.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

}  // namespace uprec
