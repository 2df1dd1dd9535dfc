#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unistd.h>

#include "uprec/common.hpp"
#include "uprec/serialize.hpp"

using namespace uprec;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  std::string path;
  TempFile() {
    static int c = 0;
    path = (fs::temp_directory_path() /
            ("uprec_ser_" + std::to_string(::getpid()) + "_" + std::to_string(c++)))
               .string();
  }
  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

std::string raw_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("integers round-trip little-endian") {
  TempFile f;
  {
    BinaryWriter w(f.path);
    w.u8(0xAB);
    w.u32(0x01020304u);
    w.u64(0x1122334455667788ull);
    w.i32(-7);
    w.i64(-1234567890123ll);
  }
  std::string buf = raw_bytes(f.path);
  REQUIRE(buf.size() == 1 + 4 + 8 + 4 + 8);
  // u32 bytes after the leading u8 must be least-significant first.
  CHECK(static_cast<unsigned char>(buf[1]) == 0x04);
  CHECK(static_cast<unsigned char>(buf[2]) == 0x03);
  CHECK(static_cast<unsigned char>(buf[3]) == 0x02);
  CHECK(static_cast<unsigned char>(buf[4]) == 0x01);

  BinaryReader r(f.path);
  CHECK(r.u8() == 0xAB);
  CHECK(r.u32() == 0x01020304u);
  CHECK(r.u64() == 0x1122334455667788ull);
  CHECK(r.i32() == -7);
  CHECK(r.i64() == -1234567890123ll);
  CHECK(r.exhausted());
}

TEST_CASE("f64 round-trip is bit-exact") {
  const double values[] = {0.0,
                           -0.0,
                           1.0,
                           -1.0 / 3.0,
                           std::numeric_limits<double>::min(),
                           std::numeric_limits<double>::denorm_min(),
                           std::numeric_limits<double>::max(),
                           std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::quiet_NaN()};
  TempFile f;
  {
    BinaryWriter w(f.path);
    for (double v : values) w.f64(v);
  }
  BinaryReader r(f.path);
  for (double v : values) {
    double back = r.f64();
    uint64_t a, b;
    std::memcpy(&a, &v, 8);
    std::memcpy(&b, &back, 8);
    CHECK(a == b);
  }
}

TEST_CASE("strings and vectors round-trip") {
  TempFile f;
  {
    BinaryWriter w(f.path);
    w.str("");
    w.str("hello\tworld\n");
    w.i32_vec({1, -2, 3});
    w.f64_vec({0.5, -0.25});
    w.u8_vec({uint8_t{0}, uint8_t{1}, uint8_t{255}});
    w.u64_vec({42});
  }
  BinaryReader r(f.path);
  CHECK(r.str() == "");
  CHECK(r.str() == "hello\tworld\n");
  CHECK(r.i32_vec() == std::vector<int32_t>{1, -2, 3});
  CHECK(r.f64_vec() == std::vector<double>{0.5, -0.25});
  CHECK(r.u8_vec() == std::vector<uint8_t>{0, 1, 255});
  CHECK(r.u64_vec() == std::vector<uint64_t>{42});
  CHECK(r.exhausted());
}

TEST_CASE("matrix and vector round-trip preserves shape and values") {
  Mat m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  Vec v(3);
  v << -1, 0.5, 7;
  TempFile f;
  {
    BinaryWriter w(f.path);
    w.mat(m);
    w.vec(v);
  }
  BinaryReader r(f.path);
  Mat m2 = r.mat();
  Vec v2 = r.vec();
  CHECK(m2.rows() == 3);
  CHECK(m2.cols() == 2);
  CHECK((m2 - m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((v2 - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("truncated input raises DataError") {
  TempFile f;
  {
    BinaryWriter w(f.path);
    w.u64(42);
  }
  BinaryReader r(f.path);
  r.u64();
  CHECK_THROWS_AS(r.u8(), DataError);
  CHECK_THROWS_AS(BinaryReader((fs::temp_directory_path() / "uprec_no_such_file").string()),
                  DataError);
}

TEST_CASE("fnv1a64 known vectors") {
  CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("file hash equals buffer hash") {
  TempFile f;
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "foobar";
  }
  CHECK(fnv1a64_file(f.path) == 0x85944171f73967e8ull);
}

TEST_CASE("hex64 formats fixed width") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
}
