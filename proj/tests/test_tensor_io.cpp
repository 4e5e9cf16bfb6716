#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "opal/error.hpp"
#include "opal/synthetic.hpp"
#include "opal/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace opal;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "opal_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<uint8_t> header(const char* magic, uint16_t version, uint8_t dtype, std::vector<uint64_t> dims) {
  std::vector<uint8_t> out(magic, magic + 4);
  out.push_back(static_cast<uint8_t>(version & 0xFF));
  out.push_back(static_cast<uint8_t>(version >> 8));
  out.push_back(dtype);
  out.push_back(static_cast<uint8_t>(dims.size()));
  for (uint64_t d : dims) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(d >> (8 * i)));
  }
  return out;
}

void append_floats(std::vector<uint8_t>& out, std::initializer_list<float> values) {
  for (float f : values) {
    const auto u = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
  }
}

LoadErrorKind kind_of(const std::vector<uint8_t>& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const LoadError& e) {
    return e.kind();
  }
  FAIL("expected a load error");
  return LoadErrorKind::kBadHeader;
}

}  // namespace

TEST_CASE("hand-built file decodes to the declared tensor") {
  auto bytes = header("OPTN", 1, 0, {2, 2});
  append_floats(bytes, {1, 2, 3, 4});
  const Tensor t = decode_tensor(bytes);
  CHECK(t == Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(encode_tensor(t) == bytes);
}

TEST_CASE("load errors are distinct") {
  auto good = header("OPTN", 1, 0, {2});
  append_floats(good, {1, 2});

  auto magic = good;
  magic[0] = 'X';
  magic[1] = 'X';
  magic[2] = 'X';
  magic[3] = 'X';
  CHECK(kind_of(magic) == LoadErrorKind::kBadMagic);

  auto version = good;
  version[4] = 2;
  CHECK(kind_of(version) == LoadErrorKind::kBadVersion);

  auto dtype = good;
  dtype[6] = 1;
  CHECK(kind_of(dtype) == LoadErrorKind::kBadDtype);

  auto truncated = header("OPTN", 1, 0, {8});
  append_floats(truncated, {1, 2, 3, 4});
  CHECK(kind_of(truncated) == LoadErrorKind::kTruncated);

  auto nonfinite = header("OPTN", 1, 0, {2});
  append_floats(nonfinite, {1, std::numeric_limits<float>::quiet_NaN()});
  CHECK(kind_of(nonfinite) == LoadErrorKind::kNonFinite);

  auto inf = header("OPTN", 1, 0, {1});
  append_floats(inf, {std::numeric_limits<float>::infinity()});
  CHECK(kind_of(inf) == LoadErrorKind::kNonFinite);

  auto zero_dim = header("OPTN", 1, 0, {0});
  CHECK(kind_of(zero_dim) == LoadErrorKind::kBadHeader);

  CHECK(kind_of(std::vector<uint8_t>{'O', 'P'}) == LoadErrorKind::kTruncated);
}

TEST_CASE("save/load round trip is byte identical") {
  SyntheticSpec spec;
  spec.seed = 99;
  spec.outlier_rate = 0.05;
  const Tensor t = generate_synthetic(spec, {3, 5, 7});
  const fs::path p = temp_file("roundtrip.optn");
  save_tensor(t, p);
  const auto first = read_file(p);
  const Tensor back = load_tensor(p);
  CHECK(back == t);
  save_tensor(back, p);
  CHECK(read_file(p) == first);
}

TEST_CASE("file size of a [128] tensor is header plus 512 bytes") {
  // magic 4 + version 2 + dtype 1 + ndim 1 + one u64 dim.
  const size_t expected_header = 4 + 2 + 1 + 1 + 8;
  CHECK(tensor_header_size(1) == expected_header);
  const fs::path p = temp_file("zeros.optn");
  save_tensor(Tensor({128}), p);
  CHECK(fs::file_size(p) == expected_header + 512);
}

TEST_CASE("tensors without dims are rejected") {
  CHECK_THROWS_AS(Tensor(std::vector<size_t>{}), ConfigError);
  CHECK_THROWS_AS(Tensor({2, 0}), ConfigError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(encode_tensor(Tensor{}), ConfigError);
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(load_tensor("/nonexistent/dir/t.optn"), IoError);
}

TEST_CASE("csv ingestion reads one value per line") {
  const fs::path p = temp_file("vec.csv");
  {
    std::ofstream f(p);
    f << "1.5\n-2\n\n3e2\n";
  }
  const Tensor t = load_tensor_any(p);
  CHECK(t == Tensor({3}, {1.5f, -2.0f, 300.0f}));
  {
    std::ofstream f(p);
    f << "1\nabc\n";
  }
  CHECK_THROWS_AS(load_tensor_csv(p), Error);
  {
    std::ofstream f(p);
    f << "1\nnan\n";
  }
  CHECK_THROWS_AS(load_tensor_csv(p), Error);
}
