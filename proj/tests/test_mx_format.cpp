#include <doctest.h>

#include <filesystem>
#include <random>

#include "opal/error.hpp"
#include "opal/mx_format.hpp"
#include "opal/synthetic.hpp"
#include "opal/tensor_io.hpp"

using namespace opal;

TEST_CASE("code packing is LSB-first two's complement") {
  // 3-bit codes 1, -1, 3 -> bits 001 111 011 -> byte0 = 0b11_111_001, byte1 = 0b0.
  const std::vector<int32_t> codes{1, -1, 3};
  const auto packed = pack_codes(codes, 3);
  REQUIRE(packed.size() == 2);
  CHECK(packed[0] == 0b11111001);
  CHECK(packed[1] == 0b0);
  CHECK(unpack_codes(packed, 3, 3) == codes);

  std::mt19937_64 gen(1);
  for (int b = 2; b <= 16; ++b) {
    std::uniform_int_distribution<int32_t> d(-max_code(b), max_code(b));
    std::vector<int32_t> v(77);
    for (auto& c : v) c = d(gen);
    CHECK(unpack_codes(pack_codes(v, b), v.size(), b) == v);
    CHECK(pack_codes(v, b).size() == (77 * static_cast<size_t>(b) + 7) / 8);
  }
}

TEST_CASE("OPQT round trip and layout size") {
  SyntheticSpec s;
  s.seed = 4;
  s.outlier_rate = 4.0 / 128.0;
  const Tensor t = generate_synthetic(s, {3, 300});
  QuantConfig c;
  c.b = 5;
  const QuantizedTensor q = quantize_tensor(t, c);
  const auto bytes = encode_quantized(q);
  const size_t blocks = 3 * 3;
  const size_t expected = 4 + 3 * 2 + 2 + 1 + 2 * 8 + blocks * (1 + (128 * 5 + 7) / 8 + 4 * 3);
  CHECK(bytes.size() == expected);
  const QuantizedTensor back = decode_quantized(bytes);
  CHECK(back == q);
  CHECK(dequantize(back) == dequantize(q));
  CHECK(encode_quantized(back) == bytes);
}

TEST_CASE("file round trip gives the in-memory MSE") {
  SyntheticSpec s;
  s.seed = 9;
  s.outlier_rate = 0.03;
  const Tensor t = generate_synthetic(s, {256});
  const QuantizedTensor q = quantize_tensor(t, QuantConfig{});
  const auto path = std::filesystem::temp_directory_path() / "opal_rt.opqt";
  save_quantized(q, path);
  const Tensor a = dequantize(q);
  const Tensor b = dequantize(load_quantized(path));
  CHECK(block_mse(t.data(), a.data()) == block_mse(t.data(), b.data()));
}

TEST_CASE("OPQT rejects malformed input") {
  const QuantizedTensor q = quantize_tensor(Tensor({128}, std::vector<float>(128, 1.0f)), QuantConfig{});
  auto bytes = encode_quantized(q);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_quantized(bad), LoadError);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_quantized(cut), LoadError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_quantized(extra), LoadError);

  QuantConfig big;
  big.k = 512;
  const QuantizedTensor wide = quantize_tensor(Tensor({512}), big);
  CHECK_THROWS_AS(encode_quantized(wide), ConfigError);
}
