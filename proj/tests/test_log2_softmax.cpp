#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "opal/error.hpp"
#include "opal/log2_softmax.hpp"
#include "opal/rng.hpp"
#include "oracles.hpp"

using namespace opal;

namespace {

std::vector<float> gaussian_row(std::mt19937_64& gen, size_t len, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<float> v(len);
  for (float& x : v) x = static_cast<float>(nd(gen));
  return v;
}

std::vector<unsigned> shifts(const AttnRow& r) { return {r.shifts.begin(), r.shifts.end()}; }

}  // namespace

TEST_CASE("exp decomposition") {
  const ExpDecomposition zero = exp_decompose(0.0);
  CHECK(zero.exponent == 0);
  CHECK(zero.mantissa == 0.0);

  const ExpDecomposition ln2 = exp_decompose(std::numbers::ln2);
  CHECK(ln2.exponent == 1);
  CHECK(ln2.mantissa == 0.0);

  const ExpDecomposition e = exp_decompose(1.0);
  const oracle::Decomp want = oracle::decompose(std::exp(1.0L));
  CHECK(e.exponent == 1);
  CHECK(e.exponent == want.e);
  CHECK(e.mantissa == want.m);
  CHECK(e.mantissa == doctest::Approx(0.359375));

  CHECK(exp_decompose(-200.0).flushed);
  CHECK(exp_decompose(-200.0).exponent == -126);
  CHECK(exp_decompose(-200.0).mantissa == 0.0);
  CHECK(exp_decompose(200.0).saturated);
  CHECK(exp_decompose(200.0).exponent == 127);

  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-80.0, 80.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = static_cast<float>(u(gen));
    const ExpDecomposition d = exp_decompose(x);
    const oracle::Decomp w = oracle::decompose(std::exp(static_cast<long double>(x)));
    REQUIRE(d.exponent == w.e);
    REQUIRE(d.mantissa == w.m);
    CHECK(std::ldexp(1.0 + d.mantissa, d.exponent) == Bf16::from_double(std::exp(x)).to_float());
  }
}

TEST_CASE("exact path examples") {
  CHECK(shifts(log2_softmax_exact(std::vector<float>(4, 0.3f), 7)) == std::vector<unsigned>{2, 2, 2, 2});
  CHECK(shifts(log2_softmax_exact(std::vector<float>{0.0f, 1000.0f}, 5)) == std::vector<unsigned>{31, 0});
  const std::vector<float> s{0.0f, static_cast<float>(std::numbers::ln2)};
  CHECK(shifts(log2_softmax_exact(s, 7)) == std::vector<unsigned>{2, 1});
}

TEST_CASE("hardware path examples") {
  CHECK(shifts(log2_softmax_hw(std::vector<float>(4, -1.5f), 7)) == std::vector<unsigned>{2, 2, 2, 2});
  CHECK(shifts(log2_softmax_hw(std::vector<float>{3.0f}, 7)) == std::vector<unsigned>{0});
  CHECK(shifts(log2_softmax_exact(std::vector<float>{3.0f}, 7)) == std::vector<unsigned>{0});
}

TEST_CASE("both paths match their long-double oracles") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 3000; ++trial) {
    const size_t len = 1 + trial % 300;
    const int bits = 1 + trial % 7;
    const auto row = gaussian_row(gen, len, 0.5 + (trial % 5));
    REQUIRE(shifts(log2_softmax_hw(row, bits)) == oracle::attnq_hw(row, bits));
    const auto exact = shifts(log2_softmax_exact(row, bits));
    const auto want = oracle::attnq_exact(row, bits);
    for (size_t i = 0; i < len; ++i) {
      // Double and long double may straddle a .5 boundary by one unit.
      CHECK(std::abs(static_cast<int>(exact[i]) - static_cast<int>(want[i])) <= 1);
    }
  }
}

TEST_CASE("hardware and exact paths differ by at most one") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto row = gaussian_row(gen, 64, 2.0);
    const AttnRow hw = log2_softmax_hw(row, 7);
    const AttnRow ex = log2_softmax_exact(row, 7);
    for (size_t i = 0; i < row.size(); ++i) {
      REQUIRE(std::abs(static_cast<int>(hw.shifts[i]) - static_cast<int>(ex.shifts[i])) <= 1);
    }
  }
}

TEST_CASE("range, order preservation and soft normalization") {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 500; ++trial) {
    const int bits = 1 + trial % 7;
    const auto row = gaussian_row(gen, 1 + trial % 200, 3.0);
    const AttnRow ex = log2_softmax_exact(row, bits);
    const AttnRow hw = log2_softmax_hw(row, bits);
    bool clipped = false;
    double total = 0.0;
    for (size_t i = 0; i < row.size(); ++i) {
      CHECK(ex.shifts[i] <= ex.max_shift());
      CHECK(hw.shifts[i] <= hw.max_shift());
      clipped = clipped || ex.shifts[i] == ex.max_shift();
      total += ex.weight(i);
      for (size_t j = 0; j < row.size(); ++j) {
        if (row[i] > row[j]) CHECK(ex.shifts[i] <= ex.shifts[j]);
      }
    }
    if (!clipped) {
      CHECK(total >= 0.5);
      CHECK(total <= 2.0);
    }
  }
}

TEST_CASE("shift invariance") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto row = gaussian_row(gen, 50, 2.0);
    auto moved = row;
    const float c = static_cast<float>(trial % 7) - 3.0f;
    for (float& x : moved) x += c;
    // Skip rows where adding c rounded the float scores themselves.
    bool exact_shift = true;
    for (size_t i = 0; i < row.size(); ++i) exact_shift = exact_shift && moved[i] - c == row[i];
    if (!exact_shift) continue;
    const AttnRow a = log2_softmax_exact(row, 7);
    const AttnRow b = log2_softmax_exact(moved, 7);
    const AttnRow ha = log2_softmax_hw(row, 7);
    const AttnRow hb = log2_softmax_hw(moved, 7);
    for (size_t i = 0; i < row.size(); ++i) {
      // Differences in the last float bit can move a value across .5.
      CHECK(std::abs(static_cast<int>(a.shifts[i]) - static_cast<int>(b.shifts[i])) <= 1);
      CHECK(std::abs(static_cast<int>(ha.shifts[i]) - static_cast<int>(hb.shifts[i])) <= 1);
    }
  }
}

TEST_CASE("uniform rows: the two paths disagree where the mantissa gate and rounding part ways") {
  // For N equal scores the hardware sees the bfloat16 sum bf16(N) = 2^E * 1.M
  // and reports E + [M >= 0.5]; the exact path reports round(log2 N). They
  // differ exactly when N >= sqrt(2) * 2^E while bf16(N) < 1.5 * 2^E.
  for (size_t n = 1; n <= 512; ++n) {
    const std::vector<float> row(n, 0.7f);
    const unsigned hw = log2_softmax_hw(row, 7).shifts[0];
    const unsigned ex = log2_softmax_exact(row, 7).shifts[0];
    const int e = oracle::exponent_of(static_cast<double>(n));
    const double m = static_cast<double>(n) / std::ldexp(1.0, e);
    const double m_hw = oracle::bf16_nearest(static_cast<float>(n)) / std::ldexp(1.0, e);
    const bool gap = m >= std::numbers::sqrt2 && m_hw < 1.5;
    CHECK_MESSAGE((hw != ex) == gap, "N=" << n);
  }
}

TEST_CASE("no positive approximate log2 arises under monotone rounding") {
  // The sum includes e^0 = 1 and every e^x_i <= sum, and round-to-nearest is
  // monotone, so E_i - E_s plus the gated sign never exceeds zero.
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto r = gaussian_row(gen, 1 + trial % 40, 6.0);
    CHECK(log2_softmax_hw(r, 7).clipped_positive == 0);
  }
}

TEST_CASE("attention bit-width validation") {
  CHECK_THROWS_AS(validate_attn_bits(0), ConfigError);
  CHECK_THROWS_AS(validate_attn_bits(8), ConfigError);
  CHECK_THROWS_AS(log2_softmax_hw(std::vector<float>{1.0f}, 8), ConfigError);
  CHECK_THROWS_AS(log2_softmax_exact(std::vector<float>{}, 4), ConfigError);
}

TEST_CASE("shift-accumulate on tiny V") {
  QuantConfig c;
  c.k = 2;
  c.n = 0;
  c.b = 8;
  const QuantizedTensor v = quantize_tensor(Tensor({2, 2}, {1, 2, 3, 4}), c);
  AttnRow ones;
  ones.shifts = {0, 0};
  CHECK(attn_shift_accumulate(ones, v).values == std::vector<float>{4, 6});
  AttnRow halves;
  halves.shifts = {1, 1};
  CHECK(attn_shift_accumulate(halves, v).values == std::vector<float>{2, 3});
  const auto r = attn_shift_accumulate(halves, v);
  CHECK(r.shift_ops == 4);
  CHECK(r.fp_ops == 0);
}

TEST_CASE("shift-accumulate against a double oracle") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<unsigned> sh(0, 127);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t rows = 1 + trial % 64;
    const size_t cols = 128 * (1 + trial % 2);
    std::vector<float> data;
    for (size_t r = 0; r < rows; ++r) {
      auto block = oracle::heavy_tailed_block(gen, cols, 4, 20.0);
      data.insert(data.end(), block.begin(), block.end());
    }
    QuantConfig c;
    c.b = 5 + 2 * (trial % 2);
    const QuantizedTensor v = quantize_tensor(Tensor({rows, cols}, data), c);
    const Tensor deq = dequantize(v);
    AttnRow a;
    a.bits = 7;
    for (size_t r = 0; r < rows; ++r) a.shifts.push_back(trial % 3 == 0 ? sh(gen) % 8 : sh(gen));
    const auto got = attn_shift_accumulate(a, v);
    const double step = code_step(v.global_scale_exp, c.b);
    for (size_t d = 0; d < cols; ++d) {
      double want = 0.0;
      double mag = 0.0;
      for (size_t r = 0; r < rows; ++r) {
        want += std::ldexp(static_cast<double>(deq[r * cols + d]), -static_cast<int>(a.shifts[r]));
        mag += std::fabs(std::ldexp(static_cast<double>(deq[r * cols + d]), -static_cast<int>(a.shifts[r])));
      }
      const double tol = static_cast<double>(rows) * std::ldexp(step, -kDefaultGuardBits) + mag * 0x1p-22;
      REQUIRE(std::fabs(got.values[d] - want) <= tol);
    }
    CHECK(got.shift_ops + got.fp_ops == rows * cols);
  }
}

TEST_CASE("shift-accumulate refuses shapes that could overflow 48 bits") {
  QuantConfig c;
  c.k = 4;
  c.n = 0;
  c.b = 16;
  const size_t rows = 70000;
  std::vector<float> data(rows * 4, 1.0f);
  data[0] = 32768.0f;  // offset 15 for the first block
  const QuantizedTensor v = quantize_tensor(Tensor({rows, 4}, data), c);
  AttnRow a;
  a.shifts.assign(rows, 0);
  CHECK_THROWS_AS(attn_shift_accumulate(a, v), NumericError);
}
