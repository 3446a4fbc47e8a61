// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "magpha/decomposition.hpp"
#include "magpha/errors.hpp"
#include "magpha/rng.hpp"

using namespace magpha;
using Complex = std::complex<double>;

namespace {
constexpr double kPi = std::numbers::pi;

AngleDelayCsi random_csi(int64_t rows, int64_t cols, SeededRng& rng) {
  ComplexMatrix m(rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      m(r, c) = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
      if (std::abs(m(r, c)) < 1e-3) m(r, c) += Complex(0.1, 0.1);
    }
  }
  return AngleDelayCsi(std::move(m), rows, 0);
}
}  // namespace

TEST_CASE("decompose handles the 3-4-5 triangle, pure imaginary, and zero") {
  ComplexMatrix m(1, 3);
  m(0, 0) = Complex(3.0, 4.0);
  m(0, 1) = Complex(0.0, -2.0);
  m(0, 2) = Complex(0.0, 0.0);
  auto [mag, cosm, sign] = decompose(AngleDelayCsi(m, 1, 0));
  CHECK(mag.entries(0, 0) == doctest::Approx(5.0));
  CHECK(cosm.entries(0, 0) == doctest::Approx(0.6));
  CHECK(sign.signs(0, 0) == 1.0);
  CHECK(mag.entries(0, 1) == doctest::Approx(2.0));
  CHECK(cosm.entries(0, 1) == doctest::Approx(0.0));
  CHECK(sign.signs(0, 1) == -1.0);
  CHECK(mag.entries(0, 2) == 0.0);
  CHECK(cosm.entries(0, 2) == 1.0);  // degenerate convention
  CHECK(sign.signs(0, 2) == 1.0);
}

TEST_CASE("recombine inverts decompose") {
  MagnitudeMatrix mag(RealMatrix::Constant(1, 1, 5.0));
  CosineMatrix cosm(RealMatrix::Constant(1, 1, 0.6));
  SignMatrix sign(RealMatrix::Constant(1, 1, 1.0), BoolMatrix::Constant(1, 1, true));
  AngleDelayCsi out = recombine(mag, cosm, sign);
  CHECK(std::abs(out.entries(0, 0) - Complex(3.0, 4.0)) < 1e-12);

  SeededRng rng(4);
  AngleDelayCsi h = random_csi(5, 7, rng);
  auto [m2, c2, s2] = decompose(h);
  AngleDelayCsi back = recombine(m2, c2, s2, h.q_f, h.q_l);
  CHECK((back.entries - h.entries).norm() / h.entries.norm() < 1e-12);
}

TEST_CASE("recombine edge handling") {
  MagnitudeMatrix mag(RealMatrix::Constant(1, 1, 2.0));
  SignMatrix sign(RealMatrix::Constant(1, 1, -1.0), BoolMatrix::Constant(1, 1, true));

  // cosine 1 with any sign gives a purely real entry
  CosineMatrix one(RealMatrix::Constant(1, 1, 1.0));
  AngleDelayCsi out = recombine(mag, one, sign);
  CHECK(out.entries(0, 0).imag() == 0.0);
  CHECK(out.entries(0, 0).real() == doctest::Approx(2.0));

  // slack region is clamped, beyond it rejected; CosineMatrix itself
  // enforces [-1,1] so the slack path goes through raw matrices
  CosineMatrix near(RealMatrix::Constant(1, 1, 1.0));
  near.entries(0, 0) = 1.0 + 5e-7;
  CHECK_NOTHROW(recombine(mag, near, sign));
  near.entries(0, 0) = 1.0 + 5e-6;
  CHECK_THROWS_AS(recombine(mag, near, sign), std::invalid_argument);
  CHECK_THROWS_AS(CosineMatrix(RealMatrix::Constant(1, 1, 1.5)), std::invalid_argument);
}

TEST_CASE("select_signs keeps the largest-magnitude entries") {
  RealMatrix mags(2, 2);
  mags << 4, 3, 2, 1;
  RealMatrix signs(2, 2);
  signs << -1, -1, -1, -1;
  SignMatrix all(signs, BoolMatrix::Constant(2, 2, true));
  MagnitudeMatrix mm(mags);

  SignMatrix half = select_signs(all, mm, 0.5);
  CHECK(half.transmitted(0, 0));
  CHECK(half.transmitted(0, 1));
  CHECK_FALSE(half.transmitted(1, 0));
  CHECK_FALSE(half.transmitted(1, 1));
  CHECK(half.signs(0, 0) == -1.0);
  CHECK(half.signs(1, 0) == 1.0);  // untransmitted default +1

  SignMatrix full = select_signs(all, mm, 1.0);
  CHECK(full.transmitted_count() == 4);
  CHECK((full.signs.array() == signs.array()).all());

  // equal magnitudes: row-major tie-break
  MagnitudeMatrix flat(RealMatrix::Constant(4, 4, 2.5));
  SignMatrix allflat(RealMatrix::Constant(4, 4, -1.0), BoolMatrix::Constant(4, 4, true));
  SignMatrix quarter = select_signs(allflat, flat, 0.25);
  CHECK(quarter.transmitted_count() == 4);
  for (int64_t c = 0; c < 4; ++c) CHECK(quarter.transmitted(0, c));

  CHECK_THROWS_AS(select_signs(all, mm, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_signs(all, mm, 1.5), std::invalid_argument);
}

TEST_CASE("raising r_s only grows the transmitted mask") {
  SeededRng rng(9);
  AngleDelayCsi h = random_csi(6, 6, rng);
  auto [mag, cosm, sign] = decompose(h);
  SignMatrix prev = select_signs(sign, mag, 0.1);
  for (double r : {0.2, 0.4, 0.7, 1.0}) {
    SignMatrix next = select_signs(sign, mag, r);
    for (int64_t i = 0; i < 6; ++i) {
      for (int64_t j = 0; j < 6; ++j) {
        if (prev.transmitted(i, j)) CHECK(next.transmitted(i, j));
      }
    }
    prev = next;
  }
}

TEST_CASE("phase bit budget matches the reference operating points") {
  BitBudget b1 = phase_bit_budget(1.0 / 16.0, 8, 0.125, 16, 64);
  CHECK(b1.total_bits == 640);
  CHECK(b1.bits_per_entry() == doctest::Approx(0.625));

  BitBudget b2 = phase_bit_budget(1.0 / 8.0, 8, 0.25, 16, 64);
  CHECK(b2.total_bits == 1280);
  CHECK(b2.bits_per_entry() == doctest::Approx(1.25));

  BitBudget b3 = phase_bit_budget(1.0 / 8.0, 8, 1.0, 16, 64);
  CHECK(b3.total_bits == 2048);

  CHECK_THROWS_AS(phase_bit_budget(0.0, 8, 0.25, 16, 64), std::invalid_argument);
  CHECK_THROWS_AS(phase_bit_budget(0.5, 0, 0.25, 16, 64), std::invalid_argument);
  CHECK_THROWS_AS(phase_bit_budget(0.5, 8, 1.25, 16, 64), std::invalid_argument);
}

TEST_CASE("mdpq zero-bit table yields an empty stream and zero phases") {
  MdpqTable table;
  table.cdf_thresholds = {0.0};
  table.bits_per_bin = {0};
  SeededRng rng(2);
  RealMatrix phase(3, 3), mags(3, 3);
  for (int64_t i = 0; i < 9; ++i) {
    phase(i / 3, i % 3) = rng.uniform(-kPi, kPi);
    mags(i / 3, i % 3) = rng.uniform(0, 2);
  }
  MagnitudeMatrix mm(mags);
  BitStream bits = mdpq_encode(phase, mm, table);
  CHECK(bits.bit_count == 0);
  RealMatrix dec = mdpq_decode(bits, mm, table);
  CHECK(dec.norm() == 0.0);
}

TEST_CASE("mdpq paper table quantizes high-rank entries finely") {
  MdpqTable table;
  table.cdf_thresholds = {0.0, 0.5, 0.7, 0.8, 0.9};
  table.bits_per_bin = {0, 0, 0, 3, 7};

  // 20 entries with strictly increasing magnitude: entry at ascending rank
  // 19/20 = 0.95 falls in the 7-bit bin
  RealMatrix mags(4, 5), phase(4, 5);
  SeededRng rng(3);
  for (int64_t i = 0; i < 20; ++i) {
    mags(i / 5, i % 5) = static_cast<double>(i + 1);
    phase(i / 5, i % 5) = rng.uniform(-kPi, kPi);
  }
  MagnitudeMatrix mm(mags);
  const auto alloc = mdpq_bit_allocation(mags, table);
  CHECK(alloc[19] == 7);
  BitStream bits = mdpq_encode(phase, mm, table);
  RealMatrix dec = mdpq_decode(bits, mm, table);
  CHECK(std::fabs(dec(3, 4) - phase(3, 4)) <= kPi / 128.0);
}

TEST_CASE("mdpq total bits match a brute-force bin count on a random 8x8 instance") {
  MdpqTable table;
  table.cdf_thresholds = {0.0, 0.5, 0.7, 0.8, 0.9};
  table.bits_per_bin = {0, 0, 0, 3, 7};
  SeededRng rng(6);
  RealMatrix mags(8, 8), phase(8, 8);
  for (int64_t i = 0; i < 64; ++i) {
    mags(i / 8, i % 8) = rng.uniform(0, 5);
    phase(i / 8, i % 8) = rng.uniform(-kPi, kPi);
  }
  // brute force: sort magnitudes ascending, assign rank pos/N, count per bin
  std::vector<std::pair<double, int64_t>> sorted;
  for (int64_t i = 0; i < 64; ++i) sorted.push_back({mags(i / 8, i % 8), i});
  std::sort(sorted.begin(), sorted.end());
  int64_t expected_bits = 0;
  for (int64_t pos = 0; pos < 64; ++pos) {
    const double rank = static_cast<double>(pos) / 64.0;
    size_t bin = 0;
    while (bin + 1 < table.cdf_thresholds.size() && rank >= table.cdf_thresholds[bin + 1]) ++bin;
    expected_bits += table.bits_per_bin[bin];
  }
  MagnitudeMatrix mm(mags);
  CHECK(mdpq_total_bits(mags, table) == expected_bits);
  BitStream bits = mdpq_encode(phase, mm, table);
  CHECK(bits.bit_count == expected_bits);

  // per-entry circular quantization error bound pi / 2^b
  RealMatrix dec = mdpq_decode(bits, mm, table);
  const auto alloc = mdpq_bit_allocation(mags, table);
  for (int64_t i = 0; i < 64; ++i) {
    const int b = alloc[static_cast<size_t>(i)];
    if (b == 0) continue;
    double diff = std::fabs(dec(i / 8, i % 8) - phase(i / 8, i % 8));
    diff = std::min(diff, 2.0 * kPi - diff);
    CHECK(diff <= kPi / static_cast<double>(1 << b) + 1e-12);
  }

  // mismatched stream length
  BitStream shorter = bits;
  shorter.bit_count -= 3;
  CHECK_THROWS_AS(mdpq_decode(shorter, mm, table), FormatError);
}

TEST_CASE("sign bits serialize in selection-rank order") {
  RealMatrix mags(2, 2);
  mags << 1, 9, 5, 3;  // rank order: (0,1), (1,0), (1,1), (0,0)
  RealMatrix signs(2, 2);
  signs << 1, -1, 1, -1;
  MagnitudeMatrix mm(mags);
  SignMatrix sel = select_signs(SignMatrix(signs, BoolMatrix::Constant(2, 2, true)), mm, 0.75);
  CHECK(sel.transmitted_count() == 3);
  BitStream bits = pack_signs(sel, mm);
  REQUIRE(bits.bit_count == 3);
  CHECK(bits.get_bit(0) == 0);  // (0,1) is -1
  CHECK(bits.get_bit(1) == 1);  // (1,0) is +1
  CHECK(bits.get_bit(2) == 0);  // (1,1) is -1

  SignMatrix placed = unpack_signs(bits, mm, 3);
  CHECK(placed.signs(0, 1) == -1.0);
  CHECK(placed.signs(1, 0) == 1.0);
  CHECK(placed.signs(1, 1) == -1.0);
  CHECK(placed.signs(0, 0) == 1.0);  // untransmitted default
  CHECK_FALSE(placed.transmitted(0, 0));
}

TEST_CASE("mdpq table validation") {
  MdpqTable bad;
  bad.cdf_thresholds = {0.1, 0.5};
  bad.bits_per_bin = {0, 3};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // first must be 0
  bad.cdf_thresholds = {0.0, 0.5, 0.4};
  bad.bits_per_bin = {0, 1, 2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // not ascending
}
