// SPDX-License-Identifier: Apache-2.0
#include "magpha/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "magpha/numeric.hpp"

namespace magpha {

namespace {
constexpr double kCosineSlack = 1e-6;
constexpr double kPi = std::numbers::pi;
}  // namespace

MagnitudeMatrix::MagnitudeMatrix(RealMatrix m) : entries(std::move(m)) {
  if (!entries.allFinite() || (entries.array() < 0.0).any()) {
    throw std::invalid_argument("MagnitudeMatrix: entries must be finite and >= 0");
  }
}

CosineMatrix::CosineMatrix(RealMatrix m) : entries(std::move(m)) {
  if (!entries.allFinite() || (entries.array().abs() > 1.0).any()) {
    throw std::invalid_argument("CosineMatrix: entries must lie in [-1, 1]");
  }
}

SignMatrix::SignMatrix(RealMatrix s, BoolMatrix t) : signs(std::move(s)), transmitted(std::move(t)) {
  if (signs.rows() != transmitted.rows() || signs.cols() != transmitted.cols()) {
    throw std::invalid_argument("SignMatrix: sign and mask shapes must match");
  }
  for (int64_t r = 0; r < signs.rows(); ++r) {
    for (int64_t c = 0; c < signs.cols(); ++c) {
      if (signs(r, c) != 1.0 && signs(r, c) != -1.0) {
        throw std::invalid_argument("SignMatrix: entries must be +1 or -1");
      }
    }
  }
}

int64_t SignMatrix::transmitted_count() const {
  int64_t n = 0;
  for (int64_t r = 0; r < transmitted.rows(); ++r) {
    for (int64_t c = 0; c < transmitted.cols(); ++c) {
      if (transmitted(r, c)) ++n;
    }
  }
  return n;
}

void MdpqTable::validate() const {
  if (cdf_thresholds.empty() || cdf_thresholds.size() != bits_per_bin.size()) {
    throw std::invalid_argument("MdpqTable: thresholds and bits must be nonempty, equal length");
  }
  if (cdf_thresholds.front() != 0.0) {
    throw std::invalid_argument("MdpqTable: first threshold must be 0");
  }
  for (size_t i = 1; i < cdf_thresholds.size(); ++i) {
    if (!(cdf_thresholds[i] > cdf_thresholds[i - 1]) || cdf_thresholds[i] >= 1.0) {
      throw std::invalid_argument("MdpqTable: thresholds must be strictly ascending in [0, 1)");
    }
  }
  for (int b : bits_per_bin) {
    if (b < 0 || b > 32) throw std::invalid_argument("MdpqTable: bits must be in [0, 32]");
  }
}

std::tuple<MagnitudeMatrix, CosineMatrix, SignMatrix> decompose(const AngleDelayCsi& h) {
  const int64_t rows = h.entries.rows(), cols = h.entries.cols();
  RealMatrix mag(rows, cols), cosm(rows, cols), sgn(rows, cols);
  BoolMatrix mask = BoolMatrix::Constant(rows, cols, true);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      const std::complex<double> v = h.entries(r, c);
      const double m = std::abs(v);
      mag(r, c) = m;
      if (m == 0.0) {
        cosm(r, c) = 1.0;
        sgn(r, c) = 1.0;
      } else {
        cosm(r, c) = std::clamp(v.real() / m, -1.0, 1.0);
        sgn(r, c) = v.imag() < 0.0 ? -1.0 : 1.0;
      }
    }
  }
  return {MagnitudeMatrix(std::move(mag)), CosineMatrix(std::move(cosm)),
          SignMatrix(std::move(sgn), std::move(mask))};
}

int64_t ceil_count(double ratio, int64_t n) {
  const double x = ratio * static_cast<double>(n);
  return static_cast<int64_t>(std::ceil(x - 1e-9));
}

std::vector<int64_t> selection_rank_order(const RealMatrix& magnitude) {
  const int64_t rows = magnitude.rows(), cols = magnitude.cols();
  std::vector<int64_t> idx(static_cast<size_t>(rows * cols));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    const double ma = magnitude(a / cols, a % cols);
    const double mb = magnitude(b / cols, b % cols);
    if (ma != mb) return ma > mb;
    return a < b;
  });
  return idx;
}

SignMatrix select_signs(const SignMatrix& sign, const MagnitudeMatrix& magnitude, double r_s) {
  if (!(r_s > 0.0) || r_s > 1.0) {
    throw std::invalid_argument("select_signs: r_s must be in (0, 1]");
  }
  if (sign.signs.rows() != magnitude.entries.rows() ||
      sign.signs.cols() != magnitude.entries.cols()) {
    throw std::invalid_argument("select_signs: shape mismatch");
  }
  const int64_t rows = sign.signs.rows(), cols = sign.signs.cols();
  const int64_t count = ceil_count(r_s, rows * cols);
  const auto order = selection_rank_order(magnitude.entries);
  RealMatrix out = RealMatrix::Constant(rows, cols, 1.0);
  BoolMatrix mask = BoolMatrix::Constant(rows, cols, false);
  for (int64_t i = 0; i < count; ++i) {
    const int64_t r = order[static_cast<size_t>(i)] / cols;
    const int64_t c = order[static_cast<size_t>(i)] % cols;
    out(r, c) = sign.signs(r, c);
    mask(r, c) = true;
  }
  return SignMatrix(std::move(out), std::move(mask));
}

AngleDelayCsi recombine(const MagnitudeMatrix& magnitude, const CosineMatrix& cosine,
                        const SignMatrix& sign, int64_t q_f, int64_t q_l) {
  const int64_t rows = magnitude.entries.rows(), cols = magnitude.entries.cols();
  if (cosine.entries.rows() != rows || cosine.entries.cols() != cols ||
      sign.signs.rows() != rows || sign.signs.cols() != cols) {
    throw std::invalid_argument("recombine: shape mismatch");
  }
  ComplexMatrix out(rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      double cv = cosine.entries(r, c);
      if (std::fabs(cv) > 1.0 + kCosineSlack) {
        throw std::invalid_argument("recombine: cosine entry outside [-1-1e-6, 1+1e-6]");
      }
      cv = std::clamp(cv, -1.0, 1.0);
      const double s = sign.signs(r, c) * pythag_sine_value(cv);
      out(r, c) = magnitude.entries(r, c) * std::complex<double>(cv, s);
    }
  }
  return AngleDelayCsi(std::move(out), q_f, q_l);
}

AngleDelayCsi recombine(const MagnitudeMatrix& magnitude, const CosineMatrix& cosine,
                        const SignMatrix& sign) {
  return recombine(magnitude, cosine, sign, magnitude.entries.rows(), 0);
}

BitBudget phase_bit_budget(double cr_pha, int64_t k_pha, double r_s, int64_t q_t, int64_t n_b) {
  if (!(cr_pha > 0.0) || cr_pha > 1.0) {
    throw std::invalid_argument("phase_bit_budget: cr_pha must be in (0, 1]");
  }
  if (!(r_s > 0.0) || r_s > 1.0) {
    throw std::invalid_argument("phase_bit_budget: r_s must be in (0, 1]");
  }
  if (k_pha < 1 || q_t < 1 || n_b < 1) {
    throw std::invalid_argument("phase_bit_budget: counts must be positive");
  }
  BitBudget b;
  b.cr_pha = cr_pha;
  b.k_pha = k_pha;
  b.r_s = r_s;
  b.q_t = q_t;
  b.n_b = n_b;
  const int64_t entries = q_t * n_b;
  const int64_t codewords = std::llround(cr_pha * static_cast<double>(entries));
  b.total_bits = codewords * k_pha + ceil_count(r_s, entries);
  return b;
}

std::vector<int> mdpq_bit_allocation(const RealMatrix& magnitude, const MdpqTable& table) {
  table.validate();
  const int64_t rows = magnitude.rows(), cols = magnitude.cols();
  const int64_t n = rows * cols;
  // ascending magnitude order, ties by row-major index
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    const double ma = magnitude(a / cols, a % cols);
    const double mb = magnitude(b / cols, b % cols);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  std::vector<int> bits(static_cast<size_t>(n), 0);
  for (int64_t pos = 0; pos < n; ++pos) {
    const double rank = static_cast<double>(pos) / static_cast<double>(n);
    size_t bin = 0;
    while (bin + 1 < table.cdf_thresholds.size() && rank >= table.cdf_thresholds[bin + 1]) ++bin;
    bits[static_cast<size_t>(idx[static_cast<size_t>(pos)])] = table.bits_per_bin[bin];
  }
  return bits;
}

int64_t mdpq_total_bits(const RealMatrix& magnitude, const MdpqTable& table) {
  const auto bits = mdpq_bit_allocation(magnitude, table);
  int64_t total = 0;
  for (int b : bits) total += b;
  return total;
}

BitStream mdpq_encode(const RealMatrix& phase, const MagnitudeMatrix& magnitude,
                      const MdpqTable& table) {
  if (phase.rows() != magnitude.entries.rows() || phase.cols() != magnitude.entries.cols()) {
    throw std::invalid_argument("mdpq_encode: shape mismatch");
  }
  if (!phase.allFinite() || (phase.array().abs() > kPi + 1e-12).any()) {
    throw std::invalid_argument("mdpq_encode: phases must lie in [-pi, pi]");
  }
  const auto bits = mdpq_bit_allocation(magnitude.entries, table);
  const int64_t cols = phase.cols();
  BitStream out;
  for (int64_t i = 0; i < phase.size(); ++i) {
    const int b = bits[static_cast<size_t>(i)];
    if (b == 0) continue;
    double p = phase(i / cols, i % cols);
    if (p >= kPi) p = -kPi;  // wrap the closed endpoint
    const double step = 2.0 * kPi / static_cast<double>(1ll << b);
    auto level = static_cast<int64_t>(std::floor((p + kPi) / step));
    level = std::clamp<int64_t>(level, 0, (1ll << b) - 1);
    out.push_bits(static_cast<uint64_t>(level), b);
  }
  return out;
}

RealMatrix mdpq_decode(const BitStream& bits, const MagnitudeMatrix& magnitude,
                       const MdpqTable& table) {
  const auto alloc = mdpq_bit_allocation(magnitude.entries, table);
  int64_t expected = 0;
  for (int b : alloc) expected += b;
  if (bits.bit_count != expected) {
    throw FormatError("mdpq_decode: bit stream length " + std::to_string(bits.bit_count) +
                      " does not match expected " + std::to_string(expected));
  }
  const int64_t rows = magnitude.entries.rows(), cols = magnitude.entries.cols();
  RealMatrix out = RealMatrix::Zero(rows, cols);
  BitStreamReader reader(bits);
  for (int64_t i = 0; i < rows * cols; ++i) {
    const int b = alloc[static_cast<size_t>(i)];
    if (b == 0) continue;
    const auto level = static_cast<double>(reader.read_bits(b));
    const double step = 2.0 * kPi / static_cast<double>(1ll << b);
    out(i / cols, i % cols) = -kPi + (level + 0.5) * step;
  }
  return out;
}

BitStream pack_signs(const SignMatrix& sign, const MagnitudeMatrix& ranking_magnitude) {
  if (sign.signs.rows() != ranking_magnitude.entries.rows() ||
      sign.signs.cols() != ranking_magnitude.entries.cols()) {
    throw std::invalid_argument("pack_signs: shape mismatch");
  }
  const auto order = selection_rank_order(ranking_magnitude.entries);
  const int64_t cols = sign.signs.cols();
  BitStream out;
  for (int64_t i : order) {
    if (!sign.transmitted(i / cols, i % cols)) continue;
    out.push_bit(sign.signs(i / cols, i % cols) > 0.0 ? 1 : 0);
  }
  return out;
}

SignMatrix unpack_signs(const BitStream& bits, const MagnitudeMatrix& ranking_magnitude,
                        int64_t count) {
  if (bits.bit_count != count) {
    throw FormatError("unpack_signs: expected " + std::to_string(count) + " sign bits, got " +
                      std::to_string(bits.bit_count));
  }
  const int64_t rows = ranking_magnitude.entries.rows(), cols = ranking_magnitude.entries.cols();
  if (count > rows * cols) {
    throw std::invalid_argument("unpack_signs: count exceeds matrix size");
  }
  const auto order = selection_rank_order(ranking_magnitude.entries);
  RealMatrix signs = RealMatrix::Constant(rows, cols, 1.0);
  BoolMatrix mask = BoolMatrix::Constant(rows, cols, false);
  BitStreamReader reader(bits);
  for (int64_t i = 0; i < count; ++i) {
    const int64_t lin = order[static_cast<size_t>(i)];
    signs(lin / cols, lin % cols) = reader.read_bit() ? 1.0 : -1.0;
    mask(lin / cols, lin % cols) = true;
  }
  return SignMatrix(std::move(signs), std::move(mask));
}

}  // namespace magpha
