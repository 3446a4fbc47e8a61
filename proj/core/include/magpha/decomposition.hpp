// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <tuple>
#include <vector>

#include "magpha/bitstream.hpp"
#include "magpha/csi.hpp"

namespace magpha {

using RealMatrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct MagnitudeMatrix {
  RealMatrix entries;
  MagnitudeMatrix() = default;
  explicit MagnitudeMatrix(RealMatrix m);
};

struct CosineMatrix {
  RealMatrix entries;  // every entry in [-1, 1]
  CosineMatrix() = default;
  explicit CosineMatrix(RealMatrix m);
};

/// One-bit sine signs plus the mask of entries actually fed back.
/// Untransmitted entries carry the default sign +1.
struct SignMatrix {
  RealMatrix signs;  // entries in {+1, -1}
  BoolMatrix transmitted;
  SignMatrix() = default;
  SignMatrix(RealMatrix s, BoolMatrix t);

  int64_t transmitted_count() const;
};

struct BitBudget {
  double cr_pha = 0.0;
  int64_t k_pha = 0;
  double r_s = 0.0;
  int64_t q_t = 0;
  int64_t n_b = 0;
  int64_t total_bits = 0;

  double bits_per_entry() const {
    return static_cast<double>(total_bits) / static_cast<double>(q_t * n_b);
  }
};

/// Magnitude-CDF bit-allocation table: an entry whose empirical magnitude
/// rank falls in [cdf_thresholds[i], next threshold) receives
/// bits_per_bin[i] quantization bits.
struct MdpqTable {
  std::vector<double> cdf_thresholds;  // strictly ascending, first = 0
  std::vector<int> bits_per_bin;

  void validate() const;
};

/// Elementwise split h -> (|h|, Re(h)/|h|, sign(Im h)). Zero-magnitude
/// entries take cosine 1 and sign +1; the returned sign matrix marks every
/// entry as transmitted.
std::tuple<MagnitudeMatrix, CosineMatrix, SignMatrix> decompose(const AngleDelayCsi& h);

/// Keeps the signs of the ceil(r_s * q_t * n_b) largest-magnitude entries
/// (ties broken by row-major index ascending) and resets the rest to +1.
SignMatrix select_signs(const SignMatrix& sign, const MagnitudeMatrix& magnitude, double r_s);

/// Pythagorean recombination: magnitude .* (cos + j * sign .* sqrt(1-cos^2)).
/// Cosine entries may exceed [-1,1] by at most 1e-6 and are clamped.
AngleDelayCsi recombine(const MagnitudeMatrix& magnitude, const CosineMatrix& cosine,
                        const SignMatrix& sign, int64_t q_f, int64_t q_l);
AngleDelayCsi recombine(const MagnitudeMatrix& magnitude, const CosineMatrix& cosine,
                        const SignMatrix& sign);

/// Total phase feedback bits:
/// round(cr_pha*q_t*n_b)*k_pha + ceil(r_s*q_t*n_b).
BitBudget phase_bit_budget(double cr_pha, int64_t k_pha, double r_s, int64_t q_t, int64_t n_b);

/// ceil(ratio * n) with protection against representation jitter on exact
/// integer products.
int64_t ceil_count(double ratio, int64_t n);

/// Row-major linear indices ordered by descending magnitude, ties by index
/// ascending. This is the selection-rank order used for sign transmission.
std::vector<int64_t> selection_rank_order(const RealMatrix& magnitude);

/// Per-entry quantization bits implied by the empirical magnitude CDF:
/// the entry at ascending sorted position p (of N) has rank p/N.
std::vector<int> mdpq_bit_allocation(const RealMatrix& magnitude, const MdpqTable& table);
int64_t mdpq_total_bits(const RealMatrix& magnitude, const MdpqTable& table);

/// Quantizes phases (radians in [-pi, pi]; +pi wraps to -pi) with per-entry
/// bit widths from the magnitude CDF. Entries serialize in row-major order,
/// skipping zero-bit bins; a b-bit entry is uniformly quantized over
/// [-pi, pi) with 2^b levels.
BitStream mdpq_encode(const RealMatrix& phase, const MagnitudeMatrix& magnitude,
                      const MdpqTable& table);
/// Inverse of mdpq_encode given the same magnitude matrix and table.
/// Zero-bit entries decode to phase 0.
RealMatrix mdpq_decode(const BitStream& bits, const MagnitudeMatrix& magnitude,
                       const MdpqTable& table);

/// Sign bits in selection-rank order, most significant first; bit 1 encodes
/// sign +1.
BitStream pack_signs(const SignMatrix& sign, const MagnitudeMatrix& ranking_magnitude);
/// Places `count` received sign bits onto the top-`count` entries of
/// `ranking_magnitude`'s selection order; everything else gets +1.
SignMatrix unpack_signs(const BitStream& bits, const MagnitudeMatrix& ranking_magnitude,
                        int64_t count);

}  // namespace magpha
