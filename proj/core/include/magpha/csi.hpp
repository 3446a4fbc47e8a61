// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "magpha/rng.hpp"

namespace magpha {

using ComplexMatrix = Eigen::MatrixXcd;

/// Downlink or uplink channel gains over subcarriers x gNB antennas.
struct SpatialFrequencyCsi {
  ComplexMatrix entries;  // n_f x n_b

  SpatialFrequencyCsi() = default;
  explicit SpatialFrequencyCsi(ComplexMatrix m);

  int64_t n_f() const { return entries.rows(); }
  int64_t n_b() const { return entries.cols(); }
};

/// Truncated angle-delay representation: the first q_f and last q_l delay
/// rows of the transformed matrix, stacked in that order.
struct AngleDelayCsi {
  ComplexMatrix entries;  // q_t x n_b
  int64_t q_f = 0;
  int64_t q_l = 0;

  AngleDelayCsi() = default;
  AngleDelayCsi(ComplexMatrix m, int64_t q_f, int64_t q_l);

  int64_t q_t() const { return entries.rows(); }
  int64_t n_b() const { return entries.cols(); }
};

/// One channel realization: the downlink matrix to feed back and the uplink
/// matrix whose magnitudes serve as decoder-side auxiliary information.
struct CsiSamplePair {
  SpatialFrequencyCsi downlink;
  SpatialFrequencyCsi uplink;

  CsiSamplePair() = default;
  CsiSamplePair(SpatialFrequencyCsi dl, SpatialFrequencyCsi ul);
};

/// Clustered-multipath generator settings. Paths share delays, angles and
/// gain magnitudes across the two links; path phases are drawn independently
/// per link, which is where the distinct UL/DL carriers enter the model.
struct ChannelModelConfig {
  int64_t n_f = 256;
  int64_t n_b = 64;
  int64_t n_clusters = 13;
  double ul_carrier_hz = 5.1e9;
  double dl_carrier_hz = 5.3e9;
  double bandwidth_hz = 20e6;
  double delay_spread_s = 6e-8;
  uint64_t rng_seed = 1;

  void validate() const;
};

struct CsiDataset {
  std::vector<CsiSamplePair> samples;
  int64_t split = 0;  // first `split` samples train, the rest test

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  int64_t n_f() const { return samples.empty() ? 0 : samples.front().downlink.n_f(); }
  int64_t n_b() const { return samples.empty() ? 0 : samples.front().downlink.n_b(); }
  void validate() const;
};

/// Angle-delay transform with truncation. The frequency axis goes through an
/// inverse DFT scaled by 1/n_f and the antenna axis through an unnormalized
/// DFT; the first q_f and last q_l rows of the result are retained.
AngleDelayCsi to_angle_delay(const SpatialFrequencyCsi& h_sf, int64_t q_f, int64_t q_l);

/// Exact inverse of to_angle_delay up to truncation: zero-pads the retained
/// rows back to n_f and applies the inverse transform factors.
SpatialFrequencyCsi from_angle_delay(const AngleDelayCsi& h_ad, int64_t n_f);

/// Draws one UL/DL pair with shared multipath geometry. Deterministic given
/// the rng state; zero-norm draws (measure zero) are redrawn.
CsiSamplePair generate_channel_pair(const ChannelModelConfig& config, SeededRng& rng);

/// Generates `n_samples` pairs with per-sample rng streams derived from
/// (config.rng_seed, sample index), so the result is independent of any
/// parallel evaluation order.
CsiDataset generate_dataset(const ChannelModelConfig& config, int64_t n_samples, int64_t split);

/// 10*log10 of the mean over samples of ||est - truth||_F^2 / ||truth||_F^2.
/// Exact matches report `floor_db`; values below the floor clamp to it.
double nmse_db(const std::vector<SpatialFrequencyCsi>& truth,
               const std::vector<SpatialFrequencyCsi>& estimate, double floor_db = -120.0);

/// Pearson correlation between DL and UL angle-delay magnitudes of one pair.
double reciprocity_correlation(const CsiSamplePair& pair, int64_t q_f, int64_t q_l);

// CSID dataset file, little-endian:
//   magic "CSID" | u32 version=1 | u32 n_f | u32 n_b | u32 sample_count |
//   u32 split_index | per sample: DL then UL matrix, row-major over
//   (subcarrier, antenna), each entry as float64 re then float64 im.
void dataset_save(const CsiDataset& ds, const std::string& path);
CsiDataset dataset_load(const std::string& path);

}  // namespace magpha
