// SPDX-License-Identifier: Apache-2.0
#include "magpha/csi.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "magpha/binio.hpp"
#include "magpha/errors.hpp"

namespace magpha {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
using Complex = std::complex<double>;

void require_finite(const char* what, const ComplexMatrix& m) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": entries must be finite");
  }
}

// e^{sign * 2*pi*i * (a*b mod n) / n}; the integer modulus keeps the twiddle
// arguments small and the values exactly periodic.
Complex twiddle(int64_t a, int64_t b, int64_t n, double sign) {
  const double ang = sign * kTwoPi * static_cast<double>((a * b) % n) / static_cast<double>(n);
  return Complex(std::cos(ang), std::sin(ang));
}

// Delay-row DFT indices retained by a (q_f, q_l) truncation of length n_f.
std::vector<int64_t> retained_rows(int64_t q_f, int64_t q_l, int64_t n_f) {
  std::vector<int64_t> rows;
  rows.reserve(static_cast<size_t>(q_f + q_l));
  for (int64_t r = 0; r < q_f; ++r) rows.push_back(r);
  for (int64_t r = n_f - q_l; r < n_f; ++r) rows.push_back(r);
  return rows;
}

}  // namespace

SpatialFrequencyCsi::SpatialFrequencyCsi(ComplexMatrix m) : entries(std::move(m)) {
  if (entries.rows() < 1 || entries.cols() < 1) {
    throw std::invalid_argument("SpatialFrequencyCsi: dimensions must be >= 1");
  }
  require_finite("SpatialFrequencyCsi", entries);
}

AngleDelayCsi::AngleDelayCsi(ComplexMatrix m, int64_t qf, int64_t ql)
    : entries(std::move(m)), q_f(qf), q_l(ql) {
  if (q_f < 0 || q_l < 0 || q_f + q_l != entries.rows()) {
    throw std::invalid_argument("AngleDelayCsi: q_f + q_l must equal the row count");
  }
  if (entries.cols() < 1) throw std::invalid_argument("AngleDelayCsi: n_b must be >= 1");
  require_finite("AngleDelayCsi", entries);
}

CsiSamplePair::CsiSamplePair(SpatialFrequencyCsi dl, SpatialFrequencyCsi ul)
    : downlink(std::move(dl)), uplink(std::move(ul)) {
  if (downlink.n_f() != uplink.n_f() || downlink.n_b() != uplink.n_b()) {
    throw std::invalid_argument("CsiSamplePair: DL and UL dimensions must match");
  }
}

void ChannelModelConfig::validate() const {
  if (n_f < 1 || n_b < 1) throw std::invalid_argument("ChannelModelConfig: dimensions must be >= 1");
  if (n_clusters < 1) throw std::invalid_argument("ChannelModelConfig: n_clusters must be >= 1");
  if (!(ul_carrier_hz > 0.0) || !(dl_carrier_hz > 0.0)) {
    throw std::invalid_argument("ChannelModelConfig: carriers must be positive");
  }
  if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("ChannelModelConfig: bandwidth must be positive");
  if (!(delay_spread_s > 0.0)) throw std::invalid_argument("ChannelModelConfig: delay spread must be positive");
}

void CsiDataset::validate() const {
  if (split < 0 || split > size()) {
    throw std::invalid_argument("CsiDataset: split index out of bounds");
  }
  for (const auto& s : samples) {
    if (s.downlink.n_f() != n_f() || s.downlink.n_b() != n_b()) {
      throw std::invalid_argument("CsiDataset: inconsistent sample dimensions");
    }
  }
}

AngleDelayCsi to_angle_delay(const SpatialFrequencyCsi& h_sf, int64_t q_f, int64_t q_l) {
  const int64_t nf = h_sf.n_f(), nb = h_sf.n_b();
  if (q_f < 0 || q_l < 0 || q_f + q_l > nf) {
    throw std::invalid_argument("to_angle_delay: require 0 <= q_f + q_l <= n_f");
  }
  // Only the retained delay rows are computed: first the scaled inverse DFT
  // over frequency for each row, then the unnormalized DFT over antennas.
  const auto rows = retained_rows(q_f, q_l, nf);
  const double inv_nf = 1.0 / static_cast<double>(nf);
  ComplexMatrix mid(q_f + q_l, nb);  // F_D rows * H
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int64_t m = rows[ri];
    std::vector<Complex> tw(static_cast<size_t>(nf));
    for (int64_t f = 0; f < nf; ++f) tw[static_cast<size_t>(f)] = twiddle(m, f, nf, +1.0);
    for (int64_t b = 0; b < nb; ++b) {
      Complex acc(0.0, 0.0);
      for (int64_t f = 0; f < nf; ++f) acc += tw[static_cast<size_t>(f)] * h_sf.entries(f, b);
      mid(static_cast<int64_t>(ri), b) = acc * inv_nf;
    }
  }
  ComplexMatrix kept(q_f + q_l, nb);
  for (int64_t r = 0; r < q_f + q_l; ++r) {
    for (int64_t a = 0; a < nb; ++a) {
      Complex acc(0.0, 0.0);
      for (int64_t b = 0; b < nb; ++b) acc += mid(r, b) * twiddle(b, a, nb, -1.0);
      kept(r, a) = acc;
    }
  }
  return AngleDelayCsi(std::move(kept), q_f, q_l);
}

SpatialFrequencyCsi from_angle_delay(const AngleDelayCsi& h_ad, int64_t n_f) {
  if (h_ad.q_t() > n_f) {
    throw std::invalid_argument("from_angle_delay: q_t exceeds n_f");
  }
  const int64_t nb = h_ad.n_b();
  const auto rows = retained_rows(h_ad.q_f, h_ad.q_l, n_f);
  // inverse antenna DFT first (the padded rows are zero elsewhere)
  const double inv_nb = 1.0 / static_cast<double>(nb);
  ComplexMatrix mid(h_ad.q_t(), nb);
  for (int64_t r = 0; r < h_ad.q_t(); ++r) {
    for (int64_t a = 0; a < nb; ++a) {
      Complex acc(0.0, 0.0);
      for (int64_t b = 0; b < nb; ++b) acc += h_ad.entries(r, b) * twiddle(b, a, nb, +1.0);
      mid(r, a) = acc * inv_nb;
    }
  }
  // forward frequency DFT restricted to the nonzero delay rows
  ComplexMatrix out = ComplexMatrix::Zero(n_f, nb);
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int64_t m = rows[ri];
    for (int64_t f = 0; f < n_f; ++f) {
      const Complex tw = twiddle(f, m, n_f, -1.0);
      for (int64_t a = 0; a < nb; ++a) {
        out(f, a) += tw * mid(static_cast<int64_t>(ri), a);
      }
    }
  }
  return SpatialFrequencyCsi(std::move(out));
}

CsiSamplePair generate_channel_pair(const ChannelModelConfig& config, SeededRng& rng) {
  config.validate();
  const int64_t nf = config.n_f, nb = config.n_b;
  const double delta_f = config.bandwidth_hz / static_cast<double>(nf);
  ComplexMatrix dl(nf, nb), ul(nf, nb);
  std::vector<Complex> fvec(static_cast<size_t>(nf)), bvec(static_cast<size_t>(nb));
  for (;;) {
    dl.setZero();
    ul.setZero();
    double power = 0.0;
    std::vector<double> tau(config.n_clusters), theta(config.n_clusters), amp(config.n_clusters),
        phase_dl(config.n_clusters), phase_ul(config.n_clusters);
    for (int64_t p = 0; p < config.n_clusters; ++p) {
      // Exponential delay profile with matching power decay; uniform angles.
      tau[p] = -std::log(1.0 - rng.uniform()) * config.delay_spread_s;
      theta[p] = rng.uniform(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
      amp[p] = std::exp(-tau[p] / (2.0 * config.delay_spread_s));
      phase_dl[p] = rng.uniform(0.0, kTwoPi);
      phase_ul[p] = rng.uniform(0.0, kTwoPi);
      power += amp[p] * amp[p];
    }
    const double norm = std::sqrt(power);
    for (int64_t p = 0; p < config.n_clusters; ++p) {
      const double a = amp[p] / norm;
      for (int64_t f = 0; f < nf; ++f) {
        const double ang = -kTwoPi * tau[p] * static_cast<double>(f) * delta_f;
        fvec[static_cast<size_t>(f)] = Complex(std::cos(ang), std::sin(ang));
      }
      const double st = std::sin(theta[p]);
      for (int64_t b = 0; b < nb; ++b) {
        const double ang = -std::numbers::pi * static_cast<double>(b) * st;
        bvec[static_cast<size_t>(b)] = Complex(std::cos(ang), std::sin(ang));
      }
      const Complex g_dl = a * Complex(std::cos(phase_dl[p]), std::sin(phase_dl[p]));
      const Complex g_ul = a * Complex(std::cos(phase_ul[p]), std::sin(phase_ul[p]));
      for (int64_t b = 0; b < nb; ++b) {
        const Complex dlb = g_dl * bvec[static_cast<size_t>(b)];
        const Complex ulb = g_ul * bvec[static_cast<size_t>(b)];
        for (int64_t f = 0; f < nf; ++f) {
          dl(f, b) += dlb * fvec[static_cast<size_t>(f)];
          ul(f, b) += ulb * fvec[static_cast<size_t>(f)];
        }
      }
    }
    if (dl.norm() > 0.0 && ul.norm() > 0.0) break;
  }
  return CsiSamplePair(SpatialFrequencyCsi(dl), SpatialFrequencyCsi(ul));
}

CsiDataset generate_dataset(const ChannelModelConfig& config, int64_t n_samples, int64_t split) {
  if (n_samples < 0 || split < 0 || split > n_samples) {
    throw std::invalid_argument("generate_dataset: invalid sample count or split");
  }
  CsiDataset ds;
  ds.samples.reserve(static_cast<size_t>(n_samples));
  for (int64_t i = 0; i < n_samples; ++i) {
    SeededRng rng(mix_seed(config.rng_seed, static_cast<uint64_t>(i)));
    ds.samples.push_back(generate_channel_pair(config, rng));
  }
  ds.split = split;
  ds.validate();
  return ds;
}

double nmse_db(const std::vector<SpatialFrequencyCsi>& truth,
               const std::vector<SpatialFrequencyCsi>& estimate, double floor_db) {
  if (truth.empty() || truth.size() != estimate.size()) {
    throw std::invalid_argument("nmse_db: lists must be nonempty and equal length");
  }
  double acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const ComplexMatrix& t = truth[i].entries;
    const ComplexMatrix& e = estimate[i].entries;
    if (t.rows() != e.rows() || t.cols() != e.cols()) {
      throw std::invalid_argument("nmse_db: dimension mismatch at sample " + std::to_string(i));
    }
    double err = 0.0, denom = 0.0;
    for (int64_t c = 0; c < t.cols(); ++c) {
      for (int64_t r = 0; r < t.rows(); ++r) {
        err += std::norm(e(r, c) - t(r, c));
        denom += std::norm(t(r, c));
      }
    }
    if (!(denom > 0.0)) {
      throw std::invalid_argument("nmse_db: zero-norm truth at sample " + std::to_string(i));
    }
    acc += err / denom;
  }
  const double mean = acc / static_cast<double>(truth.size());
  if (!(mean > 0.0)) return floor_db;
  return std::max(10.0 * std::log10(mean), floor_db);
}

double reciprocity_correlation(const CsiSamplePair& pair, int64_t q_f, int64_t q_l) {
  const ComplexMatrix a = to_angle_delay(pair.downlink, q_f, q_l).entries;
  const ComplexMatrix b = to_angle_delay(pair.uplink, q_f, q_l).entries;
  const int64_t n = a.rows() * a.cols();
  double ma = 0.0, mb = 0.0;
  for (int64_t c = 0; c < a.cols(); ++c) {
    for (int64_t r = 0; r < a.rows(); ++r) {
      ma += std::abs(a(r, c));
      mb += std::abs(b(r, c));
    }
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (int64_t c = 0; c < a.cols(); ++c) {
    for (int64_t r = 0; r < a.rows(); ++r) {
      const double da = std::abs(a(r, c)) - ma;
      const double db = std::abs(b(r, c)) - mb;
      cov += da * db;
      va += da * da;
      vb += db * db;
    }
  }
  if (!(va > 0.0) || !(vb > 0.0)) return 0.0;
  return cov / std::sqrt(va * vb);
}

void dataset_save(const CsiDataset& ds, const std::string& path) {
  ds.validate();
  ByteWriter w;
  w.put_bytes("CSID", 4);
  w.put_u32(1);
  w.put_u32(static_cast<uint32_t>(ds.n_f()));
  w.put_u32(static_cast<uint32_t>(ds.n_b()));
  w.put_u32(static_cast<uint32_t>(ds.size()));
  w.put_u32(static_cast<uint32_t>(ds.split));
  for (const auto& s : ds.samples) {
    for (const ComplexMatrix* m : {&s.downlink.entries, &s.uplink.entries}) {
      for (int64_t r = 0; r < m->rows(); ++r) {
        for (int64_t c = 0; c < m->cols(); ++c) {
          w.put_f64((*m)(r, c).real());
          w.put_f64((*m)(r, c).imag());
        }
      }
    }
  }
  write_file_bytes(path, w.bytes());
}

CsiDataset dataset_load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string(magic, 4) != "CSID") r.fail("bad magic, expected \"CSID\"");
  const uint32_t version = r.get_u32();
  if (version != 1) r.fail("unsupported version " + std::to_string(version));
  const int64_t nf = r.get_u32();
  const int64_t nb = r.get_u32();
  const int64_t count = r.get_u32();
  const int64_t split = r.get_u32();
  const size_t expected = 24 + static_cast<size_t>(count) * 2 * static_cast<size_t>(nf * nb) * 16;
  if (bytes.size() != expected) {
    r.fail("truncated or oversized payload: expected " + std::to_string(expected) +
           " bytes, got " + std::to_string(bytes.size()));
  }
  CsiDataset ds;
  ds.split = split;
  ds.samples.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    ComplexMatrix dl(nf, nb), ul(nf, nb);
    for (ComplexMatrix* m : {&dl, &ul}) {
      for (int64_t rr = 0; rr < nf; ++rr) {
        for (int64_t cc = 0; cc < nb; ++cc) {
          const double re = r.get_f64();
          const double im = r.get_f64();
          (*m)(rr, cc) = Complex(re, im);
        }
      }
    }
    ds.samples.emplace_back(SpatialFrequencyCsi(std::move(dl)), SpatialFrequencyCsi(std::move(ul)));
  }
  ds.validate();
  return ds;
}

}  // namespace magpha
