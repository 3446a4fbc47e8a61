// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "magpha/autodiff.hpp"
#include "magpha/csi.hpp"
#include "magpha/decomposition.hpp"
#include "magpha/nn.hpp"

namespace magpha {

enum class CoreKind { CircularConv, LinearConv, Dense };
enum class QuantizerKind { Ssq, Blq };

/// Phase-reconstruction variants. Smdp is the cosine/sign architecture with
/// a combining network; Naive and Mdpp feed phases in radians through the
/// same encoder/decoder stack without sign feedback or a combiner; Mdpq has
/// no learned phase path (quantized phases go straight to the combiner).
enum class PhaseMethod { Smdp, Naive, Mdpp, Mdpq };

std::string to_string(CoreKind k);
std::string to_string(QuantizerKind k);
std::string to_string(PhaseMethod m);
CoreKind core_kind_from_string(const std::string& s);
QuantizerKind quantizer_kind_from_string(const std::string& s);
PhaseMethod phase_method_from_string(const std::string& s);

/// The per-compression-ratio magnitude-CDF tables used by the Mdpq baseline.
MdpqTable default_mdpq_table(double cr_pha);

struct FrameworkConfig {
  double cr_mag = 0.25;
  double cr_pha = 0.125;
  int64_t k_mag = 8;
  int64_t k_pha = 8;
  double r_s = 0.25;
  int64_t q_t = 16;
  int64_t n_b = 64;
  // Leading/trailing retained delay rows; q_f + q_l must equal q_t. Kept in
  // the model config so checkpoints fully describe how to preprocess data.
  int64_t q_f = 12;
  int64_t q_l = 4;
  // core_kind and quantizer_kind select the phase-path design (encoder,
  // decoder, combiner); the magnitude branch always runs circular
  // convolutions with SSQ.
  CoreKind core_kind = CoreKind::CircularConv;
  QuantizerKind quantizer_kind = QuantizerKind::Ssq;
  PhaseMethod phase_method = PhaseMethod::Smdp;
  double ssq_alpha = 50.0;
  bool sign_mask_channel = false;  // feed the transmitted mask as an extra channel
  MdpqTable mdpq_table;            // empty -> default_mdpq_table(cr_pha)
  uint64_t seed = 1;

  void validate() const;
  int64_t entries() const { return q_t * n_b; }
  int64_t mag_codeword_len() const;
  /// Values emitted by the phase encoder; BLQ widens the dense layer so the
  /// one-bit codewords carry the same total bit budget as SSQ.
  int64_t phase_codeword_len() const;
  int64_t phase_codeword_bits() const { return quantizer_kind == QuantizerKind::Blq ? 1 : k_pha; }
  int64_t sign_count() const { return ceil_count(r_s, entries()); }
  MdpqTable effective_mdpq_table() const;
};

/// The networks plus everything needed to run them. input_scale is the
/// power-of-two divisor that maps angle-delay magnitudes into [0, 1]-range
/// network units; scaling by powers of two keeps unscale(scale(x)) exact.
struct DualNetModel {
  FrameworkConfig config;
  ParameterStore params;
  std::vector<LayerSpec> mag_encoder_layers;
  std::vector<LayerSpec> mag_decoder_layers;
  std::vector<LayerSpec> phase_encoder_layers;
  std::vector<LayerSpec> phase_decoder_layers;
  std::vector<LayerSpec> combiner_layers;
  double input_scale = 1.0;
  bool mag_trained = false;

  bool has_phase_network() const {
    return config.phase_method != PhaseMethod::Mdpq;
  }
  bool has_combiner() const {
    return config.phase_method == PhaseMethod::Smdp || config.phase_method == PhaseMethod::Mdpq;
  }
};

/// Builds a model with seeded Glorot initialization. Each sub-network draws
/// from its own seed stream, so the magnitude branch initializes identically
/// across phase-method variants. The last combiner layer is zero-initialized
/// so an untrained combiner reproduces the analytic recombination exactly.
DualNetModel build_model(const FrameworkConfig& config);

// ---------------------------------------------------------------------------
// Batched network evaluation (scaled units). Shapes: images are [N,C,H,W]
// with H = q_t, W = n_b; codewords are [N, L].
// ---------------------------------------------------------------------------

Var apply_mag_encoder(const DualNetModel& m, const Var& mag_scaled, QuantizerMode mode);
Var apply_mag_decoder(const DualNetModel& m, const Var& codeword, const Var& ul_mag_scaled);
Var apply_phase_encoder(const DualNetModel& m, const Var& phase_input, QuantizerMode mode);
/// `aux` carries the decoder-side sign channel (and optional mask channel)
/// for the Smdp method; pass an invalid Var for Naive/Mdpp.
Var apply_phase_decoder(const DualNetModel& m, const Var& codeword, const Var& aux);
/// Pythagorean initial estimate refined by the combiner core with a residual
/// connection. Returns [N,2,H,W] (real, imaginary channels).
Var apply_combiner(const DualNetModel& m, const Var& mag_hat, const Var& cos_hat,
                   const Var& signs);

// ---------------------------------------------------------------------------
// Single-sample operations in natural (unscaled) units.
// ---------------------------------------------------------------------------

std::vector<double> mag_encode(const DualNetModel& m, const MagnitudeMatrix& mag,
                               QuantizerMode mode);
MagnitudeMatrix mag_decode(const DualNetModel& m, const std::vector<double>& codeword,
                           const MagnitudeMatrix& ul_mag);
std::vector<double> phase_encode(const DualNetModel& m, const CosineMatrix& cos,
                                 QuantizerMode mode);
CosineMatrix phase_decode(const DualNetModel& m, const std::vector<double>& codeword,
                          const SignMatrix& signs);
AngleDelayCsi combine(const DualNetModel& m, const MagnitudeMatrix& mag_hat,
                      const CosineMatrix& cos_hat, const SignMatrix& signs, int64_t q_f,
                      int64_t q_l);

/// How the decoder maps received sign bits onto matrix entries: by the ranks
/// of its recovered magnitudes (deployable) or of the true magnitudes
/// (genie ablation).
enum class SignPlacement { Recovered, Genie };

struct FeedbackPayload {
  std::vector<int64_t> mag_levels;    // k_mag-bit quantizer level indices
  std::vector<int64_t> phase_levels;  // k_pha-bit (SSQ) or 1-bit (BLQ) indices
  std::vector<int> sign_bits;         // selection-rank order (Smdp only)
  BitStream mdpq_bits;                // Mdpq method only

  int64_t phase_bit_length(const FrameworkConfig& config) const;
  int64_t bit_length(const FrameworkConfig& config) const;
  /// Mag levels, then phase levels, then sign bits, big-endian bit packing,
  /// zero-padded to a byte boundary.
  BitStream serialize(const FrameworkConfig& config) const;
};

struct ForwardOutput {
  AngleDelayCsi estimate;
  MagnitudeMatrix mag_hat;
  CosineMatrix cos_hat;    // Smdp/Mdpq
  RealMatrix phase_hat;    // Naive/Mdpp radians
  SignMatrix decoder_signs;
  FeedbackPayload payload;
};

/// Full encode/feedback/decode pass for one sample.
ForwardOutput forward(const DualNetModel& m, const AngleDelayCsi& h, const MagnitudeMatrix& ul_mag,
                      QuantizerMode mode, SignPlacement placement = SignPlacement::Recovered);

// ---------------------------------------------------------------------------
// Losses (batch-averaged). Truth enters as constant tensors shaped like the
// estimates; estimates are graph Vars.
// ---------------------------------------------------------------------------

Var loss_magnitude(const Var& mag_hat, const Var& mag_true);
/// Complex MSE through sinusoidal activations on predicted radians.
Var loss_naive(const Tensor& re_true, const Tensor& im_true, const Var& mag_hat,
               const Var& phase_hat);
/// Raw radian error weighted by the true magnitude.
Var loss_mdpp(const Var& phase_hat, const Tensor& phase_true, const Tensor& mag_true);
/// Cosine/sine component error with the sine rebuilt from the sign matrix;
/// equals the complex squared Frobenius error when the signs are correct.
Var loss_smdp(const Tensor& re_true, const Tensor& im_true, const Var& mag_hat,
              const Var& cos_hat, const Tensor& signs);

/// Convenience scalar form of loss_smdp for plain matrices.
double loss_smdp_value(const AngleDelayCsi& h, const MagnitudeMatrix& mag_hat,
                       const CosineMatrix& cos_hat, const SignMatrix& signs);

// Tensor <-> Eigen adapters (row-major).
Tensor tensor_from_matrix(const RealMatrix& m);
RealMatrix matrix_from_tensor(const Tensor& t, int64_t rows, int64_t cols);

}  // namespace magpha
