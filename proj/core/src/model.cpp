// SPDX-License-Identifier: Apache-2.0
#include "magpha/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "magpha/errors.hpp"

namespace magpha {

namespace {

constexpr double kSqrtGradFloor = 1e-12;
constexpr int64_t kCoreKernel = 7;
const int64_t kCoreChannels[3] = {16, 8, 4};

int64_t batch_of(const Tensor& t) { return t.rank() == 4 ? t.dim(0) : 1; }

int64_t round_len(double ratio, int64_t entries) {
  return std::llround(ratio * static_cast<double>(entries));
}

}  // namespace

std::string to_string(CoreKind k) {
  switch (k) {
    case CoreKind::CircularConv: return "circular";
    case CoreKind::LinearConv: return "linear";
    case CoreKind::Dense: return "dense";
  }
  return "?";
}

std::string to_string(QuantizerKind k) {
  return k == QuantizerKind::Ssq ? "ssq" : "blq";
}

std::string to_string(PhaseMethod m) {
  switch (m) {
    case PhaseMethod::Smdp: return "smdp";
    case PhaseMethod::Naive: return "naive";
    case PhaseMethod::Mdpp: return "mdpp";
    case PhaseMethod::Mdpq: return "mdpq";
  }
  return "?";
}

CoreKind core_kind_from_string(const std::string& s) {
  if (s == "circular" || s == "circular-conv" || s == "ccnn") return CoreKind::CircularConv;
  if (s == "linear" || s == "linear-conv" || s == "cnn") return CoreKind::LinearConv;
  if (s == "dense" || s == "dnn") return CoreKind::Dense;
  throw std::invalid_argument("unknown core kind '" + s + "'");
}

QuantizerKind quantizer_kind_from_string(const std::string& s) {
  if (s == "ssq") return QuantizerKind::Ssq;
  if (s == "blq") return QuantizerKind::Blq;
  throw std::invalid_argument("unknown quantizer kind '" + s + "'");
}

PhaseMethod phase_method_from_string(const std::string& s) {
  if (s == "smdp") return PhaseMethod::Smdp;
  if (s == "naive") return PhaseMethod::Naive;
  if (s == "mdpp") return PhaseMethod::Mdpp;
  if (s == "mdpq") return PhaseMethod::Mdpq;
  throw std::invalid_argument("unknown phase method '" + s + "'");
}

MdpqTable default_mdpq_table(double cr_pha) {
  MdpqTable t;
  t.cdf_thresholds = {0.0, 0.5, 0.7, 0.8, 0.9};
  // finer table at the higher rate, coarser at the lower one
  if (cr_pha >= 1.0 / 12.0) {
    t.bits_per_bin = {0, 0, 0, 3, 7};
  } else {
    t.bits_per_bin = {0, 0, 0, 0, 5};
  }
  return t;
}

void FrameworkConfig::validate() const {
  if (!(cr_mag > 0.0) || cr_mag > 1.0 || !(cr_pha > 0.0) || cr_pha > 1.0) {
    throw std::invalid_argument("FrameworkConfig: compression ratios must be in (0, 1]");
  }
  if (k_mag < 1 || k_pha < 1) {
    throw std::invalid_argument("FrameworkConfig: quantizer bits must be >= 1");
  }
  if (!(r_s > 0.0) || r_s > 1.0) {
    throw std::invalid_argument("FrameworkConfig: r_s must be in (0, 1]");
  }
  if (q_t < 1 || n_b < 1) {
    throw std::invalid_argument("FrameworkConfig: dimensions must be >= 1");
  }
  if (q_f < 0 || q_l < 0 || q_f + q_l != q_t) {
    throw std::invalid_argument("FrameworkConfig: q_f + q_l must equal q_t");
  }
  if (!(ssq_alpha > 0.0)) {
    throw std::invalid_argument("FrameworkConfig: ssq_alpha must be > 0");
  }
  if (round_len(cr_mag, entries()) < 1 || round_len(cr_pha, entries()) < 1) {
    throw std::invalid_argument("FrameworkConfig: codeword length rounds to zero");
  }
  if (!mdpq_table.cdf_thresholds.empty()) mdpq_table.validate();
}

int64_t FrameworkConfig::mag_codeword_len() const { return round_len(cr_mag, entries()); }

int64_t FrameworkConfig::phase_codeword_len() const {
  const int64_t base = round_len(cr_pha, entries());
  return quantizer_kind == QuantizerKind::Blq ? base * k_pha : base;
}

MdpqTable FrameworkConfig::effective_mdpq_table() const {
  return mdpq_table.cdf_thresholds.empty() ? default_mdpq_table(cr_pha) : mdpq_table;
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

namespace {

LayerSpec conv_spec(CoreKind kind, int64_t cin, int64_t cout, Activation act) {
  LayerSpec s;
  s.kind = kind == CoreKind::LinearConv ? LayerKind::LinearConv : LayerKind::CircularConv;
  s.kernel = kCoreKernel;
  s.in_channels = cin;
  s.out_channels = cout;
  s.activation = act;
  return s;
}

LayerSpec dense_spec(int64_t in_width, int64_t out_width, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_width = in_width;
  s.out_width = out_width;
  s.activation = act;
  return s;
}

// Four core layers mapping c_in channels to c_out, channels 16/8/4/c_out.
// Dense cores flatten the image and run widths h*w, ending at c_out*h*w.
std::vector<LayerSpec> core_block(CoreKind kind, int64_t c_in, int64_t c_out, int64_t hw,
                                  const std::vector<Activation>& acts) {
  std::vector<LayerSpec> specs;
  if (kind == CoreKind::Dense) {
    specs.push_back(dense_spec(c_in * hw, hw, acts[0]));
    specs.push_back(dense_spec(hw, hw, acts[1]));
    specs.push_back(dense_spec(hw, hw, acts[2]));
    specs.push_back(dense_spec(hw, c_out * hw, acts[3]));
  } else {
    specs.push_back(conv_spec(kind, c_in, kCoreChannels[0], acts[0]));
    specs.push_back(conv_spec(kind, kCoreChannels[0], kCoreChannels[1], acts[1]));
    specs.push_back(conv_spec(kind, kCoreChannels[1], kCoreChannels[2], acts[2]));
    specs.push_back(conv_spec(kind, kCoreChannels[2], c_out, acts[3]));
  }
  return specs;
}

void create_layer_params(ParameterStore& params, const std::string& name, const LayerSpec& spec,
                         SeededRng& rng, bool zero_init = false) {
  spec.validate();
  if (spec.kind == LayerKind::Dense) {
    Tensor w = zero_init ? Tensor({spec.out_width, spec.in_width})
                         : glorot_uniform({spec.out_width, spec.in_width}, spec.in_width,
                                          spec.out_width, rng);
    params.create(name + ".weight", std::move(w));
    params.create(name + ".bias", Tensor({spec.out_width}));
  } else {
    const int64_t kk = spec.kernel * spec.kernel;
    Tensor w = zero_init
                   ? Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel})
                   : glorot_uniform({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                                    spec.in_channels * kk, spec.out_channels * kk, rng);
    params.create(name + ".kernel", std::move(w));
    params.create(name + ".bias", Tensor({spec.out_channels}));
  }
}

void create_core_params(ParameterStore& params, const std::string& prefix,
                        const std::vector<LayerSpec>& core, SeededRng& rng,
                        bool zero_last = false) {
  for (size_t i = 0; i < core.size(); ++i) {
    const bool zero = zero_last && i + 1 == core.size();
    create_layer_params(params, prefix + ".core" + std::to_string(i + 1), core[i], rng, zero);
  }
}

}  // namespace

DualNetModel build_model(const FrameworkConfig& config) {
  config.validate();
  DualNetModel m;
  m.config = config;
  const int64_t hw = config.entries();
  const int64_t lm = config.mag_codeword_len();
  const int64_t lp = config.phase_codeword_len();
  const std::vector<Activation> leaky4(4, Activation::LeakyLinear);
  const std::vector<Activation> tanh4(4, Activation::Tanh);
  const std::vector<Activation> dec_mag{Activation::LeakyLinear, Activation::LeakyLinear,
                                        Activation::LeakyLinear, Activation::None};

  // Magnitude branch: circular-conv core regardless of the phase-path sweep.
  {
    SeededRng rng(mix_seed(config.seed, 1));
    auto core = core_block(CoreKind::CircularConv, 1, 1, hw, leaky4);
    create_core_params(m.params, "mag_enc", core, rng);
    m.mag_encoder_layers = core;
    m.mag_encoder_layers.push_back(dense_spec(hw, lm, Activation::Sigmoid));
    create_layer_params(m.params, "mag_enc.compress", m.mag_encoder_layers.back(), rng);
  }
  {
    SeededRng rng(mix_seed(config.seed, 2));
    m.mag_decoder_layers.push_back(dense_spec(lm, hw, Activation::None));
    create_layer_params(m.params, "mag_dec.expand", m.mag_decoder_layers.front(), rng);
    auto core = core_block(CoreKind::CircularConv, 2, 1, hw, dec_mag);
    create_core_params(m.params, "mag_dec", core, rng);
    m.mag_decoder_layers.insert(m.mag_decoder_layers.end(), core.begin(), core.end());
  }

  if (m.has_phase_network()) {
    SeededRng rng(mix_seed(config.seed, 3));
    auto core = core_block(config.core_kind, 1, 1, hw, tanh4);
    create_core_params(m.params, "phase_enc", core, rng);
    m.phase_encoder_layers = core;
    m.phase_encoder_layers.push_back(dense_spec(hw, lp, Activation::Sigmoid));
    create_layer_params(m.params, "phase_enc.compress", m.phase_encoder_layers.back(), rng);

    SeededRng rng2(mix_seed(config.seed, 4));
    int64_t dec_in = 1;
    Activation final_act = Activation::None;
    if (config.phase_method == PhaseMethod::Smdp) {
      dec_in = config.sign_mask_channel ? 3 : 2;
      final_act = Activation::Tanh;
    }
    const std::vector<Activation> dec_acts{Activation::LeakyLinear, Activation::LeakyLinear,
                                           Activation::LeakyLinear, final_act};
    m.phase_decoder_layers.push_back(dense_spec(lp, hw, Activation::None));
    create_layer_params(m.params, "phase_dec.expand", m.phase_decoder_layers.front(), rng2);
    auto dcore = core_block(config.core_kind, dec_in, 1, hw, dec_acts);
    create_core_params(m.params, "phase_dec", dcore, rng2);
    m.phase_decoder_layers.insert(m.phase_decoder_layers.end(), dcore.begin(), dcore.end());
  }

  if (m.has_combiner()) {
    SeededRng rng(mix_seed(config.seed, 5));
    const std::vector<Activation> comb_acts{Activation::LeakyLinear, Activation::LeakyLinear,
                                            Activation::LeakyLinear, Activation::None};
    m.combiner_layers = core_block(config.core_kind, 2, 2, hw, comb_acts);
    create_core_params(m.params, "comb", m.combiner_layers, rng, /*zero_last=*/true);
  }
  return m;
}

// ---------------------------------------------------------------------------
// network evaluation
// ---------------------------------------------------------------------------

namespace {

Var apply_core(const DualNetModel& m, const std::string& prefix,
               const std::vector<LayerSpec>& core, Var h, int64_t height, int64_t width) {
  bool flat = false;
  int64_t channels = h.value().dim(1);
  for (size_t i = 0; i < core.size(); ++i) {
    const LayerSpec& spec = core[i];
    const std::string name = prefix + ".core" + std::to_string(i + 1);
    const int64_t n = h.value().dim(0);
    if (spec.kind == LayerKind::Dense) {
      if (!flat) {
        h = reshape(h, {n, channels * height * width});
        flat = true;
      }
      h = dense(h, m.params.get(name + ".weight"), m.params.get(name + ".bias"));
    } else {
      h = conv2d(h, m.params.get(name + ".kernel"), m.params.get(name + ".bias"),
                 spec.kind == LayerKind::CircularConv ? ConvPadding::Circular : ConvPadding::Zero);
      channels = spec.out_channels;
    }
    h = apply_activation(h, spec.activation);
  }
  if (flat) {
    const int64_t n = h.value().dim(0);
    const int64_t c_out = h.value().dim(1) / (height * width);
    h = reshape(h, {n, c_out, height, width});
  }
  return h;
}

Var quantize_phase_codeword(const DualNetModel& m, const Var& x, QuantizerMode mode) {
  if (m.config.quantizer_kind == QuantizerKind::Blq) return blq_quantize(x);
  return ssq_quantize(x, static_cast<int>(m.config.k_pha), m.config.ssq_alpha, mode);
}

std::vector<LayerSpec> core_slice(const std::vector<LayerSpec>& layers, size_t from, size_t count) {
  return {layers.begin() + static_cast<std::ptrdiff_t>(from),
          layers.begin() + static_cast<std::ptrdiff_t>(from + count)};
}

void require_image(const char* op, const DualNetModel& m, const Var& x, int64_t channels) {
  const auto& s = x.value().shape();
  if (s.size() != 4 || s[1] != channels || s[2] != m.config.q_t || s[3] != m.config.n_b) {
    throw std::invalid_argument(std::string(op) + ": expected [N," + std::to_string(channels) +
                                "," + std::to_string(m.config.q_t) + "," +
                                std::to_string(m.config.n_b) + "], got " + x.value().shape_str());
  }
}

void require_codeword(const char* op, const Var& cw, int64_t len) {
  const auto& s = cw.value().shape();
  if (s.size() != 2 || s[1] != len) {
    throw std::invalid_argument(std::string(op) + ": expected codeword [N," + std::to_string(len) +
                                "], got " + cw.value().shape_str());
  }
}

}  // namespace

Var apply_mag_encoder(const DualNetModel& m, const Var& mag_scaled, QuantizerMode mode) {
  require_image("mag_encoder", m, mag_scaled, 1);
  const int64_t n = mag_scaled.value().dim(0);
  Var h = apply_core(m, "mag_enc", core_slice(m.mag_encoder_layers, 0, 4), mag_scaled,
                     m.config.q_t, m.config.n_b);
  h = reshape(h, {n, m.config.entries()});
  h = dense(h, m.params.get("mag_enc.compress.weight"), m.params.get("mag_enc.compress.bias"));
  h = vsigmoid(h);
  return ssq_quantize(h, static_cast<int>(m.config.k_mag), m.config.ssq_alpha, mode);
}

Var apply_mag_decoder(const DualNetModel& m, const Var& codeword, const Var& ul_mag_scaled) {
  require_codeword("mag_decoder", codeword, m.config.mag_codeword_len());
  require_image("mag_decoder", m, ul_mag_scaled, 1);
  const int64_t n = codeword.value().dim(0);
  Var h = dense(codeword, m.params.get("mag_dec.expand.weight"),
                m.params.get("mag_dec.expand.bias"));
  h = reshape(h, {n, 1, m.config.q_t, m.config.n_b});
  h = concat_channels(h, ul_mag_scaled);
  h = apply_core(m, "mag_dec", core_slice(m.mag_decoder_layers, 1, 4), h, m.config.q_t,
                 m.config.n_b);
  return vabs(h);
}

Var apply_phase_encoder(const DualNetModel& m, const Var& phase_input, QuantizerMode mode) {
  if (!m.has_phase_network()) {
    throw InvalidStateError("phase_encoder: this model has no learned phase path");
  }
  require_image("phase_encoder", m, phase_input, 1);
  const int64_t n = phase_input.value().dim(0);
  Var h = apply_core(m, "phase_enc", core_slice(m.phase_encoder_layers, 0, 4), phase_input,
                     m.config.q_t, m.config.n_b);
  h = reshape(h, {n, m.config.entries()});
  h = dense(h, m.params.get("phase_enc.compress.weight"),
            m.params.get("phase_enc.compress.bias"));
  h = vsigmoid(h);
  return quantize_phase_codeword(m, h, mode);
}

Var apply_phase_decoder(const DualNetModel& m, const Var& codeword, const Var& aux) {
  if (!m.has_phase_network()) {
    throw InvalidStateError("phase_decoder: this model has no learned phase path");
  }
  require_codeword("phase_decoder", codeword, m.config.phase_codeword_len());
  const int64_t n = codeword.value().dim(0);
  Var h = dense(codeword, m.params.get("phase_dec.expand.weight"),
                m.params.get("phase_dec.expand.bias"));
  h = reshape(h, {n, 1, m.config.q_t, m.config.n_b});
  if (m.config.phase_method == PhaseMethod::Smdp) {
    const int64_t aux_channels = m.config.sign_mask_channel ? 2 : 1;
    require_image("phase_decoder", m, aux, aux_channels);
    h = concat_channels(h, aux);
  } else if (aux.valid()) {
    throw std::invalid_argument("phase_decoder: sign input is only wired for the smdp method");
  }
  return apply_core(m, "phase_dec", core_slice(m.phase_decoder_layers, 1, 4), h, m.config.q_t,
                    m.config.n_b);
}

Var apply_combiner(const DualNetModel& m, const Var& mag_hat, const Var& cos_hat,
                   const Var& signs) {
  if (!m.has_combiner()) {
    throw InvalidStateError("combiner: this model has no combining network");
  }
  require_image("combiner", m, mag_hat, 1);
  require_image("combiner", m, cos_hat, 1);
  require_image("combiner", m, signs, 1);
  Var sin_hat = mul(signs, pythag_sine(cos_hat, kSqrtGradFloor));
  Var re0 = mul(mag_hat, cos_hat);
  Var im0 = mul(mag_hat, sin_hat);
  Var initial = concat_channels(re0, im0);
  Var refined = apply_core(m, "comb", m.combiner_layers, initial, m.config.q_t, m.config.n_b);
  return add(initial, refined);
}

// ---------------------------------------------------------------------------
// single-sample wrappers
// ---------------------------------------------------------------------------

Tensor tensor_from_matrix(const RealMatrix& m) {
  Tensor t({m.rows(), m.cols()});
  for (int64_t r = 0; r < m.rows(); ++r) {
    for (int64_t c = 0; c < m.cols(); ++c) t.at2(r, c) = m(r, c);
  }
  return t;
}

RealMatrix matrix_from_tensor(const Tensor& t, int64_t rows, int64_t cols) {
  if (t.numel() != rows * cols) {
    throw std::invalid_argument("matrix_from_tensor: element count mismatch");
  }
  RealMatrix m(rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) m(r, c) = t[r * cols + c];
  }
  return m;
}

namespace {

Var image_var(const DualNetModel& m, const RealMatrix& mat) {
  Tensor t({1, 1, m.config.q_t, m.config.n_b});
  for (int64_t r = 0; r < mat.rows(); ++r) {
    for (int64_t c = 0; c < mat.cols(); ++c) t[r * mat.cols() + c] = mat(r, c);
  }
  return Var::constant(std::move(t));
}

RealMatrix image_to_matrix(const DualNetModel& m, const Tensor& t, int64_t channel = 0) {
  RealMatrix out(m.config.q_t, m.config.n_b);
  const int64_t hw = m.config.entries();
  for (int64_t i = 0; i < hw; ++i) {
    out(i / m.config.n_b, i % m.config.n_b) = t[channel * hw + i];
  }
  return out;
}

Var sign_aux_var(const DualNetModel& m, const SignMatrix& signs) {
  const int64_t channels = m.config.sign_mask_channel ? 2 : 1;
  Tensor t({1, channels, m.config.q_t, m.config.n_b});
  const int64_t hw = m.config.entries();
  for (int64_t r = 0; r < signs.signs.rows(); ++r) {
    for (int64_t c = 0; c < signs.signs.cols(); ++c) {
      const int64_t i = r * signs.signs.cols() + c;
      t[i] = signs.signs(r, c);
      if (channels == 2) t[hw + i] = signs.transmitted(r, c) ? 1.0 : 0.0;
    }
  }
  return Var::constant(std::move(t));
}

void require_matrix_shape(const char* op, const DualNetModel& m, int64_t rows, int64_t cols) {
  if (rows != m.config.q_t || cols != m.config.n_b) {
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(m.config.q_t) +
                                "x" + std::to_string(m.config.n_b) + " input");
  }
}

}  // namespace

std::vector<double> mag_encode(const DualNetModel& m, const MagnitudeMatrix& mag,
                               QuantizerMode mode) {
  require_matrix_shape("mag_encode", m, mag.entries.rows(), mag.entries.cols());
  Var cw = apply_mag_encoder(m, image_var(m, mag.entries / m.input_scale), mode);
  return cw.value().values();
}

MagnitudeMatrix mag_decode(const DualNetModel& m, const std::vector<double>& codeword,
                           const MagnitudeMatrix& ul_mag) {
  if (static_cast<int64_t>(codeword.size()) != m.config.mag_codeword_len()) {
    throw std::invalid_argument("mag_decode: codeword length mismatch");
  }
  require_matrix_shape("mag_decode", m, ul_mag.entries.rows(), ul_mag.entries.cols());
  Var cw = Var::constant(Tensor({1, m.config.mag_codeword_len()}, codeword));
  Var out = apply_mag_decoder(m, cw, image_var(m, ul_mag.entries / m.input_scale));
  return MagnitudeMatrix(image_to_matrix(m, out.value()) * m.input_scale);
}

std::vector<double> phase_encode(const DualNetModel& m, const CosineMatrix& cos,
                                 QuantizerMode mode) {
  require_matrix_shape("phase_encode", m, cos.entries.rows(), cos.entries.cols());
  Var cw = apply_phase_encoder(m, image_var(m, cos.entries), mode);
  return cw.value().values();
}

CosineMatrix phase_decode(const DualNetModel& m, const std::vector<double>& codeword,
                          const SignMatrix& signs) {
  if (m.config.phase_method != PhaseMethod::Smdp) {
    throw InvalidStateError("phase_decode: sign-conditioned decoding is the smdp path");
  }
  if (static_cast<int64_t>(codeword.size()) != m.config.phase_codeword_len()) {
    throw std::invalid_argument("phase_decode: codeword length mismatch");
  }
  Var cw = Var::constant(Tensor({1, m.config.phase_codeword_len()}, codeword));
  Var out = apply_phase_decoder(m, cw, sign_aux_var(m, signs));
  return CosineMatrix(image_to_matrix(m, out.value()));
}

AngleDelayCsi combine(const DualNetModel& m, const MagnitudeMatrix& mag_hat,
                      const CosineMatrix& cos_hat, const SignMatrix& signs, int64_t q_f,
                      int64_t q_l) {
  require_matrix_shape("combine", m, mag_hat.entries.rows(), mag_hat.entries.cols());
  Var out = apply_combiner(m, image_var(m, mag_hat.entries / m.input_scale),
                           image_var(m, cos_hat.entries),
                           image_var(m, signs.signs));
  ComplexMatrix est(m.config.q_t, m.config.n_b);
  const int64_t hw = m.config.entries();
  const Tensor& t = out.value();
  for (int64_t i = 0; i < hw; ++i) {
    est(i / m.config.n_b, i % m.config.n_b) =
        std::complex<double>(t[i], t[hw + i]) * m.input_scale;
  }
  return AngleDelayCsi(std::move(est), q_f, q_l);
}

// ---------------------------------------------------------------------------
// payload
// ---------------------------------------------------------------------------

namespace {

int64_t level_of(double v, int64_t bits) {
  const double levels = static_cast<double>((1ll << bits) - 1);
  return std::llround(std::clamp(v, 0.0, 1.0) * levels);
}

std::vector<int64_t> codeword_levels(const Tensor& cw, int64_t bits) {
  std::vector<int64_t> out(static_cast<size_t>(cw.numel()));
  for (int64_t i = 0; i < cw.numel(); ++i) out[static_cast<size_t>(i)] = level_of(cw[i], bits);
  return out;
}

}  // namespace

int64_t FeedbackPayload::phase_bit_length(const FrameworkConfig& config) const {
  if (config.phase_method == PhaseMethod::Mdpq) return mdpq_bits.bit_count;
  return static_cast<int64_t>(phase_levels.size()) * config.phase_codeword_bits() +
         static_cast<int64_t>(sign_bits.size());
}

int64_t FeedbackPayload::bit_length(const FrameworkConfig& config) const {
  return static_cast<int64_t>(mag_levels.size()) * config.k_mag + phase_bit_length(config);
}

BitStream FeedbackPayload::serialize(const FrameworkConfig& config) const {
  BitStream s;
  for (int64_t v : mag_levels) s.push_bits(static_cast<uint64_t>(v), static_cast<int>(config.k_mag));
  if (config.phase_method == PhaseMethod::Mdpq) {
    for (int64_t i = 0; i < mdpq_bits.bit_count; ++i) s.push_bit(mdpq_bits.get_bit(i));
  } else {
    const int width = static_cast<int>(config.phase_codeword_bits());
    for (int64_t v : phase_levels) s.push_bits(static_cast<uint64_t>(v), width);
  }
  for (int b : sign_bits) s.push_bit(b);
  return s;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

ForwardOutput forward(const DualNetModel& m, const AngleDelayCsi& h, const MagnitudeMatrix& ul_mag,
                      QuantizerMode mode, SignPlacement placement) {
  require_matrix_shape("forward", m, h.entries.rows(), h.entries.cols());
  require_matrix_shape("forward", m, ul_mag.entries.rows(), ul_mag.entries.cols());
  const double s = m.input_scale;
  ForwardOutput out;

  auto [mag, cosm, sign_full] = decompose(h);

  Var mag_cw = apply_mag_encoder(m, image_var(m, mag.entries / s), mode);
  Var mag_hat_scaled = apply_mag_decoder(m, mag_cw, image_var(m, ul_mag.entries / s));
  out.mag_hat = MagnitudeMatrix(image_to_matrix(m, mag_hat_scaled.value()) * s);
  out.payload.mag_levels = codeword_levels(mag_cw.value(), m.config.k_mag);

  const int64_t hw = m.config.entries();
  switch (m.config.phase_method) {
    case PhaseMethod::Smdp: {
      SignMatrix selected = select_signs(sign_full, mag, m.config.r_s);
      BitStream sign_stream = pack_signs(selected, mag);
      for (int64_t i = 0; i < sign_stream.bit_count; ++i) {
        out.payload.sign_bits.push_back(sign_stream.get_bit(i));
      }
      const MagnitudeMatrix& ranking = placement == SignPlacement::Genie ? mag : out.mag_hat;
      out.decoder_signs = unpack_signs(sign_stream, ranking, m.config.sign_count());

      Var phase_cw = apply_phase_encoder(m, image_var(m, cosm.entries), mode);
      out.payload.phase_levels = codeword_levels(phase_cw.value(), m.config.phase_codeword_bits());
      Var cos_hat = apply_phase_decoder(m, phase_cw, sign_aux_var(m, out.decoder_signs));
      out.cos_hat = CosineMatrix(image_to_matrix(m, cos_hat.value()));

      Var combined = apply_combiner(m, mag_hat_scaled, cos_hat,
                                    image_var(m, out.decoder_signs.signs));
      ComplexMatrix est(m.config.q_t, m.config.n_b);
      const Tensor& t = combined.value();
      for (int64_t i = 0; i < hw; ++i) {
        est(i / m.config.n_b, i % m.config.n_b) = std::complex<double>(t[i], t[hw + i]) * s;
      }
      out.estimate = AngleDelayCsi(std::move(est), h.q_f, h.q_l);
      break;
    }
    case PhaseMethod::Naive:
    case PhaseMethod::Mdpp: {
      RealMatrix phase(m.config.q_t, m.config.n_b);
      for (int64_t r = 0; r < phase.rows(); ++r) {
        for (int64_t c = 0; c < phase.cols(); ++c) {
          phase(r, c) = std::arg(h.entries(r, c));
        }
      }
      Var phase_cw =
          apply_phase_encoder(m, image_var(m, phase / std::numbers::pi), mode);
      out.payload.phase_levels = codeword_levels(phase_cw.value(), m.config.phase_codeword_bits());
      Var phase_hat = apply_phase_decoder(m, phase_cw, Var());
      out.phase_hat = image_to_matrix(m, phase_hat.value());

      ComplexMatrix est(m.config.q_t, m.config.n_b);
      for (int64_t r = 0; r < est.rows(); ++r) {
        for (int64_t c = 0; c < est.cols(); ++c) {
          const double p = out.phase_hat(r, c);
          est(r, c) = out.mag_hat.entries(r, c) * std::complex<double>(std::cos(p), std::sin(p));
        }
      }
      out.estimate = AngleDelayCsi(std::move(est), h.q_f, h.q_l);
      break;
    }
    case PhaseMethod::Mdpq: {
      RealMatrix phase(m.config.q_t, m.config.n_b);
      for (int64_t r = 0; r < phase.rows(); ++r) {
        for (int64_t c = 0; c < phase.cols(); ++c) {
          phase(r, c) = std::arg(h.entries(r, c));
        }
      }
      const MdpqTable table = m.config.effective_mdpq_table();
      // Bin allocation uses the true magnitudes at both ends; the allocation
      // side information is assumed shared.
      out.payload.mdpq_bits = mdpq_encode(phase, mag, table);
      RealMatrix phase_q = mdpq_decode(out.payload.mdpq_bits, mag, table);

      RealMatrix cos_q(phase_q.rows(), phase_q.cols()), sign_q(phase_q.rows(), phase_q.cols());
      for (int64_t r = 0; r < phase_q.rows(); ++r) {
        for (int64_t c = 0; c < phase_q.cols(); ++c) {
          cos_q(r, c) = std::cos(phase_q(r, c));
          sign_q(r, c) = std::sin(phase_q(r, c)) < 0.0 ? -1.0 : 1.0;
        }
      }
      out.cos_hat = CosineMatrix(cos_q);
      out.decoder_signs =
          SignMatrix(sign_q, BoolMatrix::Constant(phase_q.rows(), phase_q.cols(), true));

      Var combined = apply_combiner(m, mag_hat_scaled, image_var(m, cos_q), image_var(m, sign_q));
      ComplexMatrix est(m.config.q_t, m.config.n_b);
      const Tensor& t = combined.value();
      for (int64_t i = 0; i < hw; ++i) {
        est(i / m.config.n_b, i % m.config.n_b) = std::complex<double>(t[i], t[hw + i]) * s;
      }
      out.estimate = AngleDelayCsi(std::move(est), h.q_f, h.q_l);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var loss_magnitude(const Var& mag_hat, const Var& mag_true) {
  const double n = static_cast<double>(batch_of(mag_hat.value()));
  return affine(sum(square(sub(mag_hat, mag_true))), 1.0 / n, 0.0);
}

Var loss_naive(const Tensor& re_true, const Tensor& im_true, const Var& mag_hat,
               const Var& phase_hat) {
  const double n = static_cast<double>(batch_of(mag_hat.value()));
  Var re_c = Var::constant(re_true);
  Var im_c = Var::constant(im_true);
  Var re_hat = mul(mag_hat, vcos(phase_hat));
  Var im_hat = mul(mag_hat, vsin(phase_hat));
  Var l = add(sum(square(sub(re_c, re_hat))), sum(square(sub(im_c, im_hat))));
  return affine(l, 1.0 / n, 0.0);
}

Var loss_mdpp(const Var& phase_hat, const Tensor& phase_true, const Tensor& mag_true) {
  const double n = static_cast<double>(batch_of(phase_hat.value()));
  Var diff = sub(phase_hat, Var::constant(phase_true));
  Var weighted = mul(diff, Var::constant(mag_true));
  return affine(sum(square(weighted)), 1.0 / n, 0.0);
}

Var loss_smdp(const Tensor& re_true, const Tensor& im_true, const Var& mag_hat,
              const Var& cos_hat, const Tensor& signs) {
  const double n = static_cast<double>(batch_of(mag_hat.value()));
  Var sin_hat = mul(Var::constant(signs), pythag_sine(cos_hat, kSqrtGradFloor));
  Var re_hat = mul(mag_hat, cos_hat);
  Var im_hat = mul(mag_hat, sin_hat);
  Var l = add(sum(square(sub(Var::constant(re_true), re_hat))),
              sum(square(sub(Var::constant(im_true), im_hat))));
  return affine(l, 1.0 / n, 0.0);
}

double loss_smdp_value(const AngleDelayCsi& h, const MagnitudeMatrix& mag_hat,
                       const CosineMatrix& cos_hat, const SignMatrix& signs) {
  Tensor re(tensor_from_matrix(h.entries.real()));
  Tensor im(tensor_from_matrix(h.entries.imag()));
  Var loss = loss_smdp(re, im, Var::constant(tensor_from_matrix(mag_hat.entries)),
                       Var::constant(tensor_from_matrix(cos_hat.entries)),
                       tensor_from_matrix(signs.signs));
  return loss.value()[0];
}

}  // namespace magpha
