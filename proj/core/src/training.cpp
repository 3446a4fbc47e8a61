// SPDX-License-Identifier: Apache-2.0
#include "magpha/training.hpp"

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "magpha/binio.hpp"
#include "magpha/errors.hpp"

namespace magpha {

namespace {

constexpr int64_t kPrecomputeChunk = 64;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Magnitude: return "magnitude";
    case LossKind::Naive: return "naive";
    case LossKind::Mdpp: return "mdpp";
    case LossKind::Smdp: return "smdp";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "magnitude") return LossKind::Magnitude;
  if (s == "naive") return LossKind::Naive;
  if (s == "mdpp") return LossKind::Mdpp;
  if (s == "smdp") return LossKind::Smdp;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("TrainConfig: epochs and batch_size must be positive");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be > 0");
  if (stage != 1 && stage != 2) throw std::invalid_argument("TrainConfig: stage must be 1 or 2");
}

std::string TrainReport::to_json() const {
  std::string s = "{\n  \"loss_trace\": [";
  for (size_t i = 0; i < loss_trace.size(); ++i) {
    if (i) s += ", ";
    s += fmt_double(loss_trace[i]);
  }
  s += "],\n  \"final_test_nmse_db\": " + fmt_double(final_test_nmse_db);
  s += ",\n  \"wall_clock_s\": " + fmt_double(wall_clock_s);
  s += ",\n  \"parameter_counts\": {";
  bool first = true;
  for (const auto& [k, v] : parameter_counts) {
    if (!first) s += ", ";
    first = false;
    s += "\"" + k + "\": " + std::to_string(v);
  }
  s += "}\n}\n";
  return s;
}

// ---------------------------------------------------------------------------
// dataset preparation
// ---------------------------------------------------------------------------

PreparedDataset prepare_dataset(const CsiDataset& ds, int64_t q_f, int64_t q_l) {
  ds.validate();
  if (ds.size() == 0) throw std::invalid_argument("prepare_dataset: dataset is empty");
  PreparedDataset out;
  out.q_f = q_f;
  out.q_l = q_l;
  out.q_t = q_f + q_l;
  out.n_b = ds.n_b();
  out.n_f = ds.n_f();
  out.split = ds.split;
  const int64_t hw = out.q_t * out.n_b;
  const int64_t n = ds.size();

  out.mag.reserve(n);
  out.ul_mag.reserve(n);
  out.cosm.reserve(n);
  out.phase.reserve(n);
  out.re.reserve(n);
  out.im.reserve(n);
  out.signs_full.reserve(n);

  double max_mag = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const AngleDelayCsi dl = to_angle_delay(ds.samples[static_cast<size_t>(i)].downlink, q_f, q_l);
    const AngleDelayCsi ul = to_angle_delay(ds.samples[static_cast<size_t>(i)].uplink, q_f, q_l);
    auto [mag, cosm, signs] = decompose(dl);
    Tensor tm({hw}), tu({hw}), tc({hw}), tp({hw}), tr({hw}), ti({hw});
    for (int64_t j = 0; j < hw; ++j) {
      const int64_t r = j / out.n_b, c = j % out.n_b;
      const std::complex<double> v = dl.entries(r, c);
      tm[j] = mag.entries(r, c);
      tu[j] = std::abs(ul.entries(r, c));
      tc[j] = cosm.entries(r, c);
      tp[j] = (v == std::complex<double>(0.0, 0.0)) ? 0.0 : std::arg(v);
      tr[j] = v.real();
      ti[j] = v.imag();
      if (i < ds.split) max_mag = std::max({max_mag, tm[j], tu[j]});
    }
    out.mag.push_back(std::move(tm));
    out.ul_mag.push_back(std::move(tu));
    out.cosm.push_back(std::move(tc));
    out.phase.push_back(std::move(tp));
    out.re.push_back(std::move(tr));
    out.im.push_back(std::move(ti));
    out.signs_full.push_back(std::move(signs));
    if (i >= ds.split) out.test_truth.push_back(ds.samples[static_cast<size_t>(i)].downlink);
  }
  // Power-of-two scale keeps scale/unscale round trips exact.
  out.input_scale = max_mag > 0.0 ? std::exp2(std::ceil(std::log2(max_mag))) : 1.0;
  const double inv = 1.0 / out.input_scale;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < hw; ++j) {
      out.mag[static_cast<size_t>(i)][j] *= inv;
      out.ul_mag[static_cast<size_t>(i)][j] *= inv;
      out.re[static_cast<size_t>(i)][j] *= inv;
      out.im[static_cast<size_t>(i)][j] *= inv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

void optimizer_step(ParameterStore& params, const std::vector<std::string>& names,
                    AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  double sq_norm = 0.0;
  for (const auto& name : names) {
    Var p = params.get(name);
    const Tensor& g = p.grad();
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("optimizer_step: non-finite gradient in '" + name + "'");
      }
      sq_norm += g[i] * g[i];
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double clip_scale =
      (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& name : names) {
    Var p = params.get(name);
    Tensor& value = p.mutable_value();
    const Tensor& g = p.grad();
    Tensor& m = state.m.try_emplace(name, Tensor(value.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(value.shape())).first->second;
    for (int64_t i = 0; i < value.numel(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      value[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// batching helpers
// ---------------------------------------------------------------------------

namespace {

Tensor gather_image(const std::vector<Tensor>& pool, const std::vector<int64_t>& idx, int64_t h,
                    int64_t w) {
  const int64_t n = static_cast<int64_t>(idx.size());
  const int64_t hw = h * w;
  Tensor out({n, 1, h, w});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * hw, pool[static_cast<size_t>(idx[static_cast<size_t>(i)])].data(),
                static_cast<size_t>(hw) * sizeof(double));
  }
  return out;
}

Tensor gather_two_channel(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          const std::vector<int64_t>& idx, int64_t h, int64_t w) {
  const int64_t n = static_cast<int64_t>(idx.size());
  const int64_t hw = h * w;
  Tensor out({n, 2, h, w});
  for (int64_t i = 0; i < n; ++i) {
    const auto j = static_cast<size_t>(idx[static_cast<size_t>(i)]);
    std::memcpy(out.data() + i * 2 * hw, a[j].data(), static_cast<size_t>(hw) * sizeof(double));
    std::memcpy(out.data() + i * 2 * hw + hw, b[j].data(),
                static_cast<size_t>(hw) * sizeof(double));
  }
  return out;
}

void require_model_matches(const DualNetModel& model, const PreparedDataset& data) {
  if (model.config.q_t != data.q_t || model.config.n_b != data.n_b) {
    throw std::invalid_argument("training: model dimensions " + std::to_string(model.config.q_t) +
                                "x" + std::to_string(model.config.n_b) +
                                " do not match dataset " + std::to_string(data.q_t) + "x" +
                                std::to_string(data.n_b));
  }
}

void require_scale_matches(const DualNetModel& model, const PreparedDataset& data) {
  if (model.input_scale != data.input_scale) {
    throw std::invalid_argument("training: model input_scale " +
                                std::to_string(model.input_scale) +
                                " differs from dataset scale " +
                                std::to_string(data.input_scale));
  }
}

// Frozen-branch outputs and decoder-side inputs that stay constant through
// stage 2, computed once per training run.
struct Stage2Cache {
  std::vector<Tensor> mag_hat;    // scaled, soft-quantizer magnitude estimates
  std::vector<Tensor> signs_dec;  // +-1 decoder-placed signs (smdp)
  std::vector<Tensor> sign_mask;  // 0/1 transmitted mask (optional channel)
  std::vector<Tensor> mdpq_cos;   // cos of MDPQ-quantized phases
  std::vector<Tensor> mdpq_sign;  // sine signs of MDPQ-quantized phases
};

Stage2Cache build_stage2_cache(const DualNetModel& model, const PreparedDataset& data,
                               SignPlacement placement) {
  Stage2Cache cache;
  const int64_t n_train = data.split;
  const int64_t h = data.q_t, w = data.n_b, hw = h * w;
  cache.mag_hat.resize(static_cast<size_t>(n_train));
  for (int64_t n0 = 0; n0 < n_train; n0 += kPrecomputeChunk) {
    const int64_t n1 = std::min(n_train, n0 + kPrecomputeChunk);
    std::vector<int64_t> idx;
    for (int64_t i = n0; i < n1; ++i) idx.push_back(i);
    Var mag_in = Var::constant(gather_image(data.mag, idx, h, w));
    Var ul_in = Var::constant(gather_image(data.ul_mag, idx, h, w));
    Var cw = apply_mag_encoder(model, mag_in, QuantizerMode::Training);
    Var mh = apply_mag_decoder(model, cw, ul_in);
    for (int64_t i = n0; i < n1; ++i) {
      Tensor t({hw});
      std::memcpy(t.data(), mh.value().data() + (i - n0) * hw,
                  static_cast<size_t>(hw) * sizeof(double));
      cache.mag_hat[static_cast<size_t>(i)] = std::move(t);
    }
  }

  if (model.config.phase_method == PhaseMethod::Smdp) {
    cache.signs_dec.resize(static_cast<size_t>(n_train));
    cache.sign_mask.resize(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) {
      MagnitudeMatrix true_mag(matrix_from_tensor(data.mag[static_cast<size_t>(i)], h, w));
      SignMatrix selected =
          select_signs(data.signs_full[static_cast<size_t>(i)], true_mag, model.config.r_s);
      BitStream bits = pack_signs(selected, true_mag);
      MagnitudeMatrix ranking =
          placement == SignPlacement::Genie
              ? true_mag
              : MagnitudeMatrix(matrix_from_tensor(cache.mag_hat[static_cast<size_t>(i)], h, w));
      SignMatrix placed = unpack_signs(bits, ranking, model.config.sign_count());
      Tensor ts({hw}), tk({hw});
      for (int64_t j = 0; j < hw; ++j) {
        ts[j] = placed.signs(j / w, j % w);
        tk[j] = placed.transmitted(j / w, j % w) ? 1.0 : 0.0;
      }
      cache.signs_dec[static_cast<size_t>(i)] = std::move(ts);
      cache.sign_mask[static_cast<size_t>(i)] = std::move(tk);
    }
  }

  if (model.config.phase_method == PhaseMethod::Mdpq) {
    const MdpqTable table = model.config.effective_mdpq_table();
    cache.mdpq_cos.resize(static_cast<size_t>(n_train));
    cache.mdpq_sign.resize(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) {
      MagnitudeMatrix mag(matrix_from_tensor(data.mag[static_cast<size_t>(i)], h, w));
      RealMatrix phase = matrix_from_tensor(data.phase[static_cast<size_t>(i)], h, w);
      RealMatrix phase_q = mdpq_decode(mdpq_encode(phase, mag, table), mag, table);
      Tensor tc({hw}), ts({hw});
      for (int64_t j = 0; j < hw; ++j) {
        const double p = phase_q(j / w, j % w);
        tc[j] = std::cos(p);
        ts[j] = std::sin(p) < 0.0 ? -1.0 : 1.0;
      }
      cache.mdpq_cos[static_cast<size_t>(i)] = std::move(tc);
      cache.mdpq_sign[static_cast<size_t>(i)] = std::move(ts);
    }
  }
  return cache;
}

Var stage2_batch_loss(const DualNetModel& model, const PreparedDataset& data,
                      const Stage2Cache& cache, const std::vector<int64_t>& idx) {
  const int64_t h = data.q_t, w = data.n_b;
  Var mag_hat = Var::constant(gather_image(cache.mag_hat, idx, h, w));
  switch (model.config.phase_method) {
    case PhaseMethod::Smdp: {
      Var cos_in = Var::constant(gather_image(data.cosm, idx, h, w));
      Var signs = Var::constant(gather_image(cache.signs_dec, idx, h, w));
      Var aux = signs;
      if (model.config.sign_mask_channel) {
        aux = Var::constant(gather_two_channel(cache.signs_dec, cache.sign_mask, idx, h, w));
      }
      Var cw = apply_phase_encoder(model, cos_in, QuantizerMode::Training);
      Var cos_hat = apply_phase_decoder(model, cw, aux);
      Var combined = apply_combiner(model, mag_hat, cos_hat, signs);
      Tensor target = gather_two_channel(data.re, data.im, idx, h, w);
      Var diff = sub(combined, Var::constant(std::move(target)));
      return affine(sum(square(diff)), 1.0 / static_cast<double>(idx.size()), 0.0);
    }
    case PhaseMethod::Naive: {
      Tensor phase_in = gather_image(data.phase, idx, h, w);
      for (int64_t i = 0; i < phase_in.numel(); ++i) phase_in[i] /= std::numbers::pi;
      Var cw = apply_phase_encoder(model, Var::constant(std::move(phase_in)),
                                   QuantizerMode::Training);
      Var phase_hat = apply_phase_decoder(model, cw, Var());
      return loss_naive(gather_image(data.re, idx, h, w), gather_image(data.im, idx, h, w),
                        mag_hat, phase_hat);
    }
    case PhaseMethod::Mdpp: {
      Tensor phase_in = gather_image(data.phase, idx, h, w);
      for (int64_t i = 0; i < phase_in.numel(); ++i) phase_in[i] /= std::numbers::pi;
      Var cw = apply_phase_encoder(model, Var::constant(std::move(phase_in)),
                                   QuantizerMode::Training);
      Var phase_hat = apply_phase_decoder(model, cw, Var());
      return loss_mdpp(phase_hat, gather_image(data.phase, idx, h, w),
                       gather_image(data.mag, idx, h, w));
    }
    case PhaseMethod::Mdpq: {
      Var cos_hat = Var::constant(gather_image(cache.mdpq_cos, idx, h, w));
      Var signs = Var::constant(gather_image(cache.mdpq_sign, idx, h, w));
      Var combined = apply_combiner(model, mag_hat, cos_hat, signs);
      Tensor target = gather_two_channel(data.re, data.im, idx, h, w);
      Var diff = sub(combined, Var::constant(std::move(target)));
      return affine(sum(square(diff)), 1.0 / static_cast<double>(idx.size()), 0.0);
    }
  }
  throw std::invalid_argument("stage2_batch_loss: unknown phase method");
}

}  // namespace

std::vector<std::string> stage1_parameter_names(const DualNetModel& model) {
  auto names = model.params.names_with_prefix("mag_enc.");
  auto dec = model.params.names_with_prefix("mag_dec.");
  names.insert(names.end(), dec.begin(), dec.end());
  return names;
}

std::vector<std::string> stage2_parameter_names(const DualNetModel& model) {
  std::vector<std::string> names;
  if (model.has_phase_network()) {
    names = model.params.names_with_prefix("phase_enc.");
    auto dec = model.params.names_with_prefix("phase_dec.");
    names.insert(names.end(), dec.begin(), dec.end());
  }
  if (model.has_combiner() &&
      (model.config.phase_method == PhaseMethod::Smdp ||
       model.config.phase_method == PhaseMethod::Mdpq)) {
    auto comb = model.params.names_with_prefix("comb.");
    names.insert(names.end(), comb.begin(), comb.end());
  }
  return names;
}

namespace {

std::map<std::string, int64_t> count_parameters(const DualNetModel& model) {
  std::map<std::string, int64_t> counts;
  counts["mag_encoder"] = model.params.parameter_count("mag_enc.");
  counts["mag_decoder"] = model.params.parameter_count("mag_dec.");
  counts["phase_encoder"] = model.params.parameter_count("phase_enc.");
  counts["phase_decoder"] = model.params.parameter_count("phase_dec.");
  counts["combiner"] = model.params.parameter_count("comb.");
  counts["total"] = model.params.parameter_count();
  return counts;
}

std::vector<int64_t> epoch_order(int64_t n_train, uint64_t seed, uint64_t stage_tag,
                                 int64_t epoch) {
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
  SeededRng rng(mix_seed(seed, stage_tag, static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

}  // namespace

TrainReport train_stage1(DualNetModel& model, const PreparedDataset& data, const TrainConfig& cfg,
                         ResumeState* resume) {
  cfg.validate();
  if (cfg.stage != 1) throw std::invalid_argument("train_stage1: cfg.stage must be 1");
  if (cfg.loss_kind != LossKind::Magnitude) {
    throw std::invalid_argument("train_stage1: stage 1 trains the magnitude loss");
  }
  require_model_matches(model, data);
  require_scale_matches(model, data);
  if (data.split < 1) throw std::invalid_argument("train_stage1: empty train split");

  const double t0 = now_s();
  const auto trained = stage1_parameter_names(model);
  AdamState adam = resume ? resume->adam : AdamState{};
  const int64_t start_epoch = resume ? resume->epochs_completed : 0;
  const int64_t h = data.q_t, w = data.n_b;

  TrainReport report;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.split, cfg.seed, 101, epoch);
    double loss_sum = 0.0;
    for (int64_t b0 = 0; b0 < data.split; b0 += cfg.batch_size) {
      const int64_t b1 = std::min(data.split, b0 + cfg.batch_size);
      std::vector<int64_t> idx(order.begin() + b0, order.begin() + b1);
      model.params.zero_grads();
      Var mag_in = Var::constant(gather_image(data.mag, idx, h, w));
      Var ul_in = Var::constant(gather_image(data.ul_mag, idx, h, w));
      Var cw = apply_mag_encoder(model, mag_in, QuantizerMode::Training);
      Var mag_hat = apply_mag_decoder(model, cw, ul_in);
      Var loss = loss_magnitude(mag_hat, mag_in);
      backward(loss);
      optimizer_step(model.params, trained, adam, cfg);
      loss_sum += loss.value()[0] * static_cast<double>(idx.size());
    }
    report.loss_trace.push_back(loss_sum / static_cast<double>(data.split));
  }
  model.mag_trained = true;
  if (resume) {
    resume->adam = std::move(adam);
    resume->epochs_completed = cfg.epochs;
  }
  report.final_test_nmse_db = evaluate_magnitude_nmse_db(model, data);
  report.parameter_counts = count_parameters(model);
  report.wall_clock_s = now_s() - t0;
  return report;
}

TrainReport train_stage2(DualNetModel& model, const PreparedDataset& data, const TrainConfig& cfg,
                         SignPlacement placement, ResumeState* resume) {
  cfg.validate();
  if (cfg.stage != 2) throw std::invalid_argument("train_stage2: cfg.stage must be 2");
  if (!model.mag_trained) {
    throw InvalidStateError("train_stage2: magnitude branch has not been trained");
  }
  require_model_matches(model, data);
  require_scale_matches(model, data);
  if (data.split < 1) throw std::invalid_argument("train_stage2: empty train split");
  const PhaseMethod method = model.config.phase_method;
  const LossKind expected = method == PhaseMethod::Naive  ? LossKind::Naive
                            : method == PhaseMethod::Mdpp ? LossKind::Mdpp
                                                          : LossKind::Smdp;
  if (cfg.loss_kind != expected) {
    throw std::invalid_argument("train_stage2: loss kind '" + to_string(cfg.loss_kind) +
                                "' does not match phase method '" + to_string(method) + "'");
  }

  const double t0 = now_s();
  const auto trained = stage2_parameter_names(model);
  if (trained.empty()) throw InvalidStateError("train_stage2: nothing to train for this method");
  AdamState adam = resume ? resume->adam : AdamState{};
  const int64_t start_epoch = resume ? resume->epochs_completed : 0;

  const Stage2Cache cache = build_stage2_cache(model, data, placement);

  TrainReport report;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.split, cfg.seed, 202, epoch);
    double loss_sum = 0.0;
    for (int64_t b0 = 0; b0 < data.split; b0 += cfg.batch_size) {
      const int64_t b1 = std::min(data.split, b0 + cfg.batch_size);
      std::vector<int64_t> idx(order.begin() + b0, order.begin() + b1);
      model.params.zero_grads();
      Var loss = stage2_batch_loss(model, data, cache, idx);
      backward(loss);
      optimizer_step(model.params, trained, adam, cfg);
      loss_sum += loss.value()[0] * static_cast<double>(idx.size());
    }
    report.loss_trace.push_back(loss_sum / static_cast<double>(data.split));
  }
  if (resume) {
    resume->adam = std::move(adam);
    resume->epochs_completed = cfg.epochs;
  }
  report.final_test_nmse_db = evaluate_model(model, data, placement).nmse_db;
  report.parameter_counts = count_parameters(model);
  report.wall_clock_s = now_s() - t0;
  return report;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate_model(const DualNetModel& model, const PreparedDataset& data,
                          SignPlacement placement) {
  require_model_matches(model, data);
  if (data.test_size() < 1) throw std::invalid_argument("evaluate_model: empty test split");
  const int64_t h = data.q_t, w = data.n_b;
  const double s = data.input_scale;  // back to natural units; forward() rescales
  std::vector<SpatialFrequencyCsi> estimates;
  estimates.reserve(static_cast<size_t>(data.test_size()));
  for (int64_t i = data.split; i < data.size(); ++i) {
    ComplexMatrix hm(h, w);
    const Tensor& re = data.re[static_cast<size_t>(i)];
    const Tensor& im = data.im[static_cast<size_t>(i)];
    for (int64_t j = 0; j < h * w; ++j) {
      hm(j / w, j % w) = std::complex<double>(re[j], im[j]) * s;
    }
    AngleDelayCsi had(std::move(hm), data.q_f, data.q_l);
    MagnitudeMatrix ul(matrix_from_tensor(data.ul_mag[static_cast<size_t>(i)], h, w) * s);
    ForwardOutput out = forward(model, had, ul, QuantizerMode::Deployment, placement);
    estimates.push_back(from_angle_delay(out.estimate, data.n_f));
  }
  EvalResult res;
  res.d = data.test_size();
  res.nmse_db = nmse_db(data.test_truth, estimates);
  return res;
}

double evaluate_magnitude_nmse_db(const DualNetModel& model, const PreparedDataset& data) {
  require_model_matches(model, data);
  if (data.test_size() < 1) {
    throw std::invalid_argument("evaluate_magnitude_nmse_db: empty test split");
  }
  const int64_t h = data.q_t, w = data.n_b, hw = h * w;
  // Convert dataset units into this model's input units.
  const double rescale = data.input_scale / model.input_scale;
  double acc = 0.0;
  for (int64_t n0 = data.split; n0 < data.size(); n0 += kPrecomputeChunk) {
    const int64_t n1 = std::min(data.size(), n0 + kPrecomputeChunk);
    std::vector<int64_t> idx;
    for (int64_t i = n0; i < n1; ++i) idx.push_back(i);
    Tensor mag_t = gather_image(data.mag, idx, h, w);
    Tensor ul_t = gather_image(data.ul_mag, idx, h, w);
    for (int64_t i = 0; i < mag_t.numel(); ++i) {
      mag_t[i] *= rescale;
      ul_t[i] *= rescale;
    }
    Var mag_in = Var::constant(std::move(mag_t));
    Var ul_in = Var::constant(std::move(ul_t));
    Var cw = apply_mag_encoder(model, mag_in, QuantizerMode::Deployment);
    Var mag_hat = apply_mag_decoder(model, cw, ul_in);
    for (int64_t i = 0; i < n1 - n0; ++i) {
      double err = 0.0, ref = 0.0;
      for (int64_t j = 0; j < hw; ++j) {
        const double t = mag_in.value()[i * hw + j];
        const double e = mag_hat.value()[i * hw + j];
        err += (e - t) * (e - t);
        ref += t * t;
      }
      if (!(ref > 0.0)) throw std::invalid_argument("evaluate_magnitude_nmse_db: zero-norm truth");
      acc += err / ref;
    }
  }
  const double mean = acc / static_cast<double>(data.test_size());
  return mean > 0.0 ? std::max(10.0 * std::log10(mean), -120.0) : -120.0;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_config(ByteWriter& w, const FrameworkConfig& c) {
  w.put_f64(c.cr_mag);
  w.put_f64(c.cr_pha);
  w.put_i64(c.k_mag);
  w.put_i64(c.k_pha);
  w.put_f64(c.r_s);
  w.put_i64(c.q_t);
  w.put_i64(c.n_b);
  w.put_i64(c.q_f);
  w.put_i64(c.q_l);
  w.put_u32(static_cast<uint32_t>(c.core_kind));
  w.put_u32(static_cast<uint32_t>(c.quantizer_kind));
  w.put_u32(static_cast<uint32_t>(c.phase_method));
  w.put_f64(c.ssq_alpha);
  w.put_u32(c.sign_mask_channel ? 1 : 0);
  w.put_u64(c.seed);
  w.put_u32(static_cast<uint32_t>(c.mdpq_table.cdf_thresholds.size()));
  for (double t : c.mdpq_table.cdf_thresholds) w.put_f64(t);
  for (int b : c.mdpq_table.bits_per_bin) w.put_u32(static_cast<uint32_t>(b));
}

FrameworkConfig read_config(ByteReader& r) {
  FrameworkConfig c;
  c.cr_mag = r.get_f64();
  c.cr_pha = r.get_f64();
  c.k_mag = r.get_i64();
  c.k_pha = r.get_i64();
  c.r_s = r.get_f64();
  c.q_t = r.get_i64();
  c.n_b = r.get_i64();
  c.q_f = r.get_i64();
  c.q_l = r.get_i64();
  c.core_kind = static_cast<CoreKind>(r.get_u32());
  c.quantizer_kind = static_cast<QuantizerKind>(r.get_u32());
  c.phase_method = static_cast<PhaseMethod>(r.get_u32());
  c.ssq_alpha = r.get_f64();
  c.sign_mask_channel = r.get_u32() != 0;
  c.seed = r.get_u64();
  const uint32_t bins = r.get_u32();
  for (uint32_t i = 0; i < bins; ++i) c.mdpq_table.cdf_thresholds.push_back(r.get_f64());
  for (uint32_t i = 0; i < bins; ++i) {
    c.mdpq_table.bits_per_bin.push_back(static_cast<int>(r.get_u32()));
  }
  return c;
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.put_u32(static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) w.put_i64(d);
  for (int64_t i = 0; i < t.numel(); ++i) w.put_f64(t[i]);
}

Tensor read_tensor(ByteReader& r) {
  const uint32_t rank = r.get_u32();
  std::vector<int64_t> shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(r.get_i64());
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.get_f64();
  return t;
}

uint32_t crc_of(const std::vector<uint8_t>& bytes, size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(n));
  return static_cast<uint32_t>(crc);
}

}  // namespace

void checkpoint_save(const DualNetModel& model, const AdamState* opt_state, int stage,
                     int64_t epochs_completed, const std::string& path) {
  ByteWriter w;
  w.put_bytes("MPCK", 4);
  w.put_u32(1);
  write_config(w, model.config);
  w.put_f64(model.input_scale);
  w.put_u32(model.mag_trained ? 1 : 0);
  w.put_u32(static_cast<uint32_t>(stage));
  w.put_u64(static_cast<uint64_t>(epochs_completed));
  const auto& names = model.params.names();
  w.put_u32(static_cast<uint32_t>(names.size()));
  for (const auto& name : names) {
    w.put_string(name);
    write_tensor(w, model.params.get(name).value());
  }
  w.put_u32(opt_state ? 1 : 0);
  if (opt_state) {
    w.put_u64(static_cast<uint64_t>(opt_state->step));
    w.put_u32(static_cast<uint32_t>(opt_state->m.size()));
    for (const auto& [name, m] : opt_state->m) {
      w.put_string(name);
      write_tensor(w, m);
      write_tensor(w, opt_state->v.at(name));
    }
  }
  w.put_u32(crc_of(w.bytes(), w.size()));
  write_file_bytes(path, w.bytes());
}

Checkpoint checkpoint_load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw FormatError(path + ": file too short");
  ByteReader tail(bytes.data() + bytes.size() - 4, 4, path);
  const uint32_t stored_crc = tail.get_u32();
  if (stored_crc != crc_of(bytes, bytes.size() - 4)) {
    throw FormatError(path + ": checksum mismatch");
  }
  ByteReader r(bytes.data(), bytes.size() - 4, path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string(magic, 4) != "MPCK") r.fail("bad magic, expected \"MPCK\"");
  const uint32_t version = r.get_u32();
  if (version != 1) r.fail("unsupported version " + std::to_string(version));

  Checkpoint ck;
  const FrameworkConfig config = read_config(r);
  ck.model = build_model(config);
  ck.model.input_scale = r.get_f64();
  ck.model.mag_trained = r.get_u32() != 0;
  ck.stage = static_cast<int>(r.get_u32());
  ck.resume.epochs_completed = static_cast<int64_t>(r.get_u64());

  const uint32_t n_params = r.get_u32();
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.get_string();
    Tensor t = read_tensor(r);
    if (!ck.model.params.has(name)) r.fail("unknown parameter '" + name + "'");
    Var p = ck.model.params.get(name);
    if (!p.value().same_shape(t)) r.fail("shape mismatch for parameter '" + name + "'");
    p.mutable_value() = std::move(t);
  }
  ck.has_optimizer_state = r.get_u32() != 0;
  if (ck.has_optimizer_state) {
    ck.resume.adam.step = static_cast<int64_t>(r.get_u64());
    const uint32_t n = r.get_u32();
    for (uint32_t i = 0; i < n; ++i) {
      const std::string name = r.get_string();
      ck.resume.adam.m[name] = read_tensor(r);
      ck.resume.adam.v[name] = read_tensor(r);
    }
  }
  return ck;
}

}  // namespace magpha
