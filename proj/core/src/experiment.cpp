// SPDX-License-Identifier: Apache-2.0
#include "magpha/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace magpha {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) (*log) << s << "\n" << std::flush;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::invalid_argument(path + ": cannot open for writing");
  f << text;
}

}  // namespace

ExperimentSpec ExperimentSpec::from_file(const std::string& path) {
  return from_config(KeyValueConfig::parse_file(path));
}

ExperimentSpec ExperimentSpec::from_config(const KeyValueConfig& cfg) {
  cfg.check_known({
      "scenario", "dataset", "out_dir",
      "n_f", "n_b", "n_clusters", "ul_carrier_hz", "dl_carrier_hz", "bandwidth_hz",
      "delay_spread_s", "data_seed", "n_samples", "train_split",
      "q_f", "q_l", "cr_mag", "k_mag", "cr_pha", "k_pha", "r_s",
      "core_kind", "quantizer_kind", "phase_method", "ssq_alpha", "sign_mask_channel",
      "epochs", "batch_size", "learning_rate", "seed", "loss_kind", "genie_signs",
  });
  ExperimentSpec spec;
  spec.scenario = cfg.get_string("scenario", spec.scenario);
  spec.dataset_path = cfg.get_string("dataset", "");
  spec.out_dir = cfg.get_string("out_dir", spec.out_dir);

  spec.channel.n_f = cfg.get_int("n_f", spec.channel.n_f);
  spec.channel.n_b = cfg.get_int("n_b", spec.channel.n_b);
  spec.channel.n_clusters = cfg.get_int("n_clusters", spec.channel.n_clusters);
  spec.channel.ul_carrier_hz = cfg.get_double("ul_carrier_hz", spec.channel.ul_carrier_hz);
  spec.channel.dl_carrier_hz = cfg.get_double("dl_carrier_hz", spec.channel.dl_carrier_hz);
  spec.channel.bandwidth_hz = cfg.get_double("bandwidth_hz", spec.channel.bandwidth_hz);
  spec.channel.delay_spread_s = cfg.get_double("delay_spread_s", spec.channel.delay_spread_s);
  spec.channel.rng_seed = cfg.get_u64("data_seed", spec.channel.rng_seed);
  spec.n_samples = cfg.get_int("n_samples", spec.n_samples);
  spec.train_split = cfg.get_int("train_split", spec.train_split);

  FrameworkConfig& fw = spec.framework;
  fw.q_f = cfg.get_int("q_f", fw.q_f);
  fw.q_l = cfg.get_int("q_l", fw.q_l);
  fw.q_t = fw.q_f + fw.q_l;
  fw.n_b = spec.channel.n_b;
  fw.cr_mag = cfg.get_double("cr_mag", fw.cr_mag);
  fw.k_mag = cfg.get_int("k_mag", fw.k_mag);
  fw.k_pha = cfg.get_int("k_pha", fw.k_pha);
  fw.core_kind = core_kind_from_string(cfg.get_string("core_kind", to_string(fw.core_kind)));
  fw.quantizer_kind =
      quantizer_kind_from_string(cfg.get_string("quantizer_kind", to_string(fw.quantizer_kind)));
  fw.phase_method =
      phase_method_from_string(cfg.get_string("phase_method", to_string(fw.phase_method)));
  fw.ssq_alpha = cfg.get_double("ssq_alpha", fw.ssq_alpha);
  fw.sign_mask_channel = cfg.get_bool("sign_mask_channel", fw.sign_mask_channel);

  spec.cr_pha_sweep = cfg.get_double_list("cr_pha", {fw.cr_pha});
  spec.r_s_sweep = cfg.get_double_list("r_s", {fw.r_s});
  fw.cr_pha = spec.cr_pha_sweep.front();
  fw.r_s = spec.r_s_sweep.front();

  spec.train.epochs = cfg.get_int("epochs", spec.train.epochs);
  spec.train.batch_size = cfg.get_int("batch_size", spec.train.batch_size);
  spec.train.learning_rate = cfg.get_double("learning_rate", spec.train.learning_rate);
  spec.train.seed = cfg.get_u64("seed", spec.train.seed);
  spec.train.loss_kind =
      loss_kind_from_string(cfg.get_string("loss_kind", to_string(LossKind::Smdp)));
  spec.genie_signs = cfg.get_bool("genie_signs", spec.genie_signs);
  fw.seed = spec.train.seed;
  return spec;
}

void ExperimentSpec::apply_desk_preset() {
  channel.n_f = 64;
  channel.n_b = 32;
  n_samples = 5000;
  train_split = 4000;
  framework.q_f = 6;
  framework.q_l = 2;
  framework.q_t = 8;
  framework.n_b = 32;
  train.epochs = 100;
  train.batch_size = 50;
}

ExperimentSpec desk_preset(uint64_t train_seed) {
  ExperimentSpec spec;
  spec.scenario = "desk";
  spec.channel.rng_seed = 7;
  spec.train.seed = train_seed;
  spec.framework.seed = train_seed;
  spec.train.loss_kind = LossKind::Smdp;
  spec.cr_pha_sweep = {1.0 / 8.0};
  spec.r_s_sweep = {0.25};
  spec.framework.cr_pha = 1.0 / 8.0;
  spec.framework.r_s = 0.25;
  spec.apply_desk_preset();
  return spec;
}

int64_t method_phase_bits(const FrameworkConfig& fw) {
  const int64_t entries = fw.entries();
  if (fw.phase_method == PhaseMethod::Mdpq) {
    // Bin counts depend only on the entry count; any strictly increasing
    // magnitude matrix yields the canonical allocation.
    RealMatrix mag(fw.q_t, fw.n_b);
    for (int64_t i = 0; i < entries; ++i) {
      mag(i / fw.n_b, i % fw.n_b) = static_cast<double>(i + 1);
    }
    return mdpq_total_bits(mag, fw.effective_mdpq_table());
  }
  const int64_t codeword_bits = fw.phase_codeword_len() * fw.phase_codeword_bits();
  if (fw.phase_method == PhaseMethod::Smdp) return codeword_bits + fw.sign_count();
  return codeword_bits;
}

CsiDataset acquire_dataset(const ExperimentSpec& spec) {
  if (!spec.dataset_path.empty()) return dataset_load(spec.dataset_path);
  return generate_dataset(spec.channel, spec.n_samples, spec.train_split);
}

namespace {

void copy_parameters(const DualNetModel& src, DualNetModel& dst, const std::string& prefix) {
  for (const auto& name : src.params.names_with_prefix(prefix)) {
    Var s = src.params.get(name);
    Var d = dst.params.get(name);
    if (!d.value().same_shape(s.value())) {
      throw std::invalid_argument("copy_parameters: shape mismatch for '" + name + "'");
    }
    d.mutable_value() = s.value();
  }
}

LossKind loss_for(PhaseMethod method) {
  switch (method) {
    case PhaseMethod::Naive: return LossKind::Naive;
    case PhaseMethod::Mdpp: return LossKind::Mdpp;
    default: return LossKind::Smdp;
  }
}

}  // namespace

DualNetModel train_stage1_shared(const ExperimentSpec& spec, const PreparedDataset& prep,
                                 TrainReport* report_out, std::ostream* log) {
  FrameworkConfig fw = spec.framework;
  fw.phase_method = PhaseMethod::Smdp;
  DualNetModel model = build_model(fw);
  model.input_scale = prep.input_scale;
  TrainConfig cfg = spec.train;
  cfg.stage = 1;
  cfg.loss_kind = LossKind::Magnitude;
  log_line(log, "[stage1] training magnitude branch (" + std::to_string(cfg.epochs) + " epochs)");
  TrainReport report = train_stage1(model, prep, cfg);
  log_line(log, "[stage1] magnitude-domain test NMSE " + fmt(report.final_test_nmse_db, "%.3f") +
                    " dB in " + fmt(report.wall_clock_s, "%.1f") + " s");
  if (report_out) *report_out = report;
  return model;
}

ResultRow train_variant(const ExperimentSpec& spec, const PreparedDataset& prep,
                        const DualNetModel& stage1_model, const FrameworkConfig& fw,
                        const std::string& label, std::ostream* log, DualNetModel* model_out) {
  DualNetModel model = build_model(fw);
  model.input_scale = prep.input_scale;
  copy_parameters(stage1_model, model, "mag_enc.");
  copy_parameters(stage1_model, model, "mag_dec.");
  model.mag_trained = true;

  TrainConfig cfg = spec.train;
  cfg.stage = 2;
  cfg.loss_kind = loss_for(fw.phase_method);
  log_line(log, "[stage2] " + label + " (cr_pha " + fmt(fw.cr_pha, "%.6g") + ", " +
                    std::to_string(cfg.epochs) + " epochs)");
  TrainReport report = train_stage2(model, prep, cfg, spec.placement());

  ResultRow row;
  row.method = label;
  row.core_kind = to_string(fw.core_kind);
  row.quantizer_kind = to_string(fw.quantizer_kind);
  row.cr_pha = fw.cr_pha;
  row.k_pha = fw.k_pha;
  row.r_s = fw.r_s;
  row.phase_bits = method_phase_bits(fw);
  row.bits_per_phase_entry =
      static_cast<double>(row.phase_bits) / static_cast<double>(fw.entries());
  row.nmse_db = report.final_test_nmse_db;
  row.parameter_count = report.parameter_counts.at("total");
  row.wall_clock_s = report.wall_clock_s;
  row.seed = cfg.seed;
  log_line(log, "[stage2] " + label + " test NMSE " + fmt(row.nmse_db, "%.3f") + " dB (" +
                    std::to_string(row.phase_bits) + " phase bits) in " +
                    fmt(report.wall_clock_s, "%.1f") + " s");
  if (model_out) *model_out = std::move(model);
  return row;
}

int64_t matched_mdpp_bits(const FrameworkConfig& base) {
  FrameworkConfig smdp = base;
  smdp.phase_method = PhaseMethod::Smdp;
  const int64_t smdp_bits = method_phase_bits(smdp);
  const int64_t codewords = std::llround(base.cr_pha * static_cast<double>(base.entries()));
  return std::max<int64_t>(1, std::llround(static_cast<double>(smdp_bits) /
                                           static_cast<double>(codewords)));
}

TrainRunOutputs run_train(const ExperimentSpec& spec, std::ostream* log) {
  std::filesystem::create_directories(spec.out_dir);
  const CsiDataset ds = acquire_dataset(spec);
  const PreparedDataset prep = prepare_dataset(ds, spec.framework.q_f, spec.framework.q_l);

  TrainRunOutputs out;
  FrameworkConfig fw = spec.framework;
  DualNetModel model = build_model(fw);
  model.input_scale = prep.input_scale;

  TrainConfig cfg1 = spec.train;
  cfg1.stage = 1;
  cfg1.loss_kind = LossKind::Magnitude;
  log_line(log, "[train] stage 1 (" + std::to_string(cfg1.epochs) + " epochs)");
  out.stage1 = train_stage1(model, prep, cfg1);
  out.stage1_checkpoint = spec.out_dir + "/stage1.ckpt";
  checkpoint_save(model, nullptr, 1, cfg1.epochs, out.stage1_checkpoint);
  write_text_file(spec.out_dir + "/stage1_report.json", out.stage1.to_json());

  TrainConfig cfg2 = spec.train;
  cfg2.stage = 2;
  cfg2.loss_kind = loss_for(fw.phase_method);
  log_line(log, "[train] stage 2, method " + to_string(fw.phase_method));
  out.stage2 = train_stage2(model, prep, cfg2, spec.placement());
  out.stage2_checkpoint = spec.out_dir + "/stage2.ckpt";
  checkpoint_save(model, nullptr, 2, cfg2.epochs, out.stage2_checkpoint);
  write_text_file(spec.out_dir + "/stage2_report.json", out.stage2.to_json());
  log_line(log, "[train] final test NMSE " + fmt(out.stage2.final_test_nmse_db, "%.3f") + " dB");
  return out;
}

std::vector<ResultRow> run_compare_losses(const ExperimentSpec& spec, std::ostream* log) {
  const CsiDataset ds = acquire_dataset(spec);
  const PreparedDataset prep = prepare_dataset(ds, spec.framework.q_f, spec.framework.q_l);
  DualNetModel stage1_model = train_stage1_shared(spec, prep, nullptr, log);

  std::vector<ResultRow> rows;
  for (size_t i = 0; i < spec.cr_pha_sweep.size(); ++i) {
    FrameworkConfig base = spec.framework;
    base.cr_pha = spec.cr_pha_sweep[i];
    base.r_s = spec.r_s_sweep[std::min(i, spec.r_s_sweep.size() - 1)];
    base.mdpq_table = MdpqTable{};  // per-ratio default table

    // Matched budgets: MDPP has no sign bits, so its quantizer bits absorb
    // the SMDP sign budget; Naive keeps the SMDP codeword bits; MDPQ uses
    // its bit-allocation table. Exact bits land in the CSV.
    FrameworkConfig smdp = base;
    smdp.phase_method = PhaseMethod::Smdp;

    FrameworkConfig mdpq = base;
    mdpq.phase_method = PhaseMethod::Mdpq;

    FrameworkConfig naive = base;
    naive.phase_method = PhaseMethod::Naive;

    FrameworkConfig mdpp = base;
    mdpp.phase_method = PhaseMethod::Mdpp;
    mdpp.k_pha = matched_mdpp_bits(base);

    rows.push_back(train_variant(spec, prep, stage1_model, smdp, "smdp", log));
    rows.push_back(train_variant(spec, prep, stage1_model, mdpq, "mdpq", log));
    rows.push_back(train_variant(spec, prep, stage1_model, naive, "naive", log));
    rows.push_back(train_variant(spec, prep, stage1_model, mdpp, "mdpp", log));
  }
  return rows;
}

std::vector<ResultRow> run_compare_core(const ExperimentSpec& spec, std::ostream* log) {
  const CsiDataset ds = acquire_dataset(spec);
  const PreparedDataset prep = prepare_dataset(ds, spec.framework.q_f, spec.framework.q_l);
  DualNetModel stage1_model = train_stage1_shared(spec, prep, nullptr, log);

  std::vector<ResultRow> rows;
  const CoreKind cores[] = {CoreKind::CircularConv, CoreKind::LinearConv, CoreKind::Dense};
  const QuantizerKind quants[] = {QuantizerKind::Ssq, QuantizerKind::Blq};
  const char* core_labels[] = {"ccnn", "cnn", "dnn"};
  const char* quant_labels[] = {"ssq", "blq"};
  for (int ci = 0; ci < 3; ++ci) {
    for (int qi = 0; qi < 2; ++qi) {
      FrameworkConfig fw = spec.framework;
      fw.phase_method = PhaseMethod::Smdp;
      fw.cr_pha = spec.cr_pha_sweep.front();
      fw.r_s = spec.r_s_sweep.front();
      fw.core_kind = cores[ci];
      fw.quantizer_kind = quants[qi];
      const std::string label = std::string(core_labels[ci]) + "+" + quant_labels[qi];
      rows.push_back(train_variant(spec, prep, stage1_model, fw, label, log));
    }
  }
  return rows;
}

EvalRunOutput run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                       bool genie_signs, std::ostream* log) {
  const Checkpoint ck = checkpoint_load(checkpoint_path);
  const CsiDataset ds = dataset_load(dataset_path);
  const PreparedDataset prep = prepare_dataset(ds, ck.model.config.q_f, ck.model.config.q_l);
  const EvalResult res = evaluate_model(
      ck.model, prep, genie_signs ? SignPlacement::Genie : SignPlacement::Recovered);
  EvalRunOutput out;
  out.nmse_db = res.nmse_db;
  out.d = res.d;
  out.method = to_string(ck.model.config.phase_method);
  log_line(log, "[eval] " + out.method + ": NMSE " + fmt(out.nmse_db, "%.3f") + " dB over D=" +
                    std::to_string(out.d) + " test realizations");
  return out;
}

std::string result_csv(const std::vector<ResultRow>& rows) {
  std::string s =
      "method,core_kind,quantizer_kind,cr_pha,k_pha,r_s,phase_bits,bits_per_phase_entry,"
      "nmse_db,parameter_count,seed\n";
  for (const auto& r : rows) {
    s += r.method + "," + r.core_kind + "," + r.quantizer_kind + "," + fmt(r.cr_pha) + "," +
         std::to_string(r.k_pha) + "," + fmt(r.r_s) + "," + std::to_string(r.phase_bits) + "," +
         fmt(r.bits_per_phase_entry) + "," + fmt(r.nmse_db) + "," +
         std::to_string(r.parameter_count) + "," + std::to_string(r.seed) + "\n";
  }
  return s;
}

void write_result_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  write_text_file(path, result_csv(rows));
}

std::string result_json(const std::vector<ResultRow>& rows) {
  std::string s = "[\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    s += "  {\"method\": \"" + r.method + "\", \"core_kind\": \"" + r.core_kind +
         "\", \"quantizer_kind\": \"" + r.quantizer_kind + "\", \"cr_pha\": " + fmt(r.cr_pha) +
         ", \"k_pha\": " + std::to_string(r.k_pha) + ", \"r_s\": " + fmt(r.r_s) +
         ", \"phase_bits\": " + std::to_string(r.phase_bits) +
         ", \"bits_per_phase_entry\": " + fmt(r.bits_per_phase_entry) +
         ", \"nmse_db\": " + fmt(r.nmse_db) +
         ", \"parameter_count\": " + std::to_string(r.parameter_count) +
         ", \"wall_clock_s\": " + fmt(r.wall_clock_s, "%.3f") +
         ", \"seed\": " + std::to_string(r.seed) + "}";
    s += i + 1 < rows.size() ? ",\n" : "\n";
  }
  s += "]\n";
  return s;
}

void write_result_json(const std::vector<ResultRow>& rows, const std::string& path) {
  write_text_file(path, result_json(rows));
}

}  // namespace magpha
