// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner for the magnitude-aided CSI feedback framework:
// dataset generation, two-stage training, evaluation, and the loss-function
// and core-layer comparison sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "magpha/config.hpp"
#include "magpha/csi.hpp"
#include "magpha/experiment.hpp"
#include "magpha/model.hpp"
#include "magpha/training.hpp"

namespace {

struct CommonOptions {
  std::string spec_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool has_seed = false;
  bool desk_scale = false;
  bool genie_signs = false;
  bool json_mirror = false;
};

magpha::ExperimentSpec load_spec(const CommonOptions& opts) {
  magpha::ExperimentSpec spec =
      opts.spec_path.empty() ? magpha::desk_preset() : magpha::ExperimentSpec::from_file(opts.spec_path);
  if (opts.desk_scale) spec.apply_desk_preset();
  if (opts.has_seed) {
    spec.train.seed = opts.seed;
    spec.framework.seed = opts.seed;
  }
  if (opts.genie_signs) spec.genie_signs = true;
  if (!opts.out_dir.empty()) spec.out_dir = opts.out_dir;
  return spec;
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool needs_spec) {
  auto* spec_opt = cmd->add_option("--spec", opts.spec_path, "experiment spec file (key = value)");
  if (needs_spec) spec_opt->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override the training seed")
      ->each([&opts](const std::string&) { opts.has_seed = true; });
  cmd->add_flag("--desk-scale", opts.desk_scale, "apply the small desk-scale preset");
  cmd->add_flag("--genie-signs", opts.genie_signs,
                "place sign bits by true magnitude ranks (ablation)");
  cmd->add_flag("--json", opts.json_mirror, "also write a JSON mirror of the CSV");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path, bool desk_scale,
                 uint64_t seed, bool has_seed) {
  magpha::ChannelModelConfig channel;
  int64_t n_samples = 5000, train_split = 4000;
  int64_t q_f = 12, q_l = 4;
  if (!config_path.empty()) {
    const auto cfg = magpha::KeyValueConfig::parse_file(config_path);
    cfg.check_known({"n_f", "n_b", "n_clusters", "ul_carrier_hz", "dl_carrier_hz", "bandwidth_hz",
                     "delay_spread_s", "rng_seed", "n_samples", "train_split", "q_f", "q_l"});
    channel.n_f = cfg.get_int("n_f", channel.n_f);
    channel.n_b = cfg.get_int("n_b", channel.n_b);
    channel.n_clusters = cfg.get_int("n_clusters", channel.n_clusters);
    channel.ul_carrier_hz = cfg.get_double("ul_carrier_hz", channel.ul_carrier_hz);
    channel.dl_carrier_hz = cfg.get_double("dl_carrier_hz", channel.dl_carrier_hz);
    channel.bandwidth_hz = cfg.get_double("bandwidth_hz", channel.bandwidth_hz);
    channel.delay_spread_s = cfg.get_double("delay_spread_s", channel.delay_spread_s);
    channel.rng_seed = cfg.get_u64("rng_seed", channel.rng_seed);
    n_samples = cfg.get_int("n_samples", n_samples);
    train_split = cfg.get_int("train_split", train_split);
    q_f = cfg.get_int("q_f", q_f);
    q_l = cfg.get_int("q_l", q_l);
  }
  if (desk_scale) {
    channel.n_f = 64;
    channel.n_b = 32;
    n_samples = 5000;
    train_split = 4000;
    q_f = 6;
    q_l = 2;
  }
  if (has_seed) channel.rng_seed = seed;

  const magpha::CsiDataset ds = magpha::generate_dataset(channel, n_samples, train_split);
  magpha::dataset_save(ds, out_path);

  const int64_t probe = std::min<int64_t>(200, ds.size());
  double corr = 0.0;
  for (int64_t i = 0; i < probe; ++i) {
    corr += magpha::reciprocity_correlation(ds.samples[static_cast<size_t>(i)], q_f, q_l);
  }
  if (probe > 0) corr /= static_cast<double>(probe);
  std::printf("wrote %lld samples (%lld train / %lld test) to %s\n",
              static_cast<long long>(ds.size()), static_cast<long long>(ds.split),
              static_cast<long long>(ds.size() - ds.split), out_path.c_str());
  std::printf("mean UL/DL angle-delay magnitude correlation over %lld samples: %.4f\n",
              static_cast<long long>(probe), corr);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magnitude-aided CSI feedback experiments"};
  app.require_subcommand(1);

  // gen-data
  std::string gen_config, gen_out = "dataset.csid";
  bool gen_desk = false;
  uint64_t gen_seed = 0;
  bool gen_has_seed = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic CSID dataset");
  gen->add_option("--config", gen_config, "channel config file (key = value)");
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_flag("--desk-scale", gen_desk, "apply the small desk-scale preset");
  gen->add_option("--seed", gen_seed, "override the data seed")
      ->each([&gen_has_seed](const std::string&) { gen_has_seed = true; });

  // train
  CommonOptions train_opts;
  auto* train = app.add_subcommand("train", "two-stage training run");
  add_common(train, train_opts, /*needs_spec=*/false);

  // eval
  std::string eval_checkpoint, eval_dataset;
  bool eval_genie = false, eval_json = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
  eval->add_option("--dataset", eval_dataset, "CSID dataset")->required();
  eval->add_flag("--genie-signs", eval_genie, "place sign bits by true magnitude ranks");
  eval->add_flag("--json", eval_json, "print a JSON report");

  // compare-losses / compare-core
  CommonOptions cl_opts, cc_opts;
  auto* cl = app.add_subcommand("compare-losses",
                                "train smdp/mdpq/naive/mdpp at each sweep ratio, emit CSV");
  add_common(cl, cl_opts, /*needs_spec=*/false);
  auto* cc = app.add_subcommand("compare-core",
                                "sweep core kind x quantizer for the smdp method, emit CSV");
  add_common(cc, cc_opts, /*needs_spec=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_config, gen_out, gen_desk, gen_seed, gen_has_seed);
    }
    if (train->parsed()) {
      const auto spec = load_spec(train_opts);
      const auto out = magpha::run_train(spec, &std::cerr);
      std::printf("stage1 checkpoint: %s\n", out.stage1_checkpoint.c_str());
      std::printf("stage2 checkpoint: %s\n", out.stage2_checkpoint.c_str());
      std::printf("final test NMSE: %.4f dB\n", out.stage2.final_test_nmse_db);
      return 0;
    }
    if (eval->parsed()) {
      const auto out = magpha::run_eval(eval_checkpoint, eval_dataset, eval_genie, &std::cerr);
      if (eval_json) {
        std::printf("{\"method\": \"%s\", \"nmse_db\": %.6f, \"d\": %lld}\n", out.method.c_str(),
                    out.nmse_db, static_cast<long long>(out.d));
      } else {
        std::printf("method %s: NMSE %.4f dB over D=%lld test realizations\n", out.method.c_str(),
                    out.nmse_db, static_cast<long long>(out.d));
      }
      return 0;
    }
    if (cl->parsed() || cc->parsed()) {
      const CommonOptions& opts = cl->parsed() ? cl_opts : cc_opts;
      const auto spec = load_spec(opts);
      std::filesystem::create_directories(spec.out_dir);
      const auto rows = cl->parsed() ? magpha::run_compare_losses(spec, &std::cerr)
                                     : magpha::run_compare_core(spec, &std::cerr);
      const std::string base = spec.out_dir + (cl->parsed() ? "/compare_losses" : "/compare_core");
      magpha::write_result_csv(rows, base + ".csv");
      std::printf("wrote %s.csv (%zu rows)\n", base.c_str(), rows.size());
      if (opts.json_mirror) {
        magpha::write_result_json(rows, base + ".json");
        std::printf("wrote %s.json\n", base.c_str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
