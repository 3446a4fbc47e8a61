// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "magpha/config.hpp"
#include "magpha/csi.hpp"
#include "magpha/model.hpp"
#include "magpha/training.hpp"

namespace magpha {

/// One experiment definition: how to get data, which framework variants to
/// train (the sweep axis), and the training setup.
struct ExperimentSpec {
  std::string scenario = "default";
  std::string dataset_path;  // empty -> generate synthetically
  ChannelModelConfig channel;
  int64_t n_samples = 5000;
  int64_t train_split = 4000;
  FrameworkConfig framework;          // base framework (first sweep point)
  std::vector<double> cr_pha_sweep;   // per-point phase compression ratios
  std::vector<double> r_s_sweep;      // parallel to cr_pha_sweep (or broadcast)
  TrainConfig train;                  // stage/loss filled per run
  std::string out_dir = ".";
  bool genie_signs = false;

  static ExperimentSpec from_file(const std::string& path);
  static ExperimentSpec from_config(const KeyValueConfig& cfg);

  /// Applies the small preset: n_f=64, n_b=32, q_t=8 (6+2), 5,000 samples
  /// with a 4,000/1,000 split, 100 epochs, batch 50.
  void apply_desk_preset();

  SignPlacement placement() const {
    return genie_signs ? SignPlacement::Genie : SignPlacement::Recovered;
  }
};

/// The fully-populated desk-scale preset used by the scaled-down experiments.
ExperimentSpec desk_preset(uint64_t train_seed = 1);

struct ResultRow {
  std::string method;
  std::string core_kind;
  std::string quantizer_kind;
  double cr_pha = 0.0;
  int64_t k_pha = 0;
  double r_s = 0.0;
  int64_t phase_bits = 0;
  double bits_per_phase_entry = 0.0;
  double nmse_db = 0.0;
  int64_t parameter_count = 0;
  double wall_clock_s = 0.0;  // JSON mirror only; the CSV stays byte-stable
  uint64_t seed = 0;
};

/// Exact serialized phase bits for a framework variant. For learned methods
/// this is codewords * bits + sign bits; for MDPQ it is the canonical table
/// allocation (bin counts depend only on the entry count).
int64_t method_phase_bits(const FrameworkConfig& fw);

/// Loads the spec's dataset or generates it from the channel config.
CsiDataset acquire_dataset(const ExperimentSpec& spec);

struct TrainRunOutputs {
  TrainReport stage1;
  TrainReport stage2;
  std::string stage1_checkpoint;
  std::string stage2_checkpoint;
};

/// Trains the shared magnitude branch once (stage 1) for a spec.
DualNetModel train_stage1_shared(const ExperimentSpec& spec, const PreparedDataset& prep,
                                 TrainReport* report_out = nullptr, std::ostream* log = nullptr);

/// Builds a framework variant, attaches the shared magnitude branch, trains
/// stage 2 and reports one result row. The trained model is optionally
/// returned for further evaluation.
ResultRow train_variant(const ExperimentSpec& spec, const PreparedDataset& prep,
                        const DualNetModel& stage1_model, const FrameworkConfig& fw,
                        const std::string& label, std::ostream* log = nullptr,
                        DualNetModel* model_out = nullptr);

/// Quantizer bits that make a sign-free method match the SMDP bit budget.
int64_t matched_mdpp_bits(const FrameworkConfig& base);

/// Two-stage training per the spec; writes a checkpoint after each stage
/// plus JSON reports into spec.out_dir.
TrainRunOutputs run_train(const ExperimentSpec& spec, std::ostream* log = nullptr);

/// Trains/evaluates SMDP, MDPQ, Naive and MDPP at every sweep point with
/// matched bit budgets (MDPP's quantizer bits are raised to absorb the sign
/// budget; the CSV records exact bits so residual mismatches stay visible).
/// The magnitude branch is trained once and shared across every variant.
std::vector<ResultRow> run_compare_losses(const ExperimentSpec& spec, std::ostream* log = nullptr);

/// Sweeps core kind {circular, linear, dense} x quantizer {ssq, blq} for the
/// SMDP method at the first sweep point's compression ratio.
std::vector<ResultRow> run_compare_core(const ExperimentSpec& spec, std::ostream* log = nullptr);

struct EvalRunOutput {
  double nmse_db = 0.0;
  int64_t d = 0;
  std::string method;
};
EvalRunOutput run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                       bool genie_signs, std::ostream* log = nullptr);

/// Fixed-header CSV; byte-identical across reruns with identical specs and
/// seeds (timings are excluded).
std::string result_csv(const std::vector<ResultRow>& rows);
void write_result_csv(const std::vector<ResultRow>& rows, const std::string& path);
/// JSON mirror including wall-clock timings.
std::string result_json(const std::vector<ResultRow>& rows);
void write_result_json(const std::vector<ResultRow>& rows, const std::string& path);

}  // namespace magpha
