// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "magpha/csi.hpp"
#include "magpha/model.hpp"

namespace magpha {

enum class LossKind { Magnitude, Naive, Mdpp, Smdp };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  int64_t epochs = 1000;
  int64_t batch_size = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip
  int stage = 1;
  LossKind loss_kind = LossKind::Magnitude;
  uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss_trace;  // mean per-sample training loss per epoch
  double final_test_nmse_db = 0.0;
  double wall_clock_s = 0.0;
  std::map<std::string, int64_t> parameter_counts;

  std::string to_json() const;
};

/// Angle-delay-domain view of a dataset with everything the trainers need:
/// scaled magnitude/cosine/phase/sign tensors per sample plus the
/// spatial-frequency truth of the test split for NMSE evaluation. All flat
/// tensors have q_t * n_b entries in row-major (delay, antenna) order.
struct PreparedDataset {
  int64_t q_t = 0;
  int64_t n_b = 0;
  int64_t q_f = 0;
  int64_t q_l = 0;
  int64_t n_f = 0;
  int64_t split = 0;
  double input_scale = 1.0;  // power of two

  std::vector<Tensor> mag;      // scaled |H|
  std::vector<Tensor> ul_mag;   // scaled uplink |H|
  std::vector<Tensor> cosm;     // Re/|H|
  std::vector<Tensor> phase;    // radians
  std::vector<Tensor> re, im;   // scaled components
  std::vector<SignMatrix> signs_full;
  std::vector<SpatialFrequencyCsi> test_truth;  // aligned with samples split..end

  int64_t size() const { return static_cast<int64_t>(mag.size()); }
  int64_t test_size() const { return size() - split; }
};

PreparedDataset prepare_dataset(const CsiDataset& ds, int64_t q_f, int64_t q_l);

/// Adaptive-moment optimizer state, keyed by parameter name.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t step = 0;
};

/// One update over `names` (fixed order): global-norm gradient clipping, then
/// bias-corrected adaptive-moment steps. NaN gradients raise NumericError
/// with the offending parameter name.
void optimizer_step(ParameterStore& params, const std::vector<std::string>& names,
                    AdamState& state, const TrainConfig& cfg);

struct ResumeState {
  int64_t epochs_completed = 0;
  AdamState adam;
};

/// Stage 1: trains the magnitude branch only (encoder + decoder) on the
/// magnitude MSE with soft quantizers. Reported NMSE is the magnitude-domain
/// NMSE over the test split in deployment mode.
TrainReport train_stage1(DualNetModel& model, const PreparedDataset& data, const TrainConfig& cfg,
                         ResumeState* resume = nullptr);

/// Stage 2: trains the phase path (and combiner where the method has one)
/// with the magnitude branch frozen; its per-sample outputs are precomputed
/// once. Reported NMSE is the full spatial-frequency NMSE over the test
/// split in deployment mode.
TrainReport train_stage2(DualNetModel& model, const PreparedDataset& data, const TrainConfig& cfg,
                         SignPlacement placement = SignPlacement::Recovered,
                         ResumeState* resume = nullptr);

/// Deployment-mode evaluation over the test split: reconstructs
/// spatial-frequency CSI from each estimate and reports NMSE vs the truth.
struct EvalResult {
  double nmse_db = 0.0;
  int64_t d = 0;  // number of evaluated realizations
};
EvalResult evaluate_model(const DualNetModel& model, const PreparedDataset& data,
                          SignPlacement placement = SignPlacement::Recovered);

/// Magnitude-domain NMSE of the magnitude branch alone (deployment mode).
double evaluate_magnitude_nmse_db(const DualNetModel& model, const PreparedDataset& data);

/// The parameter sets each stage is allowed to touch.
std::vector<std::string> stage1_parameter_names(const DualNetModel& model);
std::vector<std::string> stage2_parameter_names(const DualNetModel& model);

// Checkpoint file, little-endian:
//   magic "MPCK" | u32 version=1 | config block | f64 input_scale |
//   u8 mag_trained | u32 stage | u64 epochs_completed | named parameter
//   blobs (name, rank, dims, f64 data) | optional optimizer state |
//   u32 CRC-32 of all preceding bytes.
struct Checkpoint {
  DualNetModel model;
  ResumeState resume;
  int stage = 0;
  bool has_optimizer_state = false;
};

void checkpoint_save(const DualNetModel& model, const AdamState* opt_state, int stage,
                     int64_t epochs_completed, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

}  // namespace magpha
