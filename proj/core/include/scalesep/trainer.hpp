// Copyright 2026 The scalesep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalesep/datagen.hpp"
#include "scalesep/model.hpp"
#include "scalesep/objectives.hpp"
#include "scalesep/tensor_io.hpp"

namespace scalesep {

struct TrainConfig {
  Real base_lr = 1e-3;
  std::int64_t warmup_steps = 2000;
  int plateau_patience_epochs = 3;
  Real lr_decay_factor = 0.5;
  int max_epochs = 150;
  int early_stop_patience = 10;
  Real weight_decay = 1e-2;
  int batch_size = 4;
  std::uint64_t seed = 0;
  Real finetune_lr = 1e-4;
  int finetune_epochs = 0;        // 0: finetune_fraction of max_epochs
  Real finetune_fraction = 0.2;
  int average_top_k = 5;
  Real grad_clip = 5;             // global norm; 0 disables
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  int keep_checkpoints = 0;       // 0 keeps every epoch on disk

  void validate() const;
};

// Warmup is step-granular (1-based update index), plateau halving is
// epoch-granular; they compose multiplicatively.
Real lr_at(std::int64_t step, int plateau_events, const TrainConfig& config);

// Strict-improvement bookkeeping for plateau halving and early stopping.
class PlateauTracker {
 public:
  explicit PlateauTracker(const TrainConfig& config);

  // Returns true when `val_loss` beats the best so far.
  bool observe(Real val_loss);
  int plateau_events() const { return events_; }
  int epochs_since_improvement() const { return since_best_; }
  bool should_stop() const { return since_best_ >= early_stop_patience_; }
  Real best() const { return best_; }

 private:
  int patience_;
  int early_stop_patience_;
  Real best_;
  bool has_best_ = false;
  int since_best_ = 0;
  int since_event_ = 0;
  int events_ = 0;
};

struct OptimizerState {
  std::int64_t step = 0;
  TensorMap m;
  TensorMap v;
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& config) : config_(config) {}
  void update(ModelParams& params, Real lr);
  const OptimizerState& state() const { return state_; }
  void load(OptimizerState state) { state_ = std::move(state); }

 private:
  TrainConfig config_;
  OptimizerState state_;
};

// Scales all parameter gradients so their joint L2 norm is at most
// max_norm. Returns the norm before clipping.
Real clip_grad_norm(ModelParams& params, Real max_norm);

struct CheckpointMeta {
  int epoch = 0;
  std::int64_t step = 0;
  Real val_loss = 0;
  Depths depths;
  std::string loss_label;
  std::uint64_t init_seed = 0;
  int plateau_events = 0;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
};

struct Checkpoint {
  CheckpointMeta meta;
  ParamSnapshot params;
  OptimizerState optimizer;

  ModelParams model() const;
};

// Directory with meta.json, params.bin and (when present) optimizer.bin.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir, bool with_optimizer = true);

// Mean of the k lowest-val-loss snapshots (k clipped to the set size).
ModelParams average_checkpoints(const std::vector<Checkpoint>& checkpoints, int k);

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  Real lr = 0;
  Real train_loss = 0;
  Real val_loss = 0;
  Real val_si_snri = 0;
  std::map<std::string, Real> val_components;
  bool improved = false;
};

struct TrainOptions {
  std::string run_dir;
  // Warm start instead of fresh init; shapes must match the config.
  std::optional<ParamSnapshot> init_params;
  bool finetune = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<std::string> checkpoint_dirs;  // surviving per-epoch dirs
  std::string final_dir;
  ModelParams final_params;                  // top-k average
  bool early_stopped = false;
};

// Training depths are model.sep_repeats / model.re_repeats. Writes
// <run_dir>/epoch_NNNN/, <run_dir>/final/ and <run_dir>/train_log.jsonl.
TrainResult train(const ModelConfig& model, const LossConfig& loss,
                  const TrainConfig& config, const Manifest& manifest,
                  const TrainOptions& options);

// Base weights under deeper training depths. Shared stacks load unchanged;
// non-shared stacks must already hold the requested passes.
ModelParams warm_start(const Checkpoint& base, Depths depths);

// Short run from `base` at `depths` starting at finetune_lr, no warmup.
TrainResult finetune(const Checkpoint& base, Depths depths, const LossConfig& loss,
                     const TrainConfig& config, const Manifest& manifest,
                     TrainOptions options);

// Mean validation objective and SI-SNRi at the given depths.
struct ValidationResult {
  Real loss = 0;
  Real si_snri = 0;
  std::map<std::string, Real> components;
};
ValidationResult validate_model(const ModelParams& params, const LossConfig& loss,
                                const std::vector<MixtureExample>& examples,
                                Depths depths);

}  // namespace scalesep
