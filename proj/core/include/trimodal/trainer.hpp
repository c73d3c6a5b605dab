// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "trimodal/archive.hpp"
#include "trimodal/augment.hpp"
#include "trimodal/contrastive.hpp"
#include "trimodal/encoders.hpp"

namespace trimodal {

struct TrainConfig {
  int64_t batch_size = 8;
  int64_t iterations = 2000;
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int64_t lr_decay_interval = 500;
  double lr_decay_factor = 0.1;
  double temperature = 0.1;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0 -> max(100, iterations/20)
  int views_per_sample = 2;
  bool random_view_pairing = false;  // per-iteration random cross-modal view roles
  EncoderConfig encoder;
  AugmentConfig augment;
  LossWeights loss_weights;

  int64_t checkpoint_cadence() const;
  void validate() const;

  // Full-scale settings: batch 96, 160k iterations, decay every 40k.
  static TrainConfig paper_scale();
};

// base_lr scaled by decay_factor^floor(iteration / decay_interval)
double lr_at(int64_t iteration, const TrainConfig& config);

// SGD with classic momentum; weight decay is added to the gradient, so a
// zero-gradient step shrinks a fresh parameter by exactly (1 - lr*wd).
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::Session& session, const nn::ParamList& params, double lr);

  std::map<std::string, Tensor>& velocity() { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

struct TrainState {
  int64_t iteration = 0;
  TriModalModel model;
  Sgd optimizer;
  TrainConfig config;

  explicit TrainState(const TrainConfig& cfg);
};

// Raised when the loss turns non-finite; carries the diagnostic dump.
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& what) : std::runtime_error(what) {}
};

// One optimizer step over an assembled batch (augmentation already applied).
LossBreakdown train_step(TrainState& state, const std::vector<TriModalSample>& batch);

struct FitResult {
  std::string final_checkpoint;
  LossBreakdown final_loss;
  int64_t iterations_run = 0;
};

using MetricsSink = std::function<void(int64_t iter, double lr, const LossBreakdown&, double wall_ms)>;

// Runs the full loop over a dataset archive: seeded epoch shuffling without
// replacement, two views per sample, per-modality augmentation, metrics
// JSONL, periodic checkpoints, optional resume from the latest checkpoint.
FitResult fit(const ArchiveReader& data, const TrainConfig& config, const std::string& out_dir,
              bool resume = false, const MetricsSink& extra_sink = nullptr);

// Checkpoint contents for the six networks (+ optimizer + RNG position).
void save_train_checkpoint(const std::string& path, TrainState& state);
TrainState load_train_checkpoint(const std::string& path);
// Model-only view of a checkpoint (evaluation side).
TriModalModel load_model_checkpoint(const std::string& path);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
uint64_t config_hash(const TrainConfig& config);

}  // namespace trimodal
