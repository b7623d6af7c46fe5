#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evovit/dataset.hpp"
#include "evovit/encoder.hpp"
#include "evovit/evolution.hpp"
#include "evovit/model.hpp"

namespace evovit {

struct TrainConfig {
  std::uint32_t epochs = 20;
  std::uint32_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  std::uint32_t stage_size = 4;
  // Fraction of epochs trained with per-layer selection before switching to
  // per-stage selection.
  double layer_to_stage_switch = 2.0 / 3.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossBreakdown {
  double cls_term = 0.0;
  double avg_term = 0.0;
  double total = 0.0;
};

// Cross-entropy on the CLS logits plus cross-entropy on the average-pooled
// logits, unweighted. Rows are samples.
LossBreakdown assisted_cls_loss(const Matrix& logits_cls, const Matrix& logits_avg,
                                std::span<const int> labels);

// First epoch trained stage-wise: floor(fraction * total_epochs).
std::uint32_t schedule_switch_epoch(std::uint32_t total_epochs, double switch_fraction);
ScheduleMode schedule_mode(std::uint32_t epoch, std::uint32_t total_epochs, double switch_fraction);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One Adam update with bias correction at step t (1-based). Parameters with
// `decay` set also shrink by lr * weight_decay (decoupled, applied first).
// Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(const ParamRefs& params, AdamState& state, const AdamHyper& hyper, std::size_t t);

struct EpochMetrics {
  std::uint32_t epoch = 0;
  ScheduleMode mode = ScheduleMode::LayerWise;
  double loss = 0.0;
  double acc_train = 0.0;
  double acc_eval = 0.0;
  double seconds = 0.0;
};

// {"epoch":..,"mode":..,"loss":..,"acc_train":..,"acc_eval":..,"seconds":..}
std::string metrics_json_line(const EpochMetrics& m);

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  // Worker threads for the per-sample forward/backward fan-out. Gradients are
  // reduced in sample order, so results do not depend on this value.
  std::size_t threads = 1;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
};

// Top-1 accuracy from the average-pooled logits; the CLS token only steers
// selection at inference.
double evaluate(ModelKind kind, const ModelParams& params, const Dataset& data,
                const EncoderConfig& cfg, const EvoConfig& evo, ScheduleMode mode,
                std::uint32_t stage_size);

TrainResult train(ModelKind kind, const DatasetSplit& data, const EncoderConfig& cfg,
                  const TrainConfig& train_cfg, const EvoConfig& evo, const TrainHooks& hooks = {});

// Same as above, starting from the given parameters.
TrainResult train_from(ModelParams params, ModelKind kind, const DatasetSplit& data,
                       const EncoderConfig& cfg, const TrainConfig& train_cfg, const EvoConfig& evo,
                       const TrainHooks& hooks = {});

}  // namespace evovit
