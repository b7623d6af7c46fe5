#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "evovit/encoder.hpp"
#include "evovit/evolution.hpp"

namespace evovit {

enum class ScheduleMode { LayerWise, StageWise };
enum class ModelKind { Vanilla, Evo };

const char* to_string(ScheduleMode mode);
const char* to_string(ModelKind kind);

// What a custom score source sees when a layer needs a fresh selection.
struct SelectionContext {
  std::size_t layer;  // 0-based
  const TokenSequence& tokens;
  const LayerParams& params;
  const EncoderConfig& cfg;
  const GlobalClassAttention& global;
};

// Returns N patch scores; the top-k of them become the informative set.
using ScoreSource = std::function<std::vector<double>(const SelectionContext&)>;

// Selections and aggregation weights of a recorded pass, indexed by 0-based
// layer. Replaying a plan makes the forward a smooth function of the
// parameters, which is what the gradient check needs.
struct SelectionPlan {
  std::vector<std::optional<SelectionResult>> selections;
  std::vector<std::vector<double>> weights;
};

struct ForwardOptions {
  ScheduleMode mode = ScheduleMode::LayerWise;
  // Layers per stage in stage-wise mode, counted from start_layer.
  std::uint32_t stage_size = 4;
  // Overrides the global class attention as the selection score.
  ScoreSource scores;
  const SelectionPlan* frozen = nullptr;
  // Keep per-layer token outputs and full attention of vanilla layers.
  bool record = false;
};

struct EvoForwardOutput {
  Logits logits;
  AttentionRecord record;
  // One entry per slow-fast layer, in layer order.
  std::vector<SelectionResult> selections;
  SelectionPlan plan;
  std::vector<Matrix> layer_outputs;
  GlobalClassAttention global;
};

struct ModelTape {
  EmbedCache embed;
  std::vector<EvoBlockCache> layers;
  HeadCache head;
};

// True when 0-based `layer` computes a fresh selection under `mode`.
bool selects_fresh(std::size_t layer, const EvoConfig& evo, ScheduleMode mode,
                   std::uint32_t stage_size);

// Layers before start_layer run the plain block and update the global
// attention over every entry; later layers run the slow-fast block.
EvoForwardOutput model_forward_evo(const Image& image, const ModelParams& params,
                                   const EncoderConfig& cfg, const EvoConfig& evo,
                                   const ForwardOptions& options = {}, ModelTape* tape = nullptr);

// Accumulates parameter gradients for the pass recorded in `tape`.
void model_backward(const ModelTape& tape, std::span<const double> dlogits_cls,
                    std::span<const double> dlogits_avg, ModelParams& params,
                    const EncoderConfig& cfg);

// An EvoConfig whose start layer lies past the depth: every layer is plain.
EvoConfig vanilla_evo_config(const EncoderConfig& cfg);

}  // namespace evovit
