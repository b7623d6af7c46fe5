#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evovit/dataset.hpp"
#include "evovit/evolution.hpp"
#include "evovit/model.hpp"
#include "evovit/rng.hpp"

namespace evovit::analysis {

enum class StrategyKind { GlobalClassAttention, Random, LastClassAttention, AttentionColumnMean };

inline constexpr StrategyKind kAllStrategies[] = {
    StrategyKind::GlobalClassAttention, StrategyKind::Random, StrategyKind::LastClassAttention,
    StrategyKind::AttentionColumnMean};

const char* to_string(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(std::string_view name);

// Per-kind prerequisites: global scores (length N), an Rng, the final-layer
// class attention of an earlier pass (length 1 + N), or a head-averaged
// (1 + N) x (1 + N) attention matrix.
struct StrategyInputs {
  double ratio = 0.5;
  std::size_t layer = 0;
  std::span<const double> global_scores;
  Rng* rng = nullptr;
  std::span<const double> last_class_attention;
  const Matrix* attention = nullptr;
};

// N patch scores for `kind`; throws StateError on a missing prerequisite.
std::vector<double> strategy_scores(StrategyKind kind, const StrategyInputs& inputs);
SelectionResult baseline_select(StrategyKind kind, const StrategyInputs& inputs);

// Score source for model_forward_evo. `last_class_attention` is required for
// LastClassAttention; `rng` for Random (it must outlive the source).
ScoreSource make_score_source(StrategyKind kind, Rng* rng,
                              std::vector<double> last_class_attention = {});

struct StrategyAccuracy {
  StrategyKind kind;
  double accuracy = 0.0;
};

// Inference-only comparison at the configured keep ratio. LastClassAttention
// runs a plain pass first to obtain the final layer's class attention.
std::vector<StrategyAccuracy> compare_strategies(const ModelParams& params, const Dataset& data,
                                                 const EncoderConfig& cfg, const EvoConfig& evo,
                                                 std::uint64_t seed);

}  // namespace evovit::analysis
