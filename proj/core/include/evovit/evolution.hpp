#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evovit/encoder.hpp"

namespace evovit {

enum class AggregationKind { WeightedSum };
enum class ExpansionKind { Copy };

struct EvoConfig {
  // Fraction of patch tokens routed through the slow path.
  double keep_ratio = 0.5;
  // Optional per-layer override, indexed by 0-based layer; entries for
  // layers before start_layer are ignored.
  std::vector<double> layer_keep_ratios;
  // First layer (1-based) that selects tokens. Values beyond the depth turn
  // the model into the vanilla one.
  std::uint32_t start_layer = 5;
  double alpha = 0.5;
  AggregationKind aggregation = AggregationKind::WeightedSum;
  ExpansionKind expansion = ExpansionKind::Copy;

  void validate(std::size_t depth) const;
  double ratio_for(std::size_t layer) const;
  // True when 0-based `layer` runs the slow-fast block.
  bool selects_at(std::size_t layer) const { return layer + 1 >= start_layer; }

  friend bool operator==(const EvoConfig&, const EvoConfig&) = default;
};

// Evolving class-attention scores over the N patch tokens. The CLS entry is
// tracked separately and never takes part in selection.
struct GlobalClassAttention {
  std::vector<double> scores;
  double cls_share = 0.0;
  bool initialized = false;
};

struct SelectionResult {
  std::vector<std::size_t> informative;  // ascending, length k
  std::vector<std::size_t> placeholder;  // ascending, length N - k
  std::size_t layer = 0;

  friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

// k = max(1, floor(ratio * n)). A 1e-9 slack absorbs representation error in
// products such as 0.7 * 10.
std::size_t keep_count(double ratio, std::size_t n);

// `class_attention` has length 1 + N (CLS first). Without a mask every entry
// (CLS share included) becomes alpha * old + (1 - alpha) * new; an
// uninitialized state is instead initialized from `class_attention`. With a
// mask only the listed patch entries change, and the state must already be
// initialized (StateError otherwise).
GlobalClassAttention update_global_attention(const GlobalClassAttention& g,
                                             std::span<const double> class_attention, double alpha,
                                             const std::vector<std::size_t>* mask = nullptr);

// Top-k over `scores` (descending, lower index first on ties).
SelectionResult select_informative(std::span<const double> scores, double ratio,
                                   std::size_t layer = 0);

// Nonnegative weights rescaled to sum to one; all-zero input gives uniform.
std::vector<double> normalize_weights(std::span<const double> weights);

// Weighted sum of the rows of `placeholders`; the weights are normalized
// first. The caller skips aggregation when there are no placeholders.
std::vector<double> aggregate_placeholders(const Matrix& placeholders,
                                           std::span<const double> weights);

struct EvoBlockCache {
  BlockCache block;
  SelectionResult selection;
  std::vector<double> weights;  // normalized aggregation weights
  bool full = false;            // no placeholders: plain block
};

struct EvoBlockOutput {
  TokenSequence tokens;
  SelectionResult selection;
  std::vector<double> weights;
  // Length 1 + N. Informative and CLS entries come from the slow path; the
  // representative token's share is spread over placeholders by weight.
  std::vector<double> cls_attention;
  // Vector added to every placeholder row (MSA then FFN residual of the
  // representative token); empty when there are no placeholders.
  std::vector<double> msa_broadcast;
  std::vector<double> ffn_broadcast;
};

struct EvoBlockInputs {
  double ratio = 1.0;
  double alpha = 0.5;
  std::size_t layer = 0;
  // Use this partition instead of selecting from `g`.
  const SelectionResult* forced_selection = nullptr;
  // Use these aggregation weights (already normalized) instead of g's scores.
  std::span<const double> forced_weights;
};

// One slow-fast layer. Informative tokens, CLS and a representative token of
// the placeholders run through the pre-norm block; each placeholder row gets
// the representative token's two residuals added. Output rows keep the input
// order. `g` is updated in place from the slow-path class attention, on the
// informative entries only.
EvoBlockOutput evo_block_forward(const TokenSequence& x, GlobalClassAttention& g,
                                 const LayerParams& layer, const EncoderConfig& cfg,
                                 const EvoBlockInputs& inputs, EvoBlockCache* cache = nullptr);

// Selection and aggregation weights are constants of the backward pass.
Matrix evo_block_backward(const Matrix& dout, const EvoBlockCache& cache, LayerParams& layer,
                          const EncoderConfig& cfg);

}  // namespace evovit
