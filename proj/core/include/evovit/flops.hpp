#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evovit/encoder.hpp"
#include "evovit/evolution.hpp"

namespace evovit::analysis {

// Multiply-accumulate counts. Softmax, layer norm, GELU, bias adds and
// residual adds are not counted.

// Q, K, V and output projections (4nC^2) plus QK^T and AV (2n^2C).
std::uint64_t msa_macs(std::uint64_t n_tokens, std::uint64_t dim);
// Two linear maps through a 4C hidden layer: 8nC^2.
std::uint64_t ffn_macs(std::uint64_t n_tokens, std::uint64_t dim);
// General hidden width: 2nCH.
std::uint64_t ffn_macs(std::uint64_t n_tokens, std::uint64_t dim, std::uint64_t hidden);

// One slow-fast layer with k of N patch tokens kept. The slow path carries
// k + 2 tokens (CLS and the representative token); building the
// representative costs (N - k) * C. With k == N it is the plain layer on
// N + 1 tokens. Throws ConfigError unless 1 <= k <= N.
std::uint64_t evo_layer_macs(std::uint64_t n_patches, std::uint64_t dim, std::uint64_t k);
std::uint64_t evo_layer_macs(std::uint64_t n_patches, std::uint64_t dim, std::uint64_t k,
                             std::uint64_t hidden);

struct LayerFlops {
  std::uint32_t layer = 0;  // 1-based
  std::uint64_t tokens = 0;  // rows through MSA/FFN
  std::uint64_t kept = 0;    // informative tokens (N when not selecting)
  std::uint64_t msa_macs = 0;
  std::uint64_t ffn_macs = 0;
  std::uint64_t evo_overhead_macs = 0;
  std::uint64_t total() const { return msa_macs + ffn_macs + evo_overhead_macs; }
};

struct FlopReport {
  std::vector<LayerFlops> vanilla;
  std::vector<LayerFlops> evo;
  std::uint64_t vanilla_total = 0;
  std::uint64_t evo_total = 0;
  // 1 - evo_total / vanilla_total.
  double reduction_fraction = 0.0;
};

FlopReport flop_report(const EncoderConfig& cfg, const EvoConfig& evo);
std::string to_json(const FlopReport& report);

}  // namespace evovit::analysis
