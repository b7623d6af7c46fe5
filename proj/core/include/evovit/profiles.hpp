#pragma once

#include <vector>

#include "evovit/dataset.hpp"
#include "evovit/evolution.hpp"
#include "evovit/similarity.hpp"

namespace evovit::analysis {

// Per-layer linear CKA between the mean of the post-block patch tokens and
// the final post-block CLS row, with samples as rows. One value per layer.
std::vector<double> cka_profile(const ModelParams& params, const Dataset& data,
                                const EncoderConfig& cfg, const EvoConfig& evo);

// Per-layer pairwise PCC of the patch-token queries entering each layer's
// attention, averaged over samples.
std::vector<PccStats> pcc_profile(const ModelParams& params, const Dataset& data,
                                  const EncoderConfig& cfg, const EvoConfig& evo);

}  // namespace evovit::analysis
