#include "evovit/flops.hpp"

#include <json.hpp>

namespace evovit::analysis {

std::uint64_t msa_macs(std::uint64_t n, std::uint64_t c) { return 4 * n * c * c + 2 * n * n * c; }

std::uint64_t ffn_macs(std::uint64_t n, std::uint64_t c) { return 8 * n * c * c; }

std::uint64_t ffn_macs(std::uint64_t n, std::uint64_t c, std::uint64_t hidden) {
  return 2 * n * c * hidden;
}

std::uint64_t evo_layer_macs(std::uint64_t n_patches, std::uint64_t c, std::uint64_t k) {
  return evo_layer_macs(n_patches, c, k, 4 * c);
}

std::uint64_t evo_layer_macs(std::uint64_t n_patches, std::uint64_t c, std::uint64_t k,
                             std::uint64_t hidden) {
  if (k < 1 || k > n_patches) {
    throw ConfigError("evo_layer_macs: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(n_patches) + "]");
  }
  if (k == n_patches) return msa_macs(n_patches + 1, c) + ffn_macs(n_patches + 1, c, hidden);
  return msa_macs(k + 2, c) + ffn_macs(k + 2, c, hidden) + (n_patches - k) * c;
}

FlopReport flop_report(const EncoderConfig& cfg, const EvoConfig& evo) {
  cfg.validate();
  evo.validate(cfg.depth);
  const std::uint64_t n = cfg.num_patches(), c = cfg.embed_dim, hidden = cfg.ffn_hidden;
  FlopReport report;
  for (std::uint32_t l = 0; l < cfg.depth; ++l) {
    LayerFlops plain{l + 1, n + 1, n, msa_macs(n + 1, c), ffn_macs(n + 1, c, hidden), 0};
    report.vanilla.push_back(plain);
    LayerFlops layer = plain;
    if (evo.selects_at(l)) {
      const std::uint64_t k = keep_count(evo.ratio_for(l), n);
      layer.kept = k;
      if (k < n) {
        layer.tokens = k + 2;
        layer.msa_macs = msa_macs(k + 2, c);
        layer.ffn_macs = ffn_macs(k + 2, c, hidden);
        layer.evo_overhead_macs = (n - k) * c;
      }
    }
    report.evo.push_back(layer);
    report.vanilla_total += plain.total();
    report.evo_total += layer.total();
  }
  report.reduction_fraction =
      report.vanilla_total == 0
          ? 0.0
          : 1.0 - static_cast<double>(report.evo_total) / static_cast<double>(report.vanilla_total);
  return report;
}

namespace {

nlohmann::ordered_json layers_json(const std::vector<LayerFlops>& layers) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : layers) {
    arr.push_back({{"layer", l.layer},
                   {"tokens", l.tokens},
                   {"kept", l.kept},
                   {"msa_macs", l.msa_macs},
                   {"ffn_macs", l.ffn_macs},
                   {"evo_overhead_macs", l.evo_overhead_macs},
                   {"total_macs", l.total()}});
  }
  return arr;
}

}  // namespace

std::string to_json(const FlopReport& report) {
  nlohmann::ordered_json j;
  j["unit"] = "multiply-accumulates; softmax, layer norm, GELU and additions excluded";
  j["vanilla_total_macs"] = report.vanilla_total;
  j["evo_total_macs"] = report.evo_total;
  j["reduction_fraction"] = report.reduction_fraction;
  j["vanilla_layers"] = layers_json(report.vanilla);
  j["evo_layers"] = layers_json(report.evo);
  return j.dump(2);
}

}  // namespace evovit::analysis
