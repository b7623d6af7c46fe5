#include "evovit/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace evovit {

void EvoConfig::validate(std::size_t depth) const {
  auto check_ratio = [](double r, const std::string& what) {
    if (!(r > 0.0 && r <= 1.0)) {
      throw ConfigError(what + " must lie in (0, 1], got " + std::to_string(r));
    }
  };
  check_ratio(keep_ratio, "keep_ratio");
  if (!layer_keep_ratios.empty() && layer_keep_ratios.size() != depth) {
    throw ConfigError("layer_keep_ratios has " + std::to_string(layer_keep_ratios.size()) +
                      " entries for depth " + std::to_string(depth));
  }
  for (std::size_t i = 0; i < layer_keep_ratios.size(); ++i) {
    check_ratio(layer_keep_ratios[i], "layer_keep_ratios[" + std::to_string(i) + "]");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  // Layer 1 has no global attention to select from yet.
  if (start_layer < 2) {
    throw ConfigError("start_layer must be >= 2, got " + std::to_string(start_layer));
  }
}

double EvoConfig::ratio_for(std::size_t layer) const {
  return layer < layer_keep_ratios.size() ? layer_keep_ratios[layer] : keep_ratio;
}

std::size_t keep_count(double ratio, std::size_t n) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ConfigError("keep ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

GlobalClassAttention update_global_attention(const GlobalClassAttention& g,
                                             std::span<const double> class_attention, double alpha,
                                             const std::vector<std::size_t>* mask) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (class_attention.empty()) throw DimensionError("class attention is empty");
  const std::size_t n = class_attention.size() - 1;

  if (!g.initialized) {
    if (mask) throw StateError("masked update of an uninitialized global class attention");
    GlobalClassAttention init;
    init.cls_share = class_attention[0];
    init.scores.assign(class_attention.begin() + 1, class_attention.end());
    init.initialized = true;
    return init;
  }
  if (g.scores.size() != n) {
    throw DimensionError("global attention holds " + std::to_string(g.scores.size()) +
                         " patch scores, class attention has " + std::to_string(n));
  }

  GlobalClassAttention next = g;
  const double keep = alpha, take = 1.0 - alpha;
  if (!mask) {
    next.cls_share = keep * g.cls_share + take * class_attention[0];
    for (std::size_t i = 0; i < n; ++i) {
      next.scores[i] = keep * g.scores[i] + take * class_attention[i + 1];
    }
    return next;
  }
  for (std::size_t i : *mask) {
    if (i >= n) throw IndexError("mask index " + std::to_string(i) + " out of range " + std::to_string(n));
    next.scores[i] = keep * g.scores[i] + take * class_attention[i + 1];
  }
  return next;
}

SelectionResult select_informative(std::span<const double> scores, double ratio, std::size_t layer) {
  const std::size_t n = scores.size();
  const std::size_t k = std::min(keep_count(ratio, n), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);

  SelectionResult result;
  result.layer = layer;
  result.informative.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  result.placeholder.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(result.informative.begin(), result.informative.end());
  std::sort(result.placeholder.begin(), result.placeholder.end());
  return result;
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  std::vector<double> out(weights.begin(), weights.end());
  double total = 0.0;
  for (double w : out) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw NumericError("aggregation weight " + std::to_string(w) + " is not a nonnegative number");
    }
    total += w;
  }
  if (total <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (double& w : out) w /= total;
  return out;
}

std::vector<double> aggregate_placeholders(const Matrix& placeholders,
                                           std::span<const double> weights) {
  if (placeholders.rows() == 0) throw DimensionError("no placeholder rows to aggregate");
  if (weights.size() != placeholders.rows()) {
    throw DimensionError("aggregate_placeholders: " + std::to_string(weights.size()) +
                         " weights for " + placeholders.shape());
  }
  const std::vector<double> w = normalize_weights(weights);
  std::vector<double> rep(placeholders.cols(), 0.0);
  for (std::size_t r = 0; r < placeholders.rows(); ++r) {
    auto row = placeholders.row(r);
    for (std::size_t c = 0; c < rep.size(); ++c) rep[c] += w[r] * row[c];
  }
  return rep;
}

namespace {

void check_partition(const SelectionResult& sel, std::size_t n) {
  std::vector<char> seen(n, 0);
  auto mark = [&](std::size_t i) {
    if (i >= n || seen[i]) {
      throw IndexError("selection is not a partition of " + std::to_string(n) + " patch tokens");
    }
    seen[i] = 1;
  };
  for (std::size_t i : sel.informative) mark(i);
  for (std::size_t i : sel.placeholder) mark(i);
  if (sel.informative.size() + sel.placeholder.size() != n || sel.informative.empty()) {
    throw IndexError("selection is not a partition of " + std::to_string(n) + " patch tokens");
  }
}

}  // namespace

EvoBlockOutput evo_block_forward(const TokenSequence& x, GlobalClassAttention& g,
                                 const LayerParams& layer, const EncoderConfig& cfg,
                                 const EvoBlockInputs& inputs, EvoBlockCache* cache) {
  x.check_structure("evo block input");
  const std::size_t n = x.n_patches, c_dim = x.tokens.cols();

  EvoBlockOutput out;
  if (inputs.forced_selection) {
    out.selection = *inputs.forced_selection;
    out.selection.layer = inputs.layer;
  } else {
    if (!g.initialized) throw StateError("token selection needs an initialized global class attention");
    out.selection = select_informative(g.scores, inputs.ratio, inputs.layer);
  }
  check_partition(out.selection, n);
  const auto& inf = out.selection.informative;
  const auto& ph = out.selection.placeholder;

  if (ph.empty()) {
    BlockOutput block = block_forward(x.tokens, layer, cfg, false, cache ? &cache->block : nullptr);
    out.tokens = {std::move(block.out), n};
    out.cls_attention = std::move(block.cls_attention);
    g = update_global_attention(g, out.cls_attention, inputs.alpha, &inf);
    if (cache) {
      cache->selection = out.selection;
      cache->weights.clear();
      cache->full = true;
    }
    out.tokens.check_structure("evo block output");
    return out;
  }

  if (!inputs.forced_weights.empty()) {
    if (inputs.forced_weights.size() != ph.size()) {
      throw DimensionError("forced aggregation weights do not match the placeholder count");
    }
    out.weights.assign(inputs.forced_weights.begin(), inputs.forced_weights.end());
  } else {
    std::vector<double> raw(ph.size());
    for (std::size_t j = 0; j < ph.size(); ++j) raw[j] = g.scores[ph[j]];
    out.weights = normalize_weights(raw);
  }

  // Slow sequence: [CLS, informative..., representative].
  const std::size_t k = inf.size(), rep_row = k + 1;
  Matrix slow(k + 2, c_dim);
  std::copy_n(x.tokens.row(0).begin(), c_dim, slow.row(0).begin());
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(x.tokens.row(inf[j] + 1).begin(), c_dim, slow.row(j + 1).begin());
  }
  {
    std::vector<std::size_t> ph_rows(ph.size());
    for (std::size_t j = 0; j < ph.size(); ++j) ph_rows[j] = ph[j] + 1;
    const auto rep = aggregate_placeholders(gather_rows(x.tokens, ph_rows), out.weights);
    std::copy(rep.begin(), rep.end(), slow.row(rep_row).begin());
  }

  BlockOutput block = block_forward(slow, layer, cfg, false, cache ? &cache->block : nullptr);

  Matrix result = x.tokens;
  std::copy_n(block.out.row(0).begin(), c_dim, result.row(0).begin());
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(block.out.row(j + 1).begin(), c_dim, result.row(inf[j] + 1).begin());
  }
  auto r1 = block.msa_residual.row(rep_row);
  auto r2 = block.ffn_residual.row(rep_row);
  for (std::size_t idx : ph) {
    auto row = result.row(idx + 1);
    for (std::size_t c = 0; c < c_dim; ++c) row[c] = row[c] + r1[c] + r2[c];
  }
  out.msa_broadcast.assign(r1.begin(), r1.end());
  out.ffn_broadcast.assign(r2.begin(), r2.end());

  out.cls_attention.assign(n + 1, 0.0);
  out.cls_attention[0] = block.cls_attention[0];
  for (std::size_t j = 0; j < k; ++j) out.cls_attention[inf[j] + 1] = block.cls_attention[j + 1];
  const double rep_share = block.cls_attention[rep_row];
  for (std::size_t j = 0; j < ph.size(); ++j) {
    out.cls_attention[ph[j] + 1] = rep_share * out.weights[j];
  }
  g = update_global_attention(g, out.cls_attention, inputs.alpha, &inf);

  out.tokens = {std::move(result), n};
  out.tokens.check_structure("evo block output");
  if (cache) {
    cache->selection = out.selection;
    cache->weights = out.weights;
    cache->full = false;
  }
  return out;
}

Matrix evo_block_backward(const Matrix& dout, const EvoBlockCache& cache, LayerParams& layer,
                          const EncoderConfig& cfg) {
  if (cache.full) return block_backward(dout, Matrix(), Matrix(), cache.block, layer, cfg);

  const auto& inf = cache.selection.informative;
  const auto& ph = cache.selection.placeholder;
  const std::size_t k = inf.size(), rep_row = k + 1, c_dim = dout.cols();

  Matrix dslow_out(k + 2, c_dim);
  std::copy_n(dout.row(0).begin(), c_dim, dslow_out.row(0).begin());
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(dout.row(inf[j] + 1).begin(), c_dim, dslow_out.row(j + 1).begin());
  }
  // Both broadcast residuals receive the summed placeholder adjoint.
  Matrix extra(k + 2, c_dim);
  auto broadcast = extra.row(rep_row);
  for (std::size_t idx : ph) {
    auto d = dout.row(idx + 1);
    for (std::size_t c = 0; c < c_dim; ++c) broadcast[c] += d[c];
  }
  const Matrix dslow = block_backward(dslow_out, extra, extra, cache.block, layer, cfg);

  Matrix dx = dout;
  std::copy_n(dslow.row(0).begin(), c_dim, dx.row(0).begin());
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(dslow.row(j + 1).begin(), c_dim, dx.row(inf[j] + 1).begin());
  }
  auto drep = dslow.row(rep_row);
  for (std::size_t j = 0; j < ph.size(); ++j) {
    auto row = dx.row(ph[j] + 1);
    for (std::size_t c = 0; c < c_dim; ++c) row[c] += cache.weights[j] * drep[c];
  }
  return dx;
}

}  // namespace evovit
