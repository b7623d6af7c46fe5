#include "evovit/profiles.hpp"

#include "evovit/error.hpp"
#include "evovit/kernels.hpp"
#include "evovit/model.hpp"

namespace evovit::analysis {

namespace {

void require_samples(const Dataset& data, std::size_t minimum, const char* what) {
  if (data.size() < minimum) {
    throw StateError(std::string(what) + " needs at least " + std::to_string(minimum) +
                     " samples, got " + std::to_string(data.size()));
  }
}

}  // namespace

std::vector<double> cka_profile(const ModelParams& params, const Dataset& data,
                                const EncoderConfig& cfg, const EvoConfig& evo) {
  require_samples(data, 2, "cka_profile");
  const std::size_t depth = cfg.depth, dim = cfg.embed_dim, n = cfg.num_patches();
  std::vector<Matrix> per_layer(depth, Matrix(data.size(), dim));
  Matrix final_cls(data.size(), dim);

  ForwardOptions options;
  options.record = true;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto out = model_forward_evo(data.images[s], params, cfg, evo, options);
    for (std::size_t l = 0; l < depth; ++l) {
      const Matrix& tokens = out.layer_outputs[l];
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t c = 0; c < dim; ++c) per_layer[l](s, c) += tokens(i, c) / static_cast<double>(n);
      }
    }
    const Matrix& last = out.layer_outputs.back();
    for (std::size_t c = 0; c < dim; ++c) final_cls(s, c) = last(0, c);
  }

  std::vector<double> values;
  values.reserve(depth);
  for (const Matrix& x : per_layer) values.push_back(linear_cka(x, final_cls));
  return values;
}

std::vector<PccStats> pcc_profile(const ModelParams& params, const Dataset& data,
                                  const EncoderConfig& cfg, const EvoConfig& evo) {
  require_samples(data, 1, "pcc_profile");
  const std::size_t depth = cfg.depth, n = cfg.num_patches();
  std::vector<PccStats> stats(depth);

  ForwardOptions options;
  options.record = true;
  for (const Image& image : data.images) {
    const auto out = model_forward_evo(image, params, cfg, evo, options);
    Matrix input = embed(image, params, cfg).tokens;
    for (std::size_t l = 0; l < depth; ++l) {
      const LayerParams& layer = params.layers[l];
      const Matrix normalized = layer_norm_rows(input, layer.ln1_gain.value.flat(),
                                                layer.ln1_bias.value.flat(), kLayerNormEps);
      const Matrix queries = attention_queries(normalized, layer);
      Matrix patches(n, queries.cols());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < queries.cols(); ++c) patches(i, c) = queries(i + 1, c);
      }
      const PccStats one = token_query_pcc(patches);
      stats[l].mean += one.mean / static_cast<double>(data.size());
      stats[l].variance += one.variance / static_cast<double>(data.size());
      stats[l].pairs += one.pairs;
      stats[l].constant_rows += one.constant_rows;
      input = out.layer_outputs[l];
    }
  }
  return stats;
}

}  // namespace evovit::analysis
