#include "evovit/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace evovit {

void EncoderConfig::validate() const {
  if (image_side == 0 || patch_side == 0 || channels_in == 0 || embed_dim == 0 || heads == 0 ||
      ffn_hidden == 0 || num_classes == 0) {
    throw ConfigError("encoder config has a zero-sized field: " + describe());
  }
  if (image_side % patch_side != 0) {
    throw ConfigError("image_side " + std::to_string(image_side) + " is not divisible by patch_side " +
                      std::to_string(patch_side));
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
}

std::string EncoderConfig::describe() const {
  return "{image_side=" + std::to_string(image_side) + ", patch_side=" + std::to_string(patch_side) +
         ", channels_in=" + std::to_string(channels_in) + ", embed_dim=" + std::to_string(embed_dim) +
         ", heads=" + std::to_string(heads) + ", depth=" + std::to_string(depth) +
         ", ffn_hidden=" + std::to_string(ffn_hidden) + ", num_classes=" +
         std::to_string(num_classes) + "}";
}

void TokenSequence::check_structure(const char* where) const {
  if (tokens.rows() != 1 + n_patches) {
    throw StateError(std::string(where) + ": token count " + std::to_string(tokens.rows()) +
                     " != 1 + N = " + std::to_string(1 + n_patches));
  }
}

ParamRefs LayerParams::refs() {
  return {&ln1_gain, &ln1_bias, &w_q, &b_q, &w_k, &b_k, &w_v, &b_v, &w_o, &b_o,
          &ln2_gain, &ln2_bias, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2};
}

ParamRefs ModelParams::refs() {
  ParamRefs out{&patch_w, &patch_b, &cls_token, &pos_embed};
  for (auto& layer : layers) {
    auto lr = layer.refs();
    out.insert(out.end(), lr.begin(), lr.end());
  }
  out.insert(out.end(), {&norm_gain, &norm_bias, &head_w, &head_b});
  return out;
}

std::vector<const Parameter*> ModelParams::refs() const {
  const ParamRefs mutable_refs = const_cast<ModelParams*>(this)->refs();
  return {mutable_refs.begin(), mutable_refs.end()};
}

void ModelParams::zero_grads() { evovit::zero_grads(refs()); }

namespace {

Matrix filled(std::size_t rows, std::size_t cols, double v) { return Matrix(rows, cols, v); }

Matrix truncated(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.truncated_normal(0.02);
  return m;
}

Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = 0.02 * rng.normal();
  return m;
}

// Builds the parameter layout; `weights` supplies weight matrices and `embeds`
// the CLS/position embeddings so zero_params can reuse the same skeleton.
template <typename WeightFn, typename EmbedFn>
ModelParams build_params(const EncoderConfig& cfg, WeightFn weights, EmbedFn embeds) {
  cfg.validate();
  const std::size_t c = cfg.embed_dim, hidden = cfg.ffn_hidden, n = cfg.num_patches();
  ModelParams p;
  p.patch_w = Parameter("patch_w", weights(cfg.patch_dim(), c), true);
  p.patch_b = Parameter("patch_b", filled(1, c, 0.0));
  p.cls_token = Parameter("cls_token", embeds(1, c));
  p.pos_embed = Parameter("pos_embed", embeds(1 + n, c));
  p.layers.resize(cfg.depth);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string pre = "layers." + std::to_string(i) + ".";
    auto& l = p.layers[i];
    l.ln1_gain = Parameter(pre + "ln1_gain", filled(1, c, 1.0));
    l.ln1_bias = Parameter(pre + "ln1_bias", filled(1, c, 0.0));
    l.w_q = Parameter(pre + "w_q", weights(c, c), true);
    l.b_q = Parameter(pre + "b_q", filled(1, c, 0.0));
    l.w_k = Parameter(pre + "w_k", weights(c, c), true);
    l.b_k = Parameter(pre + "b_k", filled(1, c, 0.0));
    l.w_v = Parameter(pre + "w_v", weights(c, c), true);
    l.b_v = Parameter(pre + "b_v", filled(1, c, 0.0));
    l.w_o = Parameter(pre + "w_o", weights(c, c), true);
    l.b_o = Parameter(pre + "b_o", filled(1, c, 0.0));
    l.ln2_gain = Parameter(pre + "ln2_gain", filled(1, c, 1.0));
    l.ln2_bias = Parameter(pre + "ln2_bias", filled(1, c, 0.0));
    l.ffn_w1 = Parameter(pre + "ffn_w1", weights(c, hidden), true);
    l.ffn_b1 = Parameter(pre + "ffn_b1", filled(1, hidden, 0.0));
    l.ffn_w2 = Parameter(pre + "ffn_w2", weights(hidden, c), true);
    l.ffn_b2 = Parameter(pre + "ffn_b2", filled(1, c, 0.0));
  }
  p.norm_gain = Parameter("norm_gain", filled(1, c, 1.0));
  p.norm_bias = Parameter("norm_bias", filled(1, c, 0.0));
  p.head_w = Parameter("head_w", weights(c, cfg.num_classes), true);
  p.head_b = Parameter("head_b", filled(1, cfg.num_classes, 0.0));
  return p;
}

}  // namespace

ModelParams init_params(const EncoderConfig& cfg, Rng& rng) {
  return build_params(
      cfg, [&](std::size_t r, std::size_t c) { return truncated(r, c, rng); },
      [&](std::size_t r, std::size_t c) { return gaussian(r, c, rng); });
}

ModelParams zero_params(const EncoderConfig& cfg) {
  ModelParams p = build_params(
      cfg, [](std::size_t r, std::size_t c) { return Matrix(r, c); },
      [](std::size_t r, std::size_t c) { return Matrix(r, c); });
  for (Parameter* param : p.refs()) param->value.fill(0.0);
  return p;
}

Matrix patchify(const Image& image, const EncoderConfig& cfg) {
  if (image.height != cfg.image_side || image.width != cfg.image_side ||
      image.channels != cfg.channels_in) {
    throw ConfigError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      "x" + std::to_string(image.channels) + " does not match config " +
                      cfg.describe());
  }
  if (cfg.patch_side == 0 || cfg.image_side % cfg.patch_side != 0) {
    throw ConfigError("image_side " + std::to_string(cfg.image_side) +
                      " is not divisible by patch_side " + std::to_string(cfg.patch_side));
  }
  const std::size_t grid = cfg.grid(), ps = cfg.patch_side, ch = cfg.channels_in;
  Matrix out(grid * grid, cfg.patch_dim());
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      auto row = out.row(gy * grid + gx);
      std::size_t col = 0;
      for (std::size_t dy = 0; dy < ps; ++dy) {
        for (std::size_t dx = 0; dx < ps; ++dx) {
          for (std::size_t c = 0; c < ch; ++c) row[col++] = image.at(gy * ps + dy, gx * ps + dx, c);
        }
      }
    }
  }
  return out;
}

TokenSequence embed(const Image& image, const ModelParams& params, const EncoderConfig& cfg,
                    EmbedCache* cache) {
  Matrix patches = patchify(image, cfg);
  const Matrix projected = linear(patches, params.patch_w.value, params.patch_b.value.flat());
  const std::size_t n = projected.rows();
  if (params.pos_embed.value.rows() != n + 1 || params.pos_embed.value.cols() != projected.cols()) {
    throw DimensionError("pos_embed " + params.pos_embed.value.shape() + " does not match " +
                         std::to_string(n + 1) + " tokens of width " +
                         std::to_string(projected.cols()));
  }
  TokenSequence seq{Matrix(n + 1, projected.cols()), n};
  const auto& pos = params.pos_embed.value;
  for (std::size_t c = 0; c < projected.cols(); ++c) {
    seq.tokens(0, c) = params.cls_token.value(0, c) + pos(0, c);
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < projected.cols(); ++c) {
      seq.tokens(r + 1, c) = projected(r, c) + pos(r + 1, c);
    }
  }
  if (cache) cache->patches = std::move(patches);
  return seq;
}

void embed_backward(const Matrix& dtokens, const EmbedCache& cache, ModelParams& params) {
  add_inplace(params.pos_embed.grad, dtokens);
  const std::size_t n = dtokens.rows() - 1;
  for (std::size_t c = 0; c < dtokens.cols(); ++c) params.cls_token.grad(0, c) += dtokens(0, c);
  Matrix dproj(n, dtokens.cols());
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(dtokens.row(r + 1).begin(), dtokens.cols(), dproj.row(r).begin());
  }
  linear_backward(cache.patches, params.patch_w.value, dproj, params.patch_w.grad,
                  params.patch_b.grad.flat());
}

namespace {

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.row(r).begin() + static_cast<std::ptrdiff_t>(begin), width, out.row(r).begin());
  }
  return out;
}

void put_columns(Matrix& dst, const Matrix& src, std::size_t begin) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy_n(src.row(r).begin(), src.cols(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(begin));
  }
}

void scale_inplace(Matrix& m, double s) {
  for (double& v : m.flat()) v *= s;
}

void check_heads(const EncoderConfig& cfg) {
  if (cfg.heads == 0 || cfg.embed_dim % cfg.heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(cfg.embed_dim) + " is not divisible by heads " +
                      std::to_string(cfg.heads));
  }
}

}  // namespace

Matrix attention_queries(const Matrix& normalized, const LayerParams& layer) {
  return linear(normalized, layer.w_q.value, layer.b_q.value.flat());
}

MsaOutput msa_forward(const Matrix& x, const LayerParams& layer, const EncoderConfig& cfg,
                      bool full_attention, MsaCache* cache) {
  check_heads(cfg);
  const std::size_t n = x.rows(), d = cfg.head_dim(), heads = cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix q = linear(x, layer.w_q.value, layer.b_q.value.flat());
  Matrix k = linear(x, layer.w_k.value, layer.b_k.value.flat());
  Matrix v = linear(x, layer.w_v.value, layer.b_v.value.flat());
  Matrix concat(n, cfg.embed_dim);

  MsaOutput result;
  result.cls_attention.assign(n, 0.0);
  if (full_attention) result.attention = Matrix(n, n);
  std::vector<Matrix> per_head;
  if (cache) per_head.reserve(heads);

  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix qh = column_slice(q, h * d, d);
    const Matrix kh = column_slice(k, h * d, d);
    const Matrix vh = column_slice(v, h * d, d);
    Matrix scores = matmul_nt(qh, kh);
    scale_inplace(scores, scale);
    Matrix attn = softmax_rows(scores);
    put_columns(concat, matmul(attn, vh), h * d);
    for (std::size_t j = 0; j < n; ++j) result.cls_attention[j] += attn(0, j);
    if (full_attention) add_inplace(result.attention, attn);
    if (cache) per_head.push_back(std::move(attn));
  }
  const double inv_heads = 1.0 / static_cast<double>(heads);
  for (double& a : result.cls_attention) a *= inv_heads;
  if (full_attention) scale_inplace(result.attention, inv_heads);

  result.out = linear(concat, layer.w_o.value, layer.b_o.value.flat());
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
    cache->attention = std::move(per_head);
  }
  return result;
}

Matrix attention_matrix(const Matrix& normalized, const LayerParams& layer,
                        const EncoderConfig& cfg) {
  check_heads(cfg);
  const std::size_t n = normalized.rows(), d = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Matrix q = linear(normalized, layer.w_q.value, layer.b_q.value.flat());
  const Matrix k = linear(normalized, layer.w_k.value, layer.b_k.value.flat());
  Matrix mean(n, n);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Matrix scores = matmul_nt(column_slice(q, h * d, d), column_slice(k, h * d, d));
    scale_inplace(scores, scale);
    add_inplace(mean, softmax_rows(scores));
  }
  scale_inplace(mean, 1.0 / static_cast<double>(cfg.heads));
  return mean;
}

Matrix msa_backward(const Matrix& dout, const MsaCache& cache, LayerParams& layer,
                    const EncoderConfig& cfg) {
  const std::size_t n = cache.input.rows(), d = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  const Matrix dconcat =
      linear_backward(cache.concat, layer.w_o.value, dout, layer.w_o.grad, layer.b_o.grad.flat());
  Matrix dq(n, cfg.embed_dim), dk(n, cfg.embed_dim), dv(n, cfg.embed_dim);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Matrix& attn = cache.attention[h];
    const Matrix qh = column_slice(cache.q, h * d, d);
    const Matrix kh = column_slice(cache.k, h * d, d);
    const Matrix vh = column_slice(cache.v, h * d, d);
    const Matrix doh = column_slice(dconcat, h * d, d);
    const Matrix dattn = matmul_nt(doh, vh);
    put_columns(dv, matmul_tn(attn, doh), h * d);
    Matrix dscores = softmax_rows_backward(attn, dattn);
    scale_inplace(dscores, scale);
    put_columns(dq, matmul(dscores, kh), h * d);
    put_columns(dk, matmul_tn(dscores, qh), h * d);
  }
  Matrix dx = linear_backward(cache.input, layer.w_q.value, dq, layer.w_q.grad, layer.b_q.grad.flat());
  add_inplace(dx, linear_backward(cache.input, layer.w_k.value, dk, layer.w_k.grad,
                                  layer.b_k.grad.flat()));
  add_inplace(dx, linear_backward(cache.input, layer.w_v.value, dv, layer.w_v.grad,
                                  layer.b_v.grad.flat()));
  return dx;
}

Matrix ffn_forward(const Matrix& x, const LayerParams& layer, FfnCache* cache) {
  Matrix pre = linear(x, layer.ffn_w1.value, layer.ffn_b1.value.flat());
  Matrix act = gelu_map(pre);
  Matrix out = linear(act, layer.ffn_w2.value, layer.ffn_b2.value.flat());
  if (cache) {
    cache->input = x;
    cache->hidden_pre = std::move(pre);
    cache->hidden_act = std::move(act);
  }
  return out;
}

Matrix ffn_backward(const Matrix& dout, const FfnCache& cache, LayerParams& layer) {
  const Matrix dact = linear_backward(cache.hidden_act, layer.ffn_w2.value, dout, layer.ffn_w2.grad,
                                      layer.ffn_b2.grad.flat());
  const Matrix dpre = gelu_map_backward(cache.hidden_pre, dact);
  return linear_backward(cache.input, layer.ffn_w1.value, dpre, layer.ffn_w1.grad,
                         layer.ffn_b1.grad.flat());
}

BlockOutput block_forward(const Matrix& x, const LayerParams& layer, const EncoderConfig& cfg,
                          bool full_attention, BlockCache* cache) {
  BlockOutput result;
  const Matrix n1 = layer_norm_rows(x, layer.ln1_gain.value.flat(), layer.ln1_bias.value.flat(),
                                    kLayerNormEps, cache ? &cache->ln1 : nullptr);
  MsaOutput msa = msa_forward(n1, layer, cfg, full_attention, cache ? &cache->msa : nullptr);
  Matrix y = add(x, msa.out);
  const Matrix n2 = layer_norm_rows(y, layer.ln2_gain.value.flat(), layer.ln2_bias.value.flat(),
                                    kLayerNormEps, cache ? &cache->ln2 : nullptr);
  result.ffn_residual = ffn_forward(n2, layer, cache ? &cache->ffn : nullptr);
  result.out = add(y, result.ffn_residual);
  result.msa_residual = std::move(msa.out);
  result.cls_attention = std::move(msa.cls_attention);
  result.attention = std::move(msa.attention);
  return result;
}

Matrix block_backward(const Matrix& dout, const Matrix& extra_msa, const Matrix& extra_ffn,
                      const BlockCache& cache, LayerParams& layer, const EncoderConfig& cfg) {
  Matrix dffn = dout;
  if (!extra_ffn.empty()) add_inplace(dffn, extra_ffn);
  const Matrix dn2 = ffn_backward(dffn, cache.ffn, layer);
  Matrix dy = add(dout, layer_norm_rows_backward(dn2, cache.ln2, layer.ln2_gain.value.flat(),
                                                 layer.ln2_gain.grad.flat(),
                                                 layer.ln2_bias.grad.flat()));
  Matrix dmsa = dy;
  if (!extra_msa.empty()) add_inplace(dmsa, extra_msa);
  const Matrix dn1 = msa_backward(dmsa, cache.msa, layer, cfg);
  add_inplace(dy, layer_norm_rows_backward(dn1, cache.ln1, layer.ln1_gain.value.flat(),
                                           layer.ln1_gain.grad.flat(), layer.ln1_bias.grad.flat()));
  return dy;
}

BlockResult vanilla_block_forward(const TokenSequence& x, const LayerParams& layer,
                                  const EncoderConfig& cfg) {
  x.check_structure("vanilla_block_forward input");
  BlockOutput out = block_forward(x.tokens, layer, cfg);
  BlockResult result{{std::move(out.out), x.n_patches}, std::move(out.cls_attention)};
  result.tokens.check_structure("vanilla_block_forward output");
  return result;
}

namespace {

std::vector<double> classify(std::span<const double> features, const ModelParams& params) {
  const Matrix& w = params.head_w.value;
  std::vector<double> logits(params.head_b.value.flat().begin(), params.head_b.value.flat().end());
  std::vector<double> acc(w.cols(), 0.0);
  for (std::size_t p = 0; p < features.size(); ++p) {
    auto wrow = w.row(p);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += features[p] * wrow[j];
  }
  for (std::size_t j = 0; j < acc.size(); ++j) logits[j] = acc[j] + logits[j];
  return logits;
}

}  // namespace

Logits head_forward(const Matrix& tokens, const ModelParams& params, HeadCache* cache) {
  LayerNormCache ln;
  Matrix normalized = layer_norm_rows(tokens, params.norm_gain.value.flat(),
                                      params.norm_bias.value.flat(), kLayerNormEps, &ln);
  const std::size_t n = tokens.rows() - 1;
  std::vector<double> pooled(tokens.cols(), 0.0);
  for (std::size_t r = 1; r <= n; ++r) {
    auto row = normalized.row(r);
    for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += row[c];
  }
  for (double& v : pooled) v /= static_cast<double>(n);

  Logits logits{classify(normalized.row(0), params), classify(pooled, params)};
  if (cache) {
    cache->ln = std::move(ln);
    cache->normalized = std::move(normalized);
    cache->pooled = std::move(pooled);
  }
  return logits;
}

Matrix head_backward(std::span<const double> dcls, std::span<const double> davg,
                     const HeadCache& cache, ModelParams& params) {
  const Matrix& w = params.head_w.value;
  const std::size_t c_dim = w.rows(), classes = w.cols();
  const std::size_t n = cache.normalized.rows() - 1;
  auto cls_row = cache.normalized.row(0);
  for (std::size_t p = 0; p < c_dim; ++p) {
    auto grow = params.head_w.grad.row(p);
    for (std::size_t j = 0; j < classes; ++j) {
      grow[j] += cls_row[p] * dcls[j] + cache.pooled[p] * davg[j];
    }
  }
  for (std::size_t j = 0; j < classes; ++j) params.head_b.grad(0, j) += dcls[j] + davg[j];

  Matrix dnorm(cache.normalized.rows(), c_dim);
  std::vector<double> dpooled(c_dim, 0.0);
  for (std::size_t p = 0; p < c_dim; ++p) {
    auto wrow = w.row(p);
    double gc = 0.0, ga = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      gc += wrow[j] * dcls[j];
      ga += wrow[j] * davg[j];
    }
    dnorm(0, p) = gc;
    dpooled[p] = ga / static_cast<double>(n);
  }
  for (std::size_t r = 1; r <= n; ++r) std::copy(dpooled.begin(), dpooled.end(), dnorm.row(r).begin());
  return layer_norm_rows_backward(dnorm, cache.ln, params.norm_gain.value.flat(),
                                  params.norm_gain.grad.flat(), params.norm_bias.grad.flat());
}

VanillaOutput model_forward_vanilla(const Image& image, const ModelParams& params,
                                    const EncoderConfig& cfg, bool record) {
  cfg.validate();
  TokenSequence x = embed(image, params, cfg);
  x.check_structure("embed");
  VanillaOutput out;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    BlockOutput block = block_forward(x.tokens, params.layers[l], cfg, record);
    x.tokens = std::move(block.out);
    x.check_structure("vanilla layer output");
    out.record.cls_attention.push_back(std::move(block.cls_attention));
    if (record) {
      out.record.full_attention.push_back(std::move(block.attention));
      out.layer_outputs.push_back(x.tokens);
    }
  }
  out.logits = head_forward(x.tokens, params);
  return out;
}

}  // namespace evovit
