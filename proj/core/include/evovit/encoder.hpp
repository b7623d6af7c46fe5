#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evovit/kernels.hpp"
#include "evovit/matrix.hpp"
#include "evovit/param.hpp"
#include "evovit/rng.hpp"

namespace evovit {

struct EncoderConfig {
  std::uint32_t image_side = 16;
  std::uint32_t patch_side = 4;
  std::uint32_t channels_in = 1;
  std::uint32_t embed_dim = 32;
  std::uint32_t heads = 4;
  std::uint32_t depth = 4;
  std::uint32_t ffn_hidden = 128;  // 4 * embed_dim unless set otherwise
  std::uint32_t num_classes = 10;

  // Throws ConfigError on divisibility or zero-size violations.
  void validate() const;
  std::size_t grid() const { return image_side / patch_side; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const {
    return static_cast<std::size_t>(patch_side) * patch_side * channels_in;
  }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::string describe() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Pixels are stored H x W x C, channel last.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// Row 0 is the CLS token, rows 1..N are patch tokens in row-major patch order.
struct TokenSequence {
  Matrix tokens;
  std::size_t n_patches = 0;

  std::size_t rows() const { return tokens.rows(); }
  // Throws StateError unless there are exactly 1 + n_patches rows.
  void check_structure(const char* where) const;
};

struct LayerParams {
  Parameter ln1_gain, ln1_bias;
  Parameter w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Parameter ln2_gain, ln2_bias;
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  ParamRefs refs();
};

struct ModelParams {
  Parameter patch_w, patch_b;
  Parameter cls_token;
  Parameter pos_embed;
  std::vector<LayerParams> layers;
  Parameter norm_gain, norm_bias;
  Parameter head_w, head_b;

  // Fixed enumeration order; checkpoints and the optimizer depend on it.
  ParamRefs refs();
  std::vector<const Parameter*> refs() const;
  void zero_grads();
};

// Weights: truncated normal std 0.02; biases zero; LN gain 1, bias 0;
// CLS token and position embedding normal std 0.02.
ModelParams init_params(const EncoderConfig& cfg, Rng& rng);
// Same names and shapes, all values zero.
ModelParams zero_params(const EncoderConfig& cfg);

// (N, patch_side^2 * channels). Patches are enumerated row-major from the top
// left; within a patch, pixels are row-major and channels are innermost.
Matrix patchify(const Image& image, const EncoderConfig& cfg);

struct EmbedCache {
  Matrix patches;
};
TokenSequence embed(const Image& image, const ModelParams& params, const EncoderConfig& cfg,
                    EmbedCache* cache = nullptr);
void embed_backward(const Matrix& dtokens, const EmbedCache& cache, ModelParams& params);

struct MsaCache {
  Matrix input, q, k, v, concat;
  std::vector<Matrix> attention;  // one (n x n) matrix per head
};

struct MsaOutput {
  Matrix out;
  // Row 0 of each head's attention, averaged over heads; length n.
  std::vector<double> cls_attention;
  // Head-averaged attention matrix; filled only on request.
  Matrix attention;
};

// Multi-head self-attention over the rows of `x` (already layer-normalized by
// the caller). Each head uses scale 1/sqrt(C/h).
MsaOutput msa_forward(const Matrix& x, const LayerParams& layer, const EncoderConfig& cfg,
                      bool full_attention = false, MsaCache* cache = nullptr);
Matrix msa_backward(const Matrix& dout, const MsaCache& cache, LayerParams& layer,
                    const EncoderConfig& cfg);

// Queries for every row: x * W_Q + b_Q.
Matrix attention_queries(const Matrix& normalized, const LayerParams& layer);
// Head-averaged attention matrix for `normalized` rows without the value path.
Matrix attention_matrix(const Matrix& normalized, const LayerParams& layer,
                        const EncoderConfig& cfg);

struct FfnCache {
  Matrix input, hidden_pre, hidden_act;
};
Matrix ffn_forward(const Matrix& x, const LayerParams& layer, FfnCache* cache = nullptr);
Matrix ffn_backward(const Matrix& dout, const FfnCache& cache, LayerParams& layer);

struct BlockCache {
  LayerNormCache ln1;
  MsaCache msa;
  LayerNormCache ln2;
  FfnCache ffn;
};

struct BlockOutput {
  Matrix out;
  Matrix msa_residual;  // MSA(LN(x))
  Matrix ffn_residual;  // FFN(LN(y))
  std::vector<double> cls_attention;
  Matrix attention;
};

// y = x + MSA(LN(x)); out = y + FFN(LN(y)).
BlockOutput block_forward(const Matrix& x, const LayerParams& layer, const EncoderConfig& cfg,
                          bool full_attention = false, BlockCache* cache = nullptr);

// Maps d(out) to d(x). `extra_msa` / `extra_ffn` add adjoints that reach the
// two residual branches directly (empty when unused).
Matrix block_backward(const Matrix& dout, const Matrix& extra_msa, const Matrix& extra_ffn,
                      const BlockCache& cache, LayerParams& layer, const EncoderConfig& cfg);

struct BlockResult {
  TokenSequence tokens;
  std::vector<double> cls_attention;
};
BlockResult vanilla_block_forward(const TokenSequence& x, const LayerParams& layer,
                                  const EncoderConfig& cfg);

struct Logits {
  std::vector<double> cls;
  std::vector<double> avg;
};

struct HeadCache {
  LayerNormCache ln;
  Matrix normalized;
  std::vector<double> pooled;
};
// Final layer norm, then the shared classifier on the CLS row and on the mean
// of the patch rows.
Logits head_forward(const Matrix& tokens, const ModelParams& params, HeadCache* cache = nullptr);
Matrix head_backward(std::span<const double> dcls, std::span<const double> davg,
                     const HeadCache& cache, ModelParams& params);

struct AttentionRecord {
  // Per layer, length 1 + N, head-averaged.
  std::vector<std::vector<double>> cls_attention;
  // Per layer head-averaged (1+N) x (1+N) matrices; analysis mode only.
  std::vector<Matrix> full_attention;
};

struct VanillaOutput {
  Logits logits;
  AttentionRecord record;
  // Post-block token matrices, one per layer; filled when recording.
  std::vector<Matrix> layer_outputs;
};

VanillaOutput model_forward_vanilla(const Image& image, const ModelParams& params,
                                    const EncoderConfig& cfg, bool record = false);

}  // namespace evovit
