#include "evovit/strategies.hpp"

#include "evovit/kernels.hpp"

namespace evovit::analysis {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::GlobalClassAttention: return "global-class-attention";
    case StrategyKind::Random: return "random";
    case StrategyKind::LastClassAttention: return "last-class-attention";
    case StrategyKind::AttentionColumnMean: return "attention-column-mean";
  }
  return "unknown";
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
  for (StrategyKind kind : kAllStrategies) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

std::vector<double> strategy_scores(StrategyKind kind, const StrategyInputs& in) {
  switch (kind) {
    case StrategyKind::GlobalClassAttention:
      if (in.global_scores.empty()) throw StateError("global-class-attention needs global scores");
      return {in.global_scores.begin(), in.global_scores.end()};

    case StrategyKind::Random: {
      if (!in.rng) throw StateError("random selection needs an Rng");
      const std::size_t n = !in.global_scores.empty()       ? in.global_scores.size()
                            : !in.last_class_attention.empty() ? in.last_class_attention.size() - 1
                            : in.attention                  ? in.attention->cols() - 1
                                                            : 0;
      if (n == 0) throw StateError("random selection needs the token count (any score input)");
      std::vector<double> s(n);
      for (double& v : s) v = in.rng->uniform();
      return s;
    }

    case StrategyKind::LastClassAttention:
      if (in.last_class_attention.size() < 2) {
        throw StateError("last-class-attention needs the final layer's class attention from a prior pass");
      }
      return {in.last_class_attention.begin() + 1, in.last_class_attention.end()};

    case StrategyKind::AttentionColumnMean: {
      if (!in.attention || in.attention->rows() < 2) {
        throw StateError("attention-column-mean needs the full attention matrix");
      }
      const Matrix& a = *in.attention;
      std::vector<double> s(a.cols() - 1, 0.0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 1; c < a.cols(); ++c) s[c - 1] += a(r, c);
      }
      for (double& v : s) v /= static_cast<double>(a.rows());
      return s;
    }
  }
  throw StateError("unknown strategy");
}

SelectionResult baseline_select(StrategyKind kind, const StrategyInputs& inputs) {
  return select_informative(strategy_scores(kind, inputs), inputs.ratio, inputs.layer);
}

ScoreSource make_score_source(StrategyKind kind, Rng* rng,
                              std::vector<double> last_class_attention) {
  if (kind == StrategyKind::GlobalClassAttention) return {};
  return [kind, rng, last = std::move(last_class_attention)](const SelectionContext& ctx) {
    StrategyInputs in;
    in.layer = ctx.layer;
    in.global_scores = ctx.global.scores;
    in.rng = rng;
    in.last_class_attention = last;
    Matrix attention;
    if (kind == StrategyKind::AttentionColumnMean) {
      const Matrix normalized = layer_norm_rows(ctx.tokens.tokens, ctx.params.ln1_gain.value.flat(),
                                                ctx.params.ln1_bias.value.flat());
      attention = attention_matrix(normalized, ctx.params, ctx.cfg);
      in.attention = &attention;
    }
    return strategy_scores(kind, in);
  };
}

std::vector<StrategyAccuracy> compare_strategies(const ModelParams& params, const Dataset& data,
                                                 const EncoderConfig& cfg, const EvoConfig& evo,
                                                 std::uint64_t seed) {
  std::vector<StrategyAccuracy> table;
  for (StrategyKind kind : kAllStrategies) {
    Rng rng(seed);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<double> last;
      if (kind == StrategyKind::LastClassAttention) {
        const VanillaOutput first = model_forward_vanilla(data.images[i], params, cfg);
        if (first.record.cls_attention.empty()) {
          throw StateError("last-class-attention needs at least one layer");
        }
        last = first.record.cls_attention.back();
      }
      ForwardOptions options;
      options.scores = make_score_source(kind, &rng, std::move(last));
      const auto out = model_forward_evo(data.images[i], params, cfg, evo, options);
      if (static_cast<int>(argmax(out.logits.avg)) == data.labels[i]) ++correct;
    }
    table.push_back({kind, data.size() == 0 ? 0.0
                                            : static_cast<double>(correct) /
                                                  static_cast<double>(data.size())});
  }
  return table;
}

}  // namespace evovit::analysis
