#include "evovit/model.hpp"

namespace evovit {

const char* to_string(ScheduleMode mode) {
  return mode == ScheduleMode::LayerWise ? "layer-wise" : "stage-wise";
}

const char* to_string(ModelKind kind) { return kind == ModelKind::Vanilla ? "vanilla" : "evo"; }

bool selects_fresh(std::size_t layer, const EvoConfig& evo, ScheduleMode mode,
                   std::uint32_t stage_size) {
  if (!evo.selects_at(layer)) return false;
  if (mode == ScheduleMode::LayerWise) return true;
  const std::size_t offset = layer + 1 - evo.start_layer;
  return stage_size == 0 || offset % stage_size == 0;
}

EvoConfig vanilla_evo_config(const EncoderConfig& cfg) {
  EvoConfig evo;
  evo.keep_ratio = 1.0;
  evo.start_layer = cfg.depth + 1 < 2 ? 2 : cfg.depth + 1;
  return evo;
}

EvoForwardOutput model_forward_evo(const Image& image, const ModelParams& params,
                                   const EncoderConfig& cfg, const EvoConfig& evo,
                                   const ForwardOptions& options, ModelTape* tape) {
  cfg.validate();
  evo.validate(cfg.depth);
  if (params.layers.size() != cfg.depth) {
    throw DimensionError("model has " + std::to_string(params.layers.size()) +
                         " layers, config depth is " + std::to_string(cfg.depth));
  }

  EvoForwardOutput out;
  TokenSequence x = embed(image, params, cfg, tape ? &tape->embed : nullptr);
  x.check_structure("embed");
  if (tape) tape->layers.assign(cfg.depth, {});
  out.plan.selections.assign(cfg.depth, std::nullopt);
  out.plan.weights.assign(cfg.depth, {});

  std::optional<SelectionResult> stage_selection;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const LayerParams& layer = params.layers[l];
    EvoBlockCache* cache = tape ? &tape->layers[l] : nullptr;

    if (!evo.selects_at(l)) {
      BlockOutput block = block_forward(x.tokens, layer, cfg, options.record,
                                        cache ? &cache->block : nullptr);
      if (cache) cache->full = true;
      x.tokens = std::move(block.out);
      out.global = update_global_attention(out.global, block.cls_attention, evo.alpha);
      out.record.cls_attention.push_back(std::move(block.cls_attention));
      if (options.record) out.record.full_attention.push_back(std::move(block.attention));
    } else {
      EvoBlockInputs inputs;
      inputs.ratio = evo.ratio_for(l);
      inputs.alpha = evo.alpha;
      inputs.layer = l;

      std::optional<SelectionResult> chosen;
      if (options.frozen) {
        if (l >= options.frozen->selections.size() || !options.frozen->selections[l]) {
          throw StateError("frozen selection plan has no entry for layer " + std::to_string(l));
        }
        chosen = options.frozen->selections[l];
        inputs.forced_weights = options.frozen->weights[l];
      } else if (selects_fresh(l, evo, options.mode, options.stage_size)) {
        if (options.scores) {
          const std::vector<double> scores =
              options.scores(SelectionContext{l, x, layer, cfg, out.global});
          chosen = select_informative(scores, inputs.ratio, l);
        }
        // Without a score source the block selects from the global attention.
      } else {
        chosen = stage_selection;
      }
      if (chosen) inputs.forced_selection = &*chosen;

      EvoBlockOutput block = evo_block_forward(x, out.global, layer, cfg, inputs, cache);
      if (selects_fresh(l, evo, options.mode, options.stage_size)) stage_selection = block.selection;
      x = std::move(block.tokens);
      out.plan.selections[l] = block.selection;
      out.plan.weights[l] = block.weights;
      out.selections.push_back(std::move(block.selection));
      out.record.cls_attention.push_back(std::move(block.cls_attention));
      if (options.record) out.record.full_attention.emplace_back();
    }
    x.check_structure("layer output");
    if (options.record) out.layer_outputs.push_back(x.tokens);
  }
  out.logits = head_forward(x.tokens, params, tape ? &tape->head : nullptr);
  return out;
}

void model_backward(const ModelTape& tape, std::span<const double> dlogits_cls,
                    std::span<const double> dlogits_avg, ModelParams& params,
                    const EncoderConfig& cfg) {
  Matrix d = head_backward(dlogits_cls, dlogits_avg, tape.head, params);
  for (std::size_t l = tape.layers.size(); l-- > 0;) {
    d = evo_block_backward(d, tape.layers[l], params.layers[l], cfg);
  }
  embed_backward(d, tape.embed, params);
}

}  // namespace evovit
