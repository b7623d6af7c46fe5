#include "evovit/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace evovit {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("train Adam constants out of range");
  }
  if (stage_size < 1) throw ConfigError("train.stage_size must be >= 1");
  if (!(layer_to_stage_switch > 0.0 && layer_to_stage_switch <= 1.0)) {
    throw ConfigError("train.layer_to_stage_switch must lie in (0, 1]");
  }
}

LossBreakdown assisted_cls_loss(const Matrix& logits_cls, const Matrix& logits_avg,
                                std::span<const int> labels) {
  LossBreakdown loss;
  loss.cls_term = cross_entropy_logits(logits_cls, labels);
  loss.avg_term = cross_entropy_logits(logits_avg, labels);
  loss.total = loss.cls_term + loss.avg_term;
  return loss;
}

std::uint32_t schedule_switch_epoch(std::uint32_t total_epochs, double switch_fraction) {
  // The epsilon keeps 2/3 * 300 at 200 despite rounding in the fraction.
  return static_cast<std::uint32_t>(
      std::floor(switch_fraction * static_cast<double>(total_epochs) + 1e-9));
}

ScheduleMode schedule_mode(std::uint32_t epoch, std::uint32_t total_epochs, double switch_fraction) {
  return epoch < schedule_switch_epoch(total_epochs, switch_fraction) ? ScheduleMode::LayerWise
                                                                      : ScheduleMode::StageWise;
}

void adam_step(const ParamRefs& params, AdamState& state, const AdamHyper& hyper, std::size_t t) {
  if (t < 1) throw ConfigError("adam_step: step index is 1-based");
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.rows(), p->value.cols());
      state.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);
  }
  const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  const double shrink = 1.0 - hyper.learning_rate * hyper.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto value = p.value.flat();
    auto grad = p.grad.flat();
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    for (std::size_t j = 0; j < value.size(); ++j) {
      if (p.decay) value[j] *= shrink;
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * grad[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["mode"] = to_string(m.mode);
  j["loss"] = m.loss;
  j["acc_train"] = m.acc_train;
  j["acc_eval"] = m.acc_eval;
  j["seconds"] = m.seconds;
  return j.dump();
}

namespace {

EvoConfig effective_evo(ModelKind kind, const EncoderConfig& cfg, const EvoConfig& evo) {
  return kind == ModelKind::Vanilla ? vanilla_evo_config(cfg) : evo;
}

struct SampleResult {
  std::vector<double> logits_cls;
  std::vector<double> logits_avg;
  std::vector<double> grads;  // flattened in ModelParams::refs() order
};

// Forward and backward for one sample against `scratch` (a copy of the
// current parameters whose grads this call owns). The logit adjoints are the
// assisted-loss gradient for a batch of `batch` rows.
SampleResult run_sample(ModelParams& scratch, const Image& image, int label,
                        const EncoderConfig& cfg, const EvoConfig& evo,
                        const ForwardOptions& options, std::size_t batch) {
  scratch.zero_grads();
  ModelTape tape;
  EvoForwardOutput fwd = model_forward_evo(image, scratch, cfg, evo, options, &tape);
  const int labels[] = {label};
  const double scale = 1.0 / static_cast<double>(batch);
  auto adjoint = [&](const std::vector<double>& logits) {
    Matrix g = cross_entropy_logits_backward(Matrix::row_vector(logits), labels);
    for (double& v : g.flat()) v *= scale;
    return std::vector<double>(g.flat().begin(), g.flat().end());
  };
  const auto dcls = adjoint(fwd.logits.cls);
  const auto davg = adjoint(fwd.logits.avg);
  model_backward(tape, dcls, davg, scratch, cfg);

  SampleResult r{std::move(fwd.logits.cls), std::move(fwd.logits.avg), {}};
  for (const Parameter* p : std::as_const(scratch).refs()) {
    r.grads.insert(r.grads.end(), p->grad.flat().begin(), p->grad.flat().end());
  }
  return r;
}

}  // namespace

double evaluate(ModelKind kind, const ModelParams& params, const Dataset& data,
                const EncoderConfig& cfg, const EvoConfig& evo, ScheduleMode mode,
                std::uint32_t stage_size) {
  if (data.size() == 0) return 0.0;
  const EvoConfig effective = effective_evo(kind, cfg, evo);
  ForwardOptions options;
  options.mode = mode;
  options.stage_size = stage_size;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = model_forward_evo(data.images[i], params, cfg, effective, options);
    if (static_cast<int>(argmax(out.logits.avg)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(ModelKind kind, const DatasetSplit& data, const EncoderConfig& cfg,
                  const TrainConfig& train_cfg, const EvoConfig& evo, const TrainHooks& hooks) {
  cfg.validate();
  Rng init_rng(train_cfg.seed);
  return train_from(init_params(cfg, init_rng), kind, data, cfg, train_cfg, evo, hooks);
}

TrainResult train_from(ModelParams params, ModelKind kind, const DatasetSplit& data,
                       const EncoderConfig& cfg, const TrainConfig& train_cfg, const EvoConfig& evo,
                       const TrainHooks& hooks) {
  cfg.validate();
  train_cfg.validate();
  const EvoConfig effective = effective_evo(kind, cfg, evo);
  effective.validate(cfg.depth);
  if (data.train.size() == 0) throw ConfigError("training set is empty");
  for (int label : data.train.labels) {
    if (label < 0 || static_cast<std::uint32_t>(label) >= cfg.num_classes) {
      throw ConfigError("label " + std::to_string(label) + " outside [0, " +
                        std::to_string(cfg.num_classes) + ")");
    }
  }

  Rng shuffle_rng(train_cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
  AdamState adam;
  const AdamHyper hyper{train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2,
                        train_cfg.adam_eps, train_cfg.weight_decay};
  const std::size_t workers = std::max<std::size_t>(1, hooks.threads);
  std::vector<ModelParams> scratch(workers, params);
  std::size_t step = 0;

  TrainResult result;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::uint32_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const ScheduleMode mode =
        schedule_mode(epoch, train_cfg.epochs, train_cfg.layer_to_stage_switch);
    ForwardOptions options;
    options.mode = mode;
    options.stage_size = train_cfg.stage_size;

    // Fisher-Yates with the seeded stream.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0, batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + train_cfg.batch_size);
      const std::size_t batch = end - begin;
      for (auto& s : scratch) {
        auto dst = s.refs();
        auto src = std::as_const(params).refs();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
      }

      std::vector<SampleResult> samples(batch);
      auto work = [&](std::size_t worker) {
        for (std::size_t b = worker; b < batch; b += workers) {
          const std::size_t idx = order[begin + b];
          samples[b] = run_sample(scratch[worker], data.train.images[idx], data.train.labels[idx],
                                  cfg, effective, options, batch);
        }
      };
      if (workers == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
      }

      Matrix logits_cls(batch, cfg.num_classes), logits_avg(batch, cfg.num_classes);
      std::vector<int> labels(batch);
      params.zero_grads();
      const ParamRefs refs = params.refs();
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = order[begin + b];
        labels[b] = data.train.labels[idx];
        std::copy(samples[b].logits_cls.begin(), samples[b].logits_cls.end(), logits_cls.row(b).begin());
        std::copy(samples[b].logits_avg.begin(), samples[b].logits_avg.end(), logits_avg.row(b).begin());
        if (static_cast<int>(argmax(samples[b].logits_avg)) == labels[b]) ++correct;
        std::size_t offset = 0;
        for (Parameter* p : refs) {
          auto g = p->grad.flat();
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += samples[b].grads[offset + j];
          offset += g.size();
        }
      }
      const LossBreakdown loss = assisted_cls_loss(logits_cls, logits_avg, labels);
      if (!std::isfinite(loss.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
      }
      loss_sum += loss.total;
      ++batches;
      adam_step(refs, adam, hyper, ++step);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mode = mode;
    m.loss = loss_sum / static_cast<double>(batches);
    m.acc_train = static_cast<double>(correct) / static_cast<double>(order.size());
    m.acc_eval = evaluate(kind, params, data.eval, cfg, evo, mode, train_cfg.stage_size);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.metrics.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace evovit
