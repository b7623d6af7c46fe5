#include "evovit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

namespace evovit::analysis {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

namespace {

void check_options(const EncoderConfig& cfg, const BenchOptions& options) {
  if (options.repeats < 5) throw ConfigError("throughput_bench needs at least 5 repeats");
  if (options.warmup < 2) throw ConfigError("throughput_bench needs at least 2 warmup runs");
  if (options.batch < 1) throw ConfigError("throughput_bench needs a positive batch");
  cfg.validate();
}

std::vector<Image> random_batch(const EncoderConfig& cfg, const BenchOptions& options) {
  Rng rng(options.seed);
  std::vector<Image> batch;
  for (std::size_t b = 0; b < options.batch; ++b) {
    Image img(cfg.image_side, cfg.image_side, cfg.channels_in);
    for (double& v : img.pixels) v = rng.normal();
    batch.push_back(std::move(img));
  }
  return batch;
}

// Returns the wall-clock seconds of one pass over the batch.
double time_batch(ModelKind kind, const std::vector<Image>& batch, const EncoderConfig& cfg,
                  const EvoConfig& evo, const ModelParams& params, double& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  for (const Image& img : batch) {
    const Logits logits = kind == ModelKind::Vanilla ? model_forward_vanilla(img, params, cfg).logits
                                                     : model_forward_evo(img, params, cfg, evo).logits;
    sink += logits.avg.front();
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BenchResult summarize(ModelKind kind, const EncoderConfig& cfg, const BenchOptions& options,
                      std::vector<double> seconds) {
  BenchResult result;
  result.kind = kind;
  result.batch = options.batch;
  result.repeats = options.repeats;
  result.warmup = options.warmup;
  result.batch_seconds = std::move(seconds);
  result.p50_seconds = median(result.batch_seconds);
  result.p95_seconds = percentile(result.batch_seconds, 0.95);
  result.images_per_second = static_cast<double>(options.batch) / result.p50_seconds;
  result.tokens_per_second = result.images_per_second * static_cast<double>(cfg.num_patches() + 1);
  return result;
}

}  // namespace

BenchResult throughput_bench(ModelKind kind, const EncoderConfig& cfg, const EvoConfig& evo,
                             const ModelParams& params, const BenchOptions& options) {
  check_options(cfg, options);
  const std::vector<Image> batch = random_batch(cfg, options);
  double sink = 0.0;
  for (std::size_t i = 0; i < options.warmup; ++i) time_batch(kind, batch, cfg, evo, params, sink);
  std::vector<double> seconds;
  for (std::size_t i = 0; i < options.repeats; ++i) {
    seconds.push_back(time_batch(kind, batch, cfg, evo, params, sink));
  }
  if (!std::isfinite(sink)) throw NumericError("benchmark forward produced non-finite logits");
  return summarize(kind, cfg, options, std::move(seconds));
}

PairedBench paired_throughput_bench(const EncoderConfig& cfg, const EvoConfig& evo,
                                    const ModelParams& params, const BenchOptions& options) {
  check_options(cfg, options);
  const std::vector<Image> batch = random_batch(cfg, options);
  double sink = 0.0;
  std::vector<double> vanilla, fast;
  for (std::size_t i = 0; i < options.warmup + options.repeats; ++i) {
    const double v = time_batch(ModelKind::Vanilla, batch, cfg, evo, params, sink);
    const double e = time_batch(ModelKind::Evo, batch, cfg, evo, params, sink);
    if (i >= options.warmup) {
      vanilla.push_back(v);
      fast.push_back(e);
    }
  }
  if (!std::isfinite(sink)) throw NumericError("benchmark forward produced non-finite logits");
  PairedBench out{summarize(ModelKind::Vanilla, cfg, options, std::move(vanilla)),
                  summarize(ModelKind::Evo, cfg, options, std::move(fast)), 0.0};
  out.speedup = out.evo.images_per_second / out.vanilla.images_per_second;
  return out;
}

std::string to_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.kind);
  j["batch"] = r.batch;
  j["repeats"] = r.repeats;
  j["warmup"] = r.warmup;
  j["threads"] = 1;
  j["images_per_second"] = r.images_per_second;
  j["tokens_per_second"] = r.tokens_per_second;
  j["p50_seconds"] = r.p50_seconds;
  j["p95_seconds"] = r.p95_seconds;
  j["batch_seconds"] = r.batch_seconds;
  return j.dump(2);
}

}  // namespace evovit::analysis
