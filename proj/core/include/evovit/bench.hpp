#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "evovit/encoder.hpp"
#include "evovit/evolution.hpp"
#include "evovit/model.hpp"

namespace evovit::analysis {

struct BenchResult {
  ModelKind kind = ModelKind::Vanilla;
  std::size_t batch = 0;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  double images_per_second = 0.0;  // from the median batch time
  double tokens_per_second = 0.0;
  double p50_seconds = 0.0;  // per batch
  double p95_seconds = 0.0;
  std::vector<double> batch_seconds;
};

struct BenchOptions {
  std::size_t batch = 8;
  std::size_t repeats = 10;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;
};

// Times the forward pass over a fixed random batch on the calling thread.
// Requires repeats >= 5 and warmup >= 2. Results are only comparable on a
// quiet machine.
BenchResult throughput_bench(ModelKind kind, const EncoderConfig& cfg, const EvoConfig& evo,
                             const ModelParams& params, const BenchOptions& options);

struct PairedBench {
  BenchResult vanilla;
  BenchResult evo;
  // evo images/s over vanilla images/s, both from median batch times.
  double speedup = 0.0;
};

// Alternates vanilla and evo batches (warmups included) so slow drift in
// machine speed affects both medians alike.
PairedBench paired_throughput_bench(const EncoderConfig& cfg, const EvoConfig& evo,
                                    const ModelParams& params, const BenchOptions& options);

double median(std::vector<double> values);
// Nearest-rank percentile, q in (0, 1].
double percentile(std::vector<double> values, double q);

std::string to_json(const BenchResult& result);

}  // namespace evovit::analysis
