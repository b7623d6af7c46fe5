#include <benchmark/benchmark.h>

#include "evovit/kernels.hpp"
#include "evovit/model.hpp"
#include "evovit/rng.hpp"

namespace {

using namespace evovit;

EncoderConfig config_for(std::int64_t depth) {
  EncoderConfig cfg;
  cfg.image_side = 32;
  cfg.patch_side = 4;
  cfg.embed_dim = 64;
  cfg.heads = 4;
  cfg.depth = static_cast<std::uint32_t>(depth);
  cfg.ffn_hidden = 256;
  cfg.num_classes = 10;
  return cfg;
}

Image noise_image(const EncoderConfig& cfg, Rng& rng) {
  Image img(cfg.image_side, cfg.image_side, cfg.channels_in);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

void BM_ForwardVanilla(benchmark::State& state) {
  const EncoderConfig cfg = config_for(state.range(0));
  Rng rng(1);
  const ModelParams params = init_params(cfg, rng);
  const Image image = noise_image(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model_forward_vanilla(image, params, cfg));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardVanilla)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

// Second argument is the keep ratio in percent.
void BM_ForwardEvo(benchmark::State& state) {
  const EncoderConfig cfg = config_for(state.range(0));
  EvoConfig evo;
  evo.keep_ratio = static_cast<double>(state.range(1)) / 100.0;
  evo.start_layer = 2;
  Rng rng(1);
  const ModelParams params = init_params(cfg, rng);
  const Image image = noise_image(cfg, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model_forward_evo(image, params, cfg, evo));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardEvo)
    ->Args({4, 100})
    ->Args({4, 50})
    ->Args({4, 25})
    ->Args({8, 50})
    ->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Matrix a(n, n), b(n, n);
  for (double& v : a.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : b.flat()) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

}  // namespace

BENCHMARK_MAIN();
