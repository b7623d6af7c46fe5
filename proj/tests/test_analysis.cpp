#include <cmath>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "evovit/bench.hpp"
#include "evovit/dataset.hpp"
#include "evovit/flops.hpp"
#include "evovit/kernels.hpp"
#include "evovit/profiles.hpp"
#include "evovit/similarity.hpp"
#include "evovit/strategies.hpp"
#include "support/test_support.hpp"

namespace evovit {
namespace {

using namespace analysis;

EncoderConfig deit_tiny() {
  EncoderConfig cfg;
  cfg.image_side = 224;
  cfg.patch_side = 16;
  cfg.channels_in = 3;
  cfg.embed_dim = 192;
  cfg.heads = 3;
  cfg.depth = 12;
  cfg.ffn_hidden = 768;
  cfg.num_classes = 1000;
  return cfg;
}

EvoConfig evo_at(double ratio, std::uint32_t start) {
  EvoConfig evo;
  evo.keep_ratio = ratio;
  evo.start_layer = start;
  return evo;
}

// Gram-Schmidt on a random square matrix.
Matrix random_rotation(std::size_t n, Rng& rng) {
  Matrix q = testing::random_matrix(n, n, rng);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < n; ++r) q(r, c) -= dot * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) q(r, c) /= norm;
  }
  return q;
}

TEST(Macs, FormulaExamples) {
  EXPECT_EQ(msa_macs(1, 1), 6u);
  EXPECT_EQ(msa_macs(4, 2), 128u);
  EXPECT_EQ(msa_macs(197, 192), 43'951'488u);
  EXPECT_EQ(ffn_macs(1, 1), 8u);
  EXPECT_EQ(ffn_macs(196, 192), 57'802'752u);
  EXPECT_EQ(ffn_macs(0, 192), 0u);
  EXPECT_EQ(ffn_macs(3, 4, 10), 240u);
  EXPECT_EQ(evo_layer_macs(196, 192, 98), 48'095'616u);
  EXPECT_EQ(evo_layer_macs(196, 192, 196), msa_macs(197, 192) + ffn_macs(197, 192));
}

TEST(Macs, MatchInstrumentedCounter) {
  for (std::size_t dim : {1u, 2u, 4u, 8u, 16u}) {
    for (std::size_t n = 1; n <= 16; ++n) {
      const testing::CountedMacs counted = testing::counted_block_split(n, dim, 4 * dim, 1);
      EXPECT_EQ(msa_macs(n, dim), counted.msa) << "n=" << n << " C=" << dim;
      EXPECT_EQ(ffn_macs(n, dim), counted.ffn) << "n=" << n << " C=" << dim;
    }
  }
  for (std::size_t heads : {2u, 4u}) {
    EXPECT_EQ(msa_macs(9, 16) + ffn_macs(9, 16, 24), testing::counted_block_macs(9, 16, 24, heads));
  }
  for (std::size_t dim : {1u, 3u, 8u, 16u}) {
    for (std::size_t n = 1; n <= 16; ++n) {
      for (std::size_t k = 1; k <= n; ++k) {
        EXPECT_EQ(evo_layer_macs(n, dim, k), testing::counted_evo_layer_macs(n, dim, k, 4 * dim, 1))
            << "N=" << n << " C=" << dim << " k=" << k;
      }
    }
  }
}

// k = N - 1 still sends N + 1 rows down the slow path, so only k <= N - 2 saves work.
TEST(Macs, EvoLayerCheaperOnceTwoTokensDrop) {
  for (std::uint64_t dim : {1u, 2u, 8u, 64u, 192u}) {
    for (std::uint64_t n : {2u, 9u, 16u, 196u}) {
      const std::uint64_t full = msa_macs(n + 1, dim) + ffn_macs(n + 1, dim);
      for (std::uint64_t k = 1; k + 2 <= n; ++k) EXPECT_LT(evo_layer_macs(n, dim, k), full);
      EXPECT_EQ(evo_layer_macs(n, dim, n - 1), full + dim);
    }
  }
}

TEST(Macs, KeepCountOutOfRange) {
  EXPECT_THROW(evo_layer_macs(16, 8, 0), ConfigError);
  EXPECT_THROW(evo_layer_macs(16, 8, 17), ConfigError);
}

TEST(FlopReport, TotalsAreLayerSums) {
  const FlopReport r = flop_report(deit_tiny(), evo_at(0.5, 5));
  ASSERT_EQ(r.vanilla.size(), 12u);
  ASSERT_EQ(r.evo.size(), 12u);
  std::uint64_t v = 0, e = 0;
  for (const LayerFlops& l : r.vanilla) v += l.total();
  for (const LayerFlops& l : r.evo) e += l.total();
  EXPECT_EQ(r.vanilla_total, v);
  EXPECT_EQ(r.evo_total, e);
  EXPECT_EQ(r.evo[3].tokens, 197u);
  EXPECT_EQ(r.evo[4].tokens, 100u);
  EXPECT_EQ(r.evo[4].kept, 98u);
  EXPECT_EQ(r.evo[4].evo_overhead_macs, 98u * 192u);
  EXPECT_GE(r.reduction_fraction, 0.34);
  EXPECT_LT(r.reduction_fraction, 1.0);
  EXPECT_NEAR(r.reduction_fraction, 1.0 - static_cast<double>(e) / static_cast<double>(v), 1e-15);
}

TEST(FlopReport, FullKeepHasNoReduction) {
  const FlopReport r = flop_report(deit_tiny(), evo_at(1.0, 5));
  EXPECT_EQ(r.evo_total, r.vanilla_total);
  EXPECT_EQ(r.reduction_fraction, 0.0);
}

TEST(FlopReport, ReductionMonotoneInKeepRatio) {
  double previous = 1.0;
  for (int i = 1; i <= 20; ++i) {
    const double ratio = i / 20.0;
    const FlopReport r = flop_report(deit_tiny(), evo_at(ratio, 5));
    EXPECT_LE(r.reduction_fraction, previous) << "ratio " << ratio;
    EXPECT_GE(r.reduction_fraction, 0.0);
    previous = r.reduction_fraction;
  }
}

TEST(FlopReport, JsonCarriesTotals) {
  const FlopReport r = flop_report(deit_tiny(), evo_at(0.5, 5));
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j.at("vanilla_total_macs").get<std::uint64_t>(), r.vanilla_total);
  EXPECT_EQ(j.at("evo_total_macs").get<std::uint64_t>(), r.evo_total);
  EXPECT_EQ(j.at("evo_layers").size(), 12u);
}

TEST(Cka, SelfScaleAndRotation) {
  Rng rng(3);
  const Matrix x = testing::random_matrix(20, 6, rng);
  EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-9);
  Matrix scaled = x;
  for (double& v : scaled.flat()) v *= 2.0;
  EXPECT_NEAR(linear_cka(x, scaled), 1.0, 1e-9);
  const Matrix rotated = matmul(x, random_rotation(6, rng));
  EXPECT_NEAR(linear_cka(x, rotated), 1.0, 1e-9);
}

TEST(Cka, SymmetricAndBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = testing::random_matrix(12, 5, rng), y = testing::random_matrix(12, 3, rng);
    const double xy = linear_cka(x, y);
    EXPECT_NEAR(xy, linear_cka(y, x), 1e-12);
    EXPECT_GE(xy, 0.0);
    EXPECT_LE(xy, 1.0 + 1e-12);
  }
}

TEST(Cka, ConstantFeaturesGiveZero) {
  Rng rng(5);
  const Matrix x = testing::random_matrix(8, 4, rng);
  EXPECT_EQ(linear_cka(x, Matrix(8, 3, 2.5)), 0.0);
}

TEST(Cka, RowMismatch) {
  EXPECT_THROW(linear_cka(Matrix(4, 2, 1.0), Matrix(5, 2, 1.0)), DimensionError);
}

TEST(Pcc, IdenticalAndNegatedRows) {
  const Matrix same(2, 4, {1, 2, 3, 5, 1, 2, 3, 5});
  EXPECT_NEAR(token_query_pcc(same).mean, 1.0, 1e-15);
  const Matrix negated(2, 4, {1, 2, 3, 5, -1, -2, -3, -5});
  const PccStats s = token_query_pcc(negated);
  EXPECT_NEAR(s.mean, -1.0, 1e-15);
  EXPECT_EQ(s.pairs, 1u);
  EXPECT_EQ(s.variance, 0.0);
}

TEST(Pcc, MatchesNaiveOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix q = testing::random_matrix(8, 16, rng);
    const PccStats s = token_query_pcc(q);
    const testing::NaivePcc naive = testing::naive_pcc(q);
    EXPECT_EQ(s.pairs, 28u);
    EXPECT_EQ(s.pairs, naive.pairs);
    EXPECT_NEAR(s.mean, naive.mean, 1e-12);
    EXPECT_NEAR(s.variance, naive.variance, 1e-12);
  }
}

TEST(Pcc, ConstantRowsSkippedOrRejected) {
  const Matrix one_constant(3, 3, {1, 2, 4, 7, 7, 7, 2, 4, 8});
  const PccStats s = token_query_pcc(one_constant);
  EXPECT_EQ(s.constant_rows, 1u);
  EXPECT_EQ(s.pairs, 1u);
  EXPECT_NEAR(s.mean, 1.0, 1e-15);
  EXPECT_THROW(token_query_pcc(Matrix(4, 3, 1.0)), StateError);
}

TEST(Strategies, NamesRoundTrip) {
  for (StrategyKind kind : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(kind)), kind);
  EXPECT_FALSE(parse_strategy("column-mean").has_value());
}

TEST(Strategies, RandomReplaysWithSeed) {
  const std::vector<double> scores(4, 0.25);
  StrategyInputs in;
  in.global_scores = scores;
  Rng a(7), b(7), oracle(7);
  in.rng = &a;
  const SelectionResult first = baseline_select(StrategyKind::Random, in);
  in.rng = &b;
  EXPECT_EQ(baseline_select(StrategyKind::Random, in), first);
  const std::vector<double> draws = testing::random_vector(4, oracle);
  const SelectionResult expected = testing::brute_force_topk(draws, 2);
  EXPECT_EQ(first.informative, expected.informative);
  EXPECT_EQ(first.placeholder, expected.placeholder);
}

TEST(Strategies, ColumnMeanUniformTieBreak) {
  const Matrix uniform(5, 5, 0.2);
  StrategyInputs in;
  in.attention = &uniform;
  const SelectionResult s = baseline_select(StrategyKind::AttentionColumnMean, in);
  EXPECT_EQ(s.informative, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(s.placeholder, (std::vector<std::size_t>{2, 3}));
}

TEST(Strategies, ColumnMeanSkipsClsColumn) {
  Matrix a(3, 3, 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    a(r, 0) = 0.9;
    a(r, 2) = 0.1;
  }
  StrategyInputs in;
  in.attention = &a;
  const auto s = strategy_scores(StrategyKind::AttentionColumnMean, in);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_NEAR(s[1], 0.1, 1e-15);
}

TEST(Strategies, FullKeepSelectsEverything) {
  const std::vector<double> last{0.1, 0.5, 0.2, 0.2};
  const std::vector<double> global{0.3, 0.3, 0.4};
  StrategyInputs in;
  in.ratio = 1.0;
  in.last_class_attention = last;
  in.global_scores = global;
  const SelectionResult s = baseline_select(StrategyKind::LastClassAttention, in);
  EXPECT_EQ(s.informative, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(s.placeholder.empty());
  EXPECT_EQ(baseline_select(StrategyKind::GlobalClassAttention, in).informative, s.informative);
}

TEST(Strategies, MissingPrerequisites) {
  const StrategyInputs empty;
  for (StrategyKind kind : kAllStrategies) EXPECT_THROW(strategy_scores(kind, empty), StateError);
  const std::vector<double> cls_only{1.0};
  StrategyInputs in;
  in.last_class_attention = cls_only;
  EXPECT_THROW(strategy_scores(StrategyKind::LastClassAttention, in), StateError);
}

EncoderConfig toy_config() {
  EncoderConfig cfg;
  cfg.image_side = 8;
  cfg.patch_side = 2;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.depth = 3;
  cfg.ffn_hidden = 16;
  cfg.num_classes = 3;
  return cfg;
}

Dataset toy_data(std::uint32_t count) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.side = 8;
  return synthetic_samples(spec, 11, count);
}

TEST(Strategies, CompareProducesOneRowPerKind) {
  const EncoderConfig cfg = toy_config();
  Rng rng(2);
  const ModelParams params = init_params(cfg, rng);
  const auto rows = compare_strategies(params, toy_data(12), cfg, evo_at(0.5, 2), 5);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].kind, kAllStrategies[i]);
    EXPECT_GE(rows[i].accuracy, 0.0);
    EXPECT_LE(rows[i].accuracy, 1.0);
  }
  const auto again = compare_strategies(params, toy_data(12), cfg, evo_at(0.5, 2), 5);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].accuracy, again[i].accuracy);
}

TEST(Profiles, CkaAndPccPerLayer) {
  const EncoderConfig cfg = toy_config();
  const ModelParams params = testing::spread_params(cfg, 6, 0.3);
  const Dataset data = toy_data(9);
  const auto cka = cka_profile(params, data, cfg, evo_at(0.5, 2));
  const auto pcc = pcc_profile(params, data, cfg, evo_at(0.5, 2));
  ASSERT_EQ(cka.size(), 3u);
  ASSERT_EQ(pcc.size(), 3u);
  for (double v : cka) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
  for (const PccStats& s : pcc) {
    EXPECT_GE(s.mean, -1.0);
    EXPECT_LE(s.mean, 1.0);
    EXPECT_GT(s.pairs, 0u);
  }
  EXPECT_THROW(cka_profile(params, toy_data(1), cfg, evo_at(0.5, 2)), StateError);
}

TEST(BenchStats, MedianAndPercentile) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  const std::vector<double> v{5, 1, 4, 2, 3, 10, 9, 8, 7, 6};
  EXPECT_EQ(percentile(v, 0.95), 10.0);
  EXPECT_EQ(percentile(v, 0.5), 5.0);
  EXPECT_EQ(percentile(v, 0.1), 1.0);
  EXPECT_EQ(percentile(v, 1.0), 10.0);
}

TEST(Bench, RejectsShortRuns) {
  const EncoderConfig cfg = toy_config();
  const ModelParams params = zero_params(cfg);
  BenchOptions opts;
  opts.repeats = 4;
  EXPECT_THROW(throughput_bench(ModelKind::Vanilla, cfg, evo_at(0.5, 2), params, opts), ConfigError);
  opts.repeats = 5;
  opts.warmup = 1;
  EXPECT_THROW(throughput_bench(ModelKind::Vanilla, cfg, evo_at(0.5, 2), params, opts), ConfigError);
}

TEST(Bench, ReportsConsistentRates) {
  const EncoderConfig cfg = toy_config();
  Rng rng(1);
  const ModelParams params = init_params(cfg, rng);
  BenchOptions opts;
  opts.batch = 4;
  opts.repeats = 5;
  const BenchResult r = throughput_bench(ModelKind::Evo, cfg, evo_at(0.5, 2), params, opts);
  ASSERT_EQ(r.batch_seconds.size(), 5u);
  EXPECT_GT(r.images_per_second, 0.0);
  EXPECT_LE(r.p50_seconds, r.p95_seconds);
  EXPECT_NEAR(r.images_per_second, 4.0 / r.p50_seconds, 1e-6 * r.images_per_second);
  EXPECT_NEAR(r.tokens_per_second, r.images_per_second * 17.0, 1e-6 * r.tokens_per_second);
  EXPECT_NO_THROW(nlohmann::json::parse(to_json(r)));
}

TEST(Bench, PairedRunsBothModels) {
  const EncoderConfig cfg = toy_config();
  Rng rng(1);
  const ModelParams params = init_params(cfg, rng);
  BenchOptions opts;
  opts.batch = 2;
  opts.repeats = 5;
  const PairedBench r = paired_throughput_bench(cfg, evo_at(0.5, 2), params, opts);
  EXPECT_EQ(r.vanilla.kind, ModelKind::Vanilla);
  EXPECT_EQ(r.evo.kind, ModelKind::Evo);
  EXPECT_EQ(r.vanilla.batch_seconds.size(), 5u);
  EXPECT_EQ(r.evo.batch_seconds.size(), 5u);
  EXPECT_DOUBLE_EQ(r.speedup, r.evo.images_per_second / r.vanilla.images_per_second);
  opts.repeats = 4;
  EXPECT_THROW(paired_throughput_bench(cfg, evo_at(0.5, 2), params, opts), ConfigError);
}

}  // namespace
}  // namespace evovit
