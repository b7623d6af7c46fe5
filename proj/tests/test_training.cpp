#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "evovit/kernels.hpp"
#include "evovit/training.hpp"
#include "support/test_support.hpp"

namespace evovit {
namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.image_side = 8;
  cfg.patch_side = 4;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.depth = 2;
  cfg.ffn_hidden = 32;
  cfg.num_classes = 4;
  return cfg;
}

DatasetSplit tiny_data(std::uint32_t train, std::uint32_t eval) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.samples = train;
  spec.eval_samples = eval;
  spec.side = 8;
  spec.seed = 3;
  return make_synthetic(spec);
}

EvoConfig tiny_evo() {
  EvoConfig evo;
  evo.keep_ratio = 0.5;
  evo.start_layer = 2;
  return evo;
}

TEST(AssistedLoss, UniformLogitsGiveTwiceLnClasses) {
  const std::vector<int> labels{0, 7};
  const auto loss = assisted_cls_loss(Matrix(2, 10), Matrix(2, 10), labels);
  EXPECT_NEAR(loss.total, 2.0 * std::log(10.0), 1e-14);
  EXPECT_NEAR(loss.total, 4.605170, 1e-6);
}

TEST(AssistedLoss, PerfectClsUniformAvg) {
  const std::vector<int> labels{4};
  Matrix cls(1, 10);
  cls(0, 4) = 1000.0;
  const auto loss = assisted_cls_loss(cls, Matrix(1, 10), labels);
  EXPECT_NEAR(loss.cls_term, 0.0, 1e-300);
  EXPECT_NEAR(loss.total, std::log(10.0), 1e-14);
}

TEST(AssistedLoss, HandEvaluatedTwoClassCase) {
  // Label 1 for both: cls softmax [1/4, 3/4], avg softmax [2/3, 1/3].
  const std::vector<int> labels{1};
  const auto loss = assisted_cls_loss(Matrix::from_rows({{0.0, std::log(3.0)}}),
                                      Matrix::from_rows({{std::log(2.0), 0.0}}), labels);
  EXPECT_NEAR(loss.cls_term, -std::log(0.75), 1e-15);
  EXPECT_NEAR(loss.avg_term, std::log(3.0), 1e-15);
  EXPECT_EQ(loss.total, loss.cls_term + loss.avg_term);
}

TEST(AssistedLoss, TotalIsExactSumOnRandomInputs) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(5), classes = 2 + rng.below(8);
    std::vector<int> labels(rows);
    for (int& l : labels) l = static_cast<int>(rng.below(classes));
    const auto loss = assisted_cls_loss(testing::random_matrix(rows, classes, rng, -5, 5),
                                        testing::random_matrix(rows, classes, rng, -5, 5), labels);
    EXPECT_EQ(loss.total, loss.cls_term + loss.avg_term);
  }
}

TEST(Schedule, SwitchEpochs) {
  EXPECT_EQ(schedule_switch_epoch(300, 2.0 / 3.0), 200u);
  EXPECT_EQ(schedule_switch_epoch(30, 2.0 / 3.0), 20u);
  EXPECT_EQ(schedule_mode(199, 300, 2.0 / 3.0), ScheduleMode::LayerWise);
  EXPECT_EQ(schedule_mode(200, 300, 2.0 / 3.0), ScheduleMode::StageWise);
  for (std::uint32_t e = 0; e < 50; ++e) EXPECT_EQ(schedule_mode(e, 50, 1.0), ScheduleMode::LayerWise);
}

TEST(Schedule, ModeChangesExactlyOnce) {
  for (std::uint32_t total : {1u, 2u, 3u, 7u, 30u, 100u}) {
    for (double fraction : {0.1, 0.5, 2.0 / 3.0, 0.9, 1.0}) {
      int flips = 0;
      for (std::uint32_t e = 1; e < total; ++e) {
        if (schedule_mode(e, total, fraction) != schedule_mode(e - 1, total, fraction)) {
          ++flips;
          EXPECT_EQ(e, schedule_switch_epoch(total, fraction));
        }
      }
      EXPECT_LE(flips, 1);
    }
  }
}

TEST(Adam, ZeroGradsOnlyShrinkDecayedParams) {
  Parameter w("w", Matrix(1, 2, 2.0), true), b("b", Matrix(1, 2, 2.0), false);
  AdamState state;
  AdamHyper hyper;
  hyper.learning_rate = 0.1;
  hyper.weight_decay = 0.5;
  adam_step({&w, &b}, state, hyper, 1);
  EXPECT_DOUBLE_EQ(w.value(0, 0), 2.0 * (1.0 - 0.1 * 0.5));
  EXPECT_EQ(b.value(0, 0), 2.0);
}

TEST(Adam, ZeroLearningRateLeavesParamsUnchanged) {
  Rng rng(2);
  Parameter w("w", testing::random_matrix(3, 3, rng), true);
  w.grad = testing::random_matrix(3, 3, rng);
  const Matrix before = w.value;
  AdamState state;
  AdamHyper hyper;
  hyper.learning_rate = 0.0;
  hyper.weight_decay = 0.05;
  adam_step({&w}, state, hyper, 1);
  EXPECT_EQ(w.value, before);
}

TEST(Adam, MatchesHandRunTraceForTwoSteps) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.1;
  Parameter p("p", Matrix(1, 1, 0.5), true);
  AdamState state;
  AdamHyper hyper{lr, b1, b2, eps, wd};

  double x = 0.5, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -0.7};
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1];
    p.grad(0, 0) = g;
    adam_step({&p}, state, hyper, static_cast<std::size_t>(t));
    x -= lr * wd * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
    EXPECT_NEAR(p.value(0, 0), x, 1e-12) << "step " << t;
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Parameter p("layers.1.ffn_w2", Matrix(1, 1, 1.0), true);
  p.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState state;
  try {
    adam_step({&p}, state, AdamHyper{}, 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layers.1.ffn_w2"), std::string::npos);
  }
}

TEST(Adam, DecayAppliesToWeightMatricesOnly) {
  Rng rng(1);
  const ModelParams params = init_params(tiny_config(), rng);
  std::set<std::string> decayed;
  for (const Parameter* p : params.refs())
    if (p->decay) decayed.insert(p->name.substr(p->name.rfind('.') + 1));
  EXPECT_EQ(decayed, (std::set<std::string>{"patch_w", "w_q", "w_k", "w_v", "w_o", "ffn_w1", "ffn_w2", "head_w"}));
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.layer_to_stage_switch = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.layer_to_stage_switch = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Metrics, JsonLineHasOrderedKeys) {
  EpochMetrics m;
  m.epoch = 3;
  m.mode = ScheduleMode::StageWise;
  m.loss = 1.25;
  m.acc_train = 0.5;
  m.acc_eval = 0.75;
  m.seconds = 2.0;
  const std::string line = metrics_json_line(m);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto j = nlohmann::ordered_json::parse(line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"epoch", "mode", "loss", "acc_train", "acc_eval", "seconds"}));
  EXPECT_EQ(j["mode"], "stage-wise");
  EXPECT_EQ(j["loss"], 1.25);
}

TEST(Evaluate, ReadsOnlyAveragePooledLogits) {
  const EncoderConfig cfg = tiny_config();
  ModelParams params = testing::spread_params(cfg, 4, 0.6);
  params.head_b.value.fill(0.0);
  params.norm_bias.value.fill(0.0);
  const DatasetSplit data = tiny_data(8, 40);
  std::size_t by_avg = 0, disagreements = 0;
  for (std::size_t i = 0; i < data.eval.size(); ++i) {
    const auto out = model_forward_evo(data.eval.images[i], params, cfg, tiny_evo());
    by_avg += static_cast<int>(argmax(out.logits.avg)) == data.eval.labels[i];
    disagreements += argmax(out.logits.avg) != argmax(out.logits.cls);
  }
  const double acc = evaluate(ModelKind::Evo, params, data.eval, cfg, tiny_evo(), ScheduleMode::LayerWise, 4);
  EXPECT_EQ(acc, static_cast<double>(by_avg) / 40.0);
  EXPECT_GT(disagreements, 0u);
}

TEST(Train, ZeroLearningRateKeepsUntrainedAccuracy) {
  const EncoderConfig cfg = tiny_config();
  const DatasetSplit data = tiny_data(8, 16);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.learning_rate = 0.0;
  tc.seed = 5;
  const TrainResult result = train(ModelKind::Evo, data, cfg, tc, tiny_evo());
  Rng rng(5);
  const ModelParams untrained = init_params(cfg, rng);
  ASSERT_EQ(result.metrics.size(), 1u);
  EXPECT_EQ(result.metrics[0].acc_eval,
            evaluate(ModelKind::Evo, untrained, data.eval, cfg, tiny_evo(), ScheduleMode::LayerWise, tc.stage_size));
  EXPECT_EQ(result.params.head_w.value, untrained.head_w.value);
}

TEST(Train, SameSeedIsBitIdenticalAcrossThreadCounts) {
  const EncoderConfig cfg = tiny_config();
  const DatasetSplit data = tiny_data(24, 8);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  tc.seed = 6;
  TrainHooks one, three;
  three.threads = 3;
  const TrainResult a = train(ModelKind::Evo, data, cfg, tc, tiny_evo(), one);
  const TrainResult b = train(ModelKind::Evo, data, cfg, tc, tiny_evo(), three);
  ASSERT_EQ(a.metrics.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.metrics[e].loss, b.metrics[e].loss);
    EXPECT_EQ(a.metrics[e].acc_train, b.metrics[e].acc_train);
    EXPECT_EQ(a.metrics[e].acc_eval, b.metrics[e].acc_eval);
    EXPECT_EQ(a.metrics[e].mode, b.metrics[e].mode);
  }
  const auto pa = a.params.refs(), pb = b.params.refs();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;

  tc.seed = 7;
  const TrainResult c = train(ModelKind::Evo, data, cfg, tc, tiny_evo(), one);
  EXPECT_NE(c.params.head_w.value, a.params.head_w.value);
}

TEST(Train, EpochModesFollowSchedule) {
  const EncoderConfig cfg = tiny_config();
  const DatasetSplit data = tiny_data(8, 4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.layer_to_stage_switch = 2.0 / 3.0;
  std::vector<ScheduleMode> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { seen.push_back(m.mode); };
  train(ModelKind::Evo, data, cfg, tc, tiny_evo(), hooks);
  EXPECT_EQ(seen, (std::vector<ScheduleMode>{ScheduleMode::LayerWise, ScheduleMode::LayerWise,
                                             ScheduleMode::StageWise}));
}

TEST(Train, NonFiniteLossAbortsWithEpochAndStep) {
  const EncoderConfig cfg = tiny_config();
  const DatasetSplit data = tiny_data(8, 4);
  Rng rng(8);
  ModelParams params = init_params(cfg, rng);
  params.head_b.value(0, 0) = std::numeric_limits<double>::infinity();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  try {
    train_from(std::move(params), ModelKind::Vanilla, data, cfg, tc, tiny_evo());
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0 step 0"), std::string::npos) << e.what();
  }
}

TEST(Train, EmptyTrainingSetIsConfigError) {
  DatasetSplit data;
  EXPECT_THROW(train(ModelKind::Evo, data, tiny_config(), TrainConfig{}, tiny_evo()), ConfigError);
}

TEST(Train, EvoLossDecreasesOverFirstFiveEpochsOnSyntheticTask) {
  EncoderConfig cfg;  // 16/4/1, C=32, h=4, depth 4, 10 classes
  SyntheticSpec spec;
  const DatasetSplit data = make_synthetic(spec);
  TrainConfig tc;
  tc.epochs = 5;
  tc.layer_to_stage_switch = 1.0;
  EvoConfig evo;
  evo.start_layer = 2;
  const TrainResult result = train(ModelKind::Evo, data, cfg, tc, evo);
  for (std::size_t e = 1; e < result.metrics.size(); ++e) {
    EXPECT_LT(result.metrics[e].loss, result.metrics[e - 1].loss) << "epoch " << e;
  }
}

}  // namespace
}  // namespace evovit
