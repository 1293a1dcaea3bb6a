// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "support.hpp"

namespace tavlad {
namespace {

TEST(LrSchedule, HalvesEveryFiveEpochs) {
  const TrainConfig cfg;
  EXPECT_EQ(lr_schedule(0, 1e-2, cfg), 1e-2);
  EXPECT_EQ(lr_schedule(4, 1e-2, cfg), 1e-2);
  EXPECT_EQ(lr_schedule(5, 1e-2, cfg), 5e-3);
  EXPECT_EQ(lr_schedule(12, 1e-2, cfg), 2.5e-3);
  EXPECT_EQ(lr_schedule(49, 1e-2, cfg), 1e-2 * std::pow(0.5, 9));
}

TEST(TrainConfig, StageDefaults) {
  const auto s1 = TrainConfig::defaults_for_stage(1);
  EXPECT_EQ(s1.epochs, 50u);
  EXPECT_EQ(s1.base_lr, 1e-2);
  const auto s2 = TrainConfig::defaults_for_stage(2);
  EXPECT_EQ(s2.epochs, 30u);
  EXPECT_EQ(s2.base_lr, 1e-4);
  EXPECT_EQ(s2.batch_size, 32u);
  EXPECT_EQ(s2.dropout_rate, 0.5);
}

TEST(TrainConfig, InvalidValuesAreRejected) {
  TrainConfig c;
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.stage = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Adam, ThreeStepsMatchHandComputation) {
  const TrainConfig cfg;
  Tensor w = Tensor::row({1.0});
  AdamMoments st;
  const double grads[3] = {0.5, -1.0, 2.0};
  double m = 0.0, v = 0.0, x = 1.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    adam_update(w, Tensor::row({g}), st, 0.1, cfg);
    EXPECT_NEAR(w[0], x, 1e-15) << "step " << t;
  }
  // The first bias-corrected step is lr * g / (|g| + eps), close to lr for any scale.
  Tensor u = Tensor::row({0.0});
  AdamMoments su;
  adam_update(u, Tensor::row({1e-3}), su, 0.01, cfg);
  EXPECT_NEAR(u[0], -0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, ZeroLearningRateLeavesParametersBitIdentical) {
  const TrainConfig cfg;
  Tensor w = Tensor::row({0.1234567890123, -9.87});
  const Tensor before = w;
  AdamMoments st;
  adam_update(w, Tensor::row({3.0, -4.0}), st, 0.0, cfg);
  EXPECT_EQ(w, before);
}

// Small order-sensitive dataset shared by the training tests.
struct Fixture {
  SyntheticDataset ds;
  Dataset train, val, test;
  ModelParams init;
};

Fixture make_fixture(Aggregator agg = Aggregator::gru, std::uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.videos_per_class = 8;
  spec.seed = seed;
  Fixture f{generate_synthetic(spec), {}, {}, {}, {}};
  f.train = synthetic_split(f.ds, Split::train);
  f.val = synthetic_split(f.ds, Split::val);
  f.test = synthetic_split(f.ds, Split::test);
  std::vector<double> rows;
  for (const auto& v : f.train)
    for (double x : v.video.tensor().data()) rows.push_back(x);
  const Tensor samples({rows.size() / spec.channels, spec.channels}, rows);
  Rng rng(seed);
  const auto km = kmeans(samples, 4, 50, rng);
  ModelOptions opt;
  opt.hidden = 8;
  opt.num_classes = 2;
  opt.aggregator = agg;
  f.init = init_model(f.ds.attention, make_codebook(km.centers, kDefaultAlpha), opt, rng);
  return f;
}

TrainConfig quick_config(std::uint32_t stage, std::size_t epochs) {
  auto c = TrainConfig::defaults_for_stage(stage);
  c.epochs = epochs;
  c.batch_size = 4;
  c.decay_every = 2;
  return c;
}

TEST(Evaluate, ConfusionAndAccuracyFromForcedPredictions) {
  auto f = make_fixture();
  // A zero classifier with a biased intercept always predicts class 1.
  ModelParams p = f.init;
  p.fc_weights = Tensor(p.fc_weights.dims(), 0.0);
  p.fc_bias = Tensor::row({0.0, 1.0});
  const auto r = evaluate(f.test, p);
  std::size_t ones = 0;
  for (const auto& v : f.test) ones += v.label == 1;
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(ones) / f.test.size());
  EXPECT_EQ(r.confusion[0][0], 0u);
  EXPECT_EQ(r.confusion[1][1], ones);
  EXPECT_EQ(r.confusion[0][1], f.test.size() - ones);
  for (auto pred : r.predictions) EXPECT_EQ(pred, 1u);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  auto f = make_fixture();
  const auto a = evaluate(f.train, f.init, 1);
  const auto b = evaluate(f.train, f.init, 3);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.confusion, b.confusion);
}

TEST(Trainer, StageOneLeavesCodebookAndAttentionBitIdentical) {
  auto f = make_fixture();
  const auto r = train_stage(f.train, f.val, f.init, quick_config(1, 3));
  EXPECT_EQ(r.final_params.codebook, f.init.codebook);
  EXPECT_EQ(r.final_params.attention, f.init.attention);
  EXPECT_NE(r.final_params.gru, f.init.gru);
  EXPECT_NE(r.final_params.fc_weights, f.init.fc_weights);
  EXPECT_EQ(r.final_params.stage, 1u);
}

TEST(Trainer, FrozenAttentionSurvivesStageTwo) {
  auto f = make_fixture();
  const auto s1 = train_stage(f.train, f.val, f.init, quick_config(1, 2));
  auto c2 = quick_config(2, 2);
  c2.base_lr = 1e-2;
  c2.freeze_attention = true;
  const auto s2 = train_stage(f.train, f.val, s1.final_params, c2);
  EXPECT_EQ(s2.final_params.attention, s1.final_params.attention);
  EXPECT_NE(s2.final_params.codebook.centers, s1.final_params.codebook.centers);
  EXPECT_EQ(s2.final_params.codebook.alpha, s1.final_params.codebook.alpha);
}

TEST(Trainer, StageTwoUpdatesAttentionWhenNotFrozen) {
  auto f = make_fixture();
  const auto s1 = train_stage(f.train, f.val, f.init, quick_config(1, 2));
  auto c2 = quick_config(2, 2);
  c2.base_lr = 1e-2;
  const auto s2 = train_stage(f.train, f.val, s1.final_params, c2);
  EXPECT_NE(s2.final_params.attention.weights, s1.final_params.attention.weights);
  EXPECT_EQ(s2.final_params.stage, 2u);
}

TEST(Trainer, StageTwoRequiresStageOneParameters) {
  auto f = make_fixture();
  EXPECT_THROW(train_stage(f.train, f.val, f.init, quick_config(2, 1)), ContractError);
}

TEST(Trainer, ZeroLearningRateChangesNothing) {
  auto f = make_fixture();
  auto c = quick_config(1, 2);
  c.base_lr = 0.0;
  const auto r = train_stage(f.train, f.val, f.init, c);
  auto expected = f.init;
  expected.stage = 1;
  EXPECT_EQ(r.final_params, expected);
}

TEST(Trainer, SameSeedIsBitReproducibleAcrossThreadCounts) {
  auto f = make_fixture();
  auto c = quick_config(1, 3);
  c.seed = 42;
  const auto a = train_stage(f.train, f.val, f.init, c);
  c.threads = 3;
  const auto b = train_stage(f.train, f.val, f.init, c);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.best_params, b.best_params);
  c.seed = 43;
  const auto d = train_stage(f.train, f.val, f.init, c);
  EXPECT_NE(a.final_params, d.final_params);
}

TEST(Trainer, HistoryHasOneRowPerEpochWithScheduledRates) {
  auto f = make_fixture();
  const auto c = quick_config(1, 5);
  const auto r = train_stage(f.train, f.val, f.init, c);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t e = 0; e < 5; ++e) {
    EXPECT_EQ(r.history[e].epoch, e);
    EXPECT_EQ(r.history[e].lr, lr_schedule(e, c.base_lr, c));
    EXPECT_TRUE(std::isfinite(r.history[e].train_loss));
  }
  EXPECT_EQ(r.optimizer_steps, 5u * 2u);  // 8 training videos, batches of 4
  // Best checkpoint is the earliest epoch with the top validation accuracy.
  double top = -1.0;
  std::size_t first = 0;
  for (const auto& h : r.history)
    if (h.val_accuracy > top) {
      top = h.val_accuracy;
      first = h.epoch;
    }
  EXPECT_EQ(r.best_epoch, first);
}

TEST(Trainer, LossDecreasesOnLearnableData) {
  auto f = make_fixture();
  auto c = quick_config(1, 10);
  c.decay_every = 5;
  const auto r = train_stage(f.train, f.val, f.init, c);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  EXPECT_EQ(r.history.back().train_accuracy, 1.0);
}

TEST(History, CsvHeaderAndRows) {
  const History h = {{0, 0.015625, 0.5, 0.75, 0.5}, {1, 0.0078125, 0.1, 1.0, 1.0}};
  const std::string csv = history_csv(h);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,lr,train_loss,train_acc,val_acc");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.015625,0.5,0.75,0.5");
  std::getline(in, line);
  // Seventeen significant digits round-trip every double.
  EXPECT_EQ(line, "1,0.0078125,0.10000000000000001,1,1");
}

}  // namespace
}  // namespace tavlad
