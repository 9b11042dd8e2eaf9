#include <cmath>

#include <gtest/gtest.h>

#include "npi/training.hpp"
#include "test_util.hpp"

using namespace npi;

namespace {

// Three coupled sinusoids, 100-sample windows.
Dataset sine_windows(std::size_t windows, double phase = 0.0) {
  TimeSeries ts;
  ts.n_channels = 3;
  ts.rate = 100;
  for (std::size_t t = 0; t < windows * 100; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      ts.data.push_back(static_cast<float>(std::sin(0.21 * static_cast<double>(t) + phase + 0.9 * static_cast<double>(c)) *
                                           (1.0 + 0.3 * static_cast<double>(c))));
  return make_windows(ts, WindowSpec{});
}

ForecasterConfig cnn(std::size_t hidden = 8) {
  ForecasterConfig c;
  c.kind = ModelKind::cnn;
  c.hidden = hidden;
  c.seed = 5;
  return c;
}

std::vector<float> flat_params(const Forecaster<float>& m) {
  std::vector<float> out;
  for (const auto& [name, t] : m.parameters()) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{0.5, -1.25, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState<double> st;
  for (int i = 0; i < 5; ++i) adam_step<double>(p, g, st, 1e-2);
  EXPECT_EQ(p, (std::vector<double>{0.5, -1.25, 3.0}));
}

TEST(Adam, ConstantGradientStepsApproachLearningRate) {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -0.02};
  AdamState<double> st;
  const double lr = 1e-3;
  for (int i = 0; i < 200; ++i) {
    const auto before = p;
    adam_step<double>(p, g, st, lr);
    EXPECT_NEAR(before[0] - p[0], lr, 1e-9);
    EXPECT_NEAR(before[1] - p[1], -lr, 1e-9);
  }
}

TEST(Adam, FirstTwoStepsByHand) {
  std::vector<double> p{1.0};
  AdamState<double> st;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  adam_step<double>(p, std::vector<double>{2.0}, st, lr);
  double expect = 1.0 - lr * 2.0 / (2.0 + eps);
  EXPECT_DOUBLE_EQ(p[0], expect);
  adam_step<double>(p, std::vector<double>{-1.0}, st, lr);
  const double m = b1 * (1 - b1) * 2.0 + (1 - b1) * -1.0;
  const double v = b2 * (1 - b2) * 4.0 + (1 - b2) * 1.0;
  const double mhat = m / (1 - b1 * b1), vhat = v / (1 - b2 * b2);
  expect -= lr * mhat / (std::sqrt(vhat) + eps);
  EXPECT_NEAR(p[0], expect, 1e-15);
}

TEST(Adam, NonFiniteGradientIsDiagnosed) {
  std::vector<double> p{0.0};
  AdamState<double> st;
  try {
    adam_step<double>(p, std::vector<double>{std::nan("")}, st, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
  }
}

TEST(Scheduler, DecreasingLossKeepsRate) {
  std::vector<double> h;
  for (int i = 0; i < 40; ++i) h.push_back(1.0 / (1 + i));
  EXPECT_EQ(plateau_lr(h, 1e-4, {}), 1e-4);
}

TEST(Scheduler, DecaysAfterPatiencePlusOneFlatEpochs) {
  SchedulerConfig c;
  c.patience = 10;
  std::vector<double> h(1, 1.0);
  for (int i = 0; i < 10; ++i) h.push_back(1.0);
  EXPECT_EQ(plateau_lr(h, 1e-4, c), 1e-4);  // ten flat epochs: still patient
  h.push_back(1.0);
  EXPECT_NEAR(plateau_lr(h, 1e-4, c), 1e-5, 1e-20);
  h.push_back(1.0);
  EXPECT_NEAR(plateau_lr(h, 1e-4, c), 1e-5, 1e-20);  // patience restarts after a decay
}

TEST(Scheduler, FloorsAtMinimumRate) {
  SchedulerConfig c;
  c.patience = 0;
  c.min_lr = 1e-6;
  const std::vector<double> h(50, 2.0);
  EXPECT_EQ(plateau_lr(h, 1e-2, c), 1e-6);
}

TEST(Scheduler, TinyImprovementsCountAsFlat) {
  SchedulerConfig c;
  c.patience = 2;
  std::vector<double> h{1.0};
  for (int i = 1; i <= 3; ++i) h.push_back(1.0 - 1e-6 * i);  // below the relative threshold
  EXPECT_NEAR(plateau_lr(h, 1.0, c), 0.1, 1e-15);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = sine_windows(10);
  auto [tr, va] = split(ds);
  Forecaster<float> m(cnn());
  const auto before = flat_params(m);
  TrainConfig tc;
  tc.lr0 = 0.0;
  tc.max_epochs = 3;
  const auto rep = train(m, tr, va, tc);
  EXPECT_EQ(flat_params(m), before);
  EXPECT_EQ(rep.epochs.size(), 3u);
  for (const auto& e : rep.epochs) EXPECT_EQ(e.val_mse, rep.initial_val_mse);
}

TEST(Train, OverfitsASingleWindow) {
  const auto one = subset(sine_windows(2), 0, 1);
  Forecaster<float> m(cnn(16));
  TrainConfig tc;
  tc.lr0 = 3e-3;
  tc.max_epochs = 400;
  tc.early_stop = 400;
  const auto rep = train(m, one, one, tc);
  EXPECT_LT(evaluate(m, one), 1e-2 * rep.initial_train_mse);
}

TEST(Train, SameSeedSameCurve) {
  const auto ds = sine_windows(12);
  auto [tr, va] = split(ds);
  TrainConfig tc;
  tc.lr0 = 1e-3;
  tc.max_epochs = 4;
  tc.batch_size = 3;
  tc.seed = 9;
  Forecaster<float> a(cnn()), b(cnn());
  const auto ra = train(a, tr, va, tc);
  const auto rb = train(b, tr, va, tc);
  ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    EXPECT_EQ(ra.epochs[i].train_mse, rb.epochs[i].train_mse);
    EXPECT_EQ(ra.epochs[i].val_mse, rb.epochs[i].val_mse);
  }
  EXPECT_EQ(flat_params(a), flat_params(b));
}

TEST(Train, KeepsBestValidationParameters) {
  const auto ds = sine_windows(12);
  auto [tr, va] = split(ds);
  TrainConfig tc;
  tc.lr0 = 2e-2;  // large enough that validation loss is not monotone
  tc.max_epochs = 12;
  tc.batch_size = 2;
  Forecaster<float> m(cnn());
  const auto rep = train(m, tr, va, tc);
  ASSERT_GE(rep.best_epoch, 1u);
  EXPECT_EQ(rep.epochs[rep.best_epoch - 1].val_mse, rep.best_val_loss);
  EXPECT_EQ(evaluate(m, va), rep.best_val_loss);
  for (const auto& e : rep.epochs) EXPECT_GE(e.val_mse, rep.best_val_loss);
  EXPECT_LT(rep.best_val_loss, rep.initial_val_mse);
}

TEST(Train, EarlyStopEndsTheRun) {
  const auto ds = sine_windows(10);
  auto [tr, va] = split(ds);
  TrainConfig tc;
  tc.lr0 = 0.0;  // never improves
  tc.max_epochs = 50;
  tc.early_stop = 4;
  Forecaster<float> m(cnn());
  const auto rep = train(m, tr, va, tc);
  // epoch 1 sets the first best, then four epochs without improvement
  EXPECT_EQ(rep.epochs.size(), 5u);
  EXPECT_EQ(rep.best_epoch, 1u);
}

TEST(Train, RejectsIncompatibleData) {
  const auto ds = sine_windows(10);
  auto [tr, va] = split(ds);
  auto c = cnn();
  c.n_channels = 4;
  Forecaster<float> m(c);
  try {
    train(m, tr, va, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
    EXPECT_NE(std::string(e.what()).find("n=4"), std::string::npos);
  }
  TrainConfig bad;
  bad.scheduler.factor = 1.5;
  Forecaster<float> ok(cnn());
  EXPECT_THROW(train(ok, tr, va, bad), Error);
}

TEST(Train, ReportCsv) {
  testutil::TempDir dir;
  TrainReport r;
  r.epochs = {{1, 0.5, 0.25, 1e-4}, {2, 0.125, 0.0625, 1e-5}};
  save_train_report_csv(r, dir / "r.csv");
  EXPECT_EQ(testutil::slurp(dir / "r.csv"), "epoch,train_mse,val_mse,lr\n1,0.5,0.25,0.0001\n2,0.125,0.0625,1e-05\n");
}
