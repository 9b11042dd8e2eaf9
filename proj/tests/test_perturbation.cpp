#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "npi/perturbation.hpp"
#include "test_util.hpp"

using namespace npi;

namespace {

PerturbationSpec kick(double magnitude) {
  PerturbationSpec k;
  k.magnitude = magnitude;
  return k;
}

const GroundTruth& shared_twins() {
  static const GroundTruth gt = generate_twins(JRParams{}, three_node_sc(), 12, kick(0.5), 21);
  return gt;
}

Forecaster<float> model(ModelKind k = ModelKind::cnn) {
  ForecasterConfig c;
  c.kind = k;
  c.hidden = 8;
  c.seed = 2;
  return Forecaster<float>(c);
}

double frobenius(const ECTensor& a) {
  double s = 0;
  for (double v : a.delta) s += v * v;
  return std::sqrt(s);
}

// δ by running the forecaster window by window, without the batched path.
ECTensor brute_force_ec(const Forecaster<float>& m, const TwinSet& tw, const std::optional<Normalization>& norm) {
  const std::size_t n = tw.n, L = tw.context_len(), H = tw.horizon();
  auto run = [&](std::span<const float> win) {
    std::vector<float> ctx(L * n);
    for (std::size_t i = 0; i < L * n; ++i)
      ctx[i] = norm ? static_cast<float>(norm->forward(i % n, win[i])) : win[i];
    const auto out = m.forward(ad::Tensor<float>::from({L, n}, ctx));
    std::vector<double> y(H * n);
    for (std::size_t i = 0; i < H * n; ++i)
      y[i] = norm ? norm->inverse(i % n, out.values()[i]) : static_cast<double>(out.values()[i]);
    return y;
  };
  ECTensor ec(H, n);
  for (std::size_t w = 0; w < tw.windows; ++w) {
    const auto base = run(tw.clean_window(w));
    for (std::size_t a = 0; a < n; ++a) {
      const auto pert = run(tw.perturbed_window(a, w));
      for (std::size_t t = 0; t < H; ++t)
        for (std::size_t b = 0; b < n; ++b) ec.at(t, b, a) += (pert[t * n + b] - base[t * n + b]) / static_cast<double>(tw.windows);
    }
  }
  return ec;
}

}  // namespace

TEST(InferEc, ZeroKickGivesZeroEc) {
  const auto gt = generate_twins(JRParams{}, three_node_sc(), 4, kick(0.0), 3);
  const auto ec = infer_ec(model(), gt.twins);
  for (double v : ec.delta) EXPECT_EQ(v, 0.0);
  InferOptions direct;
  direct.mode = ECMode::direct;
  direct.direct_delta = 0.0;
  for (double v : infer_ec(model(), gt.twins, direct).delta) EXPECT_EQ(v, 0.0);
}

TEST(InferEc, ZeroReadoutGivesZeroEc) {
  auto m = model(ModelKind::lstm);
  m.zero_readout();
  for (double v : infer_ec(m, shared_twins().twins).delta) EXPECT_EQ(v, 0.0);
}

TEST(InferEc, MatchesWindowByWindowComputation) {
  const auto m = model(ModelKind::gru);
  const auto& tw = shared_twins().twins;
  const auto ec = infer_ec(m, tw);
  const auto ref = brute_force_ec(m, tw, std::nullopt);
  ASSERT_EQ(ec.delta.size(), ref.delta.size());
  for (std::size_t i = 0; i < ec.delta.size(); ++i) EXPECT_NEAR(ec.delta[i], ref.delta[i], 1e-5);
  EXPECT_EQ(ec.mode, ECMode::generative);
  EXPECT_EQ(ec.samples, tw.windows);
  EXPECT_EQ(ec.magnitude, 0.5);
}

TEST(InferEc, NormalizationRoundTrip) {
  const auto m = model();
  const auto& tw = shared_twins().twins;
  InferOptions opt;
  opt.normalization = Normalization{{0.5, -1.0, 2.0}, {3.0, 0.5, 1.5}};
  const auto ec = infer_ec(m, tw, opt);
  const auto ref = brute_force_ec(m, tw, opt.normalization);
  for (std::size_t i = 0; i < ec.delta.size(); ++i) EXPECT_NEAR(ec.delta[i], ref.delta[i], 1e-4);
}

TEST(InferEc, RepeatedCallsAreBitIdentical) {
  const auto m = model(ModelKind::transformer);
  const auto a = infer_ec(m, shared_twins().twins);
  const auto b = infer_ec(m, shared_twins().twins);
  EXPECT_EQ(a.delta, b.delta);
}

TEST(InferEc, DirectModeIsNearlyLinearInDelta) {
  const auto m = model();
  InferOptions opt;
  opt.mode = ECMode::direct;
  opt.direct_delta = 0.1;
  const auto one = infer_ec(m, shared_twins().twins, opt);
  opt.direct_delta = 0.2;
  const auto two = infer_ec(m, shared_twins().twins, opt);
  ECTensor diff = two;
  for (std::size_t i = 0; i < diff.delta.size(); ++i) diff.delta[i] -= 2.0 * one.delta[i];
  EXPECT_GT(frobenius(one), 0.0);
  EXPECT_LT(frobenius(diff), 0.15 * 2.0 * frobenius(one));
  EXPECT_EQ(two.mode, ECMode::direct);
  EXPECT_EQ(two.magnitude, 0.2);
}

TEST(InferEc, DirectModeNeedsOnlyCleanWindows) {
  auto tw = shared_twins().twins;
  tw.perturbed.clear();
  InferOptions opt;
  opt.mode = ECMode::direct;
  EXPECT_NO_THROW(infer_ec(model(), tw, opt));
  EXPECT_THROW(infer_ec(model(), tw), Error);
}

TEST(InferEc, RejectsMismatchedModels) {
  ForecasterConfig c;
  c.hidden = 8;
  c.context_len = 60;
  c.horizon = 40;
  try {
    infer_ec(Forecaster<float>(c), shared_twins().twins);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
  }
  InferOptions gt;
  gt.mode = ECMode::ground_truth;
  EXPECT_THROW(infer_ec(model(), shared_twins().twins, gt), Error);
}

TEST(PredictedResponses, AverageToTheEcColumn) {
  const auto m = model(ModelKind::rnn);
  const auto& tw = shared_twins().twins;
  const auto ec = infer_ec(m, tw);
  const auto trials = predicted_responses(m, tw, 0, 2);
  ASSERT_EQ(trials.size(), tw.windows);
  for (std::size_t t = 0; t < tw.horizon(); ++t) {
    double mean = 0;
    for (const auto& tr : trials) mean += tr[t];
    EXPECT_NEAR(mean / static_cast<double>(trials.size()), ec.at(t, 2, 0), 1e-12);
  }
}

TEST(EcSummary, SliceAndSignedPeak) {
  ECTensor ec(3, 2);
  ec.at(0, 1, 0) = 0.5;
  ec.at(1, 1, 0) = -2.0;
  ec.at(2, 1, 0) = 1.5;
  ec.at(2, 0, 1) = 0.25;
  const auto peak = ec_summary(ec);
  EXPECT_EQ(peak(1, 0), -2.0);
  EXPECT_EQ(peak(0, 1), 0.25);
  EXPECT_EQ(peak(0, 0), 0.0);
  EXPECT_EQ(ec_summary(ec, 3)(1, 0), 1.5);
  EXPECT_THROW(ec_summary(ec, 0), Error);
  EXPECT_THROW(ec_summary(ec, 4), Error);
}

TEST(EcSummary, GroundTruthDrivenEntriesLeadAtStepThree) {
  const auto gt = ground_truth_ec(JRParams{}, three_node_sc(), 300, kick(0.1), 8);
  const auto s = ec_summary(gt, 3).cwiseAbs();
  for (Eigen::Index b = 0; b < 3; ++b)
    for (Eigen::Index a = 0; a < 3; ++a) {
      if (a == b || a == 0) continue;
      EXPECT_GT(s(1, 0), s(b, a));
      EXPECT_GT(s(2, 0), s(b, a));
    }
}

TEST(TwinsDir, RoundTrip) {
  testutil::TempDir dir;
  const auto& tw = shared_twins().twins;
  save_twins_dir(tw, dir / "pairs");
  const auto back = load_twins_dir(dir / "pairs");
  EXPECT_EQ(back.n, tw.n);
  EXPECT_EQ(back.windows, tw.windows);
  EXPECT_EQ(back.window_len, tw.window_len);
  EXPECT_EQ(back.kick.step_index, tw.kick.step_index);
  EXPECT_EQ(back.kick.variable, tw.kick.variable);
  EXPECT_EQ(back.kick.magnitude, tw.kick.magnitude);
  EXPECT_EQ(back.seed, tw.seed);
  EXPECT_EQ(back.rate, tw.rate);
  EXPECT_EQ(back.clean, tw.clean);
  EXPECT_EQ(back.perturbed, tw.perturbed);
}

TEST(TwinsDir, DetectsInconsistentFiles) {
  testutil::TempDir dir;
  const auto& tw = shared_twins().twins;
  save_twins_dir(tw, dir / "pairs");
  std::filesystem::remove(dir / "pairs" / "source_2.bin");
  EXPECT_THROW(load_twins_dir(dir / "pairs"), Error);

  save_twins_dir(tw, dir / "p2");
  std::filesystem::copy_file(dir / "pairs" / "clean.bin", dir / "p2" / "clean.bin",
                             std::filesystem::copy_options::overwrite_existing);
  auto short_tw = tw;
  short_tw.windows = 3;
  short_tw.clean.resize(3 * 100 * 3);
  save_twins_dir(short_tw, dir / "p3");
  std::filesystem::copy_file(dir / "p3" / "clean.bin", dir / "p2" / "clean.bin",
                             std::filesystem::copy_options::overwrite_existing);
  try {
    load_twins_dir(dir / "p2");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
  }

  std::ofstream(dir / "pairs" / "pairs.json") << "{\"n\": 3}";
  try {
    load_twins_dir(dir / "pairs");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}
