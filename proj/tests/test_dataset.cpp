#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "npi/dataset.hpp"
#include "test_util.hpp"

using namespace npi;

namespace {

TimeSeries ramp(std::size_t steps, std::size_t n = 2) {
  TimeSeries ts;
  ts.n_channels = n;
  ts.rate = 100;
  ts.seed = 3;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < n; ++c) ts.data.push_back(static_cast<float>(t) + 0.5f * static_cast<float>(c));
  return ts;
}

}  // namespace

TEST(MakeWindows, CountsFollowFloorArithmetic) {
  EXPECT_EQ(make_windows(ramp(100), {}).size(), 1u);
  EXPECT_EQ(make_windows(ramp(199), {}).size(), 1u);
  EXPECT_EQ(make_windows(ramp(900000, 1), {}).size(), 9000u);
  EXPECT_EQ(make_windows(ramp(250), {100, 76, 24, 50}).size(), 4u);
  EXPECT_THROW(make_windows(ramp(99), {}), Error);
}

TEST(MakeWindows, ContextAndTargetRebuildSourceSlice) {
  const auto ts = ramp(1000);
  const auto ds = make_windows(ts, {});
  for (std::size_t k = 0; k < ds.size(); ++k) {
    EXPECT_EQ(ds.starts[k], k * 100);
    std::vector<float> joined(ds.context(k).begin(), ds.context(k).end());
    joined.insert(joined.end(), ds.target(k).begin(), ds.target(k).end());
    const auto first = ts.data.begin() + static_cast<std::ptrdiff_t>(k * 100 * 2);
    EXPECT_TRUE(std::equal(joined.begin(), joined.end(), first));
  }
  EXPECT_EQ(ds.context(0).size(), 76u * 2);
  EXPECT_EQ(ds.target(0).size(), 24u * 2);
}

TEST(WindowSpec, RejectsInconsistentLengths) {
  EXPECT_THROW(validate(WindowSpec{100, 70, 24, 100}), Error);
  EXPECT_THROW(validate(WindowSpec{100, 76, 24, 0}), Error);
}

TEST(Split, SeventyThirtyTemporal) {
  const auto [tr, va] = split(make_windows(ramp(1000), {}), 0.7);
  EXPECT_EQ(tr.size(), 7u);
  EXPECT_EQ(va.size(), 3u);
  EXPECT_LT(tr.starts.back(), va.starts.front());
  std::set<std::size_t> seen(tr.starts.begin(), tr.starts.end());
  for (auto s : va.starts) EXPECT_FALSE(seen.count(s));
}

TEST(Split, FullScaleCounts) {
  const auto [tr, va] = split(make_windows(ramp(900000, 1), {}), 0.7);
  EXPECT_EQ(tr.size(), 6300u);
  EXPECT_EQ(va.size(), 2700u);
}

TEST(Split, EmptyPartitionIsAnError) {
  EXPECT_THROW(split(make_windows(ramp(100), {}), 0.7), Error);
}

TEST(Standardize, IdentityOnUnitData) {
  TimeSeries ts;
  ts.n_channels = 1;
  for (int k = 0; k < 1000; ++k) ts.data.push_back(k % 2 ? 1.0f : -1.0f);
  const auto s = standardize(make_windows(ts, {}));
  EXPECT_NEAR(s.normalization.mean[0], 0.0, 1e-12);
  EXPECT_NEAR(s.normalization.scale[0], 1.0, 1e-12);
}

TEST(Standardize, ConstantChannelNamed) {
  TimeSeries ts;
  ts.n_channels = 2;
  for (int k = 0; k < 200; ++k) {
    ts.data.push_back(static_cast<float>(k));
    ts.data.push_back(4.0f);
  }
  try {
    standardize(make_windows(ts, {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("channel 1"), std::string::npos);
  }
}

TEST(Standardize, InverseRecoversValues) {
  const auto ds = make_windows(ramp(1000), {});
  const auto [tr, va] = split(ds);
  const std::vector<Dataset> others{va};
  const auto s = standardize(tr, others);
  for (std::size_t k = 0; k < va.data.size(); ++k)
    EXPECT_NEAR(s.normalization.inverse(k % 2, s.others[0].data[k]), va.data[k], 1e-6 * std::max(1.0f, va.data[k]));
}

TEST(Standardize, StatisticsComeFromTrainOnly) {
  const auto [tr, va] = split(make_windows(ramp(1000), {}));
  const std::vector<Dataset> others{va};
  const auto s = standardize(tr, others);
  EXPECT_EQ(s.normalization, fit_normalization(tr));
}

TEST(Batches, SizesAndShortTail) {
  auto b = batches(90, 30, 1, 1);
  ASSERT_EQ(b.size(), 3u);
  for (const auto& x : b) EXPECT_EQ(x.size(), 30u);
  b = batches(31, 30, 1, 1);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].size(), 1u);
}

TEST(Batches, DeterministicPerSeedAndEpoch) {
  EXPECT_EQ(batches(100, 30, 5, 2), batches(100, 30, 5, 2));
  EXPECT_NE(batches(100, 30, 5, 2), batches(100, 30, 5, 3));
  EXPECT_NE(batches(100, 30, 5, 2), batches(100, 30, 6, 2));
}

TEST(Batches, EveryWindowOncePerEpoch) {
  std::vector<std::size_t> all;
  for (const auto& b : batches(77, 30, 9, 4)) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < 77; ++k) EXPECT_EQ(all[k], k);
}

TEST(DatasetDir, RoundTrip) {
  testutil::TempDir dir;
  DatasetFiles f;
  f.series = ramp(500);
  f.spec = {100, 76, 24, 50};
  f.train_frac = 0.8;
  f.normalization = Normalization{{1.5, 2.5}, {3.0, 4.0}};
  save_dataset_dir(f, dir.path());
  const auto back = load_dataset_dir(dir.path());
  EXPECT_EQ(back.series, f.series);
  EXPECT_EQ(back.spec, f.spec);
  EXPECT_EQ(back.train_frac, 0.8);
  EXPECT_EQ(back.normalization, f.normalization);
}

TEST(DatasetDir, MissingSidecarIsIoError) {
  testutil::TempDir dir;
  try {
    load_dataset_dir(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}
