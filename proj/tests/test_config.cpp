#include <fstream>

#include <gtest/gtest.h>

#include "npi/config.hpp"
#include "npi/plot_export.hpp"
#include "test_util.hpp"

using namespace npi;

namespace {

Settings train_settings() {
  Settings s("train");
  s.declare("model", "cnn");
  s.declare("hidden", "128");
  s.declare("lr", "1e-4");
  s.declare("models", "cnn,rnn");
  s.declare("normalize", "false");
  return s;
}

}  // namespace

TEST(Config, ParsesKeyValueLines) {
  testutil::TempDir dir;
  std::ofstream(dir / "c.conf") << "# comment\n\nmodel = gru   # trailing\n  hidden=64\nlr = 3e-4\n";
  const auto kv = load_config(dir / "c.conf");
  EXPECT_EQ(kv.at("model"), "gru");
  EXPECT_EQ(kv.at("hidden"), "64");
  EXPECT_EQ(kv.at("lr"), "3e-4");
  EXPECT_EQ(kv.size(), 3u);
}

TEST(Config, MalformedLinesNameTheLine) {
  testutil::TempDir dir;
  std::ofstream(dir / "c.conf") << "model = cnn\nhidden 64\n";
  try {
    load_config(dir / "c.conf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(load_config(dir / "missing.conf"), Error);
}

TEST(Settings, PrecedenceCliOverConfigOverDefault) {
  auto s = train_settings();
  s.set_cli("hidden", "32");
  s.apply_config({{"hidden", "64"}, {"model", "lstm"}, {"command", "train"}});
  EXPECT_EQ(s.size("hidden"), 32u);
  EXPECT_EQ(s.source("hidden"), ValueSource::cli);
  EXPECT_EQ(s.str("model"), "lstm");
  EXPECT_EQ(s.source("model"), ValueSource::config);
  EXPECT_EQ(s.real("lr"), 1e-4);
  EXPECT_EQ(s.source("lr"), ValueSource::builtin);
  EXPECT_EQ(s.list("models"), (std::vector<std::string>{"cnn", "rnn"}));
  EXPECT_FALSE(s.flag("normalize"));
}

TEST(Settings, RejectsUnknownKeysAndForeignCommands) {
  auto s = train_settings();
  EXPECT_THROW(s.apply_config({{"hiden", "3"}}), Error);
  EXPECT_THROW(s.apply_config({{"command", "simulate"}}), Error);
  EXPECT_THROW(s.str("nope"), Error);
}

TEST(Settings, TypedAccessorsValidate) {
  auto s = train_settings();
  s.set_cli("hidden", "12x");
  EXPECT_THROW(s.size("hidden"), Error);
  s.set_cli("hidden", "-3");
  EXPECT_THROW(s.size("hidden"), Error);
  s.set_cli("lr", "fast");
  EXPECT_THROW(s.real("lr"), Error);
  s.set_cli("normalize", "maybe");
  EXPECT_THROW(s.flag("normalize"), Error);
  s.set_cli("normalize", "yes");
  EXPECT_TRUE(s.flag("normalize"));
}

TEST(Settings, ManifestReplaysAsConfig) {
  testutil::TempDir dir;
  auto s = train_settings();
  s.set_cli("hidden", "32");
  s.apply_config({{"model", "gru"}});
  s.write_manifest(dir / "manifest.conf");
  const auto text = testutil::slurp(dir / "manifest.conf");
  EXPECT_NE(text.find("hidden = 32  # cli"), std::string::npos);
  EXPECT_NE(text.find("model = gru  # config"), std::string::npos);
  EXPECT_NE(text.find("lr = 1e-4  # default"), std::string::npos);

  auto replay = train_settings();
  replay.apply_config(load_config(dir / "manifest.conf"));
  for (const char* key : {"model", "hidden", "lr", "models", "normalize"}) EXPECT_EQ(replay.str(key), s.str(key));
}

TEST(PlotExport, MatrixCsv) {
  testutil::TempDir dir;
  Eigen::MatrixXd m(2, 2);
  m << 0, 0.5, -1.25, 0;
  export_matrix_csv(m, dir / "m.csv");
  EXPECT_EQ(testutil::slurp(dir / "m.csv"), "target\\source,0,1\n0,0,0.5\n1,-1.25,0\n");
}

TEST(PlotExport, HeatmapColoursAndMaskedDiagonal) {
  testutil::TempDir dir;
  Eigen::MatrixXd m(2, 2);
  m << 42, 1, 3, -7;
  export_heatmap_svg(m, dir / "h.svg", "EC");
  const auto svg = testutil::slurp(dir / "h.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find(">EC</text>"), std::string::npos);
  EXPECT_NE(svg.find("fill=\"#ffffff\""), std::string::npos);  // smallest off-diagonal
  EXPECT_NE(svg.find("fill=\"#08306b\""), std::string::npos);  // largest off-diagonal
  std::size_t grey = 0;
  for (std::size_t pos = 0; (pos = svg.find("#bdbdbd", pos)) != std::string::npos; ++pos) ++grey;
  EXPECT_EQ(grey, 2u);
  EXPECT_THROW(export_heatmap_svg(Eigen::MatrixXd::Zero(2, 3), dir / "bad.svg"), Error);
}
