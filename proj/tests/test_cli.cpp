#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "npi/ec_tensor.hpp"
#include "test_util.hpp"

namespace {

struct Run {
  int exit = -1;
  std::string output;
};

Run npi_cli(const std::string& args, const std::filesystem::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" NPI_CLI_PATH "' " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string report_field(const std::string& csv, std::size_t row, std::size_t col) {
  std::istringstream in(csv);
  std::string line;
  for (std::size_t i = 0; i <= row; ++i) std::getline(in, line);
  std::getline(in, line);
  std::istringstream cells(line);
  std::string cell;
  for (std::size_t j = 0; j <= col; ++j) std::getline(cells, cell, ',');
  return cell;
}

const std::regex kErrorLine(R"(error kind=[a-z_]+ exit=[0-9]+ message=".*")");

}  // namespace

TEST(Cli, SimulateIsReproducible) {
  testutil::TempDir dir;
  ASSERT_EQ(npi_cli("gen-sc --three-node --out sc.csv", dir.path()).exit, 0);
  const std::string args = "simulate --sc sc.csv --steps 30000 --seed 5 --perturb 0:76:0.5";
  ASSERT_EQ(npi_cli(args + " --out a.bin", dir.path()).exit, 0);
  ASSERT_EQ(npi_cli(args + " --out b.bin", dir.path()).exit, 0);
  EXPECT_EQ(testutil::slurp(dir / "a.bin"), testutil::slurp(dir / "b.bin"));
  ASSERT_EQ(npi_cli("simulate --sc sc.csv --steps 30000 --seed 6 --out c.bin", dir.path()).exit, 0);
  EXPECT_NE(testutil::slurp(dir / "a.bin"), testutil::slurp(dir / "c.bin"));
}

TEST(Cli, EvaluateAgainstItselfIsPerfect) {
  testutil::TempDir dir;
  ASSERT_EQ(npi_cli("gen-sc --three-node --out sc.csv", dir.path()).exit, 0);
  ASSERT_EQ(npi_cli("ground-truth-ec --sc sc.csv --samples 30 --seed 2 --out gt.ec", dir.path()).exit, 0);
  const auto r = npi_cli("evaluate --est gt.ec --real gt.ec --model truth --out report.csv", dir.path());
  ASSERT_EQ(r.exit, 0) << r.output;
  const auto csv = testutil::slurp(dir / "report.csv");
  EXPECT_EQ(report_field(csv, 0, 0), "truth");
  EXPECT_EQ(report_field(csv, 0, 3), "1");
}

TEST(Cli, ManifestRecordsSourcesAndReplays) {
  testutil::TempDir dir;
  ASSERT_EQ(npi_cli("gen-sc --three-node --out sc.csv", dir.path()).exit, 0);
  std::ofstream(dir / "sim.conf") << "steps = 20000\nseed = 9\n";
  ASSERT_EQ(npi_cli("simulate --config sim.conf --sc sc.csv --seed 4 --out a.bin", dir.path()).exit, 0);
  const auto manifest = testutil::slurp(dir / "a.bin.manifest");
  EXPECT_NE(manifest.find("command = simulate"), std::string::npos);
  EXPECT_NE(manifest.find("seed = 4  # cli"), std::string::npos);
  EXPECT_NE(manifest.find("steps = 20000  # config"), std::string::npos);
  EXPECT_NE(manifest.find("period = 100  # default"), std::string::npos);
  ASSERT_EQ(npi_cli("simulate --config a.bin.manifest --out b.bin", dir.path()).exit, 0);
  EXPECT_EQ(testutil::slurp(dir / "a.bin"), testutil::slurp(dir / "b.bin"));
}

TEST(Cli, ErrorsAreOneParseableLineWithDistinctCodes) {
  testutil::TempDir dir;
  ASSERT_EQ(npi_cli("gen-sc --three-node --out sc.csv", dir.path()).exit, 0);
  std::ofstream(dir / "bad.csv") << "0,1,2\n1,0,3\n";
  std::ofstream(dir / "neg.csv") << "0,-1\n1,0\n";

  const auto missing = npi_cli("simulate --sc nowhere.csv --out x.bin", dir.path());
  const auto enum_value = npi_cli("train --model mlp --data . --out x.npic", dir.path());
  const auto shape = npi_cli("simulate --sc bad.csv --out x.bin", dir.path());
  const auto invalid = npi_cli("simulate --sc neg.csv --out x.bin", dir.path());
  const auto unknown_key = [&] {
    std::ofstream(dir / "typo.conf") << "stepz = 10\n";
    return npi_cli("simulate --config typo.conf --sc sc.csv --out x.bin", dir.path());
  }();

  EXPECT_EQ(missing.exit, 5);
  EXPECT_EQ(enum_value.exit, 2);
  EXPECT_EQ(shape.exit, 3);
  EXPECT_EQ(invalid.exit, 4);
  EXPECT_EQ(unknown_key.exit, 4);
  for (const auto* r : {&missing, &enum_value, &shape, &invalid, &unknown_key}) {
    std::string line = r->output;
    while (!line.empty() && line.back() == '\n') line.pop_back();
    EXPECT_EQ(line.find('\n'), std::string::npos) << r->output;
    EXPECT_TRUE(std::regex_match(line, kErrorLine)) << line;
  }
  EXPECT_NE(missing.output.find("kind=io"), std::string::npos);
  EXPECT_NE(shape.output.find("kind=shape_mismatch"), std::string::npos);
}

TEST(Cli, SmallPipelineRunsEndToEnd) {
  testutil::TempDir dir;
  const std::vector<std::string> steps{
      "gen-sc --random 4 0.5 3 --out sc.csv",
      "simulate --sc sc.csv --steps 100000 --seed 1 --out ts.bin",
      "make-dataset --ts ts.bin --spec 76:24:100 --split 0.7 --normalize --out ds",
      "train --model cnn --hidden 8 --epochs 2 --data ds --seed 1 --out m.npic",
      "ground-truth-ec --sc sc.csv --samples 20 --seed 2 --pairs pairs --out gt.ec",
      "perturb --ckpt m.npic --pairs pairs --out est.ec",
      "perturb --ckpt m.npic --pairs pairs --mode direct --out direct.ec",
      "granger --ts ts.bin --maxlag 4 --out gc.csv",
      "evaluate --est est.ec --real gt.ec --model cnn --hidden 8 --ckpt m.npic --data ds --out report.csv",
      "evaluate --est gc.csv --real gt.ec --model granger --out gc_report.csv",
      "export-plot --in est.ec --tstep 2 --svg est.svg --csv est_slice.csv",
  };
  for (const auto& s : steps) {
    const auto r = npi_cli(s, dir.path());
    ASSERT_EQ(r.exit, 0) << s << "\n" << r.output;
  }
  for (const char* f : {"sc.csv", "ts.bin", "ds/dataset.json", "m.npic", "m.npic.train.csv", "gt.ec", "pairs/pairs.json",
                        "est.ec", "direct.ec", "gc.csv", "report.csv", "est.svg", "est_slice.csv", "ds/manifest.conf",
                        "m.npic.manifest", "est.svg.manifest"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(npi::load_ec(dir / "direct.ec").mode, npi::ECMode::direct);
  const auto report = testutil::slurp(dir / "report.csv");
  EXPECT_EQ(report.rfind("model,hidden,prediction_mse,ec_correlation_pooled,ec_correlation_step_1,", 0), 0u);
  EXPECT_FALSE(report_field(report, 0, 2).empty());
}

TEST(Cli, BenchmarkReportIsByteIdenticalOnReplay) {
  testutil::TempDir dir;
  const auto first = npi_cli(
      "benchmark --models cnn,gru --hidden 8 --epochs 2 --train-points 8000 --samples 20 --maxlag 4 --seed 3 --out run1",
      dir.path());
  ASSERT_EQ(first.exit, 0) << first.output;
  const auto second = npi_cli("benchmark --config run1/manifest.conf --jobs 2 --out run2", dir.path());
  ASSERT_EQ(second.exit, 0) << second.output;
  const auto a = testutil::slurp(dir / "run1" / "report.csv");
  EXPECT_EQ(a, testutil::slurp(dir / "run2" / "report.csv"));
  // header + two models + granger
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}
