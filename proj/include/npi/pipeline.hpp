#pragma once

// End-to-end benchmark: simulate → window → train → perturb → compare.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "npi/checkpoint.hpp"
#include "npi/connectome.hpp"
#include "npi/dataset.hpp"
#include "npi/ec_tensor.hpp"
#include "npi/granger.hpp"
#include "npi/jansen_rit.hpp"
#include "npi/metrics.hpp"
#include "npi/perturbation.hpp"
#include "npi/plot_export.hpp"
#include "npi/training.hpp"

namespace npi {

/// One line of a metrics report.
struct ReportRow {
  std::string model;
  std::string hidden;
  std::optional<double> prediction_mse;
  double ec_correlation_pooled = 0.0;
  std::vector<double> ec_correlation_per_step;  // empty for matrix-only estimates
};

inline std::string format_report_value(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

/// model,hidden,prediction_mse,ec_correlation_pooled,ec_correlation_step_1..H
inline void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  std::size_t steps = 0;
  for (const auto& r : rows) steps = std::max(steps, r.ec_correlation_per_step.size());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write report " + path.string());
  out << "model,hidden,prediction_mse,ec_correlation_pooled";
  for (std::size_t t = 1; t <= steps; ++t) out << ",ec_correlation_step_" << t;
  out << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << r.hidden << ',' << (r.prediction_mse ? format_report_value(*r.prediction_mse) : "") << ','
        << format_report_value(r.ec_correlation_pooled);
    for (std::size_t t = 0; t < steps; ++t)
      out << ',' << (t < r.ec_correlation_per_step.size() ? format_report_value(r.ec_correlation_per_step[t]) : "");
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed while writing " + path.string());
}

/// Compares an inferred EC tensor with the ground truth.
inline ReportRow compare_ec(const ECTensor& est, const ECTensor& real) {
  ReportRow r;
  r.ec_correlation_pooled = ec_correlation(est, real);
  r.ec_correlation_per_step = ec_correlation_per_step(est, real);
  return r;
}

/// Compares an n×n estimate (e.g. Granger causality) with the per-pair peak
/// magnitude of the ground truth.
inline ReportRow compare_matrix(const Eigen::MatrixXd& est, const ECTensor& real) {
  ReportRow r;
  r.ec_correlation_pooled = ec_correlation(est, ec_summary(real).cwiseAbs());
  return r;
}

/// Windows a stored dataset and returns its (train, validation) split, with
/// the stored normalization applied to both.
inline std::pair<Dataset, Dataset> training_split(const DatasetFiles& files) {
  auto [train, val] = split(make_windows(files.series, files.spec), files.train_frac);
  if (files.normalization) {
    train = apply_normalization(train, *files.normalization);
    val = apply_normalization(val, *files.normalization);
  }
  return {std::move(train), std::move(val)};
}

struct BenchmarkConfig {
  SCMatrix sc;
  JRParams params;
  std::size_t train_points = 900000;
  std::size_t samples = 1000;  // ground-truth twin windows
  double delta = 0.1;
  std::vector<ModelKind> models{ModelKind::cnn, ModelKind::rnn, ModelKind::lstm, ModelKind::gru,
                                ModelKind::transformer};
  std::vector<std::size_t> hidden{8, 32, 128, 512};
  TrainConfig train;
  bool normalize = false;
  ECMode mode = ECMode::generative;
  bool granger = true;
  std::size_t max_lag = 12;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

struct BenchmarkResult {
  std::vector<ReportRow> rows;
  std::vector<TrainReport> training;  // one per model row, same order
  ECTensor ground_truth;
  std::optional<std::size_t> granger_lag;
};

/// Runs the full sweep, writing every artifact under `out`:
///   sc.csv, train_ts.bin, ground_truth.ec, pairs/, models/<m>_h<H>.npic and
///   .train.csv, ec/<m>_h<H>.ec, granger.csv, report.csv.
/// Report rows follow the model × hidden order of the configuration whatever
/// the number of jobs.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const std::filesystem::path& out,
                                     const std::function<void(const std::string&)>& log = {}) {
  require(!cfg.models.empty() && !cfg.hidden.empty(), ErrorKind::invalid_argument, "benchmark needs models and hidden sizes");
  require(cfg.jobs >= 1, ErrorKind::invalid_argument, "jobs must be >= 1");
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(msg);
  };
  namespace fs = std::filesystem;
  fs::create_directories(out / "models");
  fs::create_directories(out / "ec");
  save_sc(cfg.sc, out / "sc.csv");

  say("simulating " + std::to_string(cfg.train_points) + " training points on " + std::to_string(cfg.sc.n) + " regions");
  const auto series = simulate(cfg.params, cfg.sc, cfg.train_points * cfg.params.downsample_factor, cfg.seed);
  save_timeseries(series, out / "train_ts.bin");
  auto [train_ds, val_ds] = split(make_windows(series, WindowSpec{}), 0.7);
  std::optional<Normalization> norm;
  if (cfg.normalize) {
    norm = fit_normalization(train_ds);
    train_ds = apply_normalization(train_ds, *norm);
    val_ds = apply_normalization(val_ds, *norm);
  }

  say("ground truth from " + std::to_string(cfg.samples) + " twin windows");
  PerturbationSpec kick;
  kick.magnitude = cfg.delta;
  const auto gt = generate_twins(cfg.params, cfg.sc, cfg.samples, kick, cfg.seed + 1);
  save_ec(gt.ec, out / "ground_truth.ec");
  save_twins_dir(gt.twins, out / "pairs");

  struct Job {
    ModelKind kind;
    std::size_t hidden;
  };
  std::vector<Job> jobs;
  for (auto k : cfg.models)
    for (auto h : cfg.hidden) jobs.push_back({k, h});
  std::vector<ReportRow> rows(jobs.size());
  std::vector<TrainReport> reports(jobs.size());

  auto run_job = [&](std::size_t idx) {
    const auto& job = jobs[idx];
    const std::string tag = std::string(to_string(job.kind)) + "_h" + std::to_string(job.hidden);
    ForecasterConfig mc;
    mc.kind = job.kind;
    mc.hidden = job.hidden;
    mc.n_channels = cfg.sc.n;
    mc.seed = cfg.seed;
    Forecaster<float> model(mc);
    const auto rep = train(model, train_ds, val_ds, cfg.train);
    save_checkpoint(model, norm, out / "models" / (tag + ".npic"));
    save_train_report_csv(rep, out / "models" / (tag + ".train.csv"));
    InferOptions opt;
    opt.mode = cfg.mode;
    opt.direct_delta = cfg.delta;
    opt.normalization = norm;
    const auto ec = infer_ec(model, gt.twins, opt);
    save_ec(ec, out / "ec" / (tag + ".ec"));
    auto row = compare_ec(ec, gt.ec);
    row.model = std::string(to_string(job.kind));
    row.hidden = std::to_string(job.hidden);
    row.prediction_mse = rep.best_val_loss;
    rows[idx] = row;
    reports[idx] = rep;
    say(tag + ": val_mse=" + format_report_value(rep.best_val_loss) + " (epoch " + std::to_string(rep.best_epoch) +
        ") ec_corr=" + format_report_value(row.ec_correlation_pooled));
  };

  if (cfg.jobs == 1 || jobs.size() == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(cfg.jobs, jobs.size()); ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            run_job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  BenchmarkResult result;
  result.ground_truth = gt.ec;
  result.training = std::move(reports);
  if (cfg.granger) {
    const auto y = to_matrix(series);
    const auto p = select_order(y, cfg.max_lag);
    const auto gc = gc_matrix(y, p);
    export_matrix_csv(gc, out / "granger.csv");
    auto row = compare_matrix(gc, gt.ec);
    row.model = "granger";
    row.hidden = "lag=" + std::to_string(p);
    rows.push_back(row);
    result.granger_lag = p;
    say("granger: lag " + std::to_string(p) + " ec_corr=" + format_report_value(row.ec_correlation_pooled));
  }
  write_report_csv(rows, out / "report.csv");
  result.rows = std::move(rows);
  return result;
}

}  // namespace npi
