#pragma once

// Mini-batch MSE training with Adam, plateau-triggered learning-rate decay and
// best-validation-epoch selection.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "npi/dataset.hpp"
#include "npi/error.hpp"
#include "npi/forecasters.hpp"

namespace npi {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SchedulerConfig {
  double factor = 0.1;
  std::size_t patience = 10;
  double min_lr = 1e-7;
  double threshold = 1e-4;  // relative improvement needed to reset patience
};

struct TrainConfig {
  double lr0 = 1e-4;
  std::size_t batch_size = 30;
  std::size_t max_epochs = 100;
  std::size_t early_stop = 25;  // epochs without validation improvement
  SchedulerConfig scheduler;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c) {
  require(c.lr0 >= 0, ErrorKind::invalid_argument, "lr0 must be non-negative");
  require(c.scheduler.factor > 0 && c.scheduler.factor < 1, ErrorKind::invalid_argument,
          "scheduler factor must lie in (0, 1)");
  require(c.batch_size >= 1 && c.max_epochs >= 1, ErrorKind::invalid_argument,
          "batch size and epoch budget must be positive");
}

template <class T>
struct AdamState {
  std::vector<T> m, v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `params` in place.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st, double lr, const AdamConfig& cfg = {}) {
  require(params.size() == grads.size(), ErrorKind::shape_mismatch, "adam: parameter/gradient size mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), T(0));
    st.v.assign(params.size(), T(0));
  }
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      fail(ErrorKind::divergence, "adam: non-finite gradient at element " + std::to_string(i) + " (step " +
                                      std::to_string(st.t + 1) + ")");
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

/// Decays the learning rate by `factor` once validation loss has failed to
/// improve (relatively, by `threshold`) for more than `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, SchedulerConfig cfg) : cfg_(cfg), lr_(lr0) {}

  double step(double val_loss) {
    if (val_loss < best_ * (1.0 - cfg_.threshold)) {
      best_ = val_loss;
      bad_epochs_ = 0;
    } else if (++bad_epochs_ > cfg_.patience) {
      lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
      bad_epochs_ = 0;
    }
    return lr_;
  }
  double lr() const { return lr_; }

 private:
  SchedulerConfig cfg_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

/// Learning rate after replaying a validation-loss history.
inline double plateau_lr(std::span<const double> history, double lr0, const SchedulerConfig& cfg) {
  PlateauScheduler s(lr0, cfg);
  for (double v : history) s.step(v);
  return s.lr();
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0;
  double val_mse = 0;
  double lr = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double initial_train_mse = 0;
  double initial_val_mse = 0;
};

namespace detail {

template <class T>
std::vector<T> gather(const Dataset& ds, std::span<const std::size_t> idx, bool context) {
  const std::size_t len = (context ? ds.spec.context_len : ds.spec.horizon) * ds.n;
  std::vector<T> out;
  out.reserve(idx.size() * len);
  for (std::size_t k : idx) {
    const auto src = context ? ds.context(k) : ds.target(k);
    for (float v : src) out.push_back(static_cast<T>(v));
  }
  return out;
}

inline void check_compatible(const ForecasterConfig& c, const Dataset& ds, const char* which) {
  require(ds.size() > 0, ErrorKind::invalid_argument, std::string(which) + " dataset is empty");
  require(ds.n == c.n_channels && ds.spec.context_len == c.context_len && ds.spec.horizon == c.horizon,
          ErrorKind::shape_mismatch,
          std::string(which) + " windows (" + std::to_string(ds.spec.context_len) + "→" +
              std::to_string(ds.spec.horizon) + ", n=" + std::to_string(ds.n) + ") do not fit the model (" +
              std::to_string(c.context_len) + "→" + std::to_string(c.horizon) + ", n=" + std::to_string(c.n_channels) + ")");
}

}  // namespace detail

/// Mean squared error over every target entry of `ds`, accumulated in double.
template <class T>
double evaluate(const Forecaster<T>& model, const Dataset& ds, std::size_t batch = 64) {
  detail::check_compatible(model.config(), ds, "evaluation");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  const auto contexts = detail::gather<T>(ds, idx, true);
  const auto targets = detail::gather<T>(ds, idx, false);
  const auto pred = predict<T>(model, contexts, batch);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(targets[i]);
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

/// Trains `model` in place and leaves it holding the best-validation parameters.
template <class T>
TrainReport train(Forecaster<T>& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  validate(cfg);
  const auto& mc = model.config();
  detail::check_compatible(mc, train_ds, "training");
  detail::check_compatible(mc, val_ds, "validation");

  auto& params = model.parameters();
  std::vector<AdamState<T>> adam(params.size());
  std::vector<std::vector<T>> best(params.size());
  auto snapshot = [&] {
    for (std::size_t k = 0; k < params.size(); ++k)
      best[k].assign(params[k].second.values().begin(), params[k].second.values().end());
  };

  TrainReport report;
  report.initial_train_mse = evaluate(model, train_ds);
  report.initial_val_mse = evaluate(model, val_ds);
  snapshot();
  PlateauScheduler scheduler(cfg.lr0, cfg.scheduler);
  double lr = cfg.lr0;
  std::size_t since_best = 0;
  const std::size_t L = mc.context_len, H = mc.horizon, n = mc.n_channels;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double weighted = 0.0;
    for (const auto& batch : batches(train_ds.size(), cfg.batch_size, cfg.seed, epoch)) {
      const std::size_t B = batch.size();
      auto x = Tensor<T>::from({B, L, n}, detail::gather<T>(train_ds, batch, true));
      auto y = Tensor<T>::from({B, H, n}, detail::gather<T>(train_ds, batch, false));
      const auto loss = ad::mse(model.forward(x), y);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) fail(ErrorKind::divergence, "training loss became non-finite in epoch " + std::to_string(epoch));
      weighted += lv * static_cast<double>(B);
      const auto grads = ad::backward(loss);
      for (std::size_t k = 0; k < params.size(); ++k) {
        const auto g = grads.of(params[k].second);
        adam_step<T>(params[k].second.data(), g, adam[k], lr, cfg.adam);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = weighted / static_cast<double>(train_ds.size());
    rec.val_mse = evaluate(model, val_ds);
    rec.lr = lr;
    if (!std::isfinite(rec.val_mse))
      fail(ErrorKind::divergence, "validation loss became non-finite in epoch " + std::to_string(epoch));
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_mse < report.best_val_loss) {
      report.best_val_loss = rec.val_mse;
      report.best_epoch = epoch;
      snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.early_stop) {
      break;
    }
    lr = scheduler.step(rec.val_mse);
  }
  for (std::size_t k = 0; k < params.size(); ++k) model.set_parameter(params[k].first, best[k]);
  return report;
}

inline void save_train_report_csv(const TrainReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out.precision(10);
  out << "epoch,train_mse,val_mse,lr\n";
  for (const auto& e : r.epochs) out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << ',' << e.lr << '\n';
}

}  // namespace npi
