#pragma once

// Fixed-length context/target windows cut from a time series, temporal
// train/validation split, optional per-channel z-scoring and seeded batching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "npi/error.hpp"
#include "npi/timeseries.hpp"

namespace npi {

struct WindowSpec {
  std::size_t total_len = 100;
  std::size_t context_len = 76;
  std::size_t horizon = 24;
  std::size_t stride = 100;

  bool operator==(const WindowSpec&) const = default;
};

inline void validate(const WindowSpec& s) {
  require(s.context_len >= 1 && s.horizon >= 1, ErrorKind::invalid_argument, "context and horizon must be positive");
  require(s.context_len + s.horizon == s.total_len, ErrorKind::invalid_argument,
          "context_len + horizon must equal total_len");
  require(s.stride >= 1, ErrorKind::invalid_argument, "stride must be >= 1");
}

/// Per-channel affine map x ↦ (x − mean) / scale.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;

  double forward(std::size_t c, double x) const { return (x - mean[c]) / scale[c]; }
  double inverse(std::size_t c, double z) const { return z * scale[c] + mean[c]; }
  bool operator==(const Normalization&) const = default;
};

/// Windows stored contiguously: window k occupies total_len × n floats.
struct Dataset {
  WindowSpec spec;
  std::size_t n = 0;
  std::vector<float> data;
  std::vector<std::size_t> starts;  // source row of each window
  std::optional<Normalization> normalization;
  std::uint64_t source_seed = 0;

  std::size_t size() const { return starts.size(); }
  std::span<const float> window(std::size_t k) const {
    return {data.data() + k * spec.total_len * n, spec.total_len * n};
  }
  std::span<const float> context(std::size_t k) const { return window(k).first(spec.context_len * n); }
  std::span<const float> target(std::size_t k) const { return window(k).subspan(spec.context_len * n); }
};

inline Dataset make_windows(const TimeSeries& ts, const WindowSpec& spec) {
  validate(spec);
  require(ts.steps() >= spec.total_len, ErrorKind::invalid_argument,
          "series of " + std::to_string(ts.steps()) + " steps is shorter than one window (" +
              std::to_string(spec.total_len) + ")");
  Dataset ds;
  ds.spec = spec;
  ds.n = ts.n_channels;
  ds.source_seed = ts.seed;
  const std::size_t count = (ts.steps() - spec.total_len) / spec.stride + 1;
  const std::size_t wlen = spec.total_len * ds.n;
  ds.data.reserve(count * wlen);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * spec.stride;
    ds.starts.push_back(start);
    const auto first = ts.data.begin() + static_cast<std::ptrdiff_t>(start * ds.n);
    ds.data.insert(ds.data.end(), first, first + static_cast<std::ptrdiff_t>(wlen));
  }
  return ds;
}

inline Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  Dataset out;
  out.spec = ds.spec;
  out.n = ds.n;
  out.normalization = ds.normalization;
  out.source_seed = ds.source_seed;
  const std::size_t wlen = ds.spec.total_len * ds.n;
  out.data.assign(ds.data.begin() + static_cast<std::ptrdiff_t>(begin * wlen),
                  ds.data.begin() + static_cast<std::ptrdiff_t>(end * wlen));
  out.starts.assign(ds.starts.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.starts.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

/// Temporal split: the first ⌈frac·N⌉ windows train, the rest validate.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac = 0.7) {
  require(train_frac > 0.0 && train_frac < 1.0, ErrorKind::invalid_argument, "train fraction must lie in (0, 1)");
  const std::size_t total = ds.size();
  const auto n_train = static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(total) - 1e-9));
  require(n_train >= 1 && n_train < total, ErrorKind::invalid_argument,
          "split of " + std::to_string(total) + " windows leaves an empty partition");
  return {subset(ds, 0, n_train), subset(ds, n_train, total)};
}

/// Per-channel mean and standard deviation over every sample of `ds`.
inline Normalization fit_normalization(const Dataset& ds) {
  Normalization norm;
  norm.mean.assign(ds.n, 0.0);
  norm.scale.assign(ds.n, 0.0);
  const std::size_t rows = ds.data.size() / ds.n;
  require(rows > 1, ErrorKind::invalid_argument, "need at least two samples to standardize");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ds.n; ++c) norm.mean[c] += ds.data[r * ds.n + c];
  for (auto& m : norm.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ds.n; ++c) {
      const double d = ds.data[r * ds.n + c] - norm.mean[c];
      norm.scale[c] += d * d;
    }
  for (std::size_t c = 0; c < ds.n; ++c) {
    norm.scale[c] = std::sqrt(norm.scale[c] / static_cast<double>(rows));
    require(norm.scale[c] > 1e-12, ErrorKind::validation,
            "channel " + std::to_string(c) + " has zero variance and cannot be standardized");
  }
  return norm;
}

inline Dataset apply_normalization(const Dataset& ds, const Normalization& norm) {
  require(norm.mean.size() == ds.n, ErrorKind::shape_mismatch, "normalization channel count mismatch");
  Dataset out = ds;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    const std::size_t c = k % ds.n;
    out.data[k] = static_cast<float>(norm.forward(c, ds.data[k]));
  }
  out.normalization = norm;
  return out;
}

struct Standardized {
  Dataset train;
  std::vector<Dataset> others;
  Normalization normalization;
};

/// Z-scores `train` and every dataset in `others` with statistics from `train` alone.
inline Standardized standardize(const Dataset& train, std::span<const Dataset> others = {}) {
  Standardized out;
  out.normalization = fit_normalization(train);
  out.train = apply_normalization(train, out.normalization);
  for (const auto& d : others) out.others.push_back(apply_normalization(d, out.normalization));
  return out;
}

/// Window indices grouped into batches, shuffled deterministically per
/// (seed, epoch). The final short batch is kept.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n_windows, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  require(batch_size >= 1, ErrorKind::invalid_argument, "batch size must be >= 1");
  std::vector<std::size_t> order(n_windows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n_windows; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n_windows, i + batch_size)));
  return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset: <dir>/series.bin (NPITS) + <dir>/dataset.json sidecar.

struct DatasetFiles {
  TimeSeries series;
  WindowSpec spec;
  double train_frac = 0.7;
  std::optional<Normalization> normalization;
};

inline void save_dataset_dir(const DatasetFiles& files, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_timeseries(files.series, dir / "series.bin");
  nlohmann::ordered_json j;
  j["format"] = "npi-dataset";
  j["version"] = 1;
  j["series"] = "series.bin";
  j["source_seed"] = files.series.seed;
  j["window"] = {{"total_len", files.spec.total_len},
                 {"context_len", files.spec.context_len},
                 {"horizon", files.spec.horizon},
                 {"stride", files.spec.stride}};
  j["train_frac"] = files.train_frac;
  if (files.normalization)
    j["normalization"] = {{"mean", files.normalization->mean}, {"scale", files.normalization->scale}};
  else
    j["normalization"] = nullptr;
  std::ofstream out(dir / "dataset.json");
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + (dir / "dataset.json").string());
  out << j.dump(2) << '\n';
}

inline DatasetFiles load_dataset_dir(const std::filesystem::path& dir) {
  const auto sidecar = dir / "dataset.json";
  std::ifstream in(sidecar);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open dataset sidecar " + sidecar.string());
  DatasetFiles files;
  try {
    const auto j = nlohmann::json::parse(in);
    files.series = load_timeseries(dir / j.at("series").get<std::string>());
    const auto& w = j.at("window");
    files.spec = {w.at("total_len").get<std::size_t>(), w.at("context_len").get<std::size_t>(),
                  w.at("horizon").get<std::size_t>(), w.at("stride").get<std::size_t>()};
    files.train_frac = j.at("train_frac").get<double>();
    if (!j.at("normalization").is_null())
      files.normalization = Normalization{j["normalization"].at("mean").get<std::vector<double>>(),
                                          j["normalization"].at("scale").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "malformed dataset sidecar " + sidecar.string() + ": " + e.what());
  }
  validate(files.spec);
  return files;
}

}  // namespace npi
