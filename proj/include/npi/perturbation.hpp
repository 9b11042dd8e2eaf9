#pragma once

// Effective connectivity from a trained forecaster: feed clean and perturbed
// contexts, difference the predicted horizons, average over windows.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "npi/dataset.hpp"
#include "npi/ec_tensor.hpp"
#include "npi/error.hpp"
#include "npi/forecasters.hpp"
#include "npi/jansen_rit.hpp"

namespace npi {

struct InferOptions {
  ECMode mode = ECMode::generative;
  double direct_delta = 0.1;  // mV added to the observed channel in direct mode
  std::optional<Normalization> normalization;
  std::size_t batch = 64;
};

namespace detail {

template <class T>
std::vector<T> prepare_contexts(const TwinSet& pairs, std::optional<std::size_t> source, const InferOptions& opt) {
  const std::size_t n = pairs.n, L = pairs.context_len();
  std::vector<T> out;
  out.reserve(pairs.windows * L * n);
  for (std::size_t w = 0; w < pairs.windows; ++w) {
    const bool generative = source && opt.mode != ECMode::direct;
    const auto win = generative ? pairs.perturbed_window(*source, w) : pairs.clean_window(w);
    for (std::size_t r = 0; r < L; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        double v = win[r * n + c];
        if (source && opt.mode == ECMode::direct && c == *source && r == L - 1) v += opt.direct_delta;
        if (opt.normalization) v = opt.normalization->forward(c, v);
        out.push_back(static_cast<T>(v));
      }
  }
  return out;
}

template <class T>
std::vector<double> predict_mv(const Forecaster<T>& model, const std::vector<T>& contexts, const InferOptions& opt) {
  const auto raw = predict<T>(model, contexts, opt.batch);
  const std::size_t n = model.config().n_channels;
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = opt.normalization ? opt.normalization->inverse(i % n, raw[i]) : static_cast<double>(raw[i]);
  return out;
}

template <class T>
void check_pairs(const Forecaster<T>& model, const TwinSet& pairs, const InferOptions& opt) {
  const auto& c = model.config();
  require(pairs.windows >= 1, ErrorKind::invalid_argument, "perturbation set holds no windows");
  require(c.n_channels == pairs.n && c.context_len == pairs.context_len() && c.horizon == pairs.horizon(),
          ErrorKind::shape_mismatch,
          "perturbation windows (" + std::to_string(pairs.context_len()) + "→" + std::to_string(pairs.horizon()) +
              ", n=" + std::to_string(pairs.n) + ") do not fit the model (" + std::to_string(c.context_len) + "→" +
              std::to_string(c.horizon) + ", n=" + std::to_string(c.n_channels) + ")");
  if (opt.mode != ECMode::direct)
    require(pairs.perturbed.size() == pairs.n, ErrorKind::invalid_argument,
            "perturbation set lacks perturbed windows for every source region");
  require(opt.mode != ECMode::ground_truth, ErrorKind::invalid_argument, "inference mode must be generative or direct");
}

}  // namespace detail

/// δ[t'][target][source] = mean over windows of f(perturbed) − f(clean).
template <class T>
ECTensor infer_ec(const Forecaster<T>& model, const TwinSet& pairs, const InferOptions& opt = {}) {
  detail::check_pairs(model, pairs, opt);
  const std::size_t n = pairs.n, H = pairs.horizon(), W = pairs.windows;
  const auto clean = detail::predict_mv(model, detail::prepare_contexts<T>(pairs, std::nullopt, opt), opt);
  ECTensor ec(H, n);
  ec.mode = opt.mode;
  ec.magnitude = opt.mode == ECMode::direct ? opt.direct_delta : pairs.kick.magnitude;
  ec.samples = W;
  for (std::size_t a = 0; a < n; ++a) {
    const auto pert = detail::predict_mv(model, detail::prepare_contexts<T>(pairs, a, opt), opt);
    std::vector<double> sum(H * n, 0.0);
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t i = 0; i < H * n; ++i) sum[i] += pert[w * H * n + i] - clean[w * H * n + i];
    for (std::size_t t = 0; t < H; ++t)
      for (std::size_t b = 0; b < n; ++b) ec.at(t, b, a) = sum[t * n + b] / static_cast<double>(W);
  }
  return ec;
}

/// Per-window predicted responses of `target` to a kick on `source`: trials × horizon.
template <class T>
std::vector<std::vector<double>> predicted_responses(const Forecaster<T>& model, const TwinSet& pairs,
                                                     std::size_t source, std::size_t target,
                                                     const InferOptions& opt = {}) {
  detail::check_pairs(model, pairs, opt);
  require(source < pairs.n && target < pairs.n, ErrorKind::invalid_argument, "region index out of range");
  const std::size_t n = pairs.n, H = pairs.horizon();
  const auto clean = detail::predict_mv(model, detail::prepare_contexts<T>(pairs, std::nullopt, opt), opt);
  const auto pert = detail::predict_mv(model, detail::prepare_contexts<T>(pairs, source, opt), opt);
  std::vector<std::vector<double>> trials(pairs.windows, std::vector<double>(H));
  for (std::size_t w = 0; w < pairs.windows; ++w)
    for (std::size_t t = 0; t < H; ++t)
      trials[w][t] = pert[(w * H + t) * n + target] - clean[(w * H + t) * n + target];
  return trials;
}

/// n×n summary: the slice at 1-based `t_pick`, or per pair the entry of
/// largest magnitude over the horizon (sign kept).
inline Eigen::MatrixXd ec_summary(const ECTensor& ec, std::optional<std::size_t> t_pick = std::nullopt) {
  if (t_pick) return ec.slice(*t_pick);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ec.n), static_cast<Eigen::Index>(ec.n));
  for (std::size_t b = 0; b < ec.n; ++b)
    for (std::size_t a = 0; a < ec.n; ++a) {
      double best = 0.0;
      for (std::size_t t = 0; t < ec.horizon; ++t)
        if (std::abs(ec.at(t, b, a)) > std::abs(best)) best = ec.at(t, b, a);
      m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = best;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Twin-set directory: clean.bin and source_<k>.bin (NPITS, windows laid end to
// end) plus pairs.json describing the window geometry and the kick.

inline void save_twins_dir(const TwinSet& tw, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto as_series = [&](const std::vector<float>& data) {
    TimeSeries ts;
    ts.n_channels = tw.n;
    ts.data = data;
    ts.rate = tw.rate;
    ts.seed = tw.seed;
    return ts;
  };
  save_timeseries(as_series(tw.clean), dir / "clean.bin");
  for (std::size_t s = 0; s < tw.perturbed.size(); ++s)
    save_timeseries(as_series(tw.perturbed[s]), dir / ("source_" + std::to_string(s) + ".bin"));
  nlohmann::ordered_json j;
  j["format"] = "npi-twins";
  j["version"] = 1;
  j["n"] = tw.n;
  j["windows"] = tw.windows;
  j["window_len"] = tw.window_len;
  j["step_index"] = tw.kick.step_index;
  j["variable"] = static_cast<int>(tw.kick.variable);
  j["magnitude"] = tw.kick.magnitude;
  j["seed"] = tw.seed;
  j["sources"] = tw.perturbed.size();
  std::ofstream out(dir / "pairs.json");
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + (dir / "pairs.json").string());
  out << j.dump(2) << '\n';
}

inline TwinSet load_twins_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "pairs.json");
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + (dir / "pairs.json").string());
  TwinSet tw;
  std::size_t sources = 0;
  try {
    const auto j = nlohmann::json::parse(in);
    tw.n = j.at("n").get<std::size_t>();
    tw.windows = j.at("windows").get<std::size_t>();
    tw.window_len = j.at("window_len").get<std::size_t>();
    tw.kick.step_index = j.at("step_index").get<std::size_t>();
    tw.kick.variable = static_cast<StateVar>(j.at("variable").get<int>());
    tw.kick.magnitude = j.at("magnitude").get<double>();
    tw.seed = j.at("seed").get<std::uint64_t>();
    sources = j.at("sources").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "malformed pairs.json in " + dir.string() + ": " + e.what());
  }
  auto read = [&](const std::string& name) {
    auto ts = load_timeseries(dir / name);
    require(ts.n_channels == tw.n && ts.steps() == tw.windows * tw.window_len, ErrorKind::shape_mismatch,
            name + " does not match the geometry recorded in pairs.json");
    tw.rate = ts.rate;
    return std::move(ts.data);
  };
  tw.clean = read("clean.bin");
  for (std::size_t s = 0; s < sources; ++s) tw.perturbed.push_back(read("source_" + std::to_string(s) + ".bin"));
  return tw;
}

}  // namespace npi
