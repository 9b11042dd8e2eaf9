#pragma once

// Stochastic Jansen-Rit neural-mass network with forward-Euler integration,
// EEG-like observables and twin-run (common random numbers) perturbation
// responses used as ground-truth effective connectivity.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "npi/connectome.hpp"
#include "npi/ec_tensor.hpp"
#include "npi/error.hpp"
#include "npi/timeseries.hpp"

namespace npi {

enum class Downsample { decimate, mean };

/// Model constants. Rates in 1/s, amplitudes and thresholds in mV.
struct JRParams {
  double A = 3.25;
  double B = 22.0;
  double a = 100.0;
  double b = 50.0;
  double a_bar = 50.0;  // long-range pyramidal rate, 0.5·a by default
  double C = 135.0;
  double C1 = 135.0;
  double C2 = 108.0;
  double C3 = 33.75;
  double C4 = 33.75;
  double alpha = 0.71;
  double beta = 0.4;
  double zeta_max = 5.0;
  double r0 = 0.56;
  double r1 = 0.56;
  double r2 = 0.56;
  double theta = 6.0;
  double noise_mean = 2.0;
  double noise_sd = 2.0;
  double dt = 1e-3;
  std::size_t downsample_factor = 10;
  double burn_in_s = 10.0;
  Downsample downsample = Downsample::decimate;

  std::size_t burn_in_steps() const { return static_cast<std::size_t>(std::llround(burn_in_s / dt)); }
  double output_rate() const { return 1.0 / (dt * static_cast<double>(downsample_factor)); }
};

inline void validate(const JRParams& p) {
  require(p.a > 0 && p.b > 0 && p.a_bar > 0, ErrorKind::invalid_argument, "rate constants a, b, a_bar must be positive");
  require(p.zeta_max > 0, ErrorKind::invalid_argument, "zeta_max must be positive");
  require(p.dt > 0, ErrorKind::invalid_argument, "dt must be positive");
  require(p.downsample_factor >= 1, ErrorKind::invalid_argument, "downsample_factor must be >= 1");
  require(p.noise_sd >= 0, ErrorKind::invalid_argument, "noise_sd must be non-negative");
  require(p.burn_in_s >= 0, ErrorKind::invalid_argument, "burn_in_s must be non-negative");
}

/// Per-region state: x0 pyramidal, x1 excitatory interneurons, x2 inhibitory
/// interneurons, x3 long-range pyramidal output; y holds their derivatives.
struct NodeState {
  std::array<double, 4> x{};
  std::array<double, 4> y{};

  bool operator==(const NodeState&) const = default;
};

enum class StateVar : std::uint8_t { x0, x1, x2, x3, y0, y1, y2, y3 };

inline double& component(NodeState& s, StateVar v) {
  const auto k = static_cast<std::size_t>(v);
  return k < 4 ? s.x[k] : s.y[k - 4];
}

inline StateVar parse_state_var(std::string_view name) {
  static constexpr std::array<std::string_view, 8> names{"x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3"};
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return static_cast<StateVar>(k);
  fail(ErrorKind::invalid_argument, "unknown state component '" + std::string(name) + "'");
}

/// Kick of `magnitude` added to one state component of one region at the
/// 1-based step `step_index` of every window.
struct PerturbationSpec {
  std::size_t region = 0;
  StateVar variable = StateVar::x1;
  double magnitude = 0.1;
  std::size_t step_index = 76;
};

inline double sigmoid(double v, double r, const JRParams& p) {
  return p.zeta_max / (1.0 + std::exp(r * (p.theta - v)));
}

namespace detail {

inline double coupling(std::span<const NodeState> states, const SCMatrix& sc_norm, std::size_t i) {
  double z = 0.0;
  for (std::size_t j = 0; j < sc_norm.n; ++j)
    if (j != i) z += sc_norm.at(i, j) * states[j].x[3];
  return z;
}

}  // namespace detail

/// z_i = Σ_{j≠i} M̃_ij · x3_j over a row-normalized matrix.
inline double coupling_input(std::span<const NodeState> states, const SCMatrix& sc_norm, std::size_t i) {
  require(states.size() == sc_norm.n, ErrorKind::shape_mismatch,
          "state count " + std::to_string(states.size()) + " does not match connectome size " +
              std::to_string(sc_norm.n));
  require(i < sc_norm.n, ErrorKind::invalid_argument, "node index out of range");
  return detail::coupling(states, sc_norm, i);
}

/// Pyramidal membrane potential v_i, the recorded EEG-like signal.
inline double observable(const NodeState& s, double z, const JRParams& p) {
  return p.C2 * s.x[1] - p.C4 * s.x[2] + p.C * p.alpha * z;
}

inline void apply_perturbation(std::span<NodeState> states, const PerturbationSpec& kick) {
  require(kick.region < states.size(), ErrorKind::invalid_argument,
          "perturbation region " + std::to_string(kick.region) + " out of range");
  component(states[kick.region], kick.variable) += kick.magnitude;
}

namespace detail {

// In-place explicit Euler update for every node. `z` is scratch of size n.
inline void euler_inplace(std::span<NodeState> s, const JRParams& p, const SCMatrix& sc_norm,
                          std::span<const double> noise, std::vector<double>& z, std::size_t step) {
  if (s.size() != sc_norm.n)
    fail(ErrorKind::shape_mismatch, "state count " + std::to_string(s.size()) + " does not match connectome size " +
                                        std::to_string(sc_norm.n));
  const std::size_t n = s.size();
  z.resize(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = coupling(s, sc_norm, i);
  const double dt = p.dt;
  for (std::size_t i = 0; i < n; ++i) {
    auto& x = s[i].x;
    auto& y = s[i].y;
    const double pyr_in = sigmoid(observable(s[i], z[i], p), p.r0, p);
    const double dy0 = p.A * p.a * pyr_in - 2.0 * p.a * y[0] - p.a * p.a * x[0];
    const double dy1 =
        p.A * p.a * (noise[i] + sigmoid(p.C1 * x[0] - p.C * p.beta * x[2], p.r1, p)) - 2.0 * p.a * y[1] - p.a * p.a * x[1];
    const double dy2 = p.B * p.b * sigmoid(p.C3 * x[0], p.r2, p) - 2.0 * p.b * y[2] - p.b * p.b * x[2];
    const double dy3 = p.A * p.a_bar * pyr_in - 2.0 * p.a_bar * y[3] - p.a_bar * p.a_bar * x[3];
    const std::array<double, 4> dy{dy0, dy1, dy2, dy3};
    for (std::size_t k = 0; k < 4; ++k) {
      x[k] += dt * y[k];
      y[k] += dt * dy[k];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      if (!std::isfinite(s[i].x[k]) || !std::isfinite(s[i].y[k])) throw IntegrationDivergence(i, step);
}

}  // namespace detail

/// One explicit Euler step. `noise` is the drive p(t) per node; every spec in
/// `fire` is applied to the state before derivatives are evaluated.
inline std::vector<NodeState> euler_step(std::span<const NodeState> state, const JRParams& params,
                                         const SCMatrix& sc_norm, std::span<const double> noise,
                                         std::span<const PerturbationSpec> fire = {}, std::size_t step = 0) {
  require(noise.size() == state.size(), ErrorKind::shape_mismatch, "noise vector length must equal node count");
  std::vector<NodeState> next(state.begin(), state.end());
  for (const auto& kick : fire) apply_perturbation(next, kick);
  std::vector<double> z;
  detail::euler_inplace(next, params, sc_norm, noise, z, step);
  return next;
}

/// Stateful integrator over a fixed connectome with its own noise stream.
class JRNetwork {
 public:
  JRNetwork(JRParams params, const SCMatrix& sc, std::uint64_t seed)
      : params_(params), sc_(normalize(sc)), state_(sc.n), rng_(seed), drive_(params.noise_mean, params.noise_sd) {
    validate(params_);
    require(sc.n > 0, ErrorKind::invalid_argument, "connectome is empty");
    noise_.resize(sc_.n);
  }

  const JRParams& params() const { return params_; }
  const SCMatrix& normalized_sc() const { return sc_; }
  std::size_t size() const { return sc_.n; }
  std::vector<NodeState>& state() { return state_; }
  const std::vector<NodeState>& state() const { return state_; }

  /// Next n draws of the drive, node order.
  void draw_noise(std::span<double> out) {
    for (double& v : out) v = drive_(rng_);
  }

  void burn_in() {
    for (std::size_t k = 0, steps = params_.burn_in_steps(); k < steps; ++k) {
      draw_noise(noise_);
      detail::euler_inplace(state_, params_, sc_, noise_, z_, k);
    }
  }

  /// Observables of all nodes for an arbitrary state vector.
  void observe(std::span<const NodeState> s, std::span<double> out) const {
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = observable(s[i], detail::coupling(s, sc_, i), params_);
  }

  /// Integrates `s` over one output sample (downsample_factor Euler steps)
  /// using `noise` (factor × n values) and writes the recorded observable.
  void advance_sample(std::span<NodeState> s, std::span<const double> noise, std::span<double> recorded,
                      std::size_t step) {
    const std::size_t n = s.size();
    const std::size_t f = params_.downsample_factor;
    if (params_.downsample == Downsample::decimate) {
      observe(s, recorded);
    } else {
      std::fill(recorded.begin(), recorded.end(), 0.0);
    }
    for (std::size_t k = 0; k < f; ++k) {
      if (params_.downsample == Downsample::mean) {
        scratch_.resize(n);
        observe(s, scratch_);
        for (std::size_t i = 0; i < n; ++i) recorded[i] += scratch_[i] / static_cast<double>(f);
      }
      detail::euler_inplace(s, params_, sc_, noise.subspan(k * n, n), z_, step + k);
    }
  }

 private:
  JRParams params_;
  SCMatrix sc_;
  std::vector<NodeState> state_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> drive_;
  std::vector<double> noise_;
  std::vector<double> z_;
  std::vector<double> scratch_;
};

/// Integrates `n_steps` Euler steps after burn-in and records every
/// downsample_factor-th observable. Perturbations fire at their step_index
/// inside every `period`-sample window of the output.
inline TimeSeries simulate(const JRParams& params, const SCMatrix& sc, std::size_t n_steps, std::uint64_t seed,
                           std::span<const PerturbationSpec> perturbs = {}, std::size_t period = 100) {
  validate(params);
  const std::size_t f = params.downsample_factor;
  require(n_steps >= f, ErrorKind::invalid_argument,
          "n_steps (" + std::to_string(n_steps) + ") must be at least the downsample factor");
  for (const auto& kick : perturbs) {
    require(kick.region < sc.n, ErrorKind::invalid_argument, "perturbation region out of range");
    require(kick.step_index >= 1 && kick.step_index <= period, ErrorKind::invalid_argument,
            "perturbation step must lie in [1, " + std::to_string(period) + "]");
  }
  JRNetwork net(params, sc, seed);
  net.burn_in();
  const std::size_t n = sc.n;
  const std::size_t rows = n_steps / f;
  TimeSeries ts;
  ts.n_channels = n;
  ts.rate = params.output_rate();
  ts.seed = seed;
  ts.data.resize(rows * n);
  std::vector<double> noise(f * n);
  std::vector<double> rec(n);
  auto& s = net.state();
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& kick : perturbs)
      if (r % period == kick.step_index - 1) apply_perturbation(s, kick);
    net.draw_noise(noise);
    net.advance_sample(s, noise, rec, r * f);
    for (std::size_t i = 0; i < n; ++i) ts.data[r * n + i] = static_cast<float>(rec[i]);
  }
  return ts;
}

/// Windowed twin runs: for each window, one clean trajectory and one
/// perturbed trajectory per source region, all sharing the same noise draws.
struct TwinSet {
  std::size_t n = 0;
  std::size_t window_len = 100;
  std::size_t windows = 0;
  PerturbationSpec kick;  // region ignored; every region is used as source
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<float> clean;                   // windows × window_len × n
  std::vector<std::vector<float>> perturbed;  // per source, same layout as clean

  std::size_t context_len() const { return kick.step_index; }
  std::size_t horizon() const { return window_len - kick.step_index; }
  std::span<const float> clean_window(std::size_t w) const {
    return {clean.data() + w * window_len * n, window_len * n};
  }
  std::span<const float> perturbed_window(std::size_t source, std::size_t w) const {
    return {perturbed[source].data() + w * window_len * n, window_len * n};
  }
};

struct GroundTruth {
  ECTensor ec;
  TwinSet twins;
};

/// Runs `n_samples` consecutive windows of the unperturbed system and, at
/// `kick.step_index` of each window, branches one twin per source region.
/// δ[t'][target][source] is the mean twin difference at steps
/// step_index + t', accumulated in double precision in window order.
inline GroundTruth generate_twins(const JRParams& params, const SCMatrix& sc, std::size_t n_samples,
                                  const PerturbationSpec& kick, std::uint64_t seed, std::size_t window_len = 100) {
  require(n_samples >= 1, ErrorKind::invalid_argument, "ground-truth EC needs at least one sample");
  require(kick.step_index >= 1 && kick.step_index < window_len, ErrorKind::invalid_argument,
          "perturbation step must lie in [1, window_len)");
  const std::size_t n = sc.n;
  const std::size_t f = params.downsample_factor;
  const std::size_t s_row = kick.step_index - 1;  // 0-based row of the kick
  const std::size_t seg_rows = window_len - s_row;
  const std::size_t horizon = window_len - kick.step_index;

  JRNetwork net(params, sc, seed);
  net.burn_in();

  GroundTruth gt;
  gt.ec = ECTensor(horizon, n);
  gt.ec.magnitude = kick.magnitude;
  gt.ec.mode = ECMode::ground_truth;
  gt.ec.samples = n_samples;
  auto& tw = gt.twins;
  tw.n = n;
  tw.window_len = window_len;
  tw.windows = n_samples;
  tw.kick = kick;
  tw.rate = params.output_rate();
  tw.seed = seed;
  tw.clean.resize(n_samples * window_len * n);
  tw.perturbed.assign(n, std::vector<float>(n_samples * window_len * n));

  std::vector<double> noise(f * n);
  std::vector<double> seg_noise(seg_rows * f * n);
  std::vector<double> rec(n);
  std::vector<double> clean_seg(seg_rows * n);
  std::vector<double> sum(horizon * n * n, 0.0);
  auto& s = net.state();
  std::size_t step = 0;

  for (std::size_t w = 0; w < n_samples; ++w) {
    float* clean_w = tw.clean.data() + w * window_len * n;
    for (std::size_t r = 0; r < s_row; ++r, step += f) {
      net.draw_noise(noise);
      net.advance_sample(s, noise, rec, step);
      for (std::size_t i = 0; i < n; ++i) clean_w[r * n + i] = static_cast<float>(rec[i]);
    }
    const std::vector<NodeState> snapshot = s;
    net.draw_noise(seg_noise);
    for (std::size_t r = 0; r < seg_rows; ++r) {
      net.advance_sample(s, std::span<const double>(seg_noise).subspan(r * f * n, f * n), rec, step + r * f);
      for (std::size_t i = 0; i < n; ++i) {
        clean_seg[r * n + i] = rec[i];
        clean_w[(s_row + r) * n + i] = static_cast<float>(rec[i]);
      }
    }
    for (std::size_t src = 0; src < n; ++src) {
      float* pert_w = tw.perturbed[src].data() + w * window_len * n;
      std::copy(clean_w, clean_w + s_row * n, pert_w);
      std::vector<NodeState> twin = snapshot;
      PerturbationSpec k = kick;
      k.region = src;
      apply_perturbation(twin, k);
      for (std::size_t r = 0; r < seg_rows; ++r) {
        net.advance_sample(twin, std::span<const double>(seg_noise).subspan(r * f * n, f * n), rec, step + r * f);
        for (std::size_t i = 0; i < n; ++i) {
          pert_w[(s_row + r) * n + i] = static_cast<float>(rec[i]);
          if (r >= 1) sum[((r - 1) * n + i) * n + src] += rec[i] - clean_seg[r * n + i];
        }
      }
    }
    step += seg_rows * f;
  }
  for (std::size_t k = 0; k < sum.size(); ++k) gt.ec.delta[k] = sum[k] / static_cast<double>(n_samples);
  return gt;
}

inline ECTensor ground_truth_ec(const JRParams& params, const SCMatrix& sc, std::size_t n_samples,
                                const PerturbationSpec& kick, std::uint64_t seed, std::size_t window_len = 100) {
  return generate_twins(params, sc, n_samples, kick, seed, window_len).ec;
}

/// Per-trial twin differences for one (source, target) pair: trials × horizon,
/// index 0 being the first step after the kick.
inline std::vector<std::vector<double>> twin_responses(const TwinSet& tw, std::size_t source, std::size_t target) {
  require(source < tw.n && target < tw.n, ErrorKind::invalid_argument, "region index out of range");
  std::vector<std::vector<double>> trials(tw.windows, std::vector<double>(tw.horizon()));
  for (std::size_t w = 0; w < tw.windows; ++w) {
    const auto c = tw.clean_window(w);
    const auto p = tw.perturbed_window(source, w);
    for (std::size_t t = 0; t < tw.horizon(); ++t) {
      const std::size_t idx = (tw.context_len() + t) * tw.n + target;
      trials[w][t] = static_cast<double>(p[idx]) - static_cast<double>(c[idx]);
    }
  }
  return trials;
}

}  // namespace npi
