#pragma once

// Time-resolved effective connectivity and its NPIEC binary encoding.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "npi/binary_io.hpp"
#include "npi/error.hpp"

namespace npi {

enum class ECMode : std::uint32_t { ground_truth = 0, generative = 1, direct = 2 };

inline std::string_view to_string(ECMode m) {
  switch (m) {
    case ECMode::ground_truth: return "ground_truth";
    case ECMode::generative: return "generative";
    case ECMode::direct: return "direct";
  }
  return "unknown";
}

inline ECMode parse_ec_mode(std::string_view s) {
  if (s == "ground_truth") return ECMode::ground_truth;
  if (s == "generative") return ECMode::generative;
  if (s == "direct") return ECMode::direct;
  fail(ErrorKind::invalid_argument, "unknown perturbation mode '" + std::string(s) + "'");
}

/// delta[t'][target][source] for horizon steps t' = 1..horizon (stored 0-based).
struct ECTensor {
  std::size_t horizon = 0;
  std::size_t n = 0;
  std::vector<double> delta;
  double magnitude = 0.0;  // the Δ that produced it
  ECMode mode = ECMode::ground_truth;
  std::uint64_t samples = 0;

  ECTensor() = default;
  ECTensor(std::size_t steps, std::size_t nodes) : horizon(steps), n(nodes), delta(steps * nodes * nodes, 0.0) {}

  double& at(std::size_t t, std::size_t target, std::size_t source) { return delta[(t * n + target) * n + source]; }
  double at(std::size_t t, std::size_t target, std::size_t source) const {
    return delta[(t * n + target) * n + source];
  }

  /// Slice at 1-based horizon step.
  Eigen::MatrixXd slice(std::size_t t_prime) const {
    require(t_prime >= 1 && t_prime <= horizon, ErrorKind::invalid_argument,
            "horizon step " + std::to_string(t_prime) + " outside [1, " + std::to_string(horizon) + "]");
    Eigen::MatrixXd m(n, n);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t a = 0; a < n; ++a) m(b, a) = at(t_prime - 1, b, a);
    return m;
  }
};

inline constexpr std::uint32_t kECTensorVersion = 1;

inline void save_ec(const ECTensor& ec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  bin::put_bytes(out, "NPIEC");
  bin::put_u32(out, kECTensorVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(ec.horizon));
  bin::put_u32(out, static_cast<std::uint32_t>(ec.n));
  bin::put_f64(out, ec.magnitude);
  bin::put_u32(out, static_cast<std::uint32_t>(ec.mode));
  bin::put_u64(out, ec.samples);
  std::vector<float> payload(ec.delta.begin(), ec.delta.end());
  bin::put_f32s(out, payload);
  require(static_cast<bool>(out), ErrorKind::io, "failed while writing " + path.string());
}

inline ECTensor load_ec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open EC file " + path.string());
  bin::expect_magic(in, "NPIEC", path.string());
  const auto version = bin::get_u32(in);
  require(version == kECTensorVersion, ErrorKind::io, "unsupported EC file version " + std::to_string(version));
  ECTensor ec;
  ec.horizon = bin::get_u32(in);
  ec.n = bin::get_u32(in);
  ec.magnitude = bin::get_f64(in);
  const auto tag = bin::get_u32(in);
  require(tag <= 2, ErrorKind::io, "unknown mode tag " + std::to_string(tag) + " in " + path.string());
  ec.mode = static_cast<ECMode>(tag);
  ec.samples = bin::get_u64(in);
  std::vector<float> payload(ec.horizon * ec.n * ec.n);
  bin::get_f32s(in, payload);
  ec.delta.assign(payload.begin(), payload.end());
  return ec;
}

}  // namespace npi
