#pragma once

// Multichannel sampled signal plus its NPITS binary and CSV encodings.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "npi/binary_io.hpp"
#include "npi/error.hpp"

namespace npi {

/// steps × n_channels samples stored row-major.
struct TimeSeries {
  std::size_t n_channels = 0;
  std::vector<float> data;
  double rate = 0.0;  // samples per second
  std::uint64_t seed = 0;

  std::size_t steps() const { return n_channels ? data.size() / n_channels : 0; }
  float at(std::size_t t, std::size_t c) const { return data[t * n_channels + c]; }
  std::span<const float> row(std::size_t t) const { return {data.data() + t * n_channels, n_channels}; }

  bool operator==(const TimeSeries&) const = default;
};

inline constexpr std::uint32_t kTimeSeriesVersion = 1;

inline void validate(const TimeSeries& ts) {
  require(ts.n_channels > 0, ErrorKind::validation, "time series has no channels");
  require(ts.data.size() % ts.n_channels == 0, ErrorKind::shape_mismatch,
          "time series buffer is not a whole number of rows");
  for (std::size_t i = 0; i < ts.data.size(); ++i)
    require(std::isfinite(ts.data[i]), ErrorKind::validation,
            "time series value at step " + std::to_string(i / ts.n_channels) + ", channel " +
                std::to_string(i % ts.n_channels) + " is not finite");
}

inline void write_timeseries(std::ostream& os, const TimeSeries& ts) {
  bin::put_bytes(os, "NPITS");
  bin::put_u32(os, kTimeSeriesVersion);
  bin::put_u32(os, static_cast<std::uint32_t>(ts.n_channels));
  bin::put_u64(os, ts.steps());
  bin::put_f64(os, ts.rate);
  bin::put_u64(os, ts.seed);
  bin::put_f32s(os, ts.data);
}

inline TimeSeries read_timeseries(std::istream& is) {
  bin::expect_magic(is, "NPITS", "time series");
  const auto version = bin::get_u32(is);
  require(version == kTimeSeriesVersion, ErrorKind::io,
          "unsupported time series version " + std::to_string(version));
  TimeSeries ts;
  ts.n_channels = bin::get_u32(is);
  const auto steps = bin::get_u64(is);
  ts.rate = bin::get_f64(is);
  ts.seed = bin::get_u64(is);
  require(ts.n_channels > 0, ErrorKind::io, "time series header declares zero channels");
  ts.data.resize(static_cast<std::size_t>(steps) * ts.n_channels);
  bin::get_f32s(is, ts.data);
  return ts;
}

inline void save_timeseries(const TimeSeries& ts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  write_timeseries(out, ts);
  require(static_cast<bool>(out), ErrorKind::io, "failed while writing " + path.string());
}

inline TimeSeries load_timeseries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open time series " + path.string());
  return read_timeseries(in);
}

/// One column per channel with a "ch0,ch1,..." header.
inline void export_timeseries_csv(const TimeSeries& ts, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  for (std::size_t c = 0; c < ts.n_channels; ++c) out << (c ? "," : "") << "ch" << c;
  out << '\n';
  out.precision(9);
  for (std::size_t t = 0; t < ts.steps(); ++t) {
    for (std::size_t c = 0; c < ts.n_channels; ++c) out << (c ? "," : "") << ts.at(t, c);
    out << '\n';
  }
}

}  // namespace npi
