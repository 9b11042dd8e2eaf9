#pragma once

// NPIC checkpoint files.
//
//   "NPIC" | u32 version | u32 architecture tag
//   u32 hidden, n_channels, context_len, horizon, layers, kernel, heads | u64 seed
//   u32 record count, then per record:
//     u32 name length | name bytes | u32 ndim | u64 dims[ndim] | f32 values
//   u32 has_normalization [| f64 mean[n] | f64 scale[n]]
//
// All integers and floats little-endian.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "npi/binary_io.hpp"
#include "npi/dataset.hpp"
#include "npi/forecasters.hpp"

namespace npi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Forecaster<float> model;
  std::optional<Normalization> normalization;
};

inline void save_checkpoint(const Forecaster<float>& model, const std::optional<Normalization>& norm,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write checkpoint " + path.string());
  const auto& c = model.config();
  bin::put_bytes(out, "NPIC");
  bin::put_u32(out, kCheckpointVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(c.kind));
  for (std::size_t v : {c.hidden, c.n_channels, c.context_len, c.horizon, c.layers, c.kernel, c.heads})
    bin::put_u32(out, static_cast<std::uint32_t>(v));
  bin::put_u64(out, c.seed);
  bin::put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, t] : model.parameters()) {
    bin::put_u32(out, static_cast<std::uint32_t>(name.size()));
    bin::put_bytes(out, name);
    bin::put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) bin::put_u64(out, d);
    bin::put_f32s(out, t.values());
  }
  bin::put_u32(out, norm ? 1u : 0u);
  if (norm) {
    for (double v : norm->mean) bin::put_f64(out, v);
    for (double v : norm->scale) bin::put_f64(out, v);
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed while writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open checkpoint " + path.string());
  bin::expect_magic(in, "NPIC", path.string());
  const auto version = bin::get_u32(in);
  require(version == kCheckpointVersion, ErrorKind::io, "unsupported checkpoint version " + std::to_string(version));
  ForecasterConfig c;
  const auto tag = bin::get_u32(in);
  require(tag <= 4, ErrorKind::io, "unknown architecture tag " + std::to_string(tag));
  c.kind = static_cast<ModelKind>(tag);
  c.hidden = bin::get_u32(in);
  c.n_channels = bin::get_u32(in);
  c.context_len = bin::get_u32(in);
  c.horizon = bin::get_u32(in);
  c.layers = bin::get_u32(in);
  c.kernel = bin::get_u32(in);
  c.heads = bin::get_u32(in);
  c.seed = bin::get_u64(in);
  Checkpoint ck{Forecaster<float>(c), std::nullopt};
  const auto records = bin::get_u32(in);
  require(records == ck.model.parameters().size(), ErrorKind::io,
          "checkpoint holds " + std::to_string(records) + " tensors, architecture needs " +
              std::to_string(ck.model.parameters().size()));
  for (std::uint32_t r = 0; r < records; ++r) {
    const auto name_len = bin::get_u32(in);
    require(name_len <= 256, ErrorKind::io, "corrupt checkpoint: tensor name of " + std::to_string(name_len) + " bytes");
    const std::string name = bin::get_bytes(in, name_len);
    require(ck.model.has_parameter(name), ErrorKind::io,
            "checkpoint tensor '" + name + "' does not belong to a " + std::string(to_string(c.kind)) + " model");
    auto& t = ck.model.parameter(name);
    const auto ndim = bin::get_u32(in);
    ad::Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(bin::get_u64(in));
    require(shape == t.shape(), ErrorKind::shape_mismatch,
            "checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", expected " + shape_str(t.shape()));
    bin::get_f32s(in, t.data());
  }
  if (bin::get_u32(in) == 1u) {
    Normalization norm;
    norm.mean.resize(c.n_channels);
    norm.scale.resize(c.n_channels);
    for (auto& v : norm.mean) v = bin::get_f64(in);
    for (auto& v : norm.scale) v = bin::get_f64(in);
    ck.normalization = std::move(norm);
  }
  return ck;
}

}  // namespace npi
