#pragma once

// Sequence forecasters mapping a context window (L × n) to a horizon window
// (H × n) in one shot: temporal CNN, vanilla RNN, LSTM, GRU and a small
// Transformer encoder, all ending in a single linear readout.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "npi/error.hpp"
#include "npi/tensor.hpp"

namespace npi {

using ad::Tensor;

enum class ModelKind : std::uint32_t { cnn = 0, rnn = 1, lstm = 2, gru = 3, transformer = 4 };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cnn: return "cnn";
    case ModelKind::rnn: return "rnn";
    case ModelKind::lstm: return "lstm";
    case ModelKind::gru: return "gru";
    case ModelKind::transformer: return "transformer";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::cnn, ModelKind::rnn, ModelKind::lstm, ModelKind::gru, ModelKind::transformer})
    if (to_string(k) == s) return k;
  fail(ErrorKind::invalid_argument, "unknown model kind '" + std::string(s) + "'");
}

struct ForecasterConfig {
  ModelKind kind = ModelKind::cnn;
  std::size_t hidden = 128;
  std::size_t n_channels = 3;
  std::size_t context_len = 76;
  std::size_t horizon = 24;
  std::size_t layers = 2;
  std::size_t kernel = 5;  // cnn
  std::size_t heads = 1;   // transformer; d_k = hidden / heads
  std::uint64_t seed = 0;  // initialization

  bool operator==(const ForecasterConfig&) const = default;
};

inline void validate(const ForecasterConfig& c) {
  require(c.hidden >= 1 && c.n_channels >= 1 && c.context_len >= 1 && c.horizon >= 1 && c.layers >= 1,
          ErrorKind::invalid_argument, "forecaster dimensions must be positive");
  if (c.kind == ModelKind::cnn)
    require(c.kernel % 2 == 1, ErrorKind::invalid_argument, "cnn kernel size must be odd for same padding");
  if (c.kind == ModelKind::transformer)
    require(c.heads >= 1 && c.hidden % c.heads == 0, ErrorKind::invalid_argument,
            "transformer hidden size must be divisible by the head count");
}

/// Closed-form parameter count for a configuration.
inline std::size_t expected_parameter_count(const ForecasterConfig& c) {
  const std::size_t n = c.n_channels, H = c.hidden, out = c.horizon * n;
  std::size_t total = 0;
  switch (c.kind) {
    case ModelKind::cnn:
      for (std::size_t l = 0; l < c.layers; ++l) total += H * (l == 0 ? n : H) * c.kernel + H;
      return total + out * (H * c.context_len) + out;
    case ModelKind::rnn:
      for (std::size_t l = 0; l < c.layers; ++l) total += H * ((l == 0 ? n : H) + H + 2);
      return total + out * H + out;
    case ModelKind::lstm:
      for (std::size_t l = 0; l < c.layers; ++l) total += 4 * H * ((l == 0 ? n : H) + H + 2);
      return total + out * H + out;
    case ModelKind::gru:
      for (std::size_t l = 0; l < c.layers; ++l) total += 3 * H * ((l == 0 ? n : H) + H + 2);
      return total + out * H + out;
    case ModelKind::transformer:
      total = H * n + H;
      total += c.layers * (4 * (H * H + H) + (2 * H * H + 2 * H) + (2 * H * H + H));
      return total + out * (H * c.context_len) + out;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Cells. Weights follow the (out, in) convention: x W_ihᵀ.

template <class T>
struct RnnLayer {
  Tensor<T> W_ih, W_hh, b_ih, b_hh;
};

/// h_t = tanh(x_t W_ihᵀ + b_ih + h_{t−1} W_hhᵀ + b_hh)
template <class T>
Tensor<T> rnn_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const RnnLayer<T>& p) {
  return ad::tanh(ad::add(ad::linear(x, p.W_ih, p.b_ih), ad::linear(h_prev, p.W_hh, p.b_hh)));
}

template <class T>
struct LstmLayer {
  Tensor<T> W_ii, W_if, W_ig, W_io;
  Tensor<T> W_hi, W_hf, W_hg, W_ho;
  Tensor<T> b_ii, b_if, b_ig, b_io;
  Tensor<T> b_hi, b_hf, b_hg, b_ho;
};

template <class T>
struct LstmState {
  Tensor<T> h, c;
};

template <class T>
LstmState<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev, const LstmLayer<T>& p) {
  using namespace ad;
  const auto i = logistic(add(linear(x, p.W_ii, p.b_ii), linear(h_prev, p.W_hi, p.b_hi)));
  const auto f = logistic(add(linear(x, p.W_if, p.b_if), linear(h_prev, p.W_hf, p.b_hf)));
  const auto g = ad::tanh(add(linear(x, p.W_ig, p.b_ig), linear(h_prev, p.W_hg, p.b_hg)));
  const auto o = logistic(add(linear(x, p.W_io, p.b_io), linear(h_prev, p.W_ho, p.b_ho)));
  const auto c = add(mul(f, c_prev), mul(i, g));
  return {mul(o, ad::tanh(c)), c};
}

template <class T>
struct GruLayer {
  Tensor<T> W_ir, W_iz, W_in;
  Tensor<T> W_hr, W_hz, W_hn;
  Tensor<T> b_ir, b_iz, b_in;
  Tensor<T> b_hr, b_hz, b_hn;
};

template <class T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const GruLayer<T>& p) {
  using namespace ad;
  const auto r = logistic(add(linear(x, p.W_ir, p.b_ir), linear(h_prev, p.W_hr, p.b_hr)));
  const auto z = logistic(add(linear(x, p.W_iz, p.b_iz), linear(h_prev, p.W_hz, p.b_hz)));
  const auto cand = ad::tanh(add(linear(x, p.W_in, p.b_in), mul(r, linear(h_prev, p.W_hn, p.b_hn))));
  return add(mul(affine(z, T(-1), T(1)), cand), mul(z, h_prev));
}

/// softmax(Q Kᵀ / √d_k) V for Q[B, Tq, d_k], K[B, Tk, d_k], V[B, Tk, d_v].
/// Two-dimensional inputs are treated as a batch of one.
template <class T>
Tensor<T> attention(const Tensor<T>& Q, const Tensor<T>& K, const Tensor<T>& V) {
  if (Q.ndim() == 2 && K.ndim() == 2 && V.ndim() == 2) {
    const auto out = attention(ad::reshape(Q, {1, Q.dim(0), Q.dim(1)}), ad::reshape(K, {1, K.dim(0), K.dim(1)}),
                               ad::reshape(V, {1, V.dim(0), V.dim(1)}));
    return ad::reshape(out, {out.dim(1), out.dim(2)});
  }
  if (Q.ndim() != 3 || K.ndim() != 3 || V.ndim() != 3 || Q.dim(2) != K.dim(2) || K.dim(1) != V.dim(1) ||
      Q.dim(0) != K.dim(0) || K.dim(0) != V.dim(0))
    fail(ErrorKind::shape_mismatch, "attention: Q " + shape_str(Q.shape()) + ", K " + shape_str(K.shape()) + ", V " +
                                        shape_str(V.shape()) + " are inconsistent");
  const T inv = T(1) / std::sqrt(static_cast<T>(Q.dim(2)));
  const auto weights = ad::softmax(ad::scale(ad::bmm(Q, ad::transpose(K)), inv));
  return ad::bmm(weights, V);
}

// ---------------------------------------------------------------------------

template <class T>
class Forecaster {
 public:
  Forecaster() = default;

  explicit Forecaster(const ForecasterConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    build();
    std::mt19937_64 rng(cfg_.seed);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[k]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : params_[k].second.data()) v = static_cast<T>(u(rng));
    }
  }

  const ForecasterConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : params_) total += t.size();
    return total;
  }

  bool has_parameter(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& parameter(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorKind::invalid_argument, "no parameter named '" + name + "'");
    return params_[it->second].second;
  }
  const Tensor<T>& parameter(const std::string& name) const { return const_cast<Forecaster*>(this)->parameter(name); }

  /// Overwrites a parameter's values (shape must match).
  void set_parameter(const std::string& name, std::span<const T> values) {
    auto& t = parameter(name);
    if (values.size() != t.size())
      fail(ErrorKind::shape_mismatch, "parameter '" + name + "' expects " + std::to_string(t.size()) + " values");
    std::copy(values.begin(), values.end(), t.data().begin());
  }

  void zero_readout() {
    for (auto* name : {"readout.weight", "readout.bias"}) {
      auto d = parameter(name).data();
      std::fill(d.begin(), d.end(), T(0));
    }
  }

  /// context[B, L, n] → prediction[B, H, n]. A 2-D context is a batch of one.
  Tensor<T> forward(const Tensor<T>& context) const {
    const std::size_t n = cfg_.n_channels, L = cfg_.context_len;
    Tensor<T> x = context;
    const bool unbatched = context.ndim() == 2;
    if (unbatched) x = ad::reshape(context, {1, context.dim(0), context.dim(1)});
    if (x.ndim() != 3 || x.dim(1) != L || x.dim(2) != n)
      fail(ErrorKind::shape_mismatch, "forecaster expects context [B," + std::to_string(L) + "," + std::to_string(n) +
                                          "], got " + shape_str(context.shape()));
    const std::size_t B = x.dim(0);
    Tensor<T> flat_out;
    switch (cfg_.kind) {
      case ModelKind::cnn: flat_out = forward_cnn(x); break;
      case ModelKind::rnn: flat_out = forward_recurrent(x, ModelKind::rnn); break;
      case ModelKind::lstm: flat_out = forward_recurrent(x, ModelKind::lstm); break;
      case ModelKind::gru: flat_out = forward_recurrent(x, ModelKind::gru); break;
      case ModelKind::transformer: flat_out = forward_transformer(x); break;
    }
    for (T v : flat_out.values())
      if (!std::isfinite(v))
        fail(ErrorKind::divergence, "non-finite activation in " + std::string(to_string(cfg_.kind)) + " forward pass");
    if (unbatched) return ad::reshape(flat_out, {cfg_.horizon, n});
    return ad::reshape(flat_out, {B, cfg_.horizon, n});
  }

  template <class U>
  Forecaster<U> cast() const {
    Forecaster<U> out(cfg_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto dst = out.parameters()[k].second.data();
      const auto src = params_[k].second.values();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    }
    return out;
  }

  RnnLayer<T> rnn_layer(std::size_t l) const {
    const auto p = prefix(l);
    return {get(p + "W_ih"), get(p + "W_hh"), get(p + "b_ih"), get(p + "b_hh")};
  }
  LstmLayer<T> lstm_layer(std::size_t l) const {
    const auto p = prefix(l);
    return {get(p + "W_ii"), get(p + "W_if"), get(p + "W_ig"), get(p + "W_io"), get(p + "W_hi"), get(p + "W_hf"),
            get(p + "W_hg"), get(p + "W_ho"), get(p + "b_ii"), get(p + "b_if"), get(p + "b_ig"), get(p + "b_io"),
            get(p + "b_hi"), get(p + "b_hf"), get(p + "b_hg"), get(p + "b_ho")};
  }
  GruLayer<T> gru_layer(std::size_t l) const {
    const auto p = prefix(l);
    return {get(p + "W_ir"), get(p + "W_iz"), get(p + "W_in"), get(p + "W_hr"), get(p + "W_hz"), get(p + "W_hn"),
            get(p + "b_ir"), get(p + "b_iz"), get(p + "b_in"), get(p + "b_hr"), get(p + "b_hz"), get(p + "b_hn")};
  }

 private:
  static std::string prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }
  const Tensor<T>& get(const std::string& name) const { return parameter(name); }

  void add_param(const std::string& name, ad::Shape shape, std::size_t fan_in) {
    index_[name] = params_.size();
    const auto count = ad::numel(shape);
    params_.emplace_back(name, Tensor<T>::parameter(std::move(shape), std::vector<T>(count, T(0))));
    fan_in_.push_back(fan_in);
  }

  void build() {
    const std::size_t n = cfg_.n_channels, H = cfg_.hidden, L = cfg_.context_len, out = cfg_.horizon * n;
    switch (cfg_.kind) {
      case ModelKind::cnn:
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          const std::size_t cin = l == 0 ? n : H;
          const std::string p = "conv" + std::to_string(l + 1) + ".";
          add_param(p + "weight", {H, cin, cfg_.kernel}, cin * cfg_.kernel);
          add_param(p + "bias", {H}, cin * cfg_.kernel);
        }
        add_param("readout.weight", {out, H * L}, H * L);
        add_param("readout.bias", {out}, H * L);
        break;
      case ModelKind::rnn:
      case ModelKind::lstm:
      case ModelKind::gru: {
        std::vector<std::string> gates{""};
        if (cfg_.kind == ModelKind::lstm) gates = {"i", "f", "g", "o"};
        if (cfg_.kind == ModelKind::gru) gates = {"r", "z", "n"};
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          const std::size_t in = l == 0 ? n : H;
          const auto p = prefix(l);
          if (cfg_.kind == ModelKind::rnn) {
            add_param(p + "W_ih", {H, in}, in);
            add_param(p + "W_hh", {H, H}, H);
            add_param(p + "b_ih", {H}, in);
            add_param(p + "b_hh", {H}, H);
            continue;
          }
          for (const auto& g : gates) add_param(p + "W_i" + g, {H, in}, in);
          for (const auto& g : gates) add_param(p + "W_h" + g, {H, H}, H);
          for (const auto& g : gates) add_param(p + "b_i" + g, {H}, in);
          for (const auto& g : gates) add_param(p + "b_h" + g, {H}, H);
        }
        add_param("readout.weight", {out, H}, H);
        add_param("readout.bias", {out}, H);
        break;
      }
      case ModelKind::transformer:
        add_param("embed.weight", {H, n}, n);
        add_param("embed.bias", {H}, n);
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
          const std::string p = "block" + std::to_string(l) + ".";
          for (const char* proj : {"q", "k", "v", "o"}) {
            add_param(p + "W_" + proj, {H, H}, H);
            add_param(p + "b_" + proj, {H}, H);
          }
          add_param(p + "W_ff1", {2 * H, H}, H);
          add_param(p + "b_ff1", {2 * H}, H);
          add_param(p + "W_ff2", {H, 2 * H}, 2 * H);
          add_param(p + "b_ff2", {H}, 2 * H);
        }
        add_param("readout.weight", {out, H * L}, H * L);
        add_param("readout.bias", {out}, H * L);
        break;
    }
  }

  Tensor<T> readout(const Tensor<T>& features) const {
    return ad::linear(features, get("readout.weight"), get("readout.bias"));
  }

  Tensor<T> forward_cnn(const Tensor<T>& x) const {
    const std::size_t B = x.dim(0);
    Tensor<T> h = ad::transpose(x);  // [B, n, L]
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "conv" + std::to_string(l + 1) + ".";
      h = ad::tanh(ad::conv1d(h, get(p + "weight"), get(p + "bias"), 1, cfg_.kernel / 2));
    }
    return readout(ad::reshape(h, {B, cfg_.hidden * cfg_.context_len}));
  }

  Tensor<T> forward_recurrent(const Tensor<T>& x, ModelKind kind) const {
    const std::size_t B = x.dim(0), n = cfg_.n_channels, H = cfg_.hidden;
    std::vector<Tensor<T>> h(cfg_.layers, Tensor<T>::zeros({B, H}));
    std::vector<Tensor<T>> c(cfg_.layers, Tensor<T>::zeros({B, H}));
    std::vector<RnnLayer<T>> rnn;
    std::vector<LstmLayer<T>> lstm;
    std::vector<GruLayer<T>> gru;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      if (kind == ModelKind::rnn) rnn.push_back(rnn_layer(l));
      if (kind == ModelKind::lstm) lstm.push_back(lstm_layer(l));
      if (kind == ModelKind::gru) gru.push_back(gru_layer(l));
    }
    for (std::size_t t = 0; t < cfg_.context_len; ++t) {
      Tensor<T> in = ad::reshape(ad::slice(x, 1, t, 1), {B, n});
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        if (kind == ModelKind::rnn) {
          h[l] = rnn_cell(in, h[l], rnn[l]);
        } else if (kind == ModelKind::lstm) {
          auto s = lstm_cell(in, h[l], c[l], lstm[l]);
          h[l] = s.h;
          c[l] = s.c;
        } else {
          h[l] = gru_cell(in, h[l], gru[l]);
        }
        in = h[l];
      }
    }
    return readout(h.back());
  }

  Tensor<T> positional_encoding() const {
    const std::size_t L = cfg_.context_len, H = cfg_.hidden;
    std::vector<T> pe(L * H);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t i = 0; i < H; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(H));
        pe[t * H + i] = static_cast<T>(i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
      }
    return Tensor<T>::from({L, H}, std::move(pe));
  }

  Tensor<T> forward_transformer(const Tensor<T>& x) const {
    const std::size_t B = x.dim(0), H = cfg_.hidden, heads = cfg_.heads, dk = H / heads;
    Tensor<T> h = ad::add(ad::linear(x, get("embed.weight"), get("embed.bias")), positional_encoding());
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      const auto Q = ad::linear(h, get(p + "W_q"), get(p + "b_q"));
      const auto K = ad::linear(h, get(p + "W_k"), get(p + "b_k"));
      const auto V = ad::linear(h, get(p + "W_v"), get(p + "b_v"));
      Tensor<T> ctx;
      if (heads == 1) {
        ctx = attention(Q, K, V);
      } else {
        std::vector<Tensor<T>> parts;
        for (std::size_t k = 0; k < heads; ++k)
          parts.push_back(attention(ad::slice(Q, 2, k * dk, dk), ad::slice(K, 2, k * dk, dk), ad::slice(V, 2, k * dk, dk)));
        ctx = ad::concat(parts, 2);
      }
      h = ad::add(h, ad::linear(ctx, get(p + "W_o"), get(p + "b_o")));
      const auto ff = ad::linear(ad::relu(ad::linear(h, get(p + "W_ff1"), get(p + "b_ff1"))), get(p + "W_ff2"),
                                 get(p + "b_ff2"));
      h = ad::add(h, ff);
    }
    return readout(ad::reshape(h, {B, cfg_.context_len * H}));
  }

  ForecasterConfig cfg_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::size_t> fan_in_;
  std::map<std::string, std::size_t> index_;
};

/// Graph-free batched prediction: `contexts` holds B × L × n values; returns B × H × n.
template <class T>
std::vector<T> predict(const Forecaster<T>& model, std::span<const T> contexts, std::size_t batch = 64) {
  const auto& c = model.config();
  const std::size_t in_len = c.context_len * c.n_channels, out_len = c.horizon * c.n_channels;
  require(contexts.size() % in_len == 0, ErrorKind::shape_mismatch, "context buffer is not a whole number of windows");
  const std::size_t total = contexts.size() / in_len;
  std::vector<T> out(total * out_len);
  ad::NoGradGuard guard;
  for (std::size_t s = 0; s < total; s += batch) {
    const std::size_t b = std::min(batch, total - s);
    auto x = Tensor<T>::from({b, c.context_len, c.n_channels},
                             std::vector<T>(contexts.begin() + static_cast<std::ptrdiff_t>(s * in_len),
                                            contexts.begin() + static_cast<std::ptrdiff_t>((s + b) * in_len)));
    const auto y = model.forward(x);
    std::copy(y.values().begin(), y.values().end(), out.begin() + static_cast<std::ptrdiff_t>(s * out_len));
  }
  return out;
}

}  // namespace npi
