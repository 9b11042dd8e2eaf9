#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every op returns a new Tensor whose node remembers its parents and a
// closure that maps the output gradient onto parent gradients. backward()
// walks the graph once in reverse topological order and hands back the
// gradients of every reachable leaf that requires them; the graph is freed
// afterwards, so each loss can be differentiated exactly once.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "npi/error.hpp"

namespace npi::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <class T>
struct Node;

template <class T>
using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<std::vector<T>* const> parent_grads)>;

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  bool is_leaf() const { return !backward; }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      fail(ErrorKind::shape_mismatch, "tensor of shape " + shape_str(shape) + " cannot hold " +
                                          std::to_string(values.size()) + " values");
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T v) {
    const auto count = numel(shape);
    return from(std::move(shape), std::vector<T>(count, v));
  }
  static Tensor parameter(Shape shape, std::vector<T> values) { return from(std::move(shape), std::move(values), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const T> values() const { return node_->value; }
  /// Mutable storage, for leaves only (optimizer updates, initialization).
  std::span<T> data() { return node_->value; }
  T item() const {
    if (size() != 1) fail(ErrorKind::shape_mismatch, "item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Node<T>* id() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Same values, no graph history.
  Tensor detach() const { return from(shape(), node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Gradients of leaves reached by one backward pass.
template <class T>
class Gradients {
 public:
  /// Gradient of `t`; zeros if `t` requires grad but was not reached.
  std::vector<T> of(const Tensor<T>& t) const {
    if (!t.requires_grad())
      fail(ErrorKind::invalid_argument, "gradient requested for a tensor that does not require grad");
    const auto it = grads_.find(t.id());
    if (it == grads_.end()) return std::vector<T>(t.size(), T(0));
    return it->second;
  }
  bool reached(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }
  std::size_t count() const { return grads_.size(); }

  std::unordered_map<const Node<T>*, std::vector<T>>& raw() { return grads_; }

 private:
  std::unordered_map<const Node<T>*, std::vector<T>> grads_;
};

namespace detail {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const MatR<T>>;
template <class T>
using MMap = Eigen::Map<MatR<T>>;
template <class T>
using CRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using MRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using CCol = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using MCol = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Builds the result node, recording history only when some parent needs it.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs && grad_mode()) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <class T>
void check_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) fail(ErrorKind::invalid_argument, std::string(op) + ": undefined tensor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Binary ops accept equal shapes or one operand whose
// shape is a suffix of the other's; the smaller one is broadcast over the
// leading dimensions and its gradient is summed back.

namespace detail {

template <class T, class F, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  check_defined(a, name);
  check_defined(b, name);
  const bool a_big = is_suffix(b.shape(), a.shape());
  if (!a_big && !is_suffix(a.shape(), b.shape()))
    fail(ErrorKind::shape_mismatch, std::string(name) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                                        shape_str(b.shape()));
  const Shape out_shape = a_big ? a.shape() : b.shape();
  const std::size_t total = numel(out_shape);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<T> out(total);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < total; ++i) out[i] = f(av[i % na], bv[i % nb]);
  const Node<T>* pa = a.node().get();
  const Node<T>* pb = b.node().get();
  return make_result<T>(out_shape, std::move(out), {a, b},
                        [pa, pb, total, na, nb, da, db](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                          for (std::size_t i = 0; i < total; ++i) {
                            const T x = pa->value[i % na], y = pb->value[i % nb];
                            if (pg[0]) (*pg[0])[i % na] += g[i] * da(x, y);
                            if (pg[1]) (*pg[1])[i % nb] += g[i] * db(x, y);
                          }
                        });
}

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, D d_from_in_out) {
  check_defined(x, name);
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto result = make_result<T>(x.shape(), std::move(out), {x}, {});
  if (result.requires_grad()) {
    const Node<T>* px = x.node().get();
    const Node<T>* py = result.node().get();
    result.node()->backward = [px, py, d_from_in_out](std::span<const T> g, std::span<std::vector<T>* const> pg) {
      if (!pg[0]) return;
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * d_from_in_out(px->value[i], py->value[i]);
    };
  }
  return result;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

/// s·x + c elementwise.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T s, T c = T(0)) {
  return detail::unary(x, "affine", [s, c](T v) { return s * v + c; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return affine(x, s, T(0));
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> logistic(const Tensor<T>& x) {
  return detail::unary(
      x, "logistic", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra.

/// a[..., k] · b[k, n] → [..., n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_defined(a, "matmul");
  detail::check_defined(b, "matmul");
  if (a.ndim() < 1 || b.ndim() != 2 || a.shape().back() != b.dim(0))
    fail(ErrorKind::shape_mismatch, "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t k = b.dim(0), n = b.dim(1), m = a.size() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(m * n);
  detail::MMap<T>(out.data(), m, n).noalias() = detail::CMap<T>(a.values().data(), m, k) * detail::CMap<T>(b.values().data(), k, n);
  const Node<T>* pa = a.node().get();
  const Node<T>* pb = b.node().get();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {a, b},
                                [pa, pb, m, k, n](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  const detail::CMap<T> G(g.data(), m, n);
                                  if (pg[0])
                                    detail::MMap<T>(pg[0]->data(), m, k).noalias() +=
                                        G * detail::CMap<T>(pb->value.data(), k, n).transpose();
                                  if (pg[1])
                                    detail::MMap<T>(pg[1]->data(), k, n).noalias() +=
                                        detail::CMap<T>(pa->value.data(), m, k).transpose() * G;
                                });
}

/// x[..., in] · Wᵀ + bias, with W[out, in] and bias[out] (bias may be undefined).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {}) {
  detail::check_defined(x, "linear");
  detail::check_defined(w, "linear");
  if (w.ndim() != 2 || x.ndim() < 1 || x.shape().back() != w.dim(1))
    fail(ErrorKind::shape_mismatch, "linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const std::size_t in = w.dim(1), out_dim = w.dim(0), m = x.size() / in;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != out_dim))
    fail(ErrorKind::shape_mismatch, "linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<T> out(m * out_dim);
  detail::MMap<T> Y(out.data(), m, out_dim);
  Y.noalias() = detail::CMap<T>(x.values().data(), m, in) * detail::CMap<T>(w.values().data(), out_dim, in).transpose();
  if (has_bias) Y.rowwise() += detail::CRow<T>(bias.values().data(), out_dim);
  const Node<T>* px = x.node().get();
  const Node<T>* pw = w.node().get();
  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return detail::make_result<T>(std::move(out_shape), std::move(out), std::move(parents),
                                [px, pw, m, in, out_dim, has_bias](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  const detail::CMap<T> G(g.data(), m, out_dim);
                                  if (pg[0])
                                    detail::MMap<T>(pg[0]->data(), m, in).noalias() +=
                                        G * detail::CMap<T>(pw->value.data(), out_dim, in);
                                  if (pg[1])
                                    detail::MMap<T>(pg[1]->data(), out_dim, in).noalias() +=
                                        G.transpose() * detail::CMap<T>(px->value.data(), m, in);
                                  if (has_bias && pg[2])
                                    detail::MRow<T>(pg[2]->data(), out_dim) += G.colwise().sum();
                                });
}

/// Batched product a[B, m, k] · b[B, k, n] → [B, m, n].
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_defined(a, "bmm");
  detail::check_defined(b, "bmm");
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    fail(ErrorKind::shape_mismatch, "bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(B * m * n);
  for (std::size_t i = 0; i < B; ++i)
    detail::MMap<T>(out.data() + i * m * n, m, n).noalias() =
        detail::CMap<T>(a.values().data() + i * m * k, m, k) * detail::CMap<T>(b.values().data() + i * k * n, k, n);
  const Node<T>* pa = a.node().get();
  const Node<T>* pb = b.node().get();
  return detail::make_result<T>({B, m, n}, std::move(out), {a, b},
                                [pa, pb, B, m, k, n](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  for (std::size_t i = 0; i < B; ++i) {
                                    const detail::CMap<T> G(g.data() + i * m * n, m, n);
                                    if (pg[0])
                                      detail::MMap<T>(pg[0]->data() + i * m * k, m, k).noalias() +=
                                          G * detail::CMap<T>(pb->value.data() + i * k * n, k, n).transpose();
                                    if (pg[1])
                                      detail::MMap<T>(pg[1]->data() + i * k * n, k, n).noalias() +=
                                          detail::CMap<T>(pa->value.data() + i * m * k, m, k).transpose() * G;
                                  }
                                });
}

/// Softmax over the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  detail::check_defined(x, "softmax");
  if (x.ndim() < 1 || x.shape().back() == 0) fail(ErrorKind::shape_mismatch, "softmax: empty last axis");
  const std::size_t cols = x.shape().back(), rows = x.size() / cols;
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto result = detail::make_result<T>(x.shape(), std::move(out), {x}, {});
  if (result.requires_grad()) {
    const Node<T>* py = result.node().get();
    result.node()->backward = [py, rows, cols](std::span<const T> g, std::span<std::vector<T>* const> pg) {
      if (!pg[0]) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = py->value.data() + r * cols;
        const T* gr = g.data() + r * cols;
        T dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) (*pg[0])[r * cols + c] += y[c] * (gr[c] - dot);
      }
    };
  }
  return result;
}

/// Temporal convolution. x[B, C_in, L], w[C_out, C_in, K], bias[C_out] (optional).
/// Zero padding of `padding` samples on both ends; L_out = (L + 2p − K)/stride + 1.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {}, std::size_t stride = 1,
                 std::size_t padding = 0) {
  detail::check_defined(x, "conv1d");
  detail::check_defined(w, "conv1d");
  if (x.ndim() != 3 || w.ndim() != 3 || x.dim(1) != w.dim(1))
    fail(ErrorKind::shape_mismatch, "conv1d: input " + shape_str(x.shape()) + " does not match kernel " + shape_str(w.shape()));
  if (stride == 0) fail(ErrorKind::invalid_argument, "conv1d: stride must be positive");
  const std::size_t B = x.dim(0), cin = x.dim(1), L = x.dim(2), cout = w.dim(0), K = w.dim(2);
  if (L + 2 * padding < K) fail(ErrorKind::shape_mismatch, "conv1d: kernel longer than padded input");
  const std::size_t lout = (L + 2 * padding - K) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != cout))
    fail(ErrorKind::shape_mismatch, "conv1d: bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(w.shape()));

  // cols[(ci·K + kk), t] = x[b, ci, t·stride + kk − padding]
  auto im2col = [=](const T* xb, T* cols) {
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t kk = 0; kk < K; ++kk) {
        T* row = cols + (ci * K + kk) * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(padding);
          row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(L)) ? xb[ci * L + static_cast<std::size_t>(src)] : T(0);
        }
      }
  };

  std::vector<T> out(B * cout * lout);
  std::vector<T> cols(cin * K * lout);
  const detail::CMap<T> W(w.values().data(), cout, cin * K);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(x.values().data() + b * cin * L, cols.data());
    detail::MMap<T> Y(out.data() + b * cout * lout, cout, lout);
    Y.noalias() = W * detail::CMap<T>(cols.data(), cin * K, lout);
    if (has_bias) Y.colwise() += detail::CCol<T>(bias.values().data(), cout);
  }
  const Node<T>* px = x.node().get();
  const Node<T>* pw = w.node().get();
  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return detail::make_result<T>(
      {B, cout, lout}, std::move(out), std::move(parents),
      [=](std::span<const T> g, std::span<std::vector<T>* const> pg) {
        std::vector<T> col(cin * K * lout);
        std::vector<T> dcol(cin * K * lout);
        const detail::CMap<T> Wb(pw->value.data(), cout, cin * K);
        for (std::size_t b = 0; b < B; ++b) {
          const detail::CMap<T> G(g.data() + b * cout * lout, cout, lout);
          if (pg[1]) {
            im2col(px->value.data() + b * cin * L, col.data());
            detail::MMap<T>(pg[1]->data(), cout, cin * K).noalias() +=
                G * detail::CMap<T>(col.data(), cin * K, lout).transpose();
          }
          if (has_bias && pg[2]) detail::MCol<T>(pg[2]->data(), cout) += G.rowwise().sum();
          if (pg[0]) {
            detail::MMap<T>(dcol.data(), cin * K, lout).noalias() = Wb.transpose() * G;
            T* dx = pg[0]->data() + b * cin * L;
            for (std::size_t ci = 0; ci < cin; ++ci)
              for (std::size_t kk = 0; kk < K; ++kk) {
                const T* row = dcol.data() + (ci * K + kk) * lout;
                for (std::size_t t = 0; t < lout; ++t) {
                  const std::ptrdiff_t src =
                      static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(padding);
                  if (src >= 0 && src < static_cast<std::ptrdiff_t>(L)) dx[ci * L + static_cast<std::size_t>(src)] += row[t];
                }
              }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::check_defined(x, "reshape");
  if (numel(shape) != x.size())
    fail(ErrorKind::shape_mismatch, "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), {x},
                                [](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                                });
}

/// Swaps the last two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::check_defined(x, "transpose");
  if (x.ndim() < 2) fail(ErrorKind::shape_mismatch, "transpose: need at least 2 axes, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(x.ndim() - 2), c = x.dim(x.ndim() - 1), batch = x.size() / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<T> out(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    detail::MMap<T>(out.data() + b * r * c, c, r) = detail::CMap<T>(x.values().data() + b * r * c, r, c).transpose();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {x},
                                [batch, r, c](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t b = 0; b < batch; ++b)
                                    detail::MMap<T>(pg[0]->data() + b * r * c, r, c) +=
                                        detail::CMap<T>(g.data() + b * r * c, c, r).transpose();
                                });
}

/// Elements [start, start + len) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
  detail::check_defined(x, "slice");
  if (axis >= x.ndim() || start + len > x.dim(axis))
    fail(ErrorKind::shape_mismatch, "slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                        ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  const auto& s = x.shape();
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + (o * full + start) * inner, len * inner, out.data() + o * len * inner);
  return detail::make_result<T>(std::move(out_shape), std::move(out), {x},
                                [outer, inner, full, start, len](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  if (!pg[0]) return;
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t i = 0; i < len * inner; ++i)
                                      (*pg[0])[(o * full + start) * inner + i] += g[o * len * inner + i];
                                });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorKind::invalid_argument, "concat: no inputs");
  for (const auto& p : parts) detail::check_defined(p, "concat");
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) fail(ErrorKind::shape_mismatch, "concat: axis out of range for " + shape_str(s0));
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = (d == axis) || s[d] == s0[d];
    if (!ok) fail(ErrorKind::shape_mismatch, "concat: shapes " + shape_str(s0) + " and " + shape_str(s) + " differ off-axis");
    widths.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = numel(Shape(s0.begin(), s0.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = numel(Shape(s0.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s0.end()));
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * widths[k] * inner, widths[k] * inner, out.data() + (o * total + offset) * inner);
    offset += widths[k];
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), parts,
                                [outer, inner, total, widths](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    if (pg[k])
                                      for (std::size_t o = 0; o < outer; ++o)
                                        for (std::size_t i = 0; i < widths[k] * inner; ++i)
                                          (*pg[k])[o * widths[k] * inner + i] += g[(o * total + off) * inner + i];
                                    off += widths[k];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  detail::check_defined(x, "sum");
  T total = 0;
  for (T v : x.values()) total += v;
  return detail::make_result<T>({1}, {total}, {x}, [](std::span<const T> g, std::span<std::vector<T>* const> pg) {
    if (!pg[0]) return;
    for (auto& v : *pg[0]) v += g[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Mean squared difference over all entries; shapes must be equal.
template <class T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_defined(pred, "mse");
  detail::check_defined(target, "mse");
  if (pred.shape() != target.shape())
    fail(ErrorKind::shape_mismatch, "mse: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  const std::size_t count = pred.size();
  T total = 0;
  const auto p = pred.values();
  const auto t = target.values();
  for (std::size_t i = 0; i < count; ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  const Node<T>* pp = pred.node().get();
  const Node<T>* pt = target.node().get();
  return detail::make_result<T>({1}, {total / static_cast<T>(count)}, {pred, target},
                                [pp, pt, count](std::span<const T> g, std::span<std::vector<T>* const> pg) {
                                  const T k = T(2) * g[0] / static_cast<T>(count);
                                  for (std::size_t i = 0; i < count; ++i) {
                                    const T d = pp->value[i] - pt->value[i];
                                    if (pg[0]) (*pg[0])[i] += k * d;
                                    if (pg[1]) (*pg[1])[i] -= k * d;
                                  }
                                });
}

// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Single-shot: the traversed graph is
/// released and differentiating the same loss again is an error.
template <class T>
Gradients<T> backward(const Tensor<T>& loss) {
  detail::check_defined(loss, "backward");
  if (loss.size() != 1) fail(ErrorKind::shape_mismatch, "backward: loss must be scalar, got " + shape_str(loss.shape()));
  Node<T>* root = loss.node().get();
  if (root->consumed) fail(ErrorKind::invalid_argument, "backward: graph already consumed by a previous call");
  Gradients<T> result;
  root->consumed = true;
  if (!root->requires_grad) return result;

  // Iterative post-order DFS → topological order (parents before children).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> alive;  // holds nodes until the sweep ends
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& owner = node->parents[next++];
      Node<T>* p = owner.get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        alive.push_back(owner);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Node<T>*, std::vector<T>> grads;
  grads[root] = {T(1)};
  std::vector<std::vector<T>*> pgs;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf()) continue;
    auto git = grads.find(node);
    if (git != grads.end()) {
      const std::vector<T> g = std::move(git->second);
      grads.erase(git);
      pgs.assign(node->parents.size(), nullptr);
      for (std::size_t k = 0; k < node->parents.size(); ++k) {
        Node<T>* p = node->parents[k].get();
        if (!p->requires_grad) continue;
        auto& slot = grads[p];
        if (slot.empty()) slot.assign(p->value.size(), T(0));
        pgs[k] = &slot;
      }
      node->backward(g, pgs);
    }
    node->consumed = true;
    node->backward = nullptr;
    node->parents.clear();
  }
  for (auto& [node, g] : grads)
    if (node->is_leaf()) result.raw().emplace(node, std::move(g));
  return result;
}

}  // namespace npi::ad
