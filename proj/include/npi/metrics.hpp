#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npi/ec_tensor.hpp"
#include "npi/error.hpp"

namespace npi {

/// Mean over all entries of the squared difference.
inline double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::shape_mismatch,
          "mse: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) + " vs target " +
              std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  require(pred.size() > 0, ErrorKind::invalid_argument, "mse: empty input");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::shape_mismatch, "pearson: length mismatch");
  require(x.size() >= 3, ErrorKind::invalid_argument, "pearson: need at least 3 paired values");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0 && syy > 0, ErrorKind::invalid_argument, "pearson: zero variance in an input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace detail {

inline std::vector<double> off_diagonal(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) out.push_back(m(i, j));
  return out;
}

inline std::vector<double> off_diagonal(const ECTensor& ec, std::size_t t_begin, std::size_t t_end) {
  std::vector<double> out;
  for (std::size_t t = t_begin; t < t_end; ++t)
    for (std::size_t b = 0; b < ec.n; ++b)
      for (std::size_t a = 0; a < ec.n; ++a)
        if (a != b) out.push_back(ec.at(t, b, a));
  return out;
}

inline void check_same(const ECTensor& x, const ECTensor& y) {
  require(x.horizon == y.horizon && x.n == y.n, ErrorKind::shape_mismatch,
          "EC tensors differ in shape: " + std::to_string(x.horizon) + "x" + std::to_string(x.n) + " vs " +
              std::to_string(y.horizon) + "x" + std::to_string(y.n));
}

}  // namespace detail

/// Pearson r between the off-diagonal entries of two square matrices.
inline double ec_correlation(const Eigen::MatrixXd& est, const Eigen::MatrixXd& real) {
  require(est.rows() == real.rows() && est.cols() == real.cols() && est.rows() == est.cols(), ErrorKind::shape_mismatch,
          "ec_correlation: matrices must be square and of equal size");
  return pearson(detail::off_diagonal(est), detail::off_diagonal(real));
}

/// Pearson r pooled over all horizon steps and off-diagonal pairs.
inline double ec_correlation(const ECTensor& est, const ECTensor& real) {
  detail::check_same(est, real);
  return pearson(detail::off_diagonal(est, 0, est.horizon), detail::off_diagonal(real, 0, real.horizon));
}

/// Correlation at each horizon step; NaN where either slice has no variance.
inline std::vector<double> ec_correlation_per_step(const ECTensor& est, const ECTensor& real) {
  detail::check_same(est, real);
  std::vector<double> out;
  for (std::size_t t = 0; t < est.horizon; ++t) {
    try {
      out.push_back(pearson(detail::off_diagonal(est, t, t + 1), detail::off_diagonal(real, t, t + 1)));
    } catch (const Error&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

/// Trial-averaged response; trials[k][t] with t = 0 the first post-kick step.
inline std::vector<double> erp(const std::vector<std::vector<double>>& trials) {
  require(!trials.empty(), ErrorKind::invalid_argument, "erp: no trials");
  const std::size_t len = trials.front().size();
  std::vector<double> out(len, 0.0);
  for (const auto& tr : trials) {
    require(tr.size() == len, ErrorKind::shape_mismatch, "erp: trials differ in length");
    for (std::size_t t = 0; t < len; ++t) out[t] += tr[t];
  }
  for (auto& v : out) v /= static_cast<double>(trials.size());
  return out;
}

/// (m − min) / (max − min). Display only.
inline Eigen::MatrixXd rescale01(const Eigen::MatrixXd& m) {
  require(m.size() > 0, ErrorKind::invalid_argument, "rescale01: empty matrix");
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  require(hi > lo, ErrorKind::invalid_argument, "rescale01: constant matrix");
  return (m.array() - lo) / (hi - lo);
}

}  // namespace npi
