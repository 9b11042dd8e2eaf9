#pragma once

// Vector autoregression by ordinary least squares, BIC order selection and
// conditional Granger causality.
//
//   y_t = c + A_1 y_{t-1} + ... + A_p y_{t-p} + e_t

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npi/error.hpp"
#include "npi/timeseries.hpp"

namespace npi {

struct VARModel {
  std::size_t p = 0;
  std::size_t n = 0;
  std::size_t t_eff = 0;          // rows used in the fit
  Eigen::VectorXd c;
  std::vector<Eigen::MatrixXd> A;  // A[i] multiplies y_{t-i-1}; rows are targets
  Eigen::MatrixXd sigma;           // residual covariance (divided by t_eff)
  Eigen::MatrixXd residuals;       // t_eff × n
  double loglik = 0;
  double bic = 0;
};

inline Eigen::MatrixXd to_matrix(const TimeSeries& ts) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ts.steps()), static_cast<Eigen::Index>(ts.n_channels));
  for (std::size_t t = 0; t < ts.steps(); ++t)
    for (std::size_t c = 0; c < ts.n_channels; ++c)
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = ts.at(t, c);
  return m;
}

namespace detail {

// Design matrix [1, y_{t-1}, ..., y_{t-p}] for t = trim .. steps-1.
inline Eigen::MatrixXd var_design(const Eigen::MatrixXd& y, std::size_t p, std::size_t trim) {
  const Eigen::Index T = y.rows() - static_cast<Eigen::Index>(trim), n = y.cols();
  Eigen::MatrixXd X(T, 1 + static_cast<Eigen::Index>(p) * n);
  X.col(0).setOnes();
  for (std::size_t lag = 1; lag <= p; ++lag)
    X.middleCols(1 + static_cast<Eigen::Index>(lag - 1) * n, n) =
        y.middleRows(static_cast<Eigen::Index>(trim - lag), T);
  return X;
}

inline Eigen::MatrixXd ols(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::size_t p) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    fail(ErrorKind::validation, "VAR regressor matrix is rank deficient at order p=" + std::to_string(p) +
                                    " (rank " + std::to_string(qr.rank()) + " of " + std::to_string(X.cols()) +
                                    "); try a smaller lag order");
  return qr.solve(Y);
}

inline VARModel fit_var_trimmed(const Eigen::MatrixXd& y, std::size_t p, std::size_t trim) {
  const std::size_t steps = static_cast<std::size_t>(y.rows()), n = static_cast<std::size_t>(y.cols());
  require(n >= 1, ErrorKind::invalid_argument, "VAR fit needs at least one channel");
  require(trim >= p && steps > trim && steps - trim > n * p + 1, ErrorKind::invalid_argument,
          "series of " + std::to_string(steps) + " steps is too short for a VAR(" + std::to_string(p) + ") on " +
              std::to_string(n) + " channels");
  const auto X = var_design(y, p, trim);
  const Eigen::MatrixXd Y = y.bottomRows(X.rows());
  const Eigen::MatrixXd B = ols(X, Y, p);  // (1 + n p) × n

  VARModel m;
  m.p = p;
  m.n = n;
  m.t_eff = static_cast<std::size_t>(X.rows());
  m.c = B.row(0).transpose();
  const auto ni = static_cast<Eigen::Index>(n);
  for (std::size_t lag = 0; lag < p; ++lag)
    m.A.push_back(B.middleRows(1 + static_cast<Eigen::Index>(lag) * ni, ni).transpose());
  m.residuals = Y - X * B;
  const double T = static_cast<double>(m.t_eff);
  m.sigma = m.residuals.transpose() * m.residuals / T;
  const double logdet = m.sigma.ldlt().vectorD().array().log().sum();
  m.loglik = -0.5 * T * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + static_cast<double>(n));
  m.bic = logdet + std::log(T) / T * static_cast<double>(p * n * n + n);
  return m;
}

}  // namespace detail

/// OLS fit of a VAR(p) with constant on rows p..end of `series` (steps × n).
inline VARModel fit_var(const Eigen::MatrixXd& series, std::size_t p) {
  return detail::fit_var_trimmed(series, p, p);
}

/// argmin of BIC over p in [1, max_p]; every candidate uses the sample left
/// after trimming the first max_p rows. Ties go to the smaller order.
inline std::size_t select_order(const Eigen::MatrixXd& series, std::size_t max_p = 12) {
  require(max_p >= 1, ErrorKind::invalid_argument, "max lag must be at least 1");
  const std::size_t steps = static_cast<std::size_t>(series.rows()), n = static_cast<std::size_t>(series.cols());
  require(steps > max_p && steps - max_p > n * max_p + 1, ErrorKind::invalid_argument,
          "series of " + std::to_string(steps) + " steps is too short for max lag " + std::to_string(max_p));
  std::size_t best_p = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t p = 1; p <= max_p; ++p) {
    const double bic = detail::fit_var_trimmed(series, p, max_p).bic;
    if (bic < best) {
      best = bic;
      best_p = p;
    }
  }
  return best_p;
}

/// Conditional Granger causality: out(i, j) = ln(σ²_i without j's lags / σ²_i full).
inline Eigen::MatrixXd gc_matrix(const Eigen::MatrixXd& series, std::size_t p) {
  require(p >= 1, ErrorKind::invalid_argument, "Granger causality needs lag order p >= 1");
  const auto full = fit_var(series, p);
  const Eigen::Index n = series.cols();
  const auto X = detail::var_design(series, p, p);
  const Eigen::MatrixXd Y = series.bottomRows(X.rows());
  const double T = static_cast<double>(X.rows());
  Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Regressors without any lag of channel j.
    Eigen::MatrixXd Xr(X.rows(), X.cols() - static_cast<Eigen::Index>(p));
    Xr.col(0) = X.col(0);
    Eigen::Index k = 1;
    for (std::size_t lag = 0; lag < p; ++lag)
      for (Eigen::Index c = 0; c < n; ++c)
        if (c != j) Xr.col(k++) = X.col(1 + static_cast<Eigen::Index>(lag) * n + c);
    Eigen::MatrixXd Br;
    try {
      Br = detail::ols(Xr, Y, p);
    } catch (const Error&) {
      fail(ErrorKind::validation, "restricted VAR fit without channel " + std::to_string(j) + " is singular");
    }
    const Eigen::MatrixXd E = Y - Xr * Br;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j) continue;
      const double restricted = E.col(i).squaredNorm() / T;
      gc(i, j) = std::log(restricted / full.sigma(i, i));
    }
  }
  return gc;
}

}  // namespace npi
