#pragma once

// Small statistics toolkit: moments, Kolmogorov-Smirnov distances, weighted
// least squares, autocorrelation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace fkw::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> x) {
  MeanSe out;
  out.n = x.size();
  if (x.empty()) return out;
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  out.mean = m;
  out.se = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size())) : 0.0;
  return out;
}

inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_se(x).mean;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double median(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("median of an empty sample");
  const std::size_t mid = x.size() / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid), x.end());
  const double hi = x[mid];
  if (x.size() % 2 == 1) return hi;
  const double lo = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Binomial proportion with its standard error.
inline MeanSe proportion(std::size_t hits, std::size_t trials) {
  MeanSe out;
  out.n = trials;
  if (trials == 0) return out;
  const double p = static_cast<double>(hits) / static_cast<double>(trials);
  out.mean = p;
  out.se = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return out;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// One-sample KS: sup |F_n - F|.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw std::invalid_argument("KS distance of an empty sample");
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Two-sample KS: sup |F_a - F_b| over the pooled sample.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("KS distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Asymptotic critical values at level alpha = 0.01 (c = 1.63).
inline constexpr double kKsCoefficient01 = 1.63;
inline double ks_threshold(std::size_t n) { return kKsCoefficient01 / std::sqrt(static_cast<double>(n)); }
inline double ks_threshold(std::size_t n, std::size_t m) {
  const auto a = static_cast<double>(n), b = static_cast<double>(m);
  return kKsCoefficient01 * std::sqrt((a + b) / (a * b));
}

// Weighted least squares y ~ X beta with per-point standard errors.
struct LinearFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // from the stated errors
  double chi2 = 0.0;
  std::size_t dof = 0;
  double condition = 0.0;

  double se(std::size_t k) const { return std::sqrt(covariance(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))); }
};

inline LinearFit weighted_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& sigma) {
  if (x.rows() != y.size() || y.size() != sigma.size()) throw std::invalid_argument("fit dimensions disagree");
  if (x.rows() < x.cols()) throw std::invalid_argument("fit needs at least as many points as parameters");
  Eigen::VectorXd w(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma(i) > 0.0)) throw std::invalid_argument("fit errors must be positive");
    w(i) = 1.0 / (sigma(i) * sigma(i));
  }
  const Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x;
  const Eigen::VectorXd b = x.transpose() * w.asDiagonal() * y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  LinearFit out;
  out.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  out.covariance = a.inverse();
  out.beta = out.covariance * b;
  const Eigen::VectorXd r = y - x * out.beta;
  out.chi2 = r.cwiseProduct(r).cwiseProduct(w).sum();
  out.dof = static_cast<std::size_t>(x.rows() - x.cols());
  return out;
}

// Ordinary least squares with unit errors.
inline LinearFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return weighted_least_squares(x, y, Eigen::VectorXd::Ones(y.size()));
}

// Normalised autocorrelation at lags 0..max_lag and the integrated
// autocorrelation time 1 + 2 sum rho(k), truncated at the first negative lag.
struct Autocorrelation {
  std::vector<double> rho;
  double tau_int = 1.0;
};

inline Autocorrelation autocorrelation(std::span<const double> x, std::size_t max_lag) {
  Autocorrelation out;
  const std::size_t n = x.size();
  if (n < 2) return out;
  const double m = mean_se(x).mean;
  double c0 = 0.0;
  for (double v : x) c0 += (v - m) * (v - m);
  c0 /= static_cast<double>(n);
  max_lag = std::min(max_lag, n - 1);
  out.rho.assign(max_lag + 1, 0.0);
  out.rho[0] = 1.0;
  if (c0 == 0.0) return out;
  bool truncated = false;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double c = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) c += (x[i] - m) * (x[i + k] - m);
    out.rho[k] = c / static_cast<double>(n) / c0;
    if (!truncated && out.rho[k] < 0.0) truncated = true;
    if (!truncated) out.tau_int += 2.0 * out.rho[k];
  }
  return out;
}

// Total variation distance between two distributions on the same index set.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions have different supports");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

}  // namespace fkw::stats
