#pragma once

// Brownian watermelon: Vandermonde, exact fixed-time marginal, two samplers
// (eigenvalues of a Hermitian Brownian bridge; offset bridges conditioned to
// stay ordered) and tabulated marginal CDFs of the ordered coordinates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fkw/rng.hpp"
#include "fkw/walks.hpp"

namespace fkw::watermelon {

inline double vandermonde(std::span<const double> z) {
  double v = 1.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) v *= z[j] - z[i];
  }
  return v;
}

inline bool in_weyl(std::span<const double> z) {
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (!(z[i - 1] < z[i])) return false;
  }
  return true;
}

// log of the integral over W of Delta(z)^2 exp(-|z|^2 / (2 s)). By the
// Gaussian (Mehta) integral over R^r, (2 pi)^(r/2) s^(r^2/2) prod_{j<=r} j!,
// divided by r! for the ordered sector.
inline double log_normalization(std::size_t r, double s) {
  const auto rr = static_cast<double>(r);
  double v = 0.5 * rr * std::log(2.0 * std::numbers::pi) + 0.5 * rr * rr * std::log(s);
  for (std::size_t j = 1; j <= r; ++j) v += std::lgamma(static_cast<double>(j) + 1.0);
  v -= std::lgamma(rr + 1.0);
  return v;
}

// Normalised density at time t of the watermelon of r bridges on [0,1].
inline double marginal_density(std::size_t r, double t, std::span<const double> z) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("marginal time must lie in (0,1)");
  if (z.size() != r || r == 0) throw std::invalid_argument("point must have r coordinates");
  if (!in_weyl(z)) return 0.0;
  const double s = t * (1.0 - t);
  double norm2 = 0.0;
  for (double v : z) norm2 += v * v;
  const double d = vandermonde(z);
  if (d == 0.0) return 0.0;
  return std::exp(2.0 * std::log(std::abs(d)) - norm2 / (2.0 * s) - log_normalization(r, s));
}

// CDFs of each ordered coordinate at time t, tabulated by summing the
// density over a grid of the other coordinates. Supported for r <= 3.
class OrderedMarginals {
 public:
  OrderedMarginals(std::size_t r, double t, std::size_t points = 0) : r_(r) {
    if (r == 0 || r > 3) throw std::invalid_argument("ordered marginals tabulated for 1 <= r <= 3");
    if (points == 0) points = r == 3 ? 241 : 2401;
    const double s = t * (1.0 - t);
    half_ = 7.0 * std::sqrt(s) * (1.0 + 0.5 * static_cast<double>(r));
    h_ = 2.0 * half_ / static_cast<double>(points - 1);
    const auto grid = [&](std::size_t i) { return -half_ + h_ * static_cast<double>(i); };
    pdf_.assign(r, std::vector<double>(points, 0.0));
    std::vector<double> z(r);
    std::vector<std::size_t> idx(r, 0);
    for (;;) {
      bool ordered = true;
      for (std::size_t a = 0; a < r; ++a) {
        z[a] = grid(idx[a]);
        if (a > 0 && !(idx[a - 1] < idx[a])) ordered = false;
      }
      if (ordered) {
        const double d = marginal_density(r, t, z);
        for (std::size_t a = 0; a < r; ++a) pdf_[a][idx[a]] += d;
      }
      std::size_t a = 0;
      while (a < r && ++idx[a] == points) idx[a++] = 0;
      if (a == r) break;
    }
    cdf_.assign(r, std::vector<double>(points, 0.0));
    for (std::size_t a = 0; a < r; ++a) {
      double acc = 0.0;
      for (std::size_t i = 0; i < points; ++i) {
        acc += pdf_[a][i];
        cdf_[a][i] = acc;
      }
      for (auto& v : cdf_[a]) v /= acc;
    }
  }

  // P[z_k <= v], linear between grid nodes (grid cells treated as centred).
  double cdf(std::size_t k, double v) const {
    const auto& c = cdf_.at(k);
    const double pos = (v + half_) / h_ + 0.5;
    if (pos <= 0.0) return 0.0;
    const auto i = static_cast<std::size_t>(pos);
    if (i >= c.size()) return 1.0;
    const double lo = i == 0 ? 0.0 : c[i - 1];
    return lo + (pos - static_cast<double>(i)) * (c[i] - lo);
  }

  std::size_t r() const noexcept { return r_; }

 private:
  std::size_t r_;
  double half_ = 0.0;
  double h_ = 0.0;
  std::vector<std::vector<double>> pdf_;
  std::vector<std::vector<double>> cdf_;
};

struct WatermelonSample {
  std::vector<double> times;
  std::vector<std::vector<double>> heights;  // heights[k][i]
  std::vector<double> offsets;               // starting/ending offsets of each bridge
};

enum class Method { matrix_bridge, epsilon_rejection };

inline std::vector<double> uniform_grid(std::size_t m) {
  if (m < 1) throw std::invalid_argument("grid needs m >= 1");
  std::vector<double> t(m + 1);
  for (std::size_t k = 0; k <= m; ++k) t[k] = static_cast<double>(k) / static_cast<double>(m);
  return t;
}

// Eigenvalues of H(t) = B(t) - t B(1) for a Hermitian Brownian motion B whose
// diagonal entries are standard Brownian motions and whose off-diagonal real
// and imaginary parts have variance t/2.
inline WatermelonSample sample_matrix_bridge(std::size_t r, std::span<const double> grid, Stream& rng) {
  using Mat = Eigen::MatrixXcd;
  const auto n = static_cast<Eigen::Index>(r);
  std::vector<Mat> b(grid.size(), Mat::Zero(n, n));
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double dt = grid[k] - grid[k - 1];
    Mat inc(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      inc(i, i) = std::sqrt(dt) * rng.normal();
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const std::complex<double> c(std::sqrt(dt / 2.0) * rng.normal(), std::sqrt(dt / 2.0) * rng.normal());
        inc(i, j) = c;
        inc(j, i) = std::conj(c);
      }
    }
    b[k] = b[k - 1] + inc;
  }
  WatermelonSample out;
  out.times.assign(grid.begin(), grid.end());
  out.offsets.assign(r, 0.0);
  const double t_end = grid.back();
  Eigen::SelfAdjointEigenSolver<Mat> solver;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Mat h = b[k] - (grid[k] / t_end) * b.back();
    solver.compute(h, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = solver.eigenvalues();
    out.heights.emplace_back(ev.data(), ev.data() + ev.size());
  }
  return out;
}

// r independent Brownian bridges from o_i to o_i, accepted iff strictly
// ordered at every interior grid time. The offsets o_i = (i - (r-1)/2) eps are
// the points 0, eps, ..., (r-1) eps shifted to mean zero, which only
// translates the ensemble. Returns nullopt on rejection.
inline std::optional<WatermelonSample> try_epsilon_bridge(std::size_t r, std::span<const double> grid, double eps,
                                                          Stream& rng) {
  const std::size_t m = grid.size();
  std::vector<double> offsets(r);
  for (std::size_t i = 0; i < r; ++i) offsets[i] = (static_cast<double>(i) - 0.5 * static_cast<double>(r - 1)) * eps;
  std::vector<std::vector<double>> w(r, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 1; k < m; ++k) w[i][k] = w[i][k - 1] + std::sqrt(grid[k] - grid[k - 1]) * rng.normal();
    const double end = w[i][m - 1];
    for (std::size_t k = 0; k < m; ++k) {
      w[i][k] += offsets[i] - (grid[k] - grid[0]) / (grid[m - 1] - grid[0]) * end;
    }
  }
  WatermelonSample out;
  out.times.assign(grid.begin(), grid.end());
  out.offsets = offsets;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> z(r);
    for (std::size_t i = 0; i < r; ++i) z[i] = w[i][k];
    if (k > 0 && k + 1 < m && !in_weyl(z)) return std::nullopt;
    out.heights.push_back(std::move(z));
  }
  return out;
}

struct SampleBatch {
  std::vector<WatermelonSample> samples;
  std::size_t attempts = 0;
  double acceptance_rate = 1.0;
};

inline SampleBatch sample_watermelon(std::size_t r, std::span<const double> grid, std::size_t count,
                                     std::uint64_t seed, Method method, double eps = 0.05,
                                     std::size_t max_attempts = 50'000'000) {
  if (r == 0) throw std::invalid_argument("watermelon needs r >= 1");
  if (grid.size() < 2) throw std::invalid_argument("time grid needs at least two points");
  SampleBatch batch;
  batch.samples.reserve(count);
  Stream rng(seed, 0x3A7E5);
  if (method == Method::matrix_bridge) {
    for (std::size_t k = 0; k < count; ++k) batch.samples.push_back(sample_matrix_bridge(r, grid, rng));
    batch.attempts = count;
    return batch;
  }
  if (grid.size() < 17) throw std::invalid_argument("epsilon-rejection needs a grid with m >= 16");
  if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");
  while (batch.samples.size() < count) {
    if (batch.attempts >= max_attempts) {
      throw walks::BudgetExhausted("epsilon-rejection exhausted " + std::to_string(max_attempts) +
                                   " attempts; acceptance rate " +
                                   std::to_string(static_cast<double>(batch.samples.size()) /
                                                  static_cast<double>(batch.attempts)));
    }
    ++batch.attempts;
    if (auto s = try_epsilon_bridge(r, grid, eps, rng)) batch.samples.push_back(std::move(*s));
  }
  batch.acceptance_rate = static_cast<double>(count) / static_cast<double>(batch.attempts);
  return batch;
}

// Heights of every sample at grid index k, coordinate i.
inline std::vector<double> coordinate_at(std::span<const WatermelonSample> samples, std::size_t k, std::size_t i) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.heights.at(k).at(i));
  return out;
}

}  // namespace fkw::watermelon
