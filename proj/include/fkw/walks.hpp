#pragma once

// Directed and synchronized random walk systems: increment laws, sampling,
// Karlin-McGregor counts, Weyl-chamber dynamic programming, conditioned
// bridges, the harmonic function V, diamond non-intersection, repulsion and
// non-confinement statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "fkw/geometry.hpp"
#include "fkw/rng.hpp"

namespace fkw::walks {

using BigInt = boost::multiprecision::cpp_int;
using Point = std::vector<long long>;

struct BudgetExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Increment laws on N* x Z with finite support.

struct Step {
  int theta = 1;
  int x = 0;
  double prob = 0.0;
};

class IncrementDist {
 public:
  struct ThetaBlock {
    int theta = 1;
    double prob = 0.0;                         // P(theta)
    std::vector<std::pair<int, double>> x;     // P(X = x | theta)
    std::vector<double> cumulative;            // for sampling X given theta
  };

  explicit IncrementDist(std::vector<Step> steps) : steps_(std::move(steps)) {
    if (steps_.empty()) throw std::invalid_argument("increment law has empty support");
    std::map<int, std::map<int, double>> table;
    double total = 0.0;
    for (const Step& s : steps_) {
      if (s.theta < 1) throw std::invalid_argument("time increments must be >= 1");
      if (!(s.prob >= 0.0)) throw std::invalid_argument("negative probability in increment law");
      table[s.theta][s.x] += s.prob;
      total += s.prob;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("increment probabilities sum to " + std::to_string(total) + ", not 1");
    }
    for (const auto& [theta, xs] : table) {
      ThetaBlock block;
      block.theta = theta;
      for (const auto& [x, p] : xs) block.prob += p;
      if (block.prob <= 0.0) continue;
      double mean = 0.0, acc = 0.0;
      for (const auto& [x, p] : xs) {
        if (p <= 0.0) continue;
        block.x.emplace_back(x, p / block.prob);
        mean += x * (p / block.prob);
        acc += p / block.prob;
        block.cumulative.push_back(acc);
        max_abs_x_ = std::max(max_abs_x_, std::abs(x));
      }
      if (std::abs(mean) > 1e-12) {
        throw std::invalid_argument("spatial increment is not centred given theta = " + std::to_string(theta));
      }
      block.cumulative.back() = 1.0;
      max_theta_ = std::max(max_theta_, theta);
      theta_cumulative_.push_back(block.prob + (theta_cumulative_.empty() ? 0.0 : theta_cumulative_.back()));
      blocks_.push_back(std::move(block));
    }
    theta_cumulative_.back() = 1.0;
  }

  // theta = 1, X = +-1 with probability 1/2.
  static IncrementDist simple() { return IncrementDist({{1, -1, 0.5}, {1, 1, 0.5}}); }
  // Steps -1, 0, +1 with probabilities 1/4, 1/2, 1/4; gaps of either parity.
  static IncrementDist lazy() { return IncrementDist({{1, -1, 0.25}, {1, 0, 0.5}, {1, 1, 0.25}}); }

  // Parses "theta:x:p,theta:x:p,..." or one of the names "simple", "lazy".
  static IncrementDist parse(const std::string& text) {
    if (text == "simple") return simple();
    if (text == "lazy") return lazy();
    std::vector<Step> steps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      Step s;
      char c1 = 0, c2 = 0;
      std::istringstream is(item);
      if (!(is >> s.theta >> c1 >> s.x >> c2 >> s.prob) || c1 != ':' || c2 != ':') {
        throw std::invalid_argument("bad increment entry '" + item + "', expected theta:x:p");
      }
      steps.push_back(s);
    }
    return IncrementDist(std::move(steps));
  }

  const std::vector<Step>& steps() const noexcept { return steps_; }
  const std::vector<ThetaBlock>& blocks() const noexcept { return blocks_; }
  int max_theta() const noexcept { return max_theta_; }
  int max_abs_x() const noexcept { return max_abs_x_; }

  bool is_simple() const {
    return blocks_.size() == 1 && blocks_[0].theta == 1 && blocks_[0].x.size() == 2 &&
           blocks_[0].x[0] == std::pair<int, double>{-1, 0.5} && blocks_[0].x[1] == std::pair<int, double>{1, 0.5};
  }

  // Every step lies in the forward delta-cone of the origin.
  bool satisfies_cone(const geometry::ConeParams& cone) const {
    for (const auto& b : blocks_) {
      for (const auto& [x, p] : b.x) {
        if (cone.delta * b.theta < std::abs(x)) return false;
      }
    }
    return true;
  }

  // Variance of X given theta, averaged over theta.
  double spatial_variance() const {
    double v = 0.0;
    for (const auto& b : blocks_) {
      for (const auto& [x, p] : b.x) v += b.prob * p * x * x;
    }
    return v;
  }

  double mean_theta() const {
    double m = 0.0;
    for (const auto& b : blocks_) m += b.prob * b.theta;
    return m;
  }

  std::size_t sample_block(Stream& rng) const {
    const double u = rng.uniform();
    return static_cast<std::size_t>(std::upper_bound(theta_cumulative_.begin(), theta_cumulative_.end(), u) -
                                    theta_cumulative_.begin());
  }

  int sample_x(std::size_t block, Stream& rng) const {
    const auto& b = blocks_[block];
    const double u = rng.uniform();
    const auto k = static_cast<std::size_t>(std::upper_bound(b.cumulative.begin(), b.cumulative.end(), u) -
                                            b.cumulative.begin());
    return b.x[std::min(k, b.x.size() - 1)].first;
  }

  std::string to_string() const {
    std::string out;
    for (const Step& s : steps_) {
      if (!out.empty()) out += ',';
      std::ostringstream os;
      os.precision(17);
      os << s.theta << ':' << s.x << ':' << s.prob;
      out += os.str();
    }
    return out;
  }

 private:
  std::vector<Step> steps_;
  std::vector<ThetaBlock> blocks_;
  std::vector<double> theta_cumulative_;
  int max_theta_ = 1;
  int max_abs_x_ = 0;
};

// ---------------------------------------------------------------------------
// Walk systems.

struct Trajectory {
  std::vector<long long> times;
  std::vector<long long> heights;
};

struct WalkSystem {
  std::vector<Trajectory> walks;
  bool synchronized = true;

  std::size_t r() const noexcept { return walks.size(); }
  std::size_t steps() const noexcept { return walks.empty() ? 0 : walks[0].times.size() - 1; }

  // Heights of all walks after k steps (synchronized systems).
  Point heights_at(std::size_t k) const {
    Point z(walks.size());
    for (std::size_t i = 0; i < walks.size(); ++i) z[i] = walks[i].heights[k];
    return z;
  }
};

inline bool in_weyl(std::span<const long long> z) noexcept {
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (!(z[i - 1] < z[i])) return false;
  }
  return true;
}

// Synchronized systems share theta at each step; otherwise each walk draws
// its own (theta, X).
inline WalkSystem sample_system(const IncrementDist& dist, std::size_t r, std::span<const long long> start,
                                std::size_t steps, std::uint64_t seed, bool synchronized = true,
                                std::uint64_t stream = 0) {
  if (r == 0 || start.size() != r) throw std::invalid_argument("start must have r >= 1 coordinates");
  Stream rng(seed, stream);
  WalkSystem sys;
  sys.synchronized = synchronized;
  sys.walks.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    sys.walks[i].times.reserve(steps + 1);
    sys.walks[i].heights.reserve(steps + 1);
    sys.walks[i].times.push_back(0);
    sys.walks[i].heights.push_back(start[i]);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t shared = dist.sample_block(rng);
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t b = synchronized ? shared : dist.sample_block(rng);
      auto& w = sys.walks[i];
      w.times.push_back(w.times.back() + dist.blocks()[b].theta);
      w.heights.push_back(w.heights.back() + dist.sample_x(b, rng));
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Karlin-McGregor for the simple walk.

// Number of +-1 paths from a to b in n steps.
inline BigInt simple_path_count(long long a, long long b, long long n) {
  const long long d = b - a;
  if (n < 0 || std::llabs(d) > n || ((n + d) % 2 + 2) % 2 != 0) return 0;
  const long long up = (n + d) / 2;
  const long long k = std::min(up, n - up);
  BigInt c = 1;
  for (long long i = 1; i <= k; ++i) {
    c *= (n - k + i);
    c /= i;
  }
  return c;
}

// Fraction-free Gaussian elimination; exact for integer matrices.
inline BigInt bareiss_determinant(std::vector<std::vector<BigInt>> m) {
  const std::size_t n = m.size();
  if (n == 0) return 1;
  BigInt sign = 1, prev = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (m[k][k] == 0) {
      std::size_t swap_row = k + 1;
      while (swap_row < n && m[swap_row][k] == 0) ++swap_row;
      if (swap_row == n) return 0;
      std::swap(m[k], m[swap_row]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) {
        m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
      }
    }
    prev = m[k][k];
  }
  return sign * m[n - 1][n - 1];
}

struct KmResult {
  BigInt count;
  long double probability = 0.0L;  // count / 2^(r n)
};

// Walks started on a common sublattice (all x_i of one parity) cannot cross
// without sharing a vertex, which is what the Lindstrom-Gessel-Viennot
// argument behind Karlin-McGregor needs.
inline bool km_applicable(std::span<const long long> x) noexcept {
  for (auto v : x) {
    if (((v - x[0]) % 2 + 2) % 2 != 0) return false;
  }
  return true;
}

// det[N(x_i -> y_j, n)]: the number of r-tuples of +-1 paths that never share
// a vertex. Parity-incompatible endpoints give 0.
inline KmResult km_bridge_count(std::span<const long long> x, std::span<const long long> y, long long n) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("x and y need the same positive length");
  if (!in_weyl(x) || !in_weyl(y)) throw std::invalid_argument("x and y must be strictly increasing");
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  if (!km_applicable(x)) {
    throw std::invalid_argument("Karlin-McGregor needs starting points of equal parity; use dp_weyl_count");
  }
  const std::size_t r = x.size();
  std::vector<std::vector<BigInt>> m(r, std::vector<BigInt>(r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) m[i][j] = simple_path_count(x[i], y[j], n);
  }
  KmResult out;
  out.count = bareiss_determinant(std::move(m));
  if (out.count < 0) out.count = 0;
  out.probability = static_cast<long double>(out.count) /
                    std::pow(2.0L, static_cast<long double>(r) * static_cast<long double>(n));
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic programming over W intersected with a cube [lo, hi]^r.

inline constexpr std::size_t kMaxDpStates = 60'000'000;

class CubeGrid {
 public:
  CubeGrid(std::size_t r, long long lo, long long hi) : r_(r), lo_(lo), len_(hi - lo + 1) {
    if (r == 0 || hi < lo) throw std::invalid_argument("empty dynamic programming grid");
    std::size_t size = 1;
    strides_.resize(r);
    for (std::size_t a = 0; a < r; ++a) {
      strides_[a] = size;
      if (size > kMaxDpStates / static_cast<std::size_t>(len_)) {
        throw std::length_error("dynamic programming state space exceeds " + std::to_string(kMaxDpStates) +
                                " states");
      }
      size *= static_cast<std::size_t>(len_);
    }
    size_ = size;
    weyl_.assign(size_, 0);
    Point z(r_);
    for (std::size_t idx = 0; idx < size_; ++idx) {
      decode(idx, z);
      weyl_[idx] = walks::in_weyl(z) ? 1 : 0;
    }
  }

  std::size_t r() const noexcept { return r_; }
  long long lo() const noexcept { return lo_; }
  long long hi() const noexcept { return lo_ + len_ - 1; }
  std::size_t size() const noexcept { return size_; }
  bool in_weyl(std::size_t idx) const noexcept { return weyl_[idx] != 0; }

  bool contains(std::span<const long long> z) const noexcept {
    for (auto v : z) {
      if (v < lo_ || v >= lo_ + len_) return false;
    }
    return true;
  }

  std::size_t index(std::span<const long long> z) const {
    if (z.size() != r_ || !contains(z)) throw std::out_of_range("point outside the dynamic programming grid");
    std::size_t idx = 0;
    for (std::size_t a = 0; a < r_; ++a) idx += static_cast<std::size_t>(z[a] - lo_) * strides_[a];
    return idx;
  }

  void decode(std::size_t idx, Point& z) const {
    z.resize(r_);
    for (std::size_t a = 0; a < r_; ++a) {
      z[a] = lo_ + static_cast<long long>((idx / strides_[a]) % static_cast<std::size_t>(len_));
    }
  }

  // out(z) = sum_x w(x) in(z - sign*x e_a) along one axis; mass moving off the
  // grid is dropped.
  template <typename T>
  void convolve_axis(const std::vector<T>& in, std::vector<T>& out, std::size_t axis,
                     const std::vector<std::pair<int, T>>& kernel, int sign) const {
    out.assign(size_, T(0));
    const std::size_t stride = strides_[axis];
    const auto len = static_cast<long long>(len_);
    for (std::size_t idx = 0; idx < size_; ++idx) {
      if (in[idx] == T(0)) continue;
      const auto c = static_cast<long long>((idx / stride) % static_cast<std::size_t>(len_));
      for (const auto& [x, w] : kernel) {
        const long long target = c + sign * x;
        if (target < 0 || target >= len) continue;
        const std::size_t j = static_cast<std::size_t>(static_cast<long long>(idx) + (target - c) * static_cast<long long>(stride));
        out[j] += w * in[idx];
      }
    }
  }

  // Product kernel on all axes; sign = +1 pushes mass forward in time,
  // sign = -1 pulls values backward. The Weyl mask is applied separately.
  template <typename T>
  void convolve(const std::vector<T>& in, std::vector<T>& out, const std::vector<std::pair<int, T>>& kernel,
                int sign, std::vector<T>& scratch) const {
    const std::vector<T>* src = &in;
    for (std::size_t a = 0; a < r_; ++a) {
      std::vector<T>& dst = ((r_ - a) % 2 == 1) ? out : scratch;
      convolve_axis(*src, dst, a, kernel, sign);
      src = &dst;
    }
  }

  template <typename T>
  void apply_mask(std::vector<T>& v) const {
    for (std::size_t idx = 0; idx < size_; ++idx) {
      if (!weyl_[idx]) v[idx] = T(0);
    }
  }

  template <typename T>
  void step(const std::vector<T>& in, std::vector<T>& out, const std::vector<std::pair<int, T>>& kernel, int sign,
            std::vector<T>& scratch) const {
    convolve(in, out, kernel, sign, scratch);
    apply_mask(out);
  }

 private:
  std::size_t r_;
  long long lo_;
  long long len_;
  std::size_t size_ = 0;
  std::vector<std::size_t> strides_;
  std::vector<std::uint8_t> weyl_;
};

// Kernels as (theta, weight(theta), spatial kernel) in the requested number type.
template <typename T>
struct ThetaKernel {
  int theta = 1;
  T weight{};
  std::vector<std::pair<int, T>> x;
};

inline std::vector<ThetaKernel<double>> probability_kernels(const IncrementDist& dist) {
  std::vector<ThetaKernel<double>> out;
  for (const auto& b : dist.blocks()) out.push_back({b.theta, b.prob, b.x});
  return out;
}

inline std::vector<ThetaKernel<BigInt>> simple_count_kernels() { return {{1, BigInt(1), {{-1, BigInt(1)}, {1, BigInt(1)}}}}; }

// Default height cap: endpoints plus 6 sqrt(n) spatial standard deviations.
inline long long default_height_cap(std::span<const long long> x, std::span<const long long> y, long long n,
                                    double spatial_sd = 1.0) {
  long long m = 0;
  for (auto v : x) m = std::max(m, std::llabs(v));
  for (auto v : y) m = std::max(m, std::llabs(v));
  return m + static_cast<long long>(std::ceil(6.0 * spatial_sd * std::sqrt(static_cast<double>(std::max(n, 1LL))))) +
         static_cast<long long>(x.size());
}

// Forward tables f_t(z) = P[renewal at time t in state z, all renewals so far in W].
template <typename T>
class ForwardDp {
 public:
  ForwardDp(const CubeGrid& grid, std::vector<ThetaKernel<T>> kernels, std::span<const long long> x)
      : grid_(grid), kernels_(std::move(kernels)) {
    for (const auto& k : kernels_) max_theta_ = std::max(max_theta_, k.theta);
    ring_.assign(static_cast<std::size_t>(max_theta_) + 1, std::vector<T>(grid_.size(), T(0)));
    if (!in_weyl(x)) throw std::invalid_argument("starting point must lie in W");
    ring_[0][grid_.index(x)] = T(1);
  }

  long long time() const noexcept { return t_; }
  const std::vector<T>& current() const { return ring_[slot(t_)]; }
  double leaked() const noexcept { return leaked_; }

  void advance() {
    ++t_;
    std::vector<T>& out = ring_[slot(t_)];
    out.assign(grid_.size(), T(0));
    for (const auto& k : kernels_) {
      if (k.theta > t_) continue;
      const std::vector<T>& in = ring_[slot(t_ - k.theta)];
      grid_.convolve(in, tmp_, k.x, +1, scratch_);
      if constexpr (std::is_floating_point_v<T>) {
        // Product kernels preserve mass, so what is missing before the mask left the grid.
        double before = 0.0, kept = 0.0;
        for (const auto& v : in) before += v;
        for (const auto& v : tmp_) kept += v;
        leaked_ += k.weight * (before - kept);
      }
      grid_.apply_mask(tmp_);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += k.weight * tmp_[i];
    }
  }

 private:
  std::size_t slot(long long t) const noexcept { return static_cast<std::size_t>(t % (max_theta_ + 1)); }

  const CubeGrid& grid_;
  std::vector<ThetaKernel<T>> kernels_;
  int max_theta_ = 1;
  long long t_ = 0;
  std::vector<std::vector<T>> ring_;
  std::vector<T> tmp_, scratch_;
  double leaked_ = 0.0;
};

struct DpKernelResult {
  double probability = 0.0;
  double leaked_mass = 0.0;
  long long height_cap = 0;
  std::size_t states = 0;
};

// q_n(x,y) = P_x[S in W_n, Hit(n,y)] by forward DP inside [-H, H]^r.
inline DpKernelResult dp_weyl_kernel(const IncrementDist& dist, std::span<const long long> x,
                                     std::span<const long long> y, long long n, std::optional<long long> cap = {}) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("x and y need the same positive length");
  if (!in_weyl(x) || !in_weyl(y)) throw std::invalid_argument("x and y must be strictly increasing");
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  const long long h = cap.value_or(default_height_cap(x, y, n, std::sqrt(dist.spatial_variance())));
  CubeGrid grid(x.size(), -h, h);
  ForwardDp<double> dp(grid, probability_kernels(dist), x);
  for (long long t = 0; t < n; ++t) dp.advance();
  return {dp.current()[grid.index(y)], dp.leaked(), h, grid.size()};
}

// Integer version for the simple walk: number of +-1 path tuples in W ending at y.
inline BigInt dp_weyl_count(std::span<const long long> x, std::span<const long long> y, long long n,
                            std::optional<long long> cap = {}) {
  if (!in_weyl(x) || !in_weyl(y) || x.size() != y.size()) throw std::invalid_argument("x and y must lie in W");
  // A +-1 path cannot move further than n from its start, so this cap is exact.
  long long h = 0;
  for (auto v : x) h = std::max(h, std::llabs(v) + n);
  h = cap.value_or(h);
  CubeGrid grid(x.size(), -h, h);
  ForwardDp<BigInt> dp(grid, simple_count_kernels(), x);
  for (long long t = 0; t < n; ++t) dp.advance();
  if (!grid.contains(y)) return 0;
  return dp.current()[grid.index(y)];
}

// Backward tables g_s(z) = q_s(z, y), indexed by remaining time s. Only
// every `checkpoint_every`-th block of max_theta tables is kept; windows are
// recomputed on demand, in decreasing order of s for sampling.
class BackwardTables {
 public:
  BackwardTables(const IncrementDist& dist, const CubeGrid& grid, std::span<const long long> y, long long n,
                 long long checkpoint_every = 64)
      : grid_(grid), kernels_(probability_kernels(dist)), n_(n), every_(std::max(1LL, checkpoint_every)) {
    if (!in_weyl(y)) throw std::invalid_argument("target must lie in W");
    m_ = dist.max_theta();
    target_ = grid_.index(y);
    std::vector<std::vector<T_>> recent;  // sliding window of the last m tables
    for (long long s = 0; s <= n_; ++s) {
      std::vector<T_> g = compute(s, [&](long long k) -> const std::vector<T_>& {
        return recent[static_cast<std::size_t>(k - (s - static_cast<long long>(recent.size())))];
      });
      if (s % every_ < m_) checkpoints_.emplace(s, g);
      recent.push_back(std::move(g));
      if (static_cast<long long>(recent.size()) > m_) recent.erase(recent.begin());
    }
  }

  long long n() const noexcept { return n_; }
  const CubeGrid& grid() const noexcept { return grid_; }

  // Table g_s; loads the window containing s if needed.
  const std::vector<double>& table(long long s) {
    if (s < 0 || s > n_) throw std::out_of_range("backward table index out of range");
    if (!(s >= window_lo_ && s < window_lo_ + static_cast<long long>(window_.size()))) {
      load_window(std::max(0LL, s - m_ + 1));
    }
    return window_[static_cast<std::size_t>(s - window_lo_)];
  }

 private:
  using T_ = double;

  template <typename Get>
  std::vector<T_> compute(long long s, Get&& get) {
    std::vector<T_> out(grid_.size(), 0.0);
    if (s == 0) {
      out[target_] = 1.0;
      return out;
    }
    for (const auto& k : kernels_) {
      if (k.theta > s) continue;
      grid_.step(get(s - k.theta), tmp_, k.x, -1, scratch_);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += k.weight * tmp_[i];
    }
    return out;
  }

  // Loads tables [base, base + every + m - 1] with base the checkpoint at or below s.
  void load_window(long long s) {
    const long long base = (s / every_) * every_;
    const long long end = std::min(n_, base + every_ + m_ - 1);
    window_.clear();
    window_lo_ = base;
    for (long long k = base; k <= end; ++k) {
      auto it = checkpoints_.find(k);
      if (it != checkpoints_.end()) {
        window_.push_back(it->second);
        continue;
      }
      window_.push_back(compute(k, [&](long long j) -> const std::vector<T_>& {
        return window_[static_cast<std::size_t>(j - window_lo_)];
      }));
    }
  }

  const CubeGrid& grid_;
  std::vector<ThetaKernel<double>> kernels_;
  long long n_;
  long long every_;
  long long m_ = 1;
  std::size_t target_ = 0;
  std::map<long long, std::vector<T_>> checkpoints_;
  std::vector<std::vector<T_>> window_;
  long long window_lo_ = -1;
  std::vector<T_> tmp_, scratch_;
};

enum class BridgeMethod { rejection, dp_backward };

struct BridgeBatch {
  std::vector<WalkSystem> samples;
  std::size_t attempts = 0;  // rejection only
  double acceptance_rate = 1.0;
  double kernel = 0.0;       // dp-backward: q_n(x, y)
  double leaked_mass = 0.0;
};

namespace detail {

// Enumerates spatial increment vectors for one theta block together with
// their probabilities.
inline void increment_vectors(const IncrementDist::ThetaBlock& b, std::size_t r,
                              std::vector<std::pair<Point, double>>& out) {
  out.clear();
  Point v(r, 0);
  std::vector<std::size_t> idx(r, 0);
  for (;;) {
    double p = 1.0;
    for (std::size_t i = 0; i < r; ++i) {
      v[i] = b.x[idx[i]].first;
      p *= b.x[idx[i]].second;
    }
    out.emplace_back(v, p);
    std::size_t a = 0;
    while (a < r && ++idx[a] == b.x.size()) idx[a++] = 0;
    if (a == r) break;
  }
}

}  // namespace detail

// Conditioned bridges from (0,x) to (n,y) staying in W at every renewal.
inline BridgeBatch sample_conditioned_bridge(const IncrementDist& dist, std::span<const long long> x,
                                             std::span<const long long> y, long long n, std::size_t count,
                                             std::uint64_t seed, BridgeMethod method,
                                             std::size_t max_attempts = 200'000'000,
                                             std::optional<long long> cap = {}) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("x and y need the same positive length");
  if (!in_weyl(x) || !in_weyl(y)) throw std::invalid_argument("x and y must be strictly increasing");
  const std::size_t r = x.size();
  BridgeBatch batch;
  batch.samples.reserve(count);
  if (method == BridgeMethod::rejection) {
    Stream rng(seed, 0xB41D6E);
    const long long reach = dist.max_abs_x();
    Point z(r);
    WalkSystem sys;
    while (batch.samples.size() < count) {
      if (batch.attempts >= max_attempts) {
        throw BudgetExhausted("rejection sampler exhausted " + std::to_string(max_attempts) + " attempts with " +
                              std::to_string(batch.samples.size()) + " acceptances (rate " +
                              std::to_string(static_cast<double>(batch.samples.size()) /
                                             static_cast<double>(std::max<std::size_t>(batch.attempts, 1))) +
                              ")");
      }
      ++batch.attempts;
      sys.synchronized = true;
      sys.walks.assign(r, {});
      long long t = 0;
      for (std::size_t i = 0; i < r; ++i) {
        z[i] = x[i];
        sys.walks[i].times.push_back(0);
        sys.walks[i].heights.push_back(x[i]);
      }
      bool ok = true;
      while (t < n) {
        const std::size_t b = dist.sample_block(rng);
        t += dist.blocks()[b].theta;
        for (std::size_t i = 0; i < r; ++i) {
          z[i] += dist.sample_x(b, rng);
          sys.walks[i].times.push_back(t);
          sys.walks[i].heights.push_back(z[i]);
        }
        if (t > n || !in_weyl(z)) {
          ok = false;
          break;
        }
        for (std::size_t i = 0; i < r; ++i) {
          if (std::llabs(y[i] - z[i]) > reach * (n - t)) ok = false;
        }
        if (!ok) break;
      }
      if (ok && t == n && std::equal(z.begin(), z.end(), y.begin())) batch.samples.push_back(sys);
    }
    batch.acceptance_rate = static_cast<double>(count) / static_cast<double>(std::max<std::size_t>(batch.attempts, 1));
    return batch;
  }

  const long long h = cap.value_or(default_height_cap(x, y, n, std::sqrt(dist.spatial_variance())));
  CubeGrid grid(r, -h, h);
  BackwardTables tables(dist, grid, y, n);
  batch.kernel = tables.table(n)[grid.index(x)];
  if (!(batch.kernel > 0.0)) {
    throw std::domain_error("no bridge from x to y in W within the height cap (q_n = 0)");
  }
  std::vector<std::vector<std::pair<Point, double>>> moves(dist.blocks().size());
  for (std::size_t b = 0; b < dist.blocks().size(); ++b) detail::increment_vectors(dist.blocks()[b], r, moves[b]);

  // All samples advance together in decreasing remaining time so each table
  // window is built once.
  struct Walker {
    Point z;
    long long remaining;
    Stream rng;
  };
  std::vector<Walker> walkers;
  for (std::size_t s = 0; s < count; ++s) {
    walkers.push_back({Point(x.begin(), x.end()), n, Stream(seed, 0xD9B0000000ull + s)});
    WalkSystem sys;
    sys.synchronized = true;
    sys.walks.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
      sys.walks[i].times.push_back(0);
      sys.walks[i].heights.push_back(x[i]);
    }
    batch.samples.push_back(std::move(sys));
  }
  std::vector<double> weights;
  std::vector<std::pair<std::size_t, std::size_t>> labels;
  Point next(r);
  for (long long s = n; s > 0; --s) {
    for (std::size_t w = 0; w < count; ++w) {
      Walker& walker = walkers[w];
      if (walker.remaining != s) continue;
      weights.clear();
      labels.clear();
      double total = 0.0;
      for (std::size_t b = 0; b < dist.blocks().size(); ++b) {
        const auto& blk = dist.blocks()[b];
        if (blk.theta > s) continue;
        const std::vector<double>& g = tables.table(s - blk.theta);
        for (std::size_t m = 0; m < moves[b].size(); ++m) {
          for (std::size_t i = 0; i < r; ++i) next[i] = walker.z[i] + moves[b][m].first[i];
          if (!grid.contains(next)) continue;
          const double v = blk.prob * moves[b][m].second * g[grid.index(next)];
          if (v <= 0.0) continue;
          weights.push_back(v);
          labels.emplace_back(b, m);
          total += v;
        }
      }
      if (!(total > 0.0)) throw std::logic_error("conditioned bridge reached a dead state");
      double u = walker.rng.uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < weights.size() && u >= weights[pick]) u -= weights[pick++];
      const auto [b, m] = labels[pick];
      const int theta = dist.blocks()[b].theta;
      walker.remaining -= theta;
      auto& sys = batch.samples[w];
      for (std::size_t i = 0; i < r; ++i) {
        walker.z[i] += moves[b][m].first[i];
        sys.walks[i].times.push_back(n - walker.remaining);
        sys.walks[i].heights.push_back(walker.z[i]);
      }
    }
  }
  return batch;
}

// Exact marginal of a conditioned bridge at time t (renewal at t and heights z),
// P[renewal at t, S = z | W_n, Hit(n,y)], as a table over the grid.
inline std::vector<double> bridge_marginal(const IncrementDist& dist, std::span<const long long> x,
                                           std::span<const long long> y, long long n, long long t,
                                           const CubeGrid& grid) {
  if (t < 0 || t > n) throw std::out_of_range("marginal time outside [0, n]");
  ForwardDp<double> fwd(grid, probability_kernels(dist), x);
  for (long long k = 0; k < t; ++k) fwd.advance();
  BackwardTables back(dist, grid, y, n - t, n + 1);
  const std::vector<double>& g = back.table(n - t);
  std::vector<double> out(grid.size());
  const double q = dp_weyl_kernel(dist, x, y, n, grid.hi()).probability;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd.current()[i] * g[i] / q;
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic function V on W.

struct HarmonicEstimate {
  std::vector<Point> grid;
  std::vector<double> values;
  std::size_t iterations = 0;
  double residual = 0.0;  // relative gap between two successive extrapolations
  bool converged = false;
};

inline double vandermonde_of(std::span<const long long> z) {
  double v = 1.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) v *= static_cast<double>(z[j] - z[i]);
  }
  return v;
}

// V(x) = lim_k g_k(x), g_k(x) = E_x[Delta(S_k); S_j in W for j <= k]. By
// translation invariance the iteration runs on the gap vector
// d_i = x_{i+1} - x_i in [1, cap]^(r-1); the cap is out of reach within the
// horizon, and beyond it Delta itself is used. The killed mass that still
// matters after k steps makes g_k = V - a k^(-1/2) + O(1/k), so the value
// returned is the Richardson extrapolation from k/2 and k; the residual
// compares it with the one from k/4 and k/2.
inline HarmonicEstimate estimate_V(const IncrementDist& dist, std::size_t r, const std::vector<Point>& points,
                                   std::size_t iterations, double tolerance = 1e-3) {
  if (r < 2) throw std::invalid_argument("V is only non-trivial for r >= 2");
  if (iterations < 4) throw std::invalid_argument("need at least four iterations");
  if (points.empty()) throw std::invalid_argument("empty grid");
  const std::size_t dim = r - 1;
  long long grid_max = 1;
  for (const auto& p : points) {
    if (p.size() != r || !in_weyl(p)) throw std::invalid_argument("grid points must lie in W");
    for (std::size_t i = 0; i + 1 < r; ++i) grid_max = std::max(grid_max, p[i + 1] - p[i]);
  }
  // Law of the gap increments, aggregated over theta.
  std::map<Point, double> inc_law;
  std::vector<std::pair<Point, double>> moves;
  for (const auto& b : dist.blocks()) {
    detail::increment_vectors(b, r, moves);
    for (const auto& [v, p] : moves) {
      Point d(dim);
      for (std::size_t i = 0; i < dim; ++i) d[i] = v[i + 1] - v[i];
      inc_law[d] += b.prob * p;
    }
  }
  const double sd = std::sqrt(2.0 * dist.spatial_variance());
  const long long cap =
      grid_max + static_cast<long long>(std::ceil(6.0 * sd * std::sqrt(static_cast<double>(iterations)))) +
      2 * dist.max_abs_x() + 2;
  const auto len = static_cast<std::size_t>(cap);
  std::size_t size = 1;
  for (std::size_t a = 0; a < dim; ++a) {
    if (size > kMaxDpStates / len) throw std::length_error("harmonic-function state space too large");
    size *= len;
  }
  const auto delta_of_gaps = [&](const Point& d) {
    Point z(r, 0);
    for (std::size_t i = 0; i < dim; ++i) z[i + 1] = z[i] + d[i];
    return vandermonde_of(z);
  };
  struct Move {
    Point step;
    std::ptrdiff_t offset;
    double p;
  };
  std::vector<Move> mv;
  long long lo_step = 0, hi_step = 0;
  for (const auto& [step, p] : inc_law) {
    std::ptrdiff_t off = 0, mul = 1;
    for (std::size_t a = 0; a < dim; ++a) {
      off += static_cast<std::ptrdiff_t>(step[a]) * mul;
      mul *= static_cast<std::ptrdiff_t>(len);
      lo_step = std::min(lo_step, step[a]);
      hi_step = std::max(hi_step, step[a]);
    }
    mv.push_back({step, off, p});
  }

  std::vector<double> g(size), next(size);
  {
    Point d(dim, 1);
    for (std::size_t idx = 0; idx < size; ++idx) {
      g[idx] = delta_of_gaps(d);
      for (std::size_t a = 0; a < dim && ++d[a] > cap; ++a) d[a] = 1;
    }
  }
  std::vector<std::size_t> point_index;
  for (const auto& p : points) {
    std::size_t idx = 0, mul = 1;
    for (std::size_t a = 0; a < dim; ++a) {
      idx += static_cast<std::size_t>(p[a + 1] - p[a] - 1) * mul;
      mul *= len;
    }
    point_index.push_back(idx);
  }

  const std::size_t k1 = iterations / 4, k2 = iterations / 2, k3 = iterations;
  std::vector<double> at1(points.size()), at2(points.size()), at3(points.size());
  Point d(dim), e(dim);
  for (std::size_t it = 1; it <= k3; ++it) {
    std::fill(d.begin(), d.end(), 1);
    for (std::size_t idx = 0; idx < size; ++idx) {
      bool interior = true;
      for (std::size_t a = 0; a < dim; ++a) interior = interior && d[a] + lo_step > 0 && d[a] + hi_step <= cap;
      double acc = 0.0;
      if (interior) {
        for (const auto& m : mv) acc += m.p * g[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(idx) + m.offset)];
      } else {
        for (const auto& m : mv) {
          bool alive = true, outside = false;
          std::size_t j = 0, mul = 1;
          for (std::size_t a = 0; a < dim; ++a) {
            e[a] = d[a] + m.step[a];
            if (e[a] <= 0) alive = false;
            if (e[a] > cap) outside = true;
            j += static_cast<std::size_t>(std::max(e[a] - 1, 0LL)) * mul;
            mul *= len;
          }
          if (!alive) continue;
          acc += m.p * (outside ? delta_of_gaps(e) : g[j]);
        }
      }
      next[idx] = acc;
      for (std::size_t a = 0; a < dim && ++d[a] > cap; ++a) d[a] = 1;
    }
    g.swap(next);
    auto* snap = it == k1 ? &at1 : it == k2 ? &at2 : it == k3 ? &at3 : nullptr;
    if (snap) {
      for (std::size_t k = 0; k < points.size(); ++k) (*snap)[k] = g[point_index[k]];
    }
  }
  const auto extrapolate = [](double gh, std::size_t h, double gk, std::size_t k) {
    return gk + (gk - gh) / (std::sqrt(static_cast<double>(k) / static_cast<double>(h)) - 1.0);
  };
  HarmonicEstimate est;
  est.grid = points;
  est.iterations = iterations;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double v = extrapolate(at2[k], k2, at3[k], k3);
    const double coarse = extrapolate(at1[k], k1, at2[k], k2);
    est.values.push_back(v);
    if (v > 0.0) est.residual = std::max(est.residual, std::abs(v - coarse) / v);
  }
  est.converged = est.residual <= tolerance;
  return est;
}

// ---------------------------------------------------------------------------
// Diamond non-intersection.

namespace detail {

struct Rect {
  double u0, u1, v0, v1;
  long long t0, t1;
};

inline std::vector<Rect> diamond_rects(const Trajectory& w, const geometry::ConeParams& cone) {
  std::vector<Rect> out;
  for (std::size_t k = 0; k + 1 < w.times.size(); ++k) {
    const double d = cone.delta;
    const double ua = d * w.times[k] - w.heights[k], va = d * w.times[k] + w.heights[k];
    const double ub = d * w.times[k + 1] - w.heights[k + 1], vb = d * w.times[k + 1] + w.heights[k + 1];
    if (ub < ua || vb < va) continue;  // empty diamond (step outside the cone)
    out.push_back({ua, ub, va, vb, w.times[k], w.times[k + 1]});
  }
  return out;
}

}  // namespace detail

// True iff the unions of diamonds of different walks are pairwise disjoint.
// Each diamond is a rectangle in (delta t - y, delta t + y) coordinates.
inline bool nonintdiam_check(const WalkSystem& sys, const geometry::ConeParams& cone) {
  cone.validate();
  std::vector<std::vector<detail::Rect>> rects;
  for (const auto& w : sys.walks) rects.push_back(detail::diamond_rects(w, cone));
  for (std::size_t i = 0; i < rects.size(); ++i) {
    for (std::size_t j = i + 1; j < rects.size(); ++j) {
      std::size_t b = 0;
      for (const auto& ra : rects[i]) {
        while (b < rects[j].size() && rects[j][b].t1 < ra.t0) ++b;
        for (std::size_t k = b; k < rects[j].size() && rects[j][k].t0 <= ra.t1; ++k) {
          const auto& rb = rects[j][k];
          if (ra.u0 <= rb.u1 && rb.u0 <= ra.u1 && ra.v0 <= rb.v1 && rb.v0 <= ra.v1) return false;
        }
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Repulsion statistics for synchronized systems.

struct RepulsionSample {
  std::optional<std::size_t> eta;   // first step with every gap > n^eps
  std::optional<std::size_t> last;  // last such step
  double bulk_min_gap = std::numeric_limits<double>::infinity();
};

struct RepulsionThresholds {
  double eps = 0.2;
  double bulk_exponent = 0.15;
};

struct RepulsionSummary {
  long long n = 0;
  std::size_t samples = 0;
  double freq_eta_late = 0.0;    // eta_n > n^(1-eps)
  double freq_last_early = 0.0;  // last < n - n^(1-eps)
  double freq_bulk_close = 0.0;  // some bulk gap <= n^bulk_exponent
  double mean_eta = 0.0;
};

inline double min_pair_distance(std::span<const long long> z) {
  if (z.size() < 2) return std::numeric_limits<double>::infinity();
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) g = std::min(g, static_cast<double>(std::llabs(z[j] - z[i])));
  }
  return g;
}

inline RepulsionSample repulsion_sample(const WalkSystem& sys, long long n, const RepulsionThresholds& th) {
  RepulsionSample out;
  const double level = std::pow(static_cast<double>(n), th.eps);
  const auto& times = sys.walks.at(0).times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const Point z = sys.heights_at(k);
    const double g = min_pair_distance(z);
    if (g > level) {
      if (!out.eta) out.eta = k;
      out.last = k;
    }
    const double t = static_cast<double>(times[k]);
    if (t >= level && t <= static_cast<double>(n) - level) out.bulk_min_gap = std::min(out.bulk_min_gap, g);
  }
  return out;
}

inline RepulsionSummary repulsion_stats(std::span<const WalkSystem> samples, long long n,
                                        const RepulsionThresholds& th) {
  RepulsionSummary s;
  s.n = n;
  s.samples = samples.size();
  if (samples.empty()) return s;
  const double late = std::pow(static_cast<double>(n), 1.0 - th.eps);
  const double bulk = std::pow(static_cast<double>(n), th.bulk_exponent);
  double eta_total = 0.0;
  for (const auto& sys : samples) {
    const RepulsionSample r = repulsion_sample(sys, n, th);
    const double eta = r.eta ? static_cast<double>(*r.eta) : std::numeric_limits<double>::infinity();
    const double last = r.last ? static_cast<double>(*r.last) : -1.0;
    if (eta > late) s.freq_eta_late += 1.0;
    if (last < static_cast<double>(n) - late) s.freq_last_early += 1.0;
    if (r.bulk_min_gap <= bulk) s.freq_bulk_close += 1.0;
    eta_total += r.eta ? eta : static_cast<double>(n);
  }
  const auto m = static_cast<double>(samples.size());
  s.freq_eta_late /= m;
  s.freq_last_early /= m;
  s.freq_bulk_close /= m;
  s.mean_eta = eta_total / m;
  return s;
}

// ---------------------------------------------------------------------------
// Non-confinement of a single walk.

// #{k <= horizon : |S(k) - f(k)| < tube}, S the linear interpolation of the walk.
inline std::size_t non_confinement_count(const Trajectory& walk, std::span<const double> f, double tube,
                                         std::size_t horizon) {
  if (f.size() < horizon + 1) throw std::invalid_argument("f must be tabulated on 0..horizon");
  std::size_t count = 0, seg = 0;
  for (std::size_t k = 0; k <= horizon; ++k) {
    const auto t = static_cast<long long>(k);
    while (seg + 1 < walk.times.size() && walk.times[seg + 1] < t) ++seg;
    if (seg + 1 >= walk.times.size() && walk.times.back() < t) break;
    double s;
    if (walk.times[seg] == t || seg + 1 >= walk.times.size()) {
      s = static_cast<double>(walk.heights[seg]);
    } else {
      const double a = static_cast<double>(t - walk.times[seg]) /
                       static_cast<double>(walk.times[seg + 1] - walk.times[seg]);
      s = walk.heights[seg] + a * static_cast<double>(walk.heights[seg + 1] - walk.heights[seg]);
    }
    if (std::abs(s - f[k]) < tube) ++count;
  }
  return count;
}

// Exact P[count > threshold] for a walk with theta = 1 started at 0, by DP over
// (position, number of far points) with the far count capped once the event
// becomes impossible.
inline double non_confinement_probability(const IncrementDist& dist, std::span<const double> f, double tube,
                                          std::size_t horizon, double threshold) {
  if (dist.max_theta() != 1) throw std::invalid_argument("exact non-confinement DP needs theta = 1");
  if (f.size() < horizon + 1) throw std::invalid_argument("f must be tabulated on 0..horizon");
  // count > threshold iff at most points - floor(threshold) - 1 points are far.
  const long long points = static_cast<long long>(horizon) + 1;
  const long long need_close = static_cast<long long>(std::floor(threshold)) + 1;
  const long long max_far = points - need_close;
  if (max_far < 0) return 0.0;
  const long long reach = dist.max_abs_x() * static_cast<long long>(horizon);
  const auto width = static_cast<std::size_t>(2 * reach + 1);
  const auto far_states = static_cast<std::size_t>(max_far + 1);
  std::vector<double> cur(width * far_states, 0.0), nxt(width * far_states, 0.0);
  const auto is_far = [&](long long pos, std::size_t k) { return !(std::abs(static_cast<double>(pos) - f[k]) < tube); };
  {
    const long long far0 = is_far(0, 0) ? 1 : 0;
    if (far0 <= max_far) cur[static_cast<std::size_t>(reach) * far_states + static_cast<std::size_t>(far0)] = 1.0;
  }
  const auto& xs = dist.blocks()[0].x;
  for (std::size_t k = 1; k <= horizon; ++k) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (std::size_t p = 0; p < width; ++p) {
      for (std::size_t fcount = 0; fcount < far_states; ++fcount) {
        const double m = cur[p * far_states + fcount];
        if (m == 0.0) continue;
        for (const auto& [x, w] : xs) {
          const long long q = static_cast<long long>(p) + x;
          if (q < 0 || q >= static_cast<long long>(width)) continue;
          const std::size_t nf = fcount + (is_far(q - reach, k) ? 1 : 0);
          if (nf >= far_states) continue;
          nxt[static_cast<std::size_t>(q) * far_states + nf] += m * w;
        }
      }
    }
    cur.swap(nxt);
  }
  double total = 0.0;
  for (auto v : cur) total += v;
  return total;
}

}  // namespace fkw::walks
