#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "fkw/geometry.hpp"
#include "fkw/gibbs.hpp"
#include "fkw/io.hpp"
#include "fkw/lattice.hpp"
#include "fkw/rng.hpp"
#include "fkw/stats.hpp"
#include "fkw/walks.hpp"
#include "fkw/watermelon.hpp"

namespace fkw::harness {

using gibbs::RcParams;
using lattice::Boundary;
using lattice::BoxGeometry;
using lattice::EdgeConfig;
using lattice::Site;
using walks::BudgetExhausted;

// ---------------------------------------------------------------------------
// Execution plumbing

inline std::size_t default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Runs job(i) for i in [0, jobs) on up to `threads` workers. Jobs write to
// their own slot, so results do not depend on scheduling.
template <typename Job>
void parallel_for(std::size_t jobs, std::size_t threads, Job&& job) {
  threads = std::max<std::size_t>(1, std::min(threads, jobs));
  if (threads == 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs || failed.load()) return;
        try {
          job(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

class Budget {
 public:
  Budget() = default;
  explicit Budget(double seconds)
      : deadline_(std::chrono::steady_clock::now() +
                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds))) {}

  bool expired() const {
    return deadline_ && std::chrono::steady_clock::now() >= *deadline_;
  }

 private:
  std::optional<std::chrono::steady_clock::time_point> deadline_;
};

struct RunContext {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  Budget budget;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Box [0,n] x [-H, H] with 2H >= max(4 sqrt(n) sigma, |x| + |y| + 4 sqrt(n)),
// large enough to hold every endpoint.
inline BoxGeometry default_box(int n, std::span<const int> x, std::span<const int> y, double sigma = 1.0) {
  double nx = 0.0, ny = 0.0;
  int extreme = 0;
  for (int v : x) {
    nx += static_cast<double>(v) * v;
    extreme = std::max(extreme, std::abs(v));
  }
  for (int v : y) {
    ny += static_cast<double>(v) * v;
    extreme = std::max(extreme, std::abs(v));
  }
  const double root = std::sqrt(static_cast<double>(n));
  const double height = std::max(4.0 * root * sigma, std::sqrt(nx) + std::sqrt(ny) + 4.0 * root);
  const int half = std::max(static_cast<int>(std::ceil(height / 2.0)), extreme + 1);
  return BoxGeometry(n, -half, half);
}

// ---------------------------------------------------------------------------
// Column transfer for Bernoulli percolation (q = 1, free boundary).
//
// Scanning the box column by column, the only information about columns
// 0..k that matters for the future is the partition of column k induced by
// open paths in columns 0..k, together with which blocks carry the r source
// clusters. The event A_k = {every source reaches column k inside columns
// 0..k and the sources are pairwise disconnected there} decreases in k and
// A_n together with (n,y_i) in the cluster of (0,x_i) is Con and NI.

struct ColumnState {
  std::vector<int> label;  // canonical block of each row of the current column
  std::vector<int> src;    // block of each source cluster

  friend bool operator<(const ColumnState& a, const ColumnState& b) {
    return std::tie(a.label, a.src) < std::tie(b.label, b.src);
  }
};

namespace detail {

inline int dsu_find(std::vector<int>& parent, int v) {
  while (parent[static_cast<std::size_t>(v)] != v) {
    parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
    v = parent[static_cast<std::size_t>(v)];
  }
  return v;
}

inline void dsu_unite(std::vector<int>& parent, int a, int b) {
  a = dsu_find(parent, a);
  b = dsu_find(parent, b);
  if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
}

}  // namespace detail

// First column: vertical edges of column 0 only; vert[j] joins rows j, j+1.
inline bool init_column(std::span<const char> vert, std::span<const int> source_rows, ColumnState& out) {
  const int rows = static_cast<int>(vert.size()) + 1;
  std::vector<int> parent(static_cast<std::size_t>(rows));
  for (int j = 0; j < rows; ++j) parent[static_cast<std::size_t>(j)] = j;
  for (int j = 0; j + 1 < rows; ++j) {
    if (vert[static_cast<std::size_t>(j)]) detail::dsu_unite(parent, j, j + 1);
  }
  out.label.assign(static_cast<std::size_t>(rows), -1);
  std::vector<int> canon(static_cast<std::size_t>(rows), -1);
  int next = 0;
  for (int j = 0; j < rows; ++j) {
    const int root = detail::dsu_find(parent, j);
    if (canon[static_cast<std::size_t>(root)] < 0) canon[static_cast<std::size_t>(root)] = next++;
    out.label[static_cast<std::size_t>(j)] = canon[static_cast<std::size_t>(root)];
  }
  out.src.clear();
  for (int row : source_rows) {
    const int b = out.label[static_cast<std::size_t>(row)];
    if (std::find(out.src.begin(), out.src.end(), b) != out.src.end()) return false;
    out.src.push_back(b);
  }
  return true;
}

// Adds the horizontal edges into the next column (horiz[j] at row j) and the
// vertical edges of that column. Returns false when A_{k+1} fails.
inline bool advance_column(const ColumnState& in, std::span<const char> horiz, std::span<const char> vert,
                           ColumnState& out) {
  const int rows = static_cast<int>(in.label.size());
  const int blocks = *std::max_element(in.label.begin(), in.label.end()) + 1;
  thread_local std::vector<int> parent, canon;
  parent.resize(static_cast<std::size_t>(blocks + rows));
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  for (int j = 0; j < rows; ++j) {
    if (horiz[static_cast<std::size_t>(j)]) detail::dsu_unite(parent, in.label[static_cast<std::size_t>(j)], blocks + j);
  }
  for (int j = 0; j + 1 < rows; ++j) {
    if (vert[static_cast<std::size_t>(j)]) detail::dsu_unite(parent, blocks + j, blocks + j + 1);
  }
  canon.assign(parent.size(), -1);
  out.label.assign(static_cast<std::size_t>(rows), -1);
  int next = 0;
  for (int j = 0; j < rows; ++j) {
    const int root = detail::dsu_find(parent, blocks + j);
    if (canon[static_cast<std::size_t>(root)] < 0) canon[static_cast<std::size_t>(root)] = next++;
    out.label[static_cast<std::size_t>(j)] = canon[static_cast<std::size_t>(root)];
  }
  out.src.resize(in.src.size());
  for (std::size_t i = 0; i < in.src.size(); ++i) {
    const int root = detail::dsu_find(parent, in.src[i]);
    const int b = canon[static_cast<std::size_t>(root)];
    if (b < 0) return false;  // the cluster stopped before this column
    for (std::size_t j = 0; j < i; ++j) {
      if (out.src[j] == b) return false;  // two sources merged
    }
    out.src[i] = b;
  }
  return true;
}

inline bool final_connection(const ColumnState& s, std::span<const int> target_rows) {
  for (std::size_t i = 0; i < target_rows.size(); ++i) {
    if (s.label[static_cast<std::size_t>(target_rows[i])] != s.src[i]) return false;
  }
  return true;
}

namespace detail {

inline void require_bernoulli_free(const RcParams& params) {
  params.validate();
  if (params.q != 1.0) throw std::invalid_argument("column splitting needs q = 1");
  if (params.boundary != Boundary::free) throw std::invalid_argument("column splitting needs free boundary");
}

inline std::vector<int> rows_of(const BoxGeometry& g, std::span<const int> heights) {
  std::vector<int> out;
  for (int h : heights) out.push_back(h - g.h_lo());
  return out;
}

}  // namespace detail

// Exact phi[Con, NI] for q = 1 on boxes of at most 6 rows, by summing the
// column transfer over all 2^(2 rows - 1) column configurations.
inline long double exact_transfer_con_ni(const RcParams& params, const BoxGeometry& g, std::span<const int> x,
                                         std::span<const int> y) {
  detail::require_bernoulli_free(params);
  lattice::detail::require_endpoints(g, x, y);
  const int rows = g.rows();
  if (rows > 6) throw std::invalid_argument("exact column transfer supports at most 6 rows");
  const auto xr = detail::rows_of(g, x), yr = detail::rows_of(g, y);
  const long double p = params.p;
  auto weight = [&](unsigned mask, int bits) {
    const int open = std::popcount(mask);
    return std::pow(p, static_cast<long double>(open)) * std::pow(1.0L - p, static_cast<long double>(bits - open));
  };
  auto unpack = [](unsigned mask, int from, int count) {
    std::vector<char> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = static_cast<char>((mask >> (from + i)) & 1u);
    return v;
  };
  std::map<ColumnState, long double> states;
  for (unsigned m = 0; m < (1u << (rows - 1)); ++m) {
    ColumnState s;
    if (init_column(unpack(m, 0, rows - 1), xr, s)) states[s] += weight(m, rows - 1);
  }
  const int bits = 2 * rows - 1;
  for (int k = 1; k <= g.n(); ++k) {
    std::map<ColumnState, long double> next;
    for (const auto& [s, w] : states) {
      for (unsigned m = 0; m < (1u << bits); ++m) {
        ColumnState t;
        if (advance_column(s, unpack(m, 0, rows), unpack(m, rows, rows - 1), t)) next[t] += w * weight(m, bits);
      }
    }
    states = std::move(next);
  }
  long double total = 0.0L;
  for (const auto& [s, w] : states) {
    if (final_connection(s, yr)) total += w;
  }
  return total;
}

struct SplittingRun {
  double estimate = 0.0;           // product of per-column survival fractions
  std::vector<double> survival;    // one entry per column plus the final connection
  std::vector<EdgeConfig> finals;  // survivors of the last step, before resampling
};

// One run of the column splitting with `particles` particles: extend every
// particle by one column of independent edges, kill those leaving A_k,
// resample the survivors back to full strength. The product of survival
// fractions is an unbiased estimator of phi[Con, NI].
inline SplittingRun splitting_run(const RcParams& params, const BoxGeometry& g, std::span<const int> x,
                                  std::span<const int> y, std::size_t particles, Stream& rng, bool keep_finals) {
  detail::require_bernoulli_free(params);
  lattice::detail::require_endpoints(g, x, y);
  if (particles == 0) throw std::invalid_argument("splitting needs at least one particle");
  const int rows = g.rows();
  const auto xr = detail::rows_of(g, x), yr = detail::rows_of(g, y);
  struct Particle {
    EdgeConfig config;
    ColumnState state;
  };
  SplittingRun run;
  // cur/next are reused across columns so that copies do not allocate.
  std::vector<Particle> cur(particles, Particle{EdgeConfig(g, Boundary::free), {}}), next = cur;
  std::vector<std::size_t> alive;
  alive.reserve(particles);
  std::vector<char> horiz(static_cast<std::size_t>(rows)), vert(static_cast<std::size_t>(rows - 1));
  ColumnState scratch;
  auto draw_vertical = [&](Particle& pt, int col) {
    for (int j = 0; j + 1 < rows; ++j) {
      const bool open = rng.bernoulli(params.p);
      vert[static_cast<std::size_t>(j)] = open;
      pt.config.set(g.vertical_edge(col, g.h_lo() + j), open);
    }
  };
  for (std::size_t i = 0; i < particles; ++i) {
    draw_vertical(cur[i], 0);
    if (init_column(vert, xr, cur[i].state)) alive.push_back(i);
  }
  run.survival.push_back(static_cast<double>(alive.size()) / static_cast<double>(particles));
  for (int k = 1; k <= g.n(); ++k) {
    if (alive.empty()) break;
    for (std::size_t i = 0; i < particles; ++i) next[i] = cur[alive[rng.below(alive.size())]];
    alive.clear();
    for (std::size_t i = 0; i < particles; ++i) {
      Particle& pt = next[i];
      for (int j = 0; j < rows; ++j) {
        const bool open = rng.bernoulli(params.p);
        horiz[static_cast<std::size_t>(j)] = open;
        pt.config.set(g.horizontal_edge(k - 1, g.h_lo() + j), open);
      }
      draw_vertical(pt, k);
      if (advance_column(pt.state, horiz, vert, scratch)) {
        std::swap(pt.state, scratch);
        alive.push_back(i);
      }
    }
    std::swap(cur, next);
    run.survival.push_back(static_cast<double>(alive.size()) / static_cast<double>(particles));
  }
  std::size_t connected = 0;
  for (std::size_t i : alive) {
    if (!final_connection(cur[i].state, yr)) continue;
    ++connected;
    if (keep_finals) run.finals.push_back(cur[i].config);
  }
  run.survival.push_back(alive.empty() ? 0.0 : static_cast<double>(connected) / static_cast<double>(alive.size()));
  if (run.survival.size() < static_cast<std::size_t>(g.n()) + 2) {
    run.estimate = 0.0;
  } else {
    double z = 1.0;
    for (double s : run.survival) z *= s;
    run.estimate = z;
  }
  return run;
}

// ---------------------------------------------------------------------------
// Con and NI probabilities

enum class ConNiMethod { rejection, enumeration, splitting };

inline std::string_view to_string(ConNiMethod m) {
  switch (m) {
    case ConNiMethod::rejection:
      return "rejection";
    case ConNiMethod::enumeration:
      return "enumeration";
    case ConNiMethod::splitting:
      return "splitting";
  }
  return "?";
}

inline ConNiMethod parse_con_ni_method(std::string_view s) {
  if (s == "rejection" || s == "rejection-from-fk") return ConNiMethod::rejection;
  if (s == "enumeration") return ConNiMethod::enumeration;
  if (s == "splitting") return ConNiMethod::splitting;
  throw std::invalid_argument("unknown method '" + std::string(s) + "' (rejection|enumeration|splitting)");
}

struct ConNiEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  std::size_t hits = 0;  // rejection only
  bool exact = false;
  std::optional<double> upper_bound;  // 95% one-sided bound when nothing was accepted
  ConNiMethod method = ConNiMethod::rejection;
};

inline constexpr std::size_t kSplittingReplicates = 20;
inline constexpr std::size_t kRejectionChains = 8;

inline ConNiEstimate estimate_con_ni(const RcParams& params, const BoxGeometry& g, std::span<const int> x,
                                     std::span<const int> y, std::size_t samples, ConNiMethod method,
                                     const RunContext& ctx = {}, const gibbs::ChainSettings& settings = {}) {
  params.validate();
  lattice::detail::require_endpoints(g, x, y);
  ConNiEstimate out;
  out.method = method;
  const std::vector<int> xv(x.begin(), x.end()), yv(y.begin(), y.end());
  if (method == ConNiMethod::enumeration) {
    out.estimate = static_cast<double>(gibbs::exact_enumerate(params, g, [&](const EdgeConfig& c) {
      const auto e = lattice::check_con_ni(c, xv, yv);
      return e.in_con && e.in_ni;
    }));
    out.exact = true;
    return out;
  }
  if (samples == 0) throw std::invalid_argument("estimate needs samples > 0");
  if (method == ConNiMethod::splitting) {
    const std::size_t per = std::max<std::size_t>(10, samples / kSplittingReplicates);
    std::vector<double> z(kSplittingReplicates);
    parallel_for(kSplittingReplicates, ctx.threads, [&](std::size_t rep) {
      Stream rng(ctx.seed, 0x5911700 + rep);
      z[rep] = splitting_run(params, g, xv, yv, per, rng, false).estimate;
    });
    const auto m = stats::mean_se(z);
    out.estimate = m.mean;
    out.stderr_ = m.se;
    out.samples = per * kSplittingReplicates;
    if (m.mean == 0.0) out.upper_bound = 3.0 / static_cast<double>(out.samples);
    return out;
  }
  const std::size_t chains = kRejectionChains;
  std::vector<std::size_t> hits(chains, 0), counts(chains, 0);
  parallel_for(chains, ctx.threads, [&](std::size_t c) {
    const std::size_t count = samples / chains + (c < samples % chains ? 1 : 0);
    counts[c] = count;
    gibbs::run_chain(params, g, settings, count, ctx.seed, c, [&](const gibbs::ChainState& s) {
      const auto e = lattice::check_con_ni(s.config(), s.labeling(), xv, yv);
      if (e.in_con && e.in_ni) ++hits[c];
    });
  });
  for (std::size_t c = 0; c < chains; ++c) {
    out.hits += hits[c];
    out.samples += counts[c];
  }
  const auto pr = stats::proportion(out.hits, out.samples);
  out.estimate = pr.mean;
  out.stderr_ = pr.se;
  if (out.hits == 0) out.upper_bound = 3.0 / static_cast<double>(out.samples);
  return out;
}

// ---------------------------------------------------------------------------
// Conditioned samples from phi[. | Con, NI]

struct ConditionedBatch {
  std::vector<EdgeConfig> configs;
  std::size_t proposals = 0;
  double acceptance = 0.0;
  ConNiMethod method = ConNiMethod::splitting;
};

inline constexpr std::size_t kConditionedChains = 8;

// splitting: particle independent Metropolis-Hastings. Each proposal is a
// fresh splitting run; it is accepted with probability min(1, Z'/Z) and a
// uniformly chosen survivor becomes the state; the state is emitted every
// `thin` proposals. The chain leaves phi[. | Con, NI] invariant for any
// particle count.
// rejection: heat-bath chain, keeping the thinned states that lie in Con and NI.
inline ConditionedBatch sample_conditioned(const RcParams& params, const BoxGeometry& g, std::span<const int> x,
                                           std::span<const int> y, std::size_t count, ConNiMethod method,
                                           const RunContext& ctx = {}, std::size_t particles = 400,
                                           std::size_t thin = 4, std::size_t max_proposals = 100'000'000,
                                           const gibbs::ChainSettings& settings = {}) {
  params.validate();
  lattice::detail::require_endpoints(g, x, y);
  const std::vector<int> xv(x.begin(), x.end()), yv(y.begin(), y.end());
  ConditionedBatch batch;
  batch.method = method;
  const std::size_t chains = kConditionedChains;
  std::vector<std::vector<EdgeConfig>> out(chains);
  std::vector<std::size_t> proposals(chains, 0), accepted(chains, 0);
  std::vector<char> exhausted(chains, 0);
  if (method == ConNiMethod::enumeration) throw std::invalid_argument("enumeration does not produce samples");
  parallel_for(chains, ctx.threads, [&](std::size_t c) {
    const std::size_t want = count / chains + (c < count % chains ? 1 : 0);
    const std::size_t cap = max_proposals / chains + 1;
    if (want == 0) return;
    if (method == ConNiMethod::splitting) {
      Stream rng(ctx.seed, 0xC0D1710 + c);
      std::optional<EdgeConfig> current;
      double z = 0.0;
      while (!current) {
        if (proposals[c]++ >= cap || ctx.budget.expired()) {
          exhausted[c] = 1;
          return;
        }
        auto run = splitting_run(params, g, xv, yv, particles, rng, true);
        if (run.estimate > 0.0) {
          z = run.estimate;
          current = run.finals[rng.below(run.finals.size())];
        }
      }
      while (out[c].size() < want) {
        for (std::size_t t = 0; t < std::max<std::size_t>(1, thin); ++t) {
          if (proposals[c]++ >= cap || ctx.budget.expired()) {
            exhausted[c] = 1;
            return;
          }
          auto run = splitting_run(params, g, xv, yv, particles, rng, true);
          const double u = rng.uniform();
          if (run.estimate > 0.0 && u * z < run.estimate) {
            z = run.estimate;
            current = run.finals[rng.below(run.finals.size())];
            ++accepted[c];
          }
        }
        out[c].push_back(*current);
      }
      return;
    }
    params.validate();
    gibbs::ChainState state(gibbs::initial_config(g, params.boundary), ctx.seed, 0xC0D0000 + c);
    for (std::size_t s = 0; s < settings.burn_in; ++s) gibbs::sweep(state, params);
    const std::size_t thin = std::max<std::size_t>(1, settings.thinning);
    while (out[c].size() < want) {
      if (proposals[c]++ >= cap || ctx.budget.expired()) {
        exhausted[c] = 1;
        return;
      }
      for (std::size_t s = 0; s < thin; ++s) gibbs::sweep(state, params);
      const auto e = lattice::check_con_ni(state.config(), state.labeling(), xv, yv);
      if (e.in_con && e.in_ni) {
        out[c].push_back(state.config());
        ++accepted[c];
      }
    }
  });
  std::size_t acc = 0;
  for (std::size_t c = 0; c < chains; ++c) {
    for (auto& cfg : out[c]) batch.configs.push_back(std::move(cfg));
    batch.proposals += proposals[c];
    acc += accepted[c];
  }
  batch.acceptance = batch.proposals ? static_cast<double>(acc) / static_cast<double>(batch.proposals) : 0.0;
  if (std::any_of(exhausted.begin(), exhausted.end(), [](char e) { return e != 0; })) {
    throw BudgetExhausted("conditioned sampler stopped after " + std::to_string(batch.proposals) +
                          " proposals with " + std::to_string(batch.configs.size()) + " of " +
                          std::to_string(count) + " samples; acceptance rate " + std::to_string(batch.acceptance));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Exponent fits

struct DecayPoint {
  int n = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;
};

struct DecayFit {
  double intercept = 0.0;
  double rate = 0.0;  // coefficient of -n (already divided by r where relevant)
  double rate_se = 0.0;
  double rho = 0.0;   // coefficient of -log n
  double rho_se = 0.0;
  double chi2 = 0.0;
  std::size_t dof = 0;
  double condition = 0.0;
  bool ill_conditioned = false;
  std::vector<DecayPoint> points;
};

inline constexpr double kIllConditioned = 1e12;

// log value = a - rate_scale * rate * n - rho * log n, weighted by the
// relative standard errors. With fit_rate false the rate is fixed to zero;
// with fixed_rho set the exponent is fixed instead of fitted.
inline DecayFit fit_decay(const std::vector<DecayPoint>& points, bool fit_rate, std::optional<double> fixed_rho,
                          double rate_scale = 1.0) {
  const std::size_t params = 1 + (fit_rate ? 1 : 0) + (fixed_rho ? 0 : 1);
  if (points.size() < params) throw std::invalid_argument("decay fit needs at least as many points as parameters");
  const auto m = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(m, static_cast<Eigen::Index>(params));
  Eigen::VectorXd b(m), sigma(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& pt = points[static_cast<std::size_t>(i)];
    if (!(pt.value > 0.0)) throw std::invalid_argument("decay fit needs positive values");
    const double ln = std::log(static_cast<double>(pt.n));
    Eigen::Index col = 0;
    a(i, col++) = 1.0;
    if (fit_rate) a(i, col++) = -rate_scale * pt.n;
    if (!fixed_rho) a(i, col++) = -ln;
    b(i) = std::log(pt.value) + (fixed_rho ? *fixed_rho * ln : 0.0);
    sigma(i) = pt.stderr_ > 0.0 ? pt.stderr_ / pt.value : 1.0;
  }
  const auto fit = stats::weighted_least_squares(a, b, sigma);
  DecayFit out;
  out.points = points;
  out.chi2 = fit.chi2;
  out.dof = fit.dof;
  out.condition = fit.condition;
  out.ill_conditioned = !(fit.condition < kIllConditioned);
  Eigen::Index col = 0;
  out.intercept = fit.beta(col++);
  if (fit_rate) {
    out.rate = fit.beta(col);
    out.rate_se = fit.se(static_cast<std::size_t>(col));
    ++col;
  }
  if (fixed_rho) {
    out.rho = *fixed_rho;
  } else {
    out.rho = fit.beta(col);
    out.rho_se = fit.se(static_cast<std::size_t>(col));
  }
  return out;
}

struct TauOptions {
  // Exponent of the polynomial prefactor n^(-rho) assumed in the fit; 1/2
  // is the single-cluster value, 0 is exact for the path graph.
  double prefactor_exponent = 0.5;
  std::optional<int> half_height;  // overrides default_box
  ConNiMethod method = ConNiMethod::splitting;
};

struct TauEstimate {
  double tau = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  DecayFit fit;
  std::vector<int> dropped;
  std::vector<std::string> warnings;
  bool subadditive_ok = true;  // phi(n) <= exp(-tau n) (1 + 3 relative se) for every n
  bool partial = false;
};

inline BoxGeometry tau_box(int n, const TauOptions& opt) {
  if (opt.half_height) return BoxGeometry(n, -*opt.half_height, *opt.half_height);
  const std::vector<int> o{0};
  return default_box(n, o, o);
}

inline TauEstimate estimate_tau(const RcParams& params, const std::vector<int>& n_list, std::size_t samples,
                                const RunContext& ctx = {}, const TauOptions& opt = {}) {
  params.validate();
  if (n_list.size() < 2) throw std::invalid_argument("estimate_tau needs at least two values of n");
  TauEstimate out;
  if (params.q == 1.0 && params.p > 0.5) {
    out.warnings.push_back("p above the self-dual point: the two-point function does not decay");
  }
  const std::vector<int> o{0};
  std::vector<DecayPoint> pts;
  for (int n : n_list) {
    if (ctx.budget.expired()) {
      out.partial = true;
      break;
    }
    Stopwatch sw;
    const BoxGeometry g = tau_box(n, opt);
    RunContext sub = ctx;
    sub.seed = ctx.seed + 7919u * static_cast<std::uint64_t>(n);
    const auto e = estimate_con_ni(params, g, o, o, samples, opt.method, sub);
    if (!(e.estimate > 0.0) || (e.method == ConNiMethod::rejection && e.hits < 10)) {
      out.dropped.push_back(n);
      out.warnings.push_back("n=" + std::to_string(n) + " dropped: connection probability below Monte Carlo resolution");
      continue;
    }
    pts.push_back({n, e.estimate, e.stderr_, e.samples, sw.seconds()});
  }
  if (pts.size() < 2) throw std::runtime_error("estimate_tau: fewer than two usable values of n");
  out.fit = fit_decay(pts, true, opt.prefactor_exponent);
  out.tau = out.fit.rate;
  out.se = out.fit.rate_se;
  out.ci_low = out.tau - 1.96 * out.se;
  out.ci_high = out.tau + 1.96 * out.se;
  for (const auto& pt : pts) {
    const double rel = pt.stderr_ / pt.value;
    if (pt.value > std::exp(-out.tau * pt.n) * (1.0 + 3.0 * rel)) out.subadditive_ok = false;
  }
  return out;
}

struct ScalingResult {
  DecayFit fit;
  double rho_target = 0.0;  // r^2 / 2
  std::optional<TauEstimate> tau;
  double rate_z = 0.0;  // (rate_fit - tau) / joint se
  bool partial = false;
};

// Fits log phi[Con, NI] = a - tau_fit r n - rho log n over n_list.
inline ScalingResult fit_con_ni_scaling(const RcParams& params, const std::vector<int>& x, const std::vector<int>& y,
                                        const std::vector<int>& n_list, std::size_t samples, const RunContext& ctx = {},
                                        ConNiMethod method = ConNiMethod::splitting, bool with_tau = true) {
  if (n_list.size() < 4) throw std::invalid_argument("scaling fit needs at least four values of n");
  ScalingResult out;
  const double r = static_cast<double>(x.size());
  out.rho_target = r * r / 2.0;
  std::vector<DecayPoint> pts;
  for (int n : n_list) {
    if (ctx.budget.expired()) {
      out.partial = true;
      break;
    }
    Stopwatch sw;
    RunContext sub = ctx;
    sub.seed = ctx.seed + 104729u * static_cast<std::uint64_t>(n);
    const auto e = estimate_con_ni(params, default_box(n, x, y), x, y, samples, method, sub);
    if (!(e.estimate > 0.0)) continue;
    pts.push_back({n, e.estimate, e.stderr_, e.samples, sw.seconds()});
  }
  if (pts.size() < 3) throw std::runtime_error("scaling fit: fewer than three usable values of n");
  out.fit = fit_decay(pts, true, std::nullopt, r);
  if (with_tau && !out.partial) {
    RunContext sub = ctx;
    sub.seed = ctx.seed ^ 0x7A0ull;
    TauOptions opt;
    opt.method = method;
    out.tau = estimate_tau(params, n_list, samples, sub, opt);
    const double joint = std::hypot(out.fit.rate_se, out.tau->se);
    out.rate_z = joint > 0.0 ? (out.fit.rate - out.tau->tau) / joint : 0.0;
  }
  return out;
}

// Exact walk surrogate: q_n = P[r walks from x hit y at time n staying in W],
// fitted as log q_n = a - rho log n.
inline DecayFit fit_walk_exponent(const walks::IncrementDist& dist, const std::vector<long long>& x,
                                  const std::vector<long long>& y, const std::vector<long long>& n_list) {
  std::vector<DecayPoint> pts;
  for (long long n : n_list) {
    const auto k = walks::dp_weyl_kernel(dist, x, y, n);
    pts.push_back({static_cast<int>(n), k.probability, 0.0, 0, 0.0});
  }
  return fit_decay(pts, false, std::nullopt);
}

// Confinement of a +-1 walk near f = 0: the event {count > alpha n^(1-eps)},
// count = #{k <= n^(1-eps) : |S(k)| < n^eps}, estimated by simulation and
// computed exactly by DP.
struct NonConfinementRow {
  long long n = 0;
  std::size_t horizon = 0;
  double tube = 0.0;
  double threshold = 0.0;
  std::size_t samples = 0;
  std::size_t hits = 0;
  double frequency = 0.0;
  double stderr_ = 0.0;
  double exact = 0.0;
};

inline NonConfinementRow non_confinement_trial(long long n, double eps, double alpha, std::size_t samples,
                                               const RunContext& ctx) {
  if (n < 1 || !(eps > 0.0 && eps < 1.0) || samples == 0) throw std::invalid_argument("bad non-confinement setup");
  NonConfinementRow row;
  row.n = n;
  row.horizon = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 1.0 - eps)));
  row.tube = std::pow(static_cast<double>(n), eps);
  row.threshold = alpha * std::pow(static_cast<double>(n), 1.0 - eps);
  row.samples = samples;
  // count > threshold  <=>  far points <= max_far
  const long long points = static_cast<long long>(row.horizon) + 1;
  const long long max_far = points - (static_cast<long long>(std::floor(row.threshold)) + 1);
  constexpr std::size_t kJobs = 64;
  std::vector<std::size_t> hits(kJobs, 0);
  parallel_for(kJobs, ctx.threads, [&](std::size_t j) {
    Stream rng(ctx.seed, static_cast<std::uint64_t>(n) * 4096u + j);
    const std::size_t lo = samples * j / kJobs, hi = samples * (j + 1) / kJobs;
    for (std::size_t s = lo; s < hi; ++s) {
      long long pos = 0, far = 0;
      std::uint64_t bits = 0;
      int left = 0;
      for (std::size_t k = 1; k <= row.horizon && far <= max_far; ++k) {
        if (left == 0) {
          bits = rng.next_u64();
          left = 64;
        }
        pos += (bits & 1u) ? 1 : -1;
        bits >>= 1;
        --left;
        if (!(std::abs(static_cast<double>(pos)) < row.tube)) ++far;
      }
      if (far <= max_far) ++hits[j];
    }
  });
  for (auto h : hits) row.hits += h;
  const auto pr = stats::proportion(row.hits, samples);
  row.frequency = pr.mean;
  row.stderr_ = pr.se;
  const std::vector<double> f(row.horizon + 1, 0.0);
  row.exact = walks::non_confinement_probability(walks::IncrementDist::simple(), f, row.tube, row.horizon,
                                                 row.threshold);
  return row;
}

// ---------------------------------------------------------------------------
// Envelope statistics

struct EnvelopeMidpoints {
  std::vector<std::vector<double>> mid;  // mid[s][i]: (upper + lower) / 2 at column n/2
  std::vector<double> width;             // max over i and columns of upper - lower
};

inline EnvelopeMidpoints envelope_midpoints(const std::vector<EdgeConfig>& configs, std::span<const int> x,
                                            std::span<const int> y) {
  EnvelopeMidpoints out;
  for (const auto& c : configs) {
    const auto env = lattice::extract_envelopes(c, x, y);
    const auto half = static_cast<std::size_t>(c.geometry().n() / 2);
    std::vector<double> m(env.r());
    int w = 0;
    for (std::size_t i = 0; i < env.r(); ++i) {
      m[i] = 0.5 * (env.upper[i][half] + env.lower[i][half]);
      for (std::size_t k = 0; k < env.upper[i].size(); ++k) w = std::max(w, env.upper[i][k] - env.lower[i][k]);
    }
    out.mid.push_back(std::move(m));
    out.width.push_back(w);
  }
  return out;
}

// KS distance between a sample supported on a lattice of spacing h and a
// continuous law discretised to the same lattice (cells of width h centred
// on the lattice points).
inline double ks_lattice(std::vector<double> x, const std::function<double(double)>& cdf, double h) {
  if (x.empty()) throw std::invalid_argument("ks_lattice needs samples");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < x.size()) {
    std::size_t j = i;
    while (j < x.size() && x[j] - x[i] < 0.25 * h) ++j;
    const double v = x[i];
    d = std::max(d, std::abs(static_cast<double>(i) / n - cdf(v - 0.5 * h)));
    d = std::max(d, std::abs(static_cast<double>(j) / n - cdf(v + 0.5 * h)));
    i = j;
  }
  return d;
}

struct ConvergenceRow {
  int n = 0;
  std::size_t samples = 0;
  double ks = 0.0;             // max over ordered coordinates
  double ks_threshold = 0.0;   // alpha = 0.01
  double width_median_over_sqrt_n = 0.0;
  double width_median_over_log_n = 0.0;
  double acceptance = 0.0;
  double seconds = 0.0;
};

struct ConvergenceReport {
  std::size_t r = 0;
  double sigma = 0.0;
  std::vector<ConvergenceRow> rows;
  bool ks_non_increasing = false;
  bool width_decreasing = false;
  bool partial = false;
};

struct ConvergenceOptions {
  std::optional<double> sigma;  // fitted at the largest n when absent
  std::size_t particles = 400;
  std::size_t thin = 4;
};

// Scaled midpoints z_i = (m_i - c) / (sigma sqrt n), c the mean endpoint
// height, against the ordered watermelon marginals at t = 1/2.
inline ConvergenceReport envelope_convergence_test(const RcParams& params, const std::vector<int>& x,
                                                   const std::vector<int>& y, const std::vector<int>& n_list,
                                                   std::size_t samples, const RunContext& ctx = {},
                                                   const ConvergenceOptions& opt = {}) {
  if (n_list.empty()) throw std::invalid_argument("convergence test needs n values");
  for (int n : n_list) {
    if (n % 2 != 0) throw std::invalid_argument("convergence test needs even n");
  }
  ConvergenceReport rep;
  rep.r = x.size();
  double center = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) center += 0.5 * (x[i] + y[i]);
  center /= static_cast<double>(x.size());
  struct Batch {
    int n;
    EnvelopeMidpoints mids;
    double acceptance;
    double seconds;
  };
  std::vector<Batch> batches;
  for (int n : n_list) {
    if (ctx.budget.expired()) {
      rep.partial = true;
      break;
    }
    Stopwatch sw;
    RunContext sub = ctx;
    sub.seed = ctx.seed + 31337u * static_cast<std::uint64_t>(n);
    const auto b = sample_conditioned(params, default_box(n, x, y), x, y, samples,
                                      params.q == 1.0 ? ConNiMethod::splitting : ConNiMethod::rejection, sub,
                                      opt.particles, opt.thin);
    batches.push_back({n, envelope_midpoints(b.configs, x, y), b.acceptance, sw.seconds()});
  }
  if (batches.empty()) return rep;
  const double s = 0.25;
  const double r = static_cast<double>(rep.r);
  if (opt.sigma) {
    rep.sigma = *opt.sigma;
  } else {
    // E sum z_i^2 = r^2 s for the watermelon, read at the largest n.
    const auto& last = batches.back();
    double m2 = 0.0;
    for (const auto& m : last.mids.mid) {
      for (double v : m) m2 += (v - center) * (v - center);
    }
    m2 /= static_cast<double>(last.mids.mid.size());
    rep.sigma = std::sqrt(m2 / (r * r * s * last.n));
  }
  watermelon::OrderedMarginals om(rep.r, 0.5);
  for (const auto& b : batches) {
    ConvergenceRow row;
    row.n = b.n;
    row.samples = b.mids.mid.size();
    row.acceptance = b.acceptance;
    row.seconds = b.seconds;
    const double scale = rep.sigma * std::sqrt(static_cast<double>(b.n));
    for (std::size_t i = 0; i < rep.r; ++i) {
      std::vector<double> z;
      for (const auto& m : b.mids.mid) z.push_back((m[i] - center) / scale);
      row.ks = std::max(row.ks, ks_lattice(z, [&](double v) { return om.cdf(i, v); }, 0.5 / scale));
    }
    row.ks_threshold = stats::ks_threshold(row.samples);
    const double med = stats::median(b.mids.width);
    row.width_median_over_sqrt_n = med / std::sqrt(static_cast<double>(b.n));
    row.width_median_over_log_n = med / std::log(static_cast<double>(b.n));
    rep.rows.push_back(row);
  }
  rep.ks_non_increasing = true;
  rep.width_decreasing = true;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    if (rep.rows[k].ks > rep.rows[k - 1].ks) rep.ks_non_increasing = false;
    if (!(rep.rows[k].width_median_over_sqrt_n < rep.rows[k - 1].width_median_over_sqrt_n)) rep.width_decreasing = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Global repulsion

struct GlobRepRow {
  int n = 0;
  std::size_t samples = 0;
  double freq_t1_late = 0.0;      // T_1 >= n^(1-eps)
  double freq_t2_early = 0.0;     // T_2 <= n - n^(1-eps)
  double freq_bulk_close = 0.0;   // min bulk inter-envelope distance <= (log n)^2
  double freq_violation = 0.0;    // complement of GlobRep
};

struct GlobRepTimes {
  std::optional<int> t1;
  std::optional<int> t2;
  double bulk_min = std::numeric_limits<double>::infinity();
};

// T'_1, T'_2 from the envelopes, moved to the nearest synchronisation times of
// the maximal skeletons inwards; bulk distance min_i min_{T_1<=t<=T_2}
// |lower_i(t) - upper_{i-1}(t)|.
inline GlobRepTimes globrep_times(const EdgeConfig& config, std::span<const int> x, std::span<const int> y,
                                  double eps, const geometry::ConeParams& cone = {}) {
  const BoxGeometry& g = config.geometry();
  const auto labels = lattice::label_clusters(config);
  const auto env = lattice::extract_envelopes(config, labels, x, y);
  const std::size_t r = env.r();
  const int n = g.n();
  const double level = std::pow(static_cast<double>(n), eps);
  auto separated = [&](int t) {
    const auto k = static_cast<std::size_t>(t);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = i + 1; j < r; ++j) {
        for (int a : {env.upper[i][k], env.lower[i][k]}) {
          for (int b : {env.upper[j][k], env.lower[j][k]}) {
            if (!(std::abs(a - b) > level)) return false;
          }
        }
      }
    }
    return true;
  };
  std::optional<int> t1p, t2p;
  for (int t = 0; t <= n; ++t) {
    if (separated(t)) {
      if (!t1p) t1p = t;
      t2p = t;
    }
  }
  GlobRepTimes out;
  if (!t1p) return out;
  std::vector<geometry::Skeleton> sks;
  for (std::size_t i = 0; i < r; ++i) {
    const auto members = labels.members(labels.root(g.vertex({0, x[i]})));
    const auto sites = geometry::cluster_sites(g, members);
    sks.push_back(geometry::Skeleton{geometry::cone_points(sites, cone), geometry::SkeletonFlavor::maximal});
  }
  const auto sync = geometry::synchronized_skeleton(sks);
  for (int c : sync.columns) {
    if (c >= *t1p && !out.t1) out.t1 = c;
    if (c <= *t2p) out.t2 = c;
  }
  if (out.t1 && out.t2 && *out.t1 <= *out.t2) {
    for (int t = *out.t1; t <= *out.t2; ++t) {
      const auto k = static_cast<std::size_t>(t);
      for (std::size_t i = 1; i < r; ++i) {
        out.bulk_min = std::min(out.bulk_min, static_cast<double>(std::abs(env.lower[i][k] - env.upper[i - 1][k])));
      }
    }
  }
  return out;
}

inline GlobRepRow globrep_diagnostic(const std::vector<EdgeConfig>& samples, std::span<const int> x,
                                     std::span<const int> y, double eps = 0.2) {
  GlobRepRow row;
  if (samples.empty()) throw std::invalid_argument("globrep diagnostic needs samples");
  row.n = samples.front().geometry().n();
  row.samples = samples.size();
  if (x.size() == 1) return row;  // no pairs: every event is vacuous
  const double n = row.n;
  const double edge = std::pow(n, 1.0 - eps);
  const double bulk = std::pow(std::log(n), 2.0);
  std::size_t late = 0, early = 0, close = 0, bad = 0;
  for (const auto& c : samples) {
    const auto t = globrep_times(c, x, y, eps);
    const bool l = !t.t1 || *t.t1 >= edge;
    const bool e = !t.t2 || *t.t2 <= n - edge;
    const bool b = !(t.t1 && t.t2 && *t.t1 <= *t.t2) || t.bulk_min <= bulk;
    late += l;
    early += e;
    close += b;
    bad += (l || e || b);
  }
  const double s = static_cast<double>(samples.size());
  row.freq_t1_late = late / s;
  row.freq_t2_early = early / s;
  row.freq_bulk_close = close / s;
  row.freq_violation = bad / s;
  return row;
}

// ---------------------------------------------------------------------------
// Supercritical truncated two-point function (q = 1)

struct TruncatedEstimate {
  int n = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  std::size_t hits = 0;
};

// phi[0 <-> (n,0), cluster of 0 avoids the box boundary] on [-m, n+m] x [-m, m],
// estimated by exploring the cluster of the origin and drawing each edge
// the first time it is examined.
inline TruncatedEstimate truncated_two_point(double p, int n, int margin, std::size_t samples, const RunContext& ctx) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0,1)");
  if (n < 1 || margin < 1) throw std::invalid_argument("need n >= 1 and margin >= 1");
  const BoxGeometry g(n + 2 * margin, -margin, margin);
  const std::size_t origin = g.vertex({margin, 0}), target = g.vertex({margin + n, 0});
  const std::size_t jobs = 16;
  std::vector<std::size_t> hits(jobs, 0), counts(jobs, 0);
  parallel_for(jobs, ctx.threads, [&](std::size_t job) {
    const std::size_t count = samples / jobs + (job < samples % jobs ? 1 : 0);
    counts[job] = count;
    Stream rng(ctx.seed, 0xD0A1 + job);
    std::vector<std::uint32_t> edge_epoch(g.edge_count(), 0), vert_epoch(g.vertex_count(), 0);
    std::vector<char> edge_open(g.edge_count(), 0);
    std::vector<std::size_t> queue;
    for (std::size_t s = 0; s < count; ++s) {
      const auto epoch = static_cast<std::uint32_t>(s + 1);
      queue.clear();
      queue.push_back(origin);
      vert_epoch[origin] = epoch;
      bool touched = false, reached = false;
      for (std::size_t head = 0; head < queue.size() && !touched; ++head) {
        const std::size_t v = queue[head];
        if (g.on_boundary(v)) {
          touched = true;
          break;
        }
        if (v == target) reached = true;
        for (const auto& e : g.incident_edges(v)) {
          if (!e) continue;
          if (edge_epoch[*e] != epoch) {
            edge_epoch[*e] = epoch;
            edge_open[*e] = rng.bernoulli(p);
          }
          if (!edge_open[*e]) continue;
          const auto [a, b] = g.endpoints(*e);
          const std::size_t w = a == v ? b : a;
          if (vert_epoch[w] == epoch) continue;
          vert_epoch[w] = epoch;
          queue.push_back(w);
        }
      }
      if (!touched && reached) ++hits[job];
    }
  });
  TruncatedEstimate out;
  out.n = n;
  for (std::size_t j = 0; j < jobs; ++j) {
    out.hits += hits[j];
    out.samples += counts[j];
  }
  const auto pr = stats::proportion(out.hits, out.samples);
  out.value = pr.mean;
  out.stderr_ = pr.se;
  return out;
}

struct DualityReport {
  double p = 0.0;
  double p_star = 0.0;
  double involution_error = 0.0;
  DecayFit fit;  // log phi_f + 2 log n = a - rate n
  TauEstimate tau_dual;
  double ratio = 0.0;
  double ratio_se = 0.0;
  std::vector<TruncatedEstimate> points;
  bool partial = false;
};

inline DualityReport duality_stretch_check(double p, const std::vector<int>& n_list, std::size_t samples,
                                           const std::vector<int>& tau_n_list, std::size_t tau_samples,
                                           const RunContext& ctx = {}, int margin = 0) {
  DualityReport rep;
  rep.p = p;
  rep.p_star = gibbs::dual_parameter(p, 1.0);
  rep.involution_error = std::abs(gibbs::dual_parameter(rep.p_star, 1.0) - p);
  if (!(p > 0.5)) throw std::invalid_argument("duality check needs p above the self-dual point 1/2");
  std::vector<DecayPoint> pts;
  for (int n : n_list) {
    if (ctx.budget.expired()) {
      rep.partial = true;
      break;
    }
    Stopwatch sw;
    RunContext sub = ctx;
    sub.seed = ctx.seed + 613u * static_cast<std::uint64_t>(n);
    const int m = margin > 0 ? margin : std::max(4, static_cast<int>(std::ceil(2.0 * std::sqrt(static_cast<double>(n)))));
    const auto e = truncated_two_point(p, n, m, samples, sub);
    rep.points.push_back(e);
    if (e.hits >= 10) pts.push_back({n, e.value, e.stderr_, e.samples, sw.seconds()});
  }
  if (pts.size() < 2) throw std::runtime_error("duality check: fewer than two usable values of n");
  rep.fit = fit_decay(pts, true, 2.0);
  RunContext sub = ctx;
  sub.seed = ctx.seed ^ 0xD0A1D0A1ull;
  rep.tau_dual = estimate_tau({rep.p_star, 1.0, Boundary::free}, tau_n_list, tau_samples, sub);
  rep.ratio = rep.fit.rate / rep.tau_dual.tau;
  rep.ratio_se = std::abs(rep.ratio) * std::hypot(rep.fit.rate_se / rep.fit.rate, rep.tau_dual.se / rep.tau_dual.tau);
  return rep;
}

// ---------------------------------------------------------------------------
// Reports

struct ExperimentReport {
  std::string id;
  io::RunManifest manifest;
  io::Json results = io::Json::object();
  io::CsvTable table{{"n", "estimate", "stderr", "samples", "seconds"}};
  std::map<std::string, bool> checks;
  double seconds = 0.0;
  bool partial = false;

  io::Json to_json() const {
    io::Json j;
    j["experiment"] = id;
    j["manifest"] = manifest.to_json();
    j["results"] = results;
    io::Json c = io::Json::object();
    for (const auto& [k, v] : checks) c[k] = v;
    j["checks"] = c;
    j["partial"] = partial;
    j["seconds"] = seconds;
    return j;
  }
};

inline io::Json to_json(const DecayFit& f) {
  io::Json j;
  j["intercept"] = f.intercept;
  j["rate"] = f.rate;
  j["rate_se"] = f.rate_se;
  j["rho"] = f.rho;
  j["rho_se"] = f.rho_se;
  j["chi2"] = f.chi2;
  j["dof"] = f.dof;
  j["condition"] = f.condition;
  j["ill_conditioned"] = f.ill_conditioned;
  io::Json pts = io::Json::array();
  for (const auto& p : f.points) {
    pts.push_back({{"n", p.n}, {"estimate", p.value}, {"stderr", p.stderr_}, {"samples", p.samples}});
  }
  j["points"] = pts;
  return j;
}

inline void add_points(io::CsvTable& t, const std::vector<DecayPoint>& pts) {
  for (const auto& p : pts) t.row(p.n, p.value, p.stderr_, p.samples, p.seconds);
}

inline io::Json to_json(const TauEstimate& t) {
  io::Json j;
  j["tau"] = t.tau;
  j["se"] = t.se;
  j["ci95"] = {t.ci_low, t.ci_high};
  j["fit"] = to_json(t.fit);
  j["dropped"] = t.dropped;
  j["warnings"] = t.warnings;
  j["subadditive_ok"] = t.subadditive_ok;
  return j;
}

inline io::Json to_json(const ConvergenceReport& c) {
  io::Json j;
  j["r"] = c.r;
  j["sigma"] = c.sigma;
  io::Json rows = io::Json::array();
  for (const auto& r : c.rows) {
    rows.push_back({{"n", r.n},
                    {"samples", r.samples},
                    {"ks", r.ks},
                    {"ks_threshold", r.ks_threshold},
                    {"width_median_over_sqrt_n", r.width_median_over_sqrt_n},
                    {"width_median_over_log_n", r.width_median_over_log_n},
                    {"acceptance", r.acceptance}});
  }
  j["rows"] = rows;
  j["ks_non_increasing"] = c.ks_non_increasing;
  j["width_decreasing"] = c.width_decreasing;
  return j;
}

inline io::Json to_json(const GlobRepRow& g) {
  return {{"n", g.n},
          {"samples", g.samples},
          {"freq_t1_late", g.freq_t1_late},
          {"freq_t2_early", g.freq_t2_early},
          {"freq_bulk_close", g.freq_bulk_close},
          {"freq_violation", g.freq_violation}};
}

}  // namespace fkw::harness
