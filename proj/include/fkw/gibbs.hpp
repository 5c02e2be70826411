#pragma once

// Random-cluster measure on a box: single-edge heat-bath dynamics, exact
// enumeration for small boxes, planar duality and FKG checks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fkw/lattice.hpp"
#include "fkw/rng.hpp"

namespace fkw::gibbs {

using lattice::Boundary;
using lattice::BoxGeometry;
using lattice::EdgeConfig;

struct RcParams {
  double p = 0.5;
  double q = 1.0;
  Boundary boundary = Boundary::free;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0,1)");
    if (!(q >= 1.0)) throw std::invalid_argument("q must be >= 1");
  }
};

// Conditional probability that an edge is open given the rest of the
// configuration: p when its endpoints are joined off the edge, otherwise
// p / (p + (1-p) q) because opening it removes one cluster.
inline double open_probability(const RcParams& params, bool connected_off_edge) noexcept {
  if (connected_off_edge) return params.p;
  return params.p / (params.p + (1.0 - params.p) * params.q);
}

// Answers "are the endpoints of e connected without using e" by BFS over
// open edges. For wired boundaries the boundary vertices act as one node.
class OffEdgeConnectivity {
 public:
  explicit OffEdgeConnectivity(const BoxGeometry& g)
      : stamp_(g.vertex_count(), 0), boundary_flag_(g.vertex_count(), 0), adjacency_(g.vertex_count()) {
    for (std::size_t v = 0; v < g.vertex_count(); ++v) {
      if (g.on_boundary(v)) {
        boundary_.push_back(v);
        boundary_flag_[v] = 1;
      }
      for (const auto& f : g.incident_edges(v)) {
        if (!f) continue;
        const auto [u, w] = g.endpoints(*f);
        adjacency_[v].push_back({*f, u == v ? w : u});
      }
    }
    queue_.reserve(g.vertex_count());
  }

  bool connected(const EdgeConfig& config, std::size_t e) {
    const auto [a, b] = config.geometry().endpoints(e);
    const bool wired = config.boundary() == Boundary::wired;
    if (wired && boundary_flag_[a] && boundary_flag_[b]) return true;
    if (isolated(config, a, e, wired) || isolated(config, b, e, wired)) return false;
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
    queue_.clear();
    stamp_[a] = epoch_;
    queue_.push_back(a);
    bool boundary_expanded = false;
    for (std::size_t head = 0; head < queue_.size(); ++head) {
      const std::size_t v = queue_[head];
      if (wired && !boundary_expanded && boundary_flag_[v]) {
        boundary_expanded = true;
        for (auto w : boundary_) {
          if (stamp_[w] == epoch_) continue;
          if (w == b) return true;
          stamp_[w] = epoch_;
          queue_.push_back(w);
        }
      }
      for (const auto& [f, next] : adjacency_[v]) {
        if (f == e || stamp_[next] == epoch_ || !config.is_open(f)) continue;
        if (next == b) return true;
        stamp_[next] = epoch_;
        queue_.push_back(next);
      }
    }
    return false;
  }

 private:
  bool isolated(const EdgeConfig& config, std::size_t v, std::size_t e, bool wired) const noexcept {
    if (wired && boundary_flag_[v]) return false;
    for (const auto& [f, next] : adjacency_[v]) {
      if (f != e && config.is_open(f)) return false;
    }
    return true;
  }

  struct Neighbour {
    std::size_t edge;
    std::size_t vertex;
  };

  std::vector<std::uint32_t> stamp_;
  std::vector<char> boundary_flag_;
  std::vector<std::size_t> boundary_;
  std::vector<std::vector<Neighbour>> adjacency_;
  std::vector<std::size_t> queue_;
  std::uint32_t epoch_ = 0;
};

struct ChainSettings {
  std::size_t burn_in = 200;
  std::size_t thinning = 10;
};

// One Markov chain. The uniform used to update edge e during sweep s is a
// pure function of (seed, chain, s, e), so chains are reproducible however
// they are scheduled. The cluster labeling is rebuilt on demand whenever the
// configuration has changed since it was last computed.
class ChainState {
 public:
  ChainState(EdgeConfig start, std::uint64_t seed, std::uint64_t chain)
      : config_(std::move(start)),
        connectivity_(config_.geometry()),
        seed_(seed),
        chain_(chain),
        key_(uniform_key(seed, chain)) {}

  const EdgeConfig& config() const noexcept { return config_; }
  std::uint64_t sweeps() const noexcept { return sweeps_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t chain() const noexcept { return chain_; }

  const lattice::ClusterLabeling& labeling() const {
    if (!labeling_) labeling_ = lattice::label_clusters(config_);
    return *labeling_;
  }

  // k(omega) without building a labeling; reuses a scratch buffer.
  std::size_t cluster_count() const {
    if (labeling_) return labeling_->cluster_count();
    const BoxGeometry& g = config_.geometry();
    const std::size_t nv = g.vertex_count();
    scratch_.resize(nv);
    std::iota(scratch_.begin(), scratch_.end(), std::size_t{0});
    auto find = [this](std::size_t x) {
      while (scratch_[x] != x) x = scratch_[x] = scratch_[scratch_[x]];
      return x;
    };
    std::size_t clusters = nv;
    auto unite = [&](std::size_t a, std::size_t b) {
      a = find(a);
      b = find(b);
      if (a == b) return;
      scratch_[b] = a;
      --clusters;
    };
    if (config_.boundary() == Boundary::wired) {
      std::optional<std::size_t> anchor;
      for (std::size_t v = 0; v < nv; ++v) {
        if (!g.on_boundary(v)) continue;
        if (anchor) unite(*anchor, v);
        else anchor = v;
      }
    }
    for (std::size_t e = 0; e < config_.edge_count(); ++e) {
      if (!config_.is_open(e)) continue;
      const auto [a, b] = g.endpoints(e);
      unite(a, b);
    }
    return clusters;
  }

  void set_edge(std::size_t e, bool open) {
    if (config_.is_open(e) == open) return;
    config_.set(e, open);
    labeling_.reset();
  }

  void replace_config(EdgeConfig config) {
    config_ = std::move(config);
    labeling_.reset();
  }

  double uniform_for(std::size_t edge) const noexcept {
    return keyed_uniform(key_, sweeps_, edge);
  }

  bool connected_off_edge(std::size_t edge) { return connectivity_.connected(config_, edge); }

  void finish_sweep() noexcept { ++sweeps_; }

 private:
  EdgeConfig config_;
  mutable std::optional<lattice::ClusterLabeling> labeling_;
  mutable std::vector<std::size_t> scratch_;
  OffEdgeConnectivity connectivity_;
  std::uint64_t seed_;
  std::uint64_t chain_;
  std::uint64_t key_;
  std::uint64_t sweeps_ = 0;
};

// Resamples one edge from its exact conditional law; returns the
// probability that was used.
inline double heat_bath_step(ChainState& state, const RcParams& params, std::size_t edge) {
  const bool joined = params.q == 1.0 ? true : state.connected_off_edge(edge);
  const double prob = open_probability(params, joined);
  state.set_edge(edge, state.uniform_for(edge) < prob);
  return prob;
}

inline void sweep(ChainState& state, const RcParams& params) {
  const std::size_t edges = state.config().edge_count();
  for (std::size_t e = 0; e < edges; ++e) heat_bath_step(state, params, e);
  state.finish_sweep();
}

// Wired chains start from all-open, free chains from all-closed.
inline EdgeConfig initial_config(const BoxGeometry& g, Boundary b) {
  return b == Boundary::wired ? EdgeConfig::all_open(g, b) : EdgeConfig(g, b);
}

inline EdgeConfig sample_fk(const RcParams& params, const BoxGeometry& geometry, std::size_t sweeps,
                            std::uint64_t seed, std::uint64_t chain = 0) {
  params.validate();
  ChainState state(initial_config(geometry, params.boundary), seed, chain);
  for (std::size_t s = 0; s < sweeps; ++s) sweep(state, params);
  return state.config();
}

// Runs burn-in then calls visit(state) once every `thinning` sweeps, count times.
template <typename Visit>
void run_chain(const RcParams& params, const BoxGeometry& geometry, const ChainSettings& settings,
               std::size_t count, std::uint64_t seed, std::uint64_t chain, Visit&& visit) {
  params.validate();
  ChainState state(initial_config(geometry, params.boundary), seed, chain);
  for (std::size_t s = 0; s < settings.burn_in; ++s) sweep(state, params);
  const std::size_t thin = settings.thinning == 0 ? 1 : settings.thinning;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t s = 0; s < thin; ++s) sweep(state, params);
    visit(static_cast<const ChainState&>(state));
  }
}

// p* with p p* / ((1-p)(1-p*)) = q.
inline double dual_parameter(double p, double q) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0,1)");
  if (!(q >= 1.0)) throw std::invalid_argument("q must be >= 1");
  return q * (1.0 - p) / (p + q * (1.0 - p));
}

// ---------------------------------------------------------------------------
// Exact enumeration.

inline constexpr std::size_t kMaxEnumerationEdges = 28;

namespace detail {

// Union by size without path compression, so merges can be undone.
class RollbackUnionFind {
 public:
  explicit RollbackUnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t x) const noexcept {
    while (parent_[x] != x) x = parent_[x];
    return x;
  }
  // Returns the absorbed root, or npos when already joined.
  std::size_t unite(std::size_t a, std::size_t b) noexcept {
    a = find(a);
    b = find(b);
    if (a == b) return npos;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return b;
  }
  void undo(std::size_t absorbed) noexcept {
    const std::size_t root = parent_[absorbed];
    size_[root] -= size_[absorbed];
    parent_[absorbed] = absorbed;
  }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace detail

// Calls visit(config, open_edges, clusters) for each of the 2^|E| configurations,
// where clusters is k(omega^eta).
template <typename Visit>
void enumerate_configs(const BoxGeometry& g, Boundary boundary, Visit&& visit) {
  const std::size_t edges = g.edge_count();
  if (edges > kMaxEnumerationEdges) {
    throw std::length_error("exact enumeration refused: " + std::to_string(edges) +
                            " edges exceeds the budget of " + std::to_string(kMaxEnumerationEdges));
  }
  detail::RollbackUnionFind uf(g.vertex_count());
  std::size_t clusters = g.vertex_count();
  if (boundary == Boundary::wired) {
    std::size_t anchor = detail::RollbackUnionFind::npos;
    for (std::size_t v = 0; v < g.vertex_count(); ++v) {
      if (!g.on_boundary(v)) continue;
      if (anchor == detail::RollbackUnionFind::npos) {
        anchor = v;
      } else if (uf.unite(anchor, v) != detail::RollbackUnionFind::npos) {
        --clusters;
      }
    }
  }
  EdgeConfig config(g, boundary);
  auto rec = [&](auto&& self, std::size_t e, std::size_t open, std::size_t k) -> void {
    if (e == edges) {
      visit(static_cast<const EdgeConfig&>(config), open, k);
      return;
    }
    self(self, e + 1, open, k);
    const auto [a, b] = g.endpoints(e);
    const std::size_t absorbed = uf.unite(a, b);
    config.set(e, true);
    if (absorbed == detail::RollbackUnionFind::npos) {
      self(self, e + 1, open + 1, k);
    } else {
      self(self, e + 1, open + 1, k - 1);
      uf.undo(absorbed);
    }
    config.set(e, false);
  };
  rec(rec, 0, 0, clusters);
}

// Unnormalised weight (p/(1-p))^o q^k.
inline long double rc_weight(const RcParams& params, std::size_t open, std::size_t clusters) {
  return std::pow(static_cast<long double>(params.p) / (1.0L - params.p),
                  static_cast<long double>(open)) *
         std::pow(static_cast<long double>(params.q), static_cast<long double>(clusters));
}

// Exact expectation of f under the random-cluster measure on the box.
template <typename F>
long double exact_expectation(const RcParams& params, const BoxGeometry& g, F&& f) {
  params.validate();
  const std::size_t nv = g.vertex_count();
  const std::size_t ne = g.edge_count();
  std::vector<long double> ratio_pow(ne + 1), q_pow(nv + 1);
  for (std::size_t i = 0; i <= ne; ++i) ratio_pow[i] = rc_weight({params.p, 1.0, params.boundary}, i, 0);
  for (std::size_t i = 0; i <= nv; ++i) q_pow[i] = std::pow(static_cast<long double>(params.q), static_cast<long double>(i));
  long double num = 0.0L;
  long double den = 0.0L;
  enumerate_configs(g, params.boundary, [&](const EdgeConfig& c, std::size_t open, std::size_t k) {
    const long double w = ratio_pow[open] * q_pow[k];
    den += w;
    num += w * static_cast<long double>(f(c));
  });
  return num / den;
}

inline long double exact_enumerate(const RcParams& params, const BoxGeometry& g,
                                   const std::function<bool(const EdgeConfig&)>& event) {
  return exact_expectation(params, g, [&](const EdgeConfig& c) { return event(c) ? 1.0 : 0.0; });
}

// Number of configurations with o open edges and k clusters; the law of
// (o, k) under any (p, q) follows from these counts.
using OkCounts = std::map<std::pair<std::size_t, std::size_t>, std::uint64_t>;

inline OkCounts exact_ok_counts(const BoxGeometry& g, Boundary boundary) {
  const std::size_t nv = g.vertex_count();
  const std::size_t ne = g.edge_count();
  std::vector<std::uint64_t> table((ne + 1) * (nv + 1), 0);
  enumerate_configs(g, boundary, [&](const EdgeConfig&, std::size_t open, std::size_t k) {
    ++table[open * (nv + 1) + k];
  });
  OkCounts out;
  for (std::size_t o = 0; o <= ne; ++o) {
    for (std::size_t k = 0; k <= nv; ++k) {
      if (table[o * (nv + 1) + k] != 0) out[{o, k}] = table[o * (nv + 1) + k];
    }
  }
  return out;
}

inline std::map<std::pair<std::size_t, std::size_t>, double> ok_law(const RcParams& params,
                                                                    const OkCounts& counts) {
  long double total = 0.0L;
  std::map<std::pair<std::size_t, std::size_t>, long double> w;
  for (const auto& [key, count] : counts) {
    const long double v = static_cast<long double>(count) * rc_weight(params, key.first, key.second);
    w[key] = v;
    total += v;
  }
  std::map<std::pair<std::size_t, std::size_t>, double> out;
  for (const auto& [key, v] : w) out[key] = static_cast<double>(v / total);
  return out;
}

// Packs a configuration with at most 64 edges into an integer (bit e = edge e).
inline std::uint64_t config_code(const EdgeConfig& c) { return c.words().empty() ? 0 : c.words()[0]; }

// Exact law over all configurations, indexed by config_code.
inline std::vector<double> exact_config_law(const RcParams& params, const BoxGeometry& g) {
  params.validate();
  if (g.edge_count() > 20) throw std::length_error("full configuration law limited to 20 edges");
  std::vector<long double> w(std::size_t{1} << g.edge_count(), 0.0L);
  long double total = 0.0L;
  enumerate_configs(g, params.boundary, [&](const EdgeConfig& c, std::size_t open, std::size_t k) {
    const long double v = rc_weight(params, open, k);
    w[config_code(c)] = v;
    total += v;
  });
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<double>(w[i] / total);
  return out;
}

// ---------------------------------------------------------------------------
// FKG inequality phi[A and B] >= phi[A] phi[B] for increasing A, B.

using Event = std::function<bool(const EdgeConfig&)>;

struct FkgResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double stderr_diff = 0.0;
  std::size_t samples = 0;
  bool passes = false;
};

inline FkgResult fkg_check(const RcParams& params, const BoxGeometry& g, const Event& a,
                           const Event& b, std::size_t samples, std::uint64_t seed,
                           const ChainSettings& settings = {}) {
  if (samples < 2) throw std::invalid_argument("fkg_check needs at least two samples");
  std::vector<double> xa, xb;
  xa.reserve(samples);
  xb.reserve(samples);
  run_chain(params, g, settings, samples, seed, 0, [&](const ChainState& s) {
    xa.push_back(a(s.config()) ? 1.0 : 0.0);
    xb.push_back(b(s.config()) ? 1.0 : 0.0);
  });
  const auto n = static_cast<double>(samples);
  double ma = 0.0, mb = 0.0, mab = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    ma += xa[i];
    mb += xb[i];
    mab += xa[i] * xb[i];
  }
  ma /= n;
  mb /= n;
  mab /= n;
  const double cov = mab - ma * mb;
  // Influence function of the sample covariance.
  double var = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double psi = (xa[i] - ma) * (xb[i] - mb) - cov;
    var += psi * psi;
  }
  var /= (n - 1.0);
  FkgResult out;
  out.lhs = mab;
  out.rhs = ma * mb;
  out.stderr_diff = std::sqrt(var / n);
  out.samples = samples;
  out.passes = out.lhs >= out.rhs - 3.0 * out.stderr_diff;
  return out;
}

inline FkgResult fkg_exact(const RcParams& params, const BoxGeometry& g, const Event& a,
                           const Event& b) {
  long double pa = 0, pb = 0, pab = 0;
  pa = exact_enumerate(params, g, a);
  pb = exact_enumerate(params, g, b);
  pab = exact_enumerate(params, g, [&](const EdgeConfig& c) { return a(c) && b(c); });
  FkgResult out;
  out.lhs = static_cast<double>(pab);
  out.rhs = static_cast<double>(pa * pb);
  out.passes = pab >= pa * pb - 1e-15L;
  return out;
}

}  // namespace fkw::gibbs
