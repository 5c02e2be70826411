#pragma once

// Cones, diamonds, cone points, maximal skeletons, synchronized skeletons and
// the gap of an ordered vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "fkw/lattice.hpp"

namespace fkw::geometry {

using lattice::Site;

struct ConeParams {
  double delta = 1.0;

  void validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("cone slope must be positive");
  }
};

// w in the forward cone of v: delta (w1 - v1) >= |w2 - v2|.
inline bool in_forward_cone(Site v, Site w, const ConeParams& cone) noexcept {
  return cone.delta * (w.col - v.col) >= std::abs(w.row - v.row);
}

// w in the backward cone of v: delta (w1 - v1) <= -|w2 - v2|.
inline bool in_backward_cone(Site v, Site w, const ConeParams& cone) noexcept {
  return cone.delta * (w.col - v.col) <= -std::abs(w.row - v.row);
}

// Direct O(|C|) test of G inside the union of the two cones at v.
inline bool is_cone_point(std::span<const Site> cluster, Site v, const ConeParams& cone) {
  for (const Site& w : cluster) {
    if (!in_forward_cone(v, w, cone) && !in_backward_cone(v, w, cone)) return false;
  }
  return true;
}

// All cone points of the cluster, sorted by column. A vertex v is a cone point
// iff it is alone in its column and, writing a = row - delta*col and
// b = row + delta*col, every vertex strictly to the right has a <= a_v and
// b >= b_v while every vertex strictly to the left has a >= a_v and b <= b_v.
// Per-column extrema plus prefix/suffix scans give O(|C| + width).
inline std::vector<Site> cone_points(std::span<const Site> cluster, const ConeParams& cone) {
  cone.validate();
  if (cluster.empty()) return {};
  int lo = cluster.front().col, hi = lo;
  for (const Site& s : cluster) {
    lo = std::min(lo, s.col);
    hi = std::max(hi, s.col);
  }
  const auto width = static_cast<std::size_t>(hi - lo + 1);
  constexpr int kNone = std::numeric_limits<int>::min();
  std::vector<int> top(width, kNone), bottom(width, kNone), count(width, 0);
  for (const Site& s : cluster) {
    const auto k = static_cast<std::size_t>(s.col - lo);
    if (top[k] == kNone || s.row > top[k]) top[k] = s.row;
    if (bottom[k] == kNone || s.row < bottom[k]) bottom[k] = s.row;
    ++count[k];
  }
  const double d = cone.delta;
  const double inf = std::numeric_limits<double>::infinity();
  // Right of column k: max of (top - d*col) and min of (bottom + d*col).
  std::vector<double> right_max_a(width + 1, -inf), right_min_b(width + 1, inf);
  for (std::size_t k = width; k-- > 0;) {
    right_max_a[k] = right_max_a[k + 1];
    right_min_b[k] = right_min_b[k + 1];
    if (count[k] == 0) continue;
    const double col = lo + static_cast<double>(k);
    right_max_a[k] = std::max(right_max_a[k], top[k] - d * col);
    right_min_b[k] = std::min(right_min_b[k], bottom[k] + d * col);
  }
  std::vector<Site> out;
  double left_min_a = inf, left_max_b = -inf;
  for (std::size_t k = 0; k < width; ++k) {
    if (count[k] == 1) {
      const double col = lo + static_cast<double>(k);
      const double a = top[k] - d * col;
      const double b = top[k] + d * col;
      if (right_max_a[k + 1] <= a && right_min_b[k + 1] >= b && left_min_a >= a && left_max_b <= b) {
        out.push_back({static_cast<int>(col), top[k]});
      }
    }
    if (count[k] == 0) continue;
    const double col = lo + static_cast<double>(k);
    left_min_a = std::min(left_min_a, bottom[k] - d * col);
    left_max_b = std::max(left_max_b, top[k] + d * col);
  }
  return out;
}

enum class SkeletonFlavor { maximal, synchronized };

struct Skeleton {
  std::vector<Site> points;
  SkeletonFlavor flavor = SkeletonFlavor::maximal;
};

// The diamond D(a,b) = forward cone of a intersected with backward cone of b.
inline bool in_diamond(Site a, Site b, Site w, const ConeParams& cone) noexcept {
  return in_forward_cone(a, w, cone) && in_backward_cone(b, w, cone);
}

// Maximal diamond decomposition: all cone points, in column order. The
// endpoints are required to belong to the cluster; pieces between
// consecutive points are verified to lie in their diamond.
inline Skeleton maximal_decomposition(std::span<const Site> cluster, const ConeParams& cone, Site source,
                                      Site target) {
  const auto has = [&](Site s) { return std::find(cluster.begin(), cluster.end(), s) != cluster.end(); };
  if (!has(source) || !has(target)) {
    throw std::invalid_argument("cluster does not contain both the source and the target");
  }
  Skeleton sk{cone_points(cluster, cone), SkeletonFlavor::maximal};
  for (std::size_t i = 0; i + 1 < sk.points.size(); ++i) {
    const Site a = sk.points[i], b = sk.points[i + 1];
    for (const Site& w : cluster) {
      if (w.col < a.col || w.col > b.col) continue;
      if (!in_diamond(a, b, w, cone)) {
        throw std::logic_error("cluster piece escapes its diamond; cone point detection is inconsistent");
      }
    }
  }
  return sk;
}

// Heights of r skeletons read at the columns they all share.
struct SynchronizedSkeleton {
  std::vector<int> columns;
  std::vector<std::vector<int>> heights;  // heights[k][i]: skeleton i at columns[k]
};

inline SynchronizedSkeleton synchronized_skeleton(std::span<const Skeleton> skeletons) {
  if (skeletons.empty()) throw std::invalid_argument("synchronized skeleton needs r >= 1");
  std::map<int, std::vector<int>> by_column;
  for (const Site& s : skeletons[0].points) by_column[s.col] = {s.row};
  for (std::size_t i = 1; i < skeletons.size(); ++i) {
    std::map<int, std::vector<int>> next;
    for (const Site& s : skeletons[i].points) {
      auto it = by_column.find(s.col);
      if (it == by_column.end()) continue;
      auto h = it->second;
      h.push_back(s.row);
      next.emplace(s.col, std::move(h));
    }
    by_column = std::move(next);
  }
  SynchronizedSkeleton out;
  for (auto& [col, h] : by_column) {
    out.columns.push_back(col);
    out.heights.push_back(std::move(h));
  }
  return out;
}

// Minimum spacing of an increasing vector; +infinity when r = 1.
template <typename T>
double gap(std::span<const T> z) {
  if (z.empty()) throw std::invalid_argument("gap of an empty vector");
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < z.size(); ++i) {
    const double d = static_cast<double>(z[i]) - static_cast<double>(z[i - 1]);
    if (!(d > 0)) throw std::invalid_argument("gap needs strictly increasing coordinates");
    g = std::min(g, d);
  }
  return g;
}

template <typename T>
double gap(const std::vector<T>& z) {
  return gap(std::span<const T>(z));
}

// In coordinates u = delta*x - y, v = delta*x + y the diamond between a and b
// is the rectangle [u_a,u_b] x [v_a,v_b] and the map has Jacobian 2*delta, so
// with d = b1 - a1 and h = b2 - a2 the Euclidean area is
// (delta^2 d^2 - h^2) / (2 delta), and 0 when |h| > delta d.
inline double diamond_area(Site a, Site b, const ConeParams& cone) {
  if (b.col <= a.col) throw std::invalid_argument("diamond endpoints need increasing columns");
  const double d = b.col - a.col;
  const double h = b.row - a.row;
  const double dd = cone.delta * d;
  if (std::abs(h) > dd) return 0.0;
  return (dd * dd - h * h) / (2.0 * cone.delta);
}

inline std::vector<double> diamond_volumes(const Skeleton& skeleton, const ConeParams& cone) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < skeleton.points.size(); ++i) {
    out.push_back(diamond_area(skeleton.points[i], skeleton.points[i + 1], cone));
  }
  return out;
}

// Vertices of a cluster given as vertex indices.
inline std::vector<Site> cluster_sites(const lattice::BoxGeometry& g, std::span<const std::size_t> vertices) {
  std::vector<Site> out;
  out.reserve(vertices.size());
  for (auto v : vertices) out.push_back(g.site(v));
  return out;
}

}  // namespace fkw::geometry
