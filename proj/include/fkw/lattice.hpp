#pragma once

// Finite boxes of the square lattice, edge configurations, cluster labels,
// connection/non-intersection events and cluster envelopes.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fkw::lattice {

struct Site {
  int col = 0;
  int row = 0;
  friend bool operator==(const Site&, const Site&) = default;
  friend auto operator<=>(const Site&, const Site&) = default;
};

enum class Boundary { free, wired };

inline std::string_view to_string(Boundary b) { return b == Boundary::free ? "free" : "wired"; }

inline Boundary parse_boundary(std::string_view s) {
  if (s == "free") return Boundary::free;
  if (s == "wired") return Boundary::wired;
  throw std::invalid_argument("unknown boundary condition '" + std::string(s) + "'");
}

// Box [0,n] x [h_lo,h_hi]. Vertices and edges are indexed column-major:
// within column k come first the vertical edges of column k (bottom to top),
// then the horizontal edges from column k to k+1. Consequently the edges
// lying in columns 0..k form the index prefix [0, edges_up_to_column(k)).
class BoxGeometry {
 public:
  BoxGeometry(int n, int h_lo, int h_hi) : n_(n), h_lo_(h_lo), h_hi_(h_hi) {
    // A single row (h_lo == h_hi) is accepted: it is the path graph used for
    // exact two-point checks.
    if (n < 1) throw std::invalid_argument("box needs n >= 1");
    if (h_lo > h_hi) throw std::invalid_argument("box needs h_lo <= h_hi");
  }

  int n() const noexcept { return n_; }
  int h_lo() const noexcept { return h_lo_; }
  int h_hi() const noexcept { return h_hi_; }
  int columns() const noexcept { return n_ + 1; }
  int rows() const noexcept { return h_hi_ - h_lo_ + 1; }

  std::size_t vertex_count() const noexcept {
    return static_cast<std::size_t>(columns()) * static_cast<std::size_t>(rows());
  }
  std::size_t edge_count() const noexcept {
    return static_cast<std::size_t>(n_) * column_stride() + static_cast<std::size_t>(rows() - 1);
  }
  std::size_t edges_up_to_column(int k) const noexcept {
    return static_cast<std::size_t>(k) * column_stride() + static_cast<std::size_t>(rows() - 1);
  }

  bool contains(Site s) const noexcept {
    return s.col >= 0 && s.col <= n_ && s.row >= h_lo_ && s.row <= h_hi_;
  }

  std::size_t vertex(Site s) const {
    if (!contains(s)) {
      throw std::out_of_range("site (" + std::to_string(s.col) + "," + std::to_string(s.row) +
                              ") outside the box");
    }
    return static_cast<std::size_t>(s.col) * static_cast<std::size_t>(rows()) +
           static_cast<std::size_t>(s.row - h_lo_);
  }

  Site site(std::size_t v) const noexcept {
    const auto r = static_cast<std::size_t>(rows());
    return {static_cast<int>(v / r), static_cast<int>(v % r) + h_lo_};
  }

  // Edge (col,row)-(col,row+1).
  std::size_t vertical_edge(int col, int row) const noexcept {
    return static_cast<std::size_t>(col) * column_stride() + static_cast<std::size_t>(row - h_lo_);
  }
  // Edge (col,row)-(col+1,row).
  std::size_t horizontal_edge(int col, int row) const noexcept {
    return static_cast<std::size_t>(col) * column_stride() + static_cast<std::size_t>(rows() - 1) +
           static_cast<std::size_t>(row - h_lo_);
  }

  std::pair<std::size_t, std::size_t> endpoints(std::size_t e) const noexcept {
    const std::size_t stride = column_stride();
    const auto col = static_cast<int>(e / stride);
    const std::size_t offset = e % stride;
    const auto vert = static_cast<std::size_t>(rows() - 1);
    const auto r = static_cast<std::size_t>(rows());
    const std::size_t base = static_cast<std::size_t>(col) * r;
    if (offset < vert) return {base + offset, base + offset + 1};
    const std::size_t row_off = offset - vert;
    return {base + row_off, base + r + row_off};
  }

  // Incident edges of v; unused slots are empty.
  std::array<std::optional<std::size_t>, 4> incident_edges(std::size_t v) const noexcept {
    const Site s = site(v);
    std::array<std::optional<std::size_t>, 4> out{};
    if (s.row < h_hi_) out[0] = vertical_edge(s.col, s.row);
    if (s.row > h_lo_) out[1] = vertical_edge(s.col, s.row - 1);
    if (s.col < n_) out[2] = horizontal_edge(s.col, s.row);
    if (s.col > 0) out[3] = horizontal_edge(s.col - 1, s.row);
    return out;
  }

  // Vertices with a lattice neighbour outside the box.
  bool on_boundary(std::size_t v) const noexcept {
    const Site s = site(v);
    return s.col == 0 || s.col == n_ || s.row == h_lo_ || s.row == h_hi_;
  }

  std::string to_string() const {
    return std::to_string(n_) + "," + std::to_string(h_lo_) + "," + std::to_string(h_hi_);
  }

  friend bool operator==(const BoxGeometry&, const BoxGeometry&) = default;

 private:
  std::size_t column_stride() const noexcept { return static_cast<std::size_t>(2 * rows() - 1); }

  int n_;
  int h_lo_;
  int h_hi_;
};

class EdgeConfig {
 public:
  EdgeConfig(BoxGeometry geometry, Boundary boundary)
      : geometry_(geometry), boundary_(boundary), words_((geometry.edge_count() + 63) / 64, 0) {}

  static EdgeConfig all_open(BoxGeometry geometry, Boundary boundary) {
    EdgeConfig c(geometry, boundary);
    for (std::size_t e = 0; e < c.edge_count(); ++e) c.set(e, true);
    return c;
  }

  const BoxGeometry& geometry() const noexcept { return geometry_; }
  Boundary boundary() const noexcept { return boundary_; }
  std::size_t edge_count() const noexcept { return geometry_.edge_count(); }

  bool is_open(std::size_t e) const noexcept { return (words_[e >> 6] >> (e & 63)) & 1u; }

  void set(std::size_t e, bool open) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (e & 63);
    if (open) {
      words_[e >> 6] |= bit;
    } else {
      words_[e >> 6] &= ~bit;
    }
  }

  // o(omega)
  std::size_t open_count() const noexcept {
    std::size_t total = 0;
    for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  friend bool operator==(const EdgeConfig&, const EdgeConfig&) = default;

 private:
  BoxGeometry geometry_;
  Boundary boundary_;
  std::vector<std::uint64_t> words_;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) noexcept {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // Returns true when two distinct classes were merged.
  bool unite(std::size_t a, std::size_t b) noexcept {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

  std::size_t size() const noexcept { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

// Partition of the box vertices into open clusters. For wired boundary
// conditions all boundary vertices form a single cluster, so cluster_count()
// is k(omega^eta).
class ClusterLabeling {
 public:
  ClusterLabeling(std::vector<std::size_t> root, std::size_t clusters)
      : root_(std::move(root)), clusters_(clusters) {}

  std::size_t root(std::size_t v) const noexcept { return root_[v]; }
  bool connected(std::size_t u, std::size_t v) const noexcept { return root_[u] == root_[v]; }
  std::size_t cluster_count() const noexcept { return clusters_; }
  std::size_t vertex_count() const noexcept { return root_.size(); }

  std::vector<std::size_t> members(std::size_t root) const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < root_.size(); ++v) {
      if (root_[v] == root) out.push_back(v);
    }
    return out;
  }

 private:
  std::vector<std::size_t> root_;
  std::size_t clusters_;
};

// Labels clusters using only edges with index < edge_limit.
inline ClusterLabeling label_clusters_prefix(const EdgeConfig& config, std::size_t edge_limit) {
  const BoxGeometry& g = config.geometry();
  const std::size_t nv = g.vertex_count();
  UnionFind uf(nv);
  std::size_t clusters = nv;
  if (config.boundary() == Boundary::wired) {
    std::optional<std::size_t> anchor;
    for (std::size_t v = 0; v < nv; ++v) {
      if (!g.on_boundary(v)) continue;
      if (!anchor) {
        anchor = v;
      } else if (uf.unite(*anchor, v)) {
        --clusters;
      }
    }
  }
  const std::size_t limit = std::min(edge_limit, config.edge_count());
  for (std::size_t e = 0; e < limit; ++e) {
    if (!config.is_open(e)) continue;
    const auto [a, b] = g.endpoints(e);
    if (uf.unite(a, b)) --clusters;
  }
  std::vector<std::size_t> root(nv);
  for (std::size_t v = 0; v < nv; ++v) root[v] = uf.find(v);
  return {std::move(root), clusters};
}

inline ClusterLabeling label_clusters(const EdgeConfig& config) {
  return label_clusters_prefix(config, config.edge_count());
}

// x in the Weyl chamber: strictly increasing coordinates.
template <typename T>
bool in_weyl_chamber(std::span<const T> x) {
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i - 1] < x[i])) return false;
  }
  return true;
}

struct ConNi {
  bool in_con = false;
  bool in_ni = false;
};

namespace detail {
inline void require_endpoints(const BoxGeometry& g, std::span<const int> x, std::span<const int> y) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument("x and y must be non-empty and of equal length");
  }
  if (!in_weyl_chamber(x) || !in_weyl_chamber(y)) {
    throw std::invalid_argument("x and y must be strictly increasing");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    (void)g.vertex({0, x[i]});
    (void)g.vertex({g.n(), y[i]});
  }
}
}  // namespace detail

inline ConNi check_con_ni(const EdgeConfig& config, const ClusterLabeling& labels,
                          std::span<const int> x, std::span<const int> y) {
  const BoxGeometry& g = config.geometry();
  detail::require_endpoints(g, x, y);
  ConNi out{true, true};
  std::vector<std::size_t> roots;
  roots.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t src = g.vertex({0, x[i]});
    const std::size_t dst = g.vertex({g.n(), y[i]});
    if (!labels.connected(src, dst)) out.in_con = false;
    roots.push_back(labels.root(src));
  }
  std::sort(roots.begin(), roots.end());
  out.in_ni = std::adjacent_find(roots.begin(), roots.end()) == roots.end();
  return out;
}

inline ConNi check_con_ni(const EdgeConfig& config, std::span<const int> x, std::span<const int> y) {
  return check_con_ni(config, label_clusters(config), x, y);
}

// Upper/lower envelopes Gamma^+_i(k), Gamma^-_i(k), k = 0..n.
struct EnvelopePair {
  std::vector<std::vector<int>> upper;
  std::vector<std::vector<int>> lower;
  std::size_t r() const noexcept { return upper.size(); }
};

inline EnvelopePair extract_envelopes(const EdgeConfig& config, const ClusterLabeling& labels,
                                      std::span<const int> x, std::span<const int> y) {
  const BoxGeometry& g = config.geometry();
  detail::require_endpoints(g, x, y);
  const std::size_t r = x.size();
  const auto cols = static_cast<std::size_t>(g.columns());
  constexpr int kUnset = std::numeric_limits<int>::min();
  EnvelopePair env{std::vector<std::vector<int>>(r, std::vector<int>(cols, kUnset)),
                   std::vector<std::vector<int>>(r, std::vector<int>(cols, kUnset))};
  std::vector<std::size_t> roots(r);
  for (std::size_t i = 0; i < r; ++i) roots[i] = labels.root(g.vertex({0, x[i]}));
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    const std::size_t root = labels.root(v);
    for (std::size_t i = 0; i < r; ++i) {
      if (roots[i] != root) continue;
      const Site s = g.site(v);
      auto& hi = env.upper[i][static_cast<std::size_t>(s.col)];
      auto& lo = env.lower[i][static_cast<std::size_t>(s.col)];
      if (hi == kUnset || s.row > hi) hi = s.row;
      if (lo == kUnset || s.row < lo) lo = s.row;
    }
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      if (env.upper[i][k] == kUnset) {
        throw std::logic_error("cluster " + std::to_string(i) + " misses column " +
                               std::to_string(k) + ": configuration is not in Con");
      }
    }
  }
  return env;
}

inline EnvelopePair extract_envelopes(const EdgeConfig& config, std::span<const int> x,
                                      std::span<const int> y) {
  return extract_envelopes(config, label_clusters(config), x, y);
}

// Edges of the box with exactly one endpoint in the vertex set. Together
// with the open edges inside the set they decide the event {C_x = set}.
inline std::vector<std::size_t> exterior_boundary(const BoxGeometry& g,
                                                  std::span<const std::size_t> cluster) {
  std::vector<char> inside(g.vertex_count(), 0);
  for (auto v : cluster) inside[v] = 1;
  std::vector<std::size_t> out;
  for (auto v : cluster) {
    for (const auto& e : g.incident_edges(v)) {
      if (!e) continue;
      const auto [a, b] = g.endpoints(*e);
      if (inside[a] != inside[b]) out.push_back(*e);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Open edges with both endpoints in the vertex set.
inline std::vector<std::size_t> internal_open_edges(const EdgeConfig& config,
                                                    std::span<const std::size_t> cluster) {
  const BoxGeometry& g = config.geometry();
  std::vector<char> inside(g.vertex_count(), 0);
  for (auto v : cluster) inside[v] = 1;
  std::vector<std::size_t> out;
  for (auto v : cluster) {
    for (const auto& e : g.incident_edges(v)) {
      if (!e || !config.is_open(*e)) continue;
      const auto [a, b] = g.endpoints(*e);
      if (inside[a] && inside[b]) out.push_back(*e);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Line format "n,h_lo,h_hi;boundary;hex". Bit e of the edge bitmap is bit
// (e mod 8) of byte e/8; bytes are written in order as two lowercase hex digits.
inline std::string to_line(const EdgeConfig& config) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = config.geometry().to_string();
  out += ';';
  out += to_string(config.boundary());
  out += ';';
  const std::size_t bytes = (config.edge_count() + 7) / 8;
  for (std::size_t i = 0; i < bytes; ++i) {
    const auto byte = static_cast<unsigned>((config.words()[i / 8] >> (8 * (i % 8))) & 0xFFu);
    out += kHex[byte >> 4];
    out += kHex[byte & 0xF];
  }
  return out;
}

inline EdgeConfig from_line(std::string_view line) {
  const auto bad = [&](const std::string& why) {
    return std::invalid_argument("malformed configuration line (" + why + "): " + std::string(line));
  };
  const auto s1 = line.find(';');
  const auto s2 = s1 == std::string_view::npos ? s1 : line.find(';', s1 + 1);
  if (s2 == std::string_view::npos) throw bad("expected two ';'");
  std::istringstream geo{std::string(line.substr(0, s1))};
  int n = 0, lo = 0, hi = 0;
  char c1 = 0, c2 = 0;
  if (!(geo >> n >> c1 >> lo >> c2 >> hi) || c1 != ',' || c2 != ',' || !geo.eof()) {
    throw bad("geometry");
  }
  EdgeConfig config(BoxGeometry(n, lo, hi), parse_boundary(line.substr(s1 + 1, s2 - s1 - 1)));
  const std::string_view hex = line.substr(s2 + 1);
  const std::size_t bytes = (config.edge_count() + 7) / 8;
  if (hex.size() != 2 * bytes) throw bad("bitmap length");
  const auto nibble = [&](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw bad("hex digit");
  };
  for (std::size_t i = 0; i < bytes; ++i) {
    const unsigned byte = (nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]);
    for (unsigned b = 0; b < 8; ++b) {
      const std::size_t e = 8 * i + b;
      if (!((byte >> b) & 1u)) continue;
      if (e >= config.edge_count()) throw bad("bits set beyond edge count");
      config.set(e, true);
    }
  }
  return config;
}

}  // namespace fkw::lattice
