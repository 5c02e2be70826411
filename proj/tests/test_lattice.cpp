#include <gtest/gtest.h>

#include <algorithm>
#include <queue>
#include <set>
#include <vector>

#include "fkw/lattice.hpp"
#include "fkw/rng.hpp"

using namespace fkw::lattice;

namespace {

// Flood fill over open edges, ignoring the union-find entirely.
std::vector<int> flood_components(const EdgeConfig& c) {
  const auto& g = c.geometry();
  std::vector<int> comp(g.vertex_count(), -1);
  int next = 0;
  std::vector<std::size_t> boundary;
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    if (g.on_boundary(v)) boundary.push_back(v);
  }
  for (std::size_t s = 0; s < g.vertex_count(); ++s) {
    if (comp[s] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(s);
    comp[s] = next;
    bool boundary_added = false;
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      if (c.boundary() == Boundary::wired && g.on_boundary(v) && !boundary_added) {
        boundary_added = true;
        for (auto w : boundary) {
          if (comp[w] < 0) {
            comp[w] = next;
            q.push(w);
          }
        }
      }
      for (const auto& e : g.incident_edges(v)) {
        if (!e || !c.is_open(*e)) continue;
        const auto [a, b] = g.endpoints(*e);
        const auto w = a == v ? b : a;
        if (comp[w] < 0) {
          comp[w] = next;
          q.push(w);
        }
      }
    }
    ++next;
  }
  return comp;
}

EdgeConfig random_config(const BoxGeometry& g, Boundary b, double p, std::uint64_t seed) {
  fkw::Stream rng(seed, 1);
  EdgeConfig c(g, b);
  for (std::size_t e = 0; e < c.edge_count(); ++e) c.set(e, rng.bernoulli(p));
  return c;
}

}  // namespace

TEST(BoxGeometry, TwoByTwoCounts) {
  BoxGeometry g(1, 0, 1);
  EXPECT_EQ(g.vertex_count(), 4u);
  EXPECT_EQ(g.edge_count(), 4u);
}

TEST(BoxGeometry, EdgeIndexIsBijection) {
  BoxGeometry g(5, -2, 3);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.endpoints(e);
    const Site sa = g.site(a), sb = g.site(b);
    EXPECT_EQ(std::abs(sa.col - sb.col) + std::abs(sa.row - sb.row), 1);
    EXPECT_TRUE(seen.insert({std::min(a, b), std::max(a, b)}).second);
  }
  // Every nearest-neighbour pair in the box appears.
  std::size_t pairs = 0;
  for (int c = 0; c <= 5; ++c) {
    for (int r = -2; r <= 3; ++r) {
      if (c < 5) {
        ++pairs;
        const auto e = g.horizontal_edge(c, r);
        EXPECT_EQ(g.endpoints(e), std::make_pair(g.vertex({c, r}), g.vertex({c + 1, r})));
      }
      if (r < 3) {
        ++pairs;
        const auto e = g.vertical_edge(c, r);
        EXPECT_EQ(g.endpoints(e), std::make_pair(g.vertex({c, r}), g.vertex({c, r + 1})));
      }
    }
  }
  EXPECT_EQ(pairs, g.edge_count());
}

TEST(BoxGeometry, ColumnPrefixContainsExactlyEdgesInColumns) {
  BoxGeometry g(6, 0, 4);
  for (int k = 0; k <= 6; ++k) {
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      auto [a, b] = g.endpoints(e);
      const bool inside = g.site(a).col <= k && g.site(b).col <= k;
      EXPECT_EQ(inside, e < g.edges_up_to_column(k)) << "k=" << k << " e=" << e;
    }
  }
}

TEST(LabelClusters, TwoByTwoExamples) {
  BoxGeometry g(1, 0, 1);
  EdgeConfig closed(g, Boundary::free);
  EXPECT_EQ(label_clusters(closed).cluster_count(), 4u);
  EXPECT_EQ(label_clusters(EdgeConfig::all_open(g, Boundary::free)).cluster_count(), 1u);
  for (std::size_t e = 0; e < 4; ++e) {
    EdgeConfig one(g, Boundary::free);
    one.set(e, true);
    EXPECT_EQ(label_clusters(one).cluster_count(), 3u);
  }
}

TEST(LabelClusters, WiredMergesBoundary) {
  BoxGeometry g(4, 0, 4);
  EdgeConfig c(g, Boundary::wired);
  // 25 vertices, 16 on the boundary: one boundary cluster plus 9 interior singletons.
  EXPECT_EQ(label_clusters(c).cluster_count(), 10u);
}

TEST(LabelClusters, MatchesFloodFillOnRandomConfigs) {
  for (int trial = 0; trial < 200; ++trial) {
    const Boundary b = trial % 2 ? Boundary::wired : Boundary::free;
    BoxGeometry g(1 + trial % 7, -(trial % 3), 1 + trial % 5);
    auto c = random_config(g, b, 0.2 + 0.6 * (trial % 5) / 4.0, static_cast<std::uint64_t>(trial));
    const auto lab = label_clusters(c);
    const auto comp = flood_components(c);
    std::set<int> distinct(comp.begin(), comp.end());
    ASSERT_EQ(lab.cluster_count(), distinct.size());
    for (std::size_t u = 0; u < g.vertex_count(); ++u) {
      for (std::size_t v = u + 1; v < g.vertex_count(); ++v) {
        ASSERT_EQ(lab.connected(u, v), comp[u] == comp[v]);
      }
    }
  }
}

TEST(LabelClustersProperty, OpeningAnEdgeLowersKByZeroOrOne) {
  for (int trial = 0; trial < 100; ++trial) {
    BoxGeometry g(4, 0, 3);
    auto c = random_config(g, trial % 2 ? Boundary::wired : Boundary::free, 0.4, 1000 + trial);
    const auto k0 = label_clusters(c).cluster_count();
    for (std::size_t e = 0; e < c.edge_count(); ++e) {
      if (c.is_open(e)) continue;
      auto d = c;
      d.set(e, true);
      const auto k1 = label_clusters(d).cluster_count();
      ASSERT_TRUE(k1 == k0 || k1 + 1 == k0);
    }
  }
}

TEST(LabelClustersProperty, MergingOpenEdgeEndpointsIsIdempotent) {
  BoxGeometry g(5, 0, 4);
  auto c = random_config(g, Boundary::free, 0.5, 9);
  const auto lab = label_clusters(c);
  for (std::size_t e = 0; e < c.edge_count(); ++e) {
    if (!c.is_open(e)) continue;
    auto [a, b] = g.endpoints(e);
    EXPECT_TRUE(lab.connected(a, b));
  }
}

TEST(ConNi, SingleClusterIsAlwaysNonIntersecting) {
  BoxGeometry g(3, 0, 2);
  auto c = EdgeConfig::all_open(g, Boundary::free);
  const std::vector<int> x{1}, y{2};
  const auto r = check_con_ni(c, x, y);
  EXPECT_TRUE(r.in_con);
  EXPECT_TRUE(r.in_ni);
}

TEST(ConNi, GiantClusterIntersects) {
  BoxGeometry g(3, 0, 2);
  auto c = EdgeConfig::all_open(g, Boundary::free);
  const std::vector<int> x{0, 1}, y{0, 1};
  const auto r = check_con_ni(c, x, y);
  EXPECT_TRUE(r.in_con);
  EXPECT_FALSE(r.in_ni);
}

TEST(ConNi, DisjointHorizontalPaths) {
  BoxGeometry g(2, 0, 2);
  EdgeConfig c(g, Boundary::free);
  for (int col = 0; col < 2; ++col) {
    c.set(g.horizontal_edge(col, 0), true);
    c.set(g.horizontal_edge(col, 2), true);
  }
  const std::vector<int> x{0, 2}, y{0, 2};
  const auto r = check_con_ni(c, x, y);
  EXPECT_TRUE(r.in_con);
  EXPECT_TRUE(r.in_ni);
}

TEST(ConNi, RejectsEndpointsOutsideWeylChamber) {
  BoxGeometry g(2, 0, 2);
  EdgeConfig c(g, Boundary::free);
  const std::vector<int> x{1, 0}, y{0, 1};
  EXPECT_THROW(check_con_ni(c, x, y), std::invalid_argument);
  const std::vector<int> same{1, 1};
  EXPECT_THROW(check_con_ni(c, same, same), std::invalid_argument);
}

TEST(ConNiProperty, InvariantUnderRootRelabeling) {
  BoxGeometry g(4, 0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_config(g, Boundary::free, 0.55, 300 + trial);
    const auto lab = label_clusters(c);
    // Relabel roots by a permutation of vertex ids.
    std::vector<std::size_t> root(g.vertex_count());
    for (std::size_t v = 0; v < root.size(); ++v) root[v] = g.vertex_count() - 1 - lab.root(v);
    ClusterLabeling relabeled(root, lab.cluster_count());
    const std::vector<int> x{0, 3}, y{1, 4};
    const auto a = check_con_ni(c, lab, x, y);
    const auto b = check_con_ni(c, relabeled, x, y);
    EXPECT_EQ(a.in_con, b.in_con);
    EXPECT_EQ(a.in_ni, b.in_ni);
  }
}

TEST(Envelopes, HorizontalPath) {
  BoxGeometry g(4, 0, 6);
  EdgeConfig c(g, Boundary::free);
  for (int col = 0; col < 4; ++col) c.set(g.horizontal_edge(col, 3), true);
  const std::vector<int> x{3}, y{3};
  const auto env = extract_envelopes(c, x, y);
  for (int k = 0; k <= 4; ++k) {
    EXPECT_EQ(env.upper[0][k], 3);
    EXPECT_EQ(env.lower[0][k], 3);
  }
}

TEST(Envelopes, SmallCorner) {
  BoxGeometry g(1, 0, 2);
  EdgeConfig c(g, Boundary::free);
  c.set(g.vertical_edge(0, 0), true);
  c.set(g.horizontal_edge(0, 1), true);
  const std::vector<int> x{0}, y{1};
  const auto env = extract_envelopes(c, x, y);
  EXPECT_EQ(env.upper[0][0], 1);
  EXPECT_EQ(env.lower[0][0], 0);
  EXPECT_EQ(env.upper[0][1], 1);
  EXPECT_EQ(env.lower[0][1], 1);
}

TEST(Envelopes, MissingColumnIsACallerBug) {
  BoxGeometry g(3, 0, 2);
  EdgeConfig c(g, Boundary::free);
  const std::vector<int> x{1}, y{1};
  EXPECT_THROW(extract_envelopes(c, x, y), std::logic_error);
}

TEST(Envelopes, InterleavingClustersAreStillDisjoint) {
  // Upper cluster: row 3 with a hook down column 3 and back to (2,1).
  // Lower cluster: row 0 with a spike reaching (2,2) inside the hook.
  BoxGeometry g(4, 0, 4);
  EdgeConfig c(g, Boundary::free);
  for (int col = 0; col < 4; ++col) {
    c.set(g.horizontal_edge(col, 3), true);
    c.set(g.horizontal_edge(col, 0), true);
  }
  c.set(g.vertical_edge(3, 1), true);
  c.set(g.vertical_edge(3, 2), true);
  c.set(g.horizontal_edge(2, 1), true);
  c.set(g.vertical_edge(1, 0), true);
  c.set(g.vertical_edge(1, 1), true);
  c.set(g.horizontal_edge(1, 2), true);
  const std::vector<int> x{0, 3}, y{0, 3};
  const auto r = check_con_ni(c, x, y);
  EXPECT_TRUE(r.in_con);
  EXPECT_TRUE(r.in_ni);
  const auto env = extract_envelopes(c, x, y);
  EXPECT_EQ(env.upper[0][2], 2);
  EXPECT_EQ(env.lower[1][2], 1);
  EXPECT_GT(env.upper[0][2], env.lower[1][2]);
  for (std::size_t i = 0; i < 2; ++i) {
    for (int k = 0; k <= 4; ++k) EXPECT_LE(env.lower[i][k], env.upper[i][k]);
  }
}

TEST(EnvelopesProperty, MatchPerColumnScanOnRandomConnectedConfigs) {
  BoxGeometry g(8, 0, 6);
  int checked = 0;
  for (int trial = 0; trial < 400 && checked < 40; ++trial) {
    auto c = random_config(g, Boundary::free, 0.62, 5000 + trial);
    const auto lab = label_clusters(c);
    const std::vector<int> x{3}, y{3};
    if (!check_con_ni(c, lab, x, y).in_con) continue;
    ++checked;
    const auto env = extract_envelopes(c, lab, x, y);
    const auto comp = flood_components(c);
    const int target = comp[g.vertex({0, 3})];
    for (int k = 0; k <= 8; ++k) {
      int hi = -1, lo = 100;
      for (int row = 0; row <= 6; ++row) {
        if (comp[g.vertex({k, row})] != target) continue;
        hi = std::max(hi, row);
        lo = std::min(lo, row);
      }
      ASSERT_EQ(env.upper[0][k], hi);
      ASSERT_EQ(env.lower[0][k], lo);
      ASSERT_LE(env.lower[0][k], env.upper[0][k]);
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(ExteriorBoundary, BulkVertexAndPath) {
  BoxGeometry g(4, 0, 4);
  const std::vector<std::size_t> single{g.vertex({2, 2})};
  EXPECT_EQ(exterior_boundary(g, single).size(), 4u);
  const std::vector<std::size_t> pair{g.vertex({1, 2}), g.vertex({2, 2})};
  EXPECT_EQ(exterior_boundary(g, pair).size(), 6u);
}

TEST(ExteriorBoundaryProperty, DisjointFromOpenEdgesAndDeterminesCluster) {
  BoxGeometry g(5, 0, 4);
  for (int trial = 0; trial < 30; ++trial) {
    auto c = random_config(g, Boundary::free, 0.5, 700 + trial);
    const auto lab = label_clusters(c);
    const auto cluster = lab.members(lab.root(g.vertex({2, 2})));
    const auto ext = exterior_boundary(g, cluster);
    const auto inner = internal_open_edges(c, cluster);
    for (auto e : ext) {
      EXPECT_FALSE(c.is_open(e));
      EXPECT_FALSE(std::binary_search(inner.begin(), inner.end(), e));
    }
    // Setting only the inner open edges reproduces the same cluster.
    EdgeConfig d(g, Boundary::free);
    for (auto e : inner) d.set(e, true);
    const auto lab2 = label_clusters(d);
    const auto again = lab2.members(lab2.root(g.vertex({2, 2})));
    EXPECT_EQ(again, cluster);
  }
}

TEST(LineFormat, RoundTripsExactly) {
  for (int trial = 0; trial < 50; ++trial) {
    BoxGeometry g(1 + trial % 9, -(trial % 4), trial % 6);
    auto c = random_config(g, trial % 2 ? Boundary::wired : Boundary::free, 0.5, 900 + trial);
    const auto line = to_line(c);
    const auto back = from_line(line);
    EXPECT_EQ(back, c);
    EXPECT_EQ(to_line(back), line);
  }
}

TEST(LineFormat, KnownEncoding) {
  BoxGeometry g(1, 0, 1);
  EdgeConfig c(g, Boundary::free);
  c.set(0, true);
  c.set(3, true);
  EXPECT_EQ(to_line(c), "1,0,1;free;09");
  EXPECT_THROW(from_line("1,0,1;free;0g"), std::invalid_argument);
  EXPECT_THROW(from_line("1,0,1;free;ff"), std::invalid_argument);
  EXPECT_THROW(from_line("1,0,1;open;00"), std::invalid_argument);
}
