#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "isonet/diagnostics.hpp"
#include "isonet/graph.hpp"

namespace isonet {
namespace {

Graph complete(int n) {
  std::vector<Edge> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) e.push_back({u, v});
  return Graph::from_edges(n, e);
}

Graph path(int n) {
  std::vector<Edge> e;
  for (int u = 0; u + 1 < n; ++u) e.push_back({u, u + 1});
  return Graph::from_edges(n, e);
}

Graph cycle(int n) {
  std::vector<Edge> e;
  for (int u = 0; u < n; ++u) e.push_back({u, (u + 1) % n});
  return Graph::from_edges(n, e);
}

// Independent oracle: every injective map, checked edge by edge.
std::size_t count_monomorphisms(const Graph& q, const Graph& c) {
  const int nq = q.num_nodes(), nc = c.num_nodes();
  if (nq > nc) return 0;
  std::vector<int> pool(nc);
  std::iota(pool.begin(), pool.end(), 0);
  std::set<std::vector<int>> seen;
  std::size_t count = 0;
  do {
    std::vector<int> image(pool.begin(), pool.begin() + nq);
    if (!seen.insert(image).second) continue;
    bool ok = true;
    for (const Edge& e : q.edges()) ok = ok && c.has_edge(image[e.u], image[e.v]);
    if (ok) ++count;
  } while (std::next_permutation(pool.begin(), pool.end()));
  return count;
}

TEST(GraphTest, RejectsSelfLoopsDuplicatesAndRange) {
  EXPECT_THROW(Graph::from_edges(3, {{1, 1}}), std::invalid_argument);
  EXPECT_THROW(Graph::from_edges(3, {{0, 1}, {1, 0}}), std::invalid_argument);
  EXPECT_THROW(Graph::from_edges(3, {{0, 3}}), std::invalid_argument);
  EXPECT_THROW(Graph::from_edges(2, {{0, 1}}, {1.0}), std::invalid_argument);
}

TEST(GraphTest, AdjacencyIsSymmetricWithZeroDiagonal) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = random_graph(7, 0.4, rng);
    const Matrix& a = g.adjacency();
    EXPECT_TRUE(a.isApprox(a.transpose()));
    EXPECT_EQ(a.diagonal().cwiseAbs().sum(), 0.0);
    EXPECT_EQ(a.sum(), 2.0 * g.num_edges());
    for (const Edge& e : g.edges()) EXPECT_TRUE(g.has_edge(e.u, e.v) && g.has_edge(e.v, e.u));
  }
}

TEST(GraphTest, FeaturesDefaultToOneAndPadNodesToZero) {
  const Graph g = path(3).padded(5);
  ASSERT_EQ(g.num_nodes(), 5);
  EXPECT_EQ(g.node_features(), (std::vector<double>{1, 1, 1, 0, 0}));
  EXPECT_EQ(g.edge_features(), (std::vector<double>{1, 1}));
  EXPECT_EQ(g.degree(3), 0);
}

TEST(Vf2Test, HandCountedMappings) {
  EXPECT_EQ(vf2_mappings(complete(3), complete(4)).size(), 24u);
  EXPECT_EQ(vf2_mappings(path(2), complete(3)).size(), 6u);
  EXPECT_EQ(vf2_mappings(path(3), complete(3)).size(), 6u);
  EXPECT_EQ(vf2_mappings(cycle(4), complete(4)).size(), 24u);
  EXPECT_EQ(vf2_mappings(cycle(4), cycle(4)).size(), 8u);
  EXPECT_TRUE(vf2_mappings(complete(3), path(3)).empty());
  EXPECT_TRUE(vf2_mappings(path(4), path(3)).empty());
  EXPECT_TRUE(is_subgraph(Graph::from_edges(0, {}), path(2)));
}

TEST(Vf2Test, LimitStopsEarly) {
  EXPECT_EQ(vf2_mappings(complete(3), complete(5), 7).size(), 7u);
}

TEST(Vf2Test, MatchesExhaustiveCountOnRandomPairs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const Graph q = random_graph(1 + trial % 5, 0.5, rng);
    const Graph c = random_graph(5 + trial % 2, 0.5, rng);
    const auto maps = vf2_mappings(q, c);
    ASSERT_EQ(maps.size(), count_monomorphisms(q, c)) << "trial " << trial;
    for (const NodeMapping& m : maps) {
      EXPECT_EQ(std::set<int>(m.begin(), m.end()).size(), m.size());
      for (const Edge& e : q.edges()) EXPECT_TRUE(c.has_edge(m[e.u], m[e.v]));
    }
  }
}

TEST(Vf2Test, RelabelingPreservesTheAnswer) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const Graph q = random_graph(4, 0.5, rng);
    const Graph c = random_graph(6, 0.5, rng);
    const Graph q2 = q.relabeled(random_permutation(4, rng));
    const Graph c2 = c.relabeled(random_permutation(6, rng));
    EXPECT_EQ(vf2_mappings(q, c).size(), vf2_mappings(q2, c2).size());
  }
}

TEST(BfsSampleTest, ConnectedAndOfRequestedSize) {
  std::mt19937_64 rng(17);
  const Graph g = cycle(12);
  for (int size = 1; size <= 12; ++size) {
    const Graph s = bfs_sample(g, size, rng);
    EXPECT_EQ(s.num_nodes(), size);
    EXPECT_TRUE(s.is_connected());
    EXPECT_TRUE(is_subgraph(s, g));
  }
}

TEST(BfsSampleTest, StopsAtTheComponent) {
  const Graph g = Graph::from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
  EXPECT_EQ(bfs_sample(g, 4, 0).num_nodes(), 3);
  EXPECT_EQ(bfs_sample(g, 4, 3).num_nodes(), 2);
}

TEST(PadPairTest, PadsToCommonSizeAndCarriesGold) {
  const GraphPair p = pad_pair(path(3), complete(4), true);
  EXPECT_EQ(p.n_pad, 4);
  EXPECT_EQ(p.query.num_nodes(), 4);
  EXPECT_EQ(p.corpus.num_nodes(), 4);
  EXPECT_EQ(p.query_real_nodes, 3);
  EXPECT_EQ(p.corpus_real_nodes, 4);
  EXPECT_EQ(p.e_pad, 6);
  EXPECT_EQ(p.gold_mappings.size(), 24u);
  EXPECT_TRUE(pad_pair(path(3), complete(4)).gold_mappings.empty());
}

TEST(PadPairTest, GoldPermutationRespectsEdges) {
  const GraphPair p = pad_pair(path(3), cycle(5), true);
  ASSERT_FALSE(p.gold_mappings.empty());
  for (const NodeMapping& m : p.gold_mappings) {
    const Matrix P = mapping_to_permutation(m, p.n_pad);
    EXPECT_TRUE((P * P.transpose()).isIdentity());
    const Matrix residual = p.query.adjacency() - P * p.corpus.adjacency() * P.transpose();
    EXPECT_EQ(residual.cwiseMax(0.0).sum(), 0.0);
  }
}

}  // namespace
}  // namespace isonet
