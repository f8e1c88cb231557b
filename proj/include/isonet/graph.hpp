#pragma once

#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace isonet {

using Matrix = Eigen::MatrixXd;

struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected simple graph with scalar node and edge features.
///
/// Immutable after construction. The adjacency matrix is symmetric with a
/// zero diagonal and agrees with the edge list.
class Graph {
 public:
  Graph() = default;

  /// Validates and builds a graph. Missing features default to 1.0. Throws
  /// std::invalid_argument on self-loops, duplicates or out-of-range indices.
  static Graph from_edges(int num_nodes, std::vector<Edge> edges,
                          std::vector<double> node_features = {},
                          std::vector<double> edge_features = {});

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<double>& node_features() const { return node_feat_; }
  const std::vector<double>& edge_features() const { return edge_feat_; }
  const Matrix& adjacency() const { return adjacency_; }
  const std::vector<int>& neighbors(int u) const { return nbrs_[u]; }
  int degree(int u) const { return static_cast<int>(nbrs_[u].size()); }
  bool has_edge(int u, int v) const { return adjacency_(u, v) != 0.0; }
  bool is_connected() const;

  /// Appends isolated nodes with zero features up to `n` nodes.
  Graph padded(int n) const;
  /// Node u becomes perm[u]; edge order is preserved.
  Graph relabeled(std::span<const int> perm) const;
  /// Same nodes, edges listed in the order given by `order`.
  Graph with_edge_order(std::span<const int> order) const;
  Graph induced(std::span<const int> nodes) const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_ &&
           a.node_feat_ == b.node_feat_ && a.edge_feat_ == b.edge_feat_;
  }

 private:
  int num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> node_feat_;
  std::vector<double> edge_feat_;
  Matrix adjacency_;
  std::vector<std::vector<int>> nbrs_;
};

/// Injective map from query nodes to corpus nodes: mapping[u] = image of u.
using NodeMapping = std::vector<int>;

inline constexpr std::size_t kAllMappings = std::numeric_limits<std::size_t>::max();

/// Subgraph monomorphisms of `query` into `corpus` (edges of the query map to
/// edges of the corpus), found by VF2-style search with degree-ordered
/// candidates. Stops after `limit` mappings.
std::vector<NodeMapping> vf2_mappings(const Graph& query, const Graph& corpus,
                                      std::size_t limit = kAllMappings);

inline bool is_subgraph(const Graph& query, const Graph& corpus) {
  return !vf2_mappings(query, corpus, 1).empty();
}

/// Induced subgraph on the first min(target, reachable) nodes visited by BFS
/// from `center`; node order is discovery order.
Graph bfs_sample(const Graph& source, int target_size, int center);
/// As above with a uniformly drawn center.
Graph bfs_sample(const Graph& source, int target_size, std::mt19937_64& rng);

/// A query/corpus pair padded to a common node count. Pad nodes come after
/// the real nodes, have zero features and no edges.
struct GraphPair {
  Graph query;
  Graph corpus;
  int query_real_nodes = 0;
  int corpus_real_nodes = 0;
  int n_pad = 0;
  int e_pad = 0;
  std::vector<NodeMapping> gold_mappings;
};

GraphPair pad_pair(const Graph& query, const Graph& corpus, bool with_gold = false,
                   std::size_t gold_limit = kAllMappings);

/// n x n hard permutation for a gold mapping completed over pad nodes:
/// unmatched query rows take the unused corpus columns in increasing order.
Matrix mapping_to_permutation(const NodeMapping& mapping, int n);

}  // namespace isonet
