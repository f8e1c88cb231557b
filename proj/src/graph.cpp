#include "isonet/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>

namespace isonet {

Graph Graph::from_edges(int num_nodes, std::vector<Edge> edges,
                        std::vector<double> node_features,
                        std::vector<double> edge_features) {
  if (num_nodes < 0) throw std::invalid_argument("graph: negative node count");
  Graph g;
  g.num_nodes_ = num_nodes;
  g.adjacency_ = Matrix::Zero(num_nodes, num_nodes);
  g.nbrs_.assign(num_nodes, {});
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes || e.v >= num_nodes) {
      std::ostringstream os;
      os << "graph: edge (" << e.u << "," << e.v << ") out of range for "
         << num_nodes << " nodes";
      throw std::invalid_argument(os.str());
    }
    if (e.u == e.v) {
      throw std::invalid_argument("graph: self-loop on node " + std::to_string(e.u));
    }
    if (g.adjacency_(e.u, e.v) != 0.0) {
      std::ostringstream os;
      os << "graph: duplicate edge (" << e.u << "," << e.v << ")";
      throw std::invalid_argument(os.str());
    }
    g.adjacency_(e.u, e.v) = 1.0;
    g.adjacency_(e.v, e.u) = 1.0;
    g.nbrs_[e.u].push_back(e.v);
    g.nbrs_[e.v].push_back(e.u);
  }
  for (auto& n : g.nbrs_) std::sort(n.begin(), n.end());

  if (node_features.empty()) node_features.assign(num_nodes, 1.0);
  if (edge_features.empty()) edge_features.assign(edges.size(), 1.0);
  if (static_cast<int>(node_features.size()) != num_nodes) {
    throw std::invalid_argument("graph: node feature count does not match nodes");
  }
  if (edge_features.size() != edges.size()) {
    throw std::invalid_argument("graph: edge feature count does not match edges");
  }
  g.edges_ = std::move(edges);
  g.node_feat_ = std::move(node_features);
  g.edge_feat_ = std::move(edge_features);
  return g;
}

bool Graph::is_connected() const {
  if (num_nodes_ == 0) return true;
  std::vector<char> seen(num_nodes_, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int w : nbrs_[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == num_nodes_;
}

Graph Graph::padded(int n) const {
  if (n < num_nodes_) throw std::invalid_argument("graph: cannot pad to fewer nodes");
  std::vector<double> feat = node_feat_;
  feat.resize(n, 0.0);
  return from_edges(n, edges_, std::move(feat), edge_feat_);
}

Graph Graph::relabeled(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != num_nodes_) {
    throw std::invalid_argument("graph: relabel permutation has wrong size");
  }
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const Edge& e : edges_) edges.push_back({perm[e.u], perm[e.v]});
  std::vector<double> feat(num_nodes_);
  for (int u = 0; u < num_nodes_; ++u) feat[perm[u]] = node_feat_[u];
  return from_edges(num_nodes_, std::move(edges), std::move(feat), edge_feat_);
}

Graph Graph::with_edge_order(std::span<const int> order) const {
  if (order.size() != edges_.size()) {
    throw std::invalid_argument("graph: edge order has wrong size");
  }
  std::vector<Edge> edges;
  std::vector<double> feat;
  for (int i : order) {
    edges.push_back(edges_.at(i));
    feat.push_back(edge_feat_.at(i));
  }
  return from_edges(num_nodes_, std::move(edges), node_feat_, std::move(feat));
}

Graph Graph::induced(std::span<const int> nodes) const {
  std::vector<int> index(num_nodes_, -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = static_cast<int>(i);
  std::vector<Edge> edges;
  std::vector<double> efeat;
  // Edges in order of the new endpoint indices, smaller endpoint first.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int w : nbrs_[nodes[i]]) {
      const int j = index[w];
      if (j > static_cast<int>(i)) edges.push_back({static_cast<int>(i), j});
    }
  }
  for (const Edge& e : edges) {
    const int a = nodes[e.u], b = nodes[e.v];
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      if ((edges_[k].u == a && edges_[k].v == b) ||
          (edges_[k].u == b && edges_[k].v == a)) {
        efeat.push_back(edge_feat_[k]);
        break;
      }
    }
  }
  std::vector<double> nfeat;
  for (int u : nodes) nfeat.push_back(node_feat_[u]);
  return from_edges(static_cast<int>(nodes.size()), std::move(edges),
                    std::move(nfeat), std::move(efeat));
}

// ---------------------------------------------------------------------------
// VF2 (monomorphism flavour)

namespace {

class Vf2Matcher {
 public:
  Vf2Matcher(const Graph& q, const Graph& c, std::size_t limit)
      : q_(q), c_(c), limit_(limit),
        core_q_(q.num_nodes(), -1), core_c_(c.num_nodes(), -1),
        term_q_(q.num_nodes(), 0), term_c_(c.num_nodes(), 0) {
    build_order();
  }

  std::vector<NodeMapping> run() {
    if (q_.num_nodes() > c_.num_nodes() || q_.num_edges() > c_.num_edges()) {
      return {};
    }
    if (limit_ == 0) return {};
    search(0);
    return std::move(found_);
  }

 private:
  // Highest degree first; afterwards prefer nodes with the most already
  // ordered neighbours so candidates can be drawn from mapped neighbourhoods.
  void build_order() {
    const int n = q_.num_nodes();
    std::vector<int> links(n, 0);
    std::vector<char> used(n, 0);
    parent_.assign(n, -1);
    for (int step = 0; step < n; ++step) {
      int best = -1;
      for (int u = 0; u < n; ++u) {
        if (used[u]) continue;
        if (best < 0 || links[u] > links[best] ||
            (links[u] == links[best] && q_.degree(u) > q_.degree(best))) {
          best = u;
        }
      }
      used[best] = 1;
      order_.push_back(best);
      for (int w : q_.neighbors(best)) {
        if (used[w]) {
          if (parent_[best] < 0) parent_[best] = w;
        } else {
          ++links[w];
        }
      }
    }
  }

  bool feasible(int u, int v) const {
    if (c_.degree(v) < q_.degree(u)) return false;
    int q_term = 0, q_free = 0;
    for (int w : q_.neighbors(u)) {
      if (core_q_[w] >= 0) {
        if (!c_.has_edge(core_q_[w], v)) return false;
      } else {
        ++q_free;
        if (term_q_[w] > 0) ++q_term;
      }
    }
    int c_term = 0, c_free = 0;
    for (int w : c_.neighbors(v)) {
      if (core_c_[w] < 0) {
        ++c_free;
        if (term_c_[w] > 0) ++c_term;
      }
    }
    return q_term <= c_term && q_free <= c_free;
  }

  void assign(int u, int v, int delta) {
    for (int w : q_.neighbors(u)) term_q_[w] += delta;
    for (int w : c_.neighbors(v)) term_c_[w] += delta;
  }

  void search(std::size_t depth) {
    if (found_.size() >= limit_) return;
    if (depth == order_.size()) {
      found_.push_back(core_q_);
      return;
    }
    const int u = order_[depth];
    auto try_pair = [&](int v) {
      if (core_c_[v] >= 0 || !feasible(u, v)) return;
      core_q_[u] = v;
      core_c_[v] = u;
      assign(u, v, +1);
      search(depth + 1);
      assign(u, v, -1);
      core_q_[u] = -1;
      core_c_[v] = -1;
    };
    if (parent_[u] >= 0) {
      for (int v : c_.neighbors(core_q_[parent_[u]])) {
        try_pair(v);
        if (found_.size() >= limit_) return;
      }
    } else {
      for (int v = 0; v < c_.num_nodes(); ++v) {
        try_pair(v);
        if (found_.size() >= limit_) return;
      }
    }
  }

  const Graph& q_;
  const Graph& c_;
  std::size_t limit_;
  std::vector<int> order_;
  std::vector<int> parent_;
  std::vector<int> core_q_, core_c_;
  std::vector<int> term_q_, term_c_;
  std::vector<NodeMapping> found_;
};

}  // namespace

std::vector<NodeMapping> vf2_mappings(const Graph& query, const Graph& corpus,
                                      std::size_t limit) {
  return Vf2Matcher(query, corpus, limit).run();
}

// ---------------------------------------------------------------------------

Graph bfs_sample(const Graph& source, int target_size, int center) {
  if (source.num_nodes() == 0) throw std::invalid_argument("bfs_sample: empty source graph");
  if (target_size < 1) throw std::invalid_argument("bfs_sample: target size must be >= 1");
  if (center < 0 || center >= source.num_nodes()) {
    throw std::invalid_argument("bfs_sample: center out of range");
  }
  std::vector<char> seen(source.num_nodes(), 0);
  std::vector<int> visited;
  std::queue<int> frontier;
  frontier.push(center);
  seen[center] = 1;
  while (!frontier.empty() && static_cast<int>(visited.size()) < target_size) {
    const int u = frontier.front();
    frontier.pop();
    visited.push_back(u);
    for (int w : source.neighbors(u)) {
      if (!seen[w]) {
        seen[w] = 1;
        frontier.push(w);
      }
    }
  }
  return source.induced(visited);
}

Graph bfs_sample(const Graph& source, int target_size, std::mt19937_64& rng) {
  if (source.num_nodes() == 0) throw std::invalid_argument("bfs_sample: empty source graph");
  std::uniform_int_distribution<int> pick(0, source.num_nodes() - 1);
  return bfs_sample(source, target_size, pick(rng));
}

GraphPair pad_pair(const Graph& query, const Graph& corpus, bool with_gold,
                   std::size_t gold_limit) {
  GraphPair p;
  p.query_real_nodes = query.num_nodes();
  p.corpus_real_nodes = corpus.num_nodes();
  p.n_pad = std::max(query.num_nodes(), corpus.num_nodes());
  p.e_pad = std::max(query.num_edges(), corpus.num_edges());
  p.query = query.num_nodes() < p.n_pad ? query.padded(p.n_pad) : query;
  p.corpus = corpus.num_nodes() < p.n_pad ? corpus.padded(p.n_pad) : corpus;
  if (with_gold) p.gold_mappings = vf2_mappings(query, corpus, gold_limit);
  return p;
}

Matrix mapping_to_permutation(const NodeMapping& mapping, int n) {
  Matrix p = Matrix::Zero(n, n);
  std::vector<char> used(n, 0);
  for (std::size_t u = 0; u < mapping.size(); ++u) {
    p(static_cast<Eigen::Index>(u), mapping[u]) = 1.0;
    used[mapping[u]] = 1;
  }
  int next = 0;
  for (int u = static_cast<int>(mapping.size()); u < n; ++u) {
    while (used[next]) ++next;
    p(u, next) = 1.0;
    used[next] = 1;
  }
  return p;
}

}  // namespace isonet
