#include "isonet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace isonet {

using nlohmann::json;

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

void SamplingConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (num_queries < 0) fail("num_queries", "must be >= 0");
  if (num_corpus < 0) fail("num_corpus", "must be >= 0");
  if (query_min_nodes < 1) fail("query_min_nodes", "must be >= 1");
  if (query_max_nodes < query_min_nodes) fail("query_max_nodes", "must be >= query_min_nodes");
  if (corpus_min_nodes < 1) fail("corpus_min_nodes", "must be >= 1");
  if (corpus_max_nodes < corpus_min_nodes) fail("corpus_max_nodes", "must be >= corpus_min_nodes");
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0) {
    fail("split fractions", "must be nonnegative");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    fail("split fractions", "must sum to 1");
  }
  if (query_positive_min < 0.0 || query_positive_min > query_positive_max ||
      query_positive_max > 1.0) {
    fail("query_positive_min", "need 0 <= query_positive_min <= query_positive_max <= 1");
  }
}

json SamplingConfig::to_json() const {
  return {{"num_queries", num_queries},         {"num_corpus", num_corpus},
          {"query_min_nodes", query_min_nodes}, {"query_max_nodes", query_max_nodes},
          {"corpus_min_nodes", corpus_min_nodes}, {"corpus_max_nodes", corpus_max_nodes},
          {"train_fraction", train_fraction},   {"val_fraction", val_fraction},
          {"test_fraction", test_fraction},     {"query_positive_min", query_positive_min},
          {"query_positive_max", query_positive_max}};
}

SamplingConfig SamplingConfig::from_json(const json& j) {
  SamplingConfig c;
  c.num_queries = j.at("num_queries").get<int>();
  c.num_corpus = j.at("num_corpus").get<int>();
  c.query_min_nodes = j.at("query_min_nodes").get<int>();
  c.query_max_nodes = j.at("query_max_nodes").get<int>();
  c.corpus_min_nodes = j.at("corpus_min_nodes").get<int>();
  c.corpus_max_nodes = j.at("corpus_max_nodes").get<int>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.test_fraction = j.at("test_fraction").get<double>();
  c.query_positive_min = j.value("query_positive_min", 0.0);
  c.query_positive_max = j.value("query_positive_max", 1.0);
  return c;
}

std::vector<Graph> synthetic_seed_graphs(const SeedGraphConfig& cfg,
                                         std::mt19937_64& rng) {
  std::vector<Graph> out;
  std::uniform_int_distribution<int> size_dist(cfg.min_nodes, cfg.max_nodes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int g = 0; g < cfg.count; ++g) {
    const int target = size_dist(rng);
    std::vector<int> degree;
    std::vector<Edge> edges;
    std::vector<std::vector<char>> adj;
    std::vector<std::pair<int, int>> ring_bonds;  // candidates for fusion
    auto add_node = [&] {
      degree.push_back(0);
      for (auto& row : adj) row.push_back(0);
      adj.emplace_back(degree.size(), 0);
      return static_cast<int>(degree.size()) - 1;
    };
    auto connect = [&](int a, int b) {
      edges.push_back({std::min(a, b), std::max(a, b)});
      adj[a][b] = adj[b][a] = 1;
      ++degree[a];
      ++degree[b];
    };
    auto pick_open = [&](int need) {
      std::vector<int> open;
      for (int u = 0; u < static_cast<int>(degree.size()); ++u) {
        if (degree[u] + need <= cfg.max_degree) open.push_back(u);
      }
      if (open.empty()) return -1;
      std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
      return open[pick(rng)];
    };

    add_node();
    while (static_cast<int>(degree.size()) < target) {
      const int room = target - static_cast<int>(degree.size());
      const int ring = unit(rng) < 0.5 ? 6 : 5;
      if (unit(rng) < cfg.ring_probability && room >= ring - 2) {
        // Fused ring shares an existing ring bond; otherwise hang it off a node.
        if (!ring_bonds.empty() && unit(rng) < cfg.fused_probability) {
          std::uniform_int_distribution<std::size_t> pick(0, ring_bonds.size() - 1);
          const auto [a, b] = ring_bonds[pick(rng)];
          if (degree[a] < cfg.max_degree && degree[b] < cfg.max_degree) {
            int prev = a;
            for (int i = 0; i < ring - 2; ++i) {
              const int v = add_node();
              connect(prev, v);
              ring_bonds.emplace_back(prev, v);
              prev = v;
            }
            connect(prev, b);
            ring_bonds.emplace_back(prev, b);
            continue;
          }
        }
        if (room >= ring) {
          const int anchor = pick_open(1);
          if (anchor < 0) break;
          const int first = add_node();
          connect(anchor, first);
          int prev = first;
          for (int i = 1; i < ring; ++i) {
            const int v = add_node();
            connect(prev, v);
            ring_bonds.emplace_back(prev, v);
            prev = v;
          }
          connect(prev, first);
          ring_bonds.emplace_back(prev, first);
          continue;
        }
      }
      const int anchor = pick_open(1);
      if (anchor < 0) break;
      connect(anchor, add_node());
    }
    // A few extra ring closures between nearby atoms.
    const int extra = static_cast<int>(std::lround(cfg.ring_edges_per_node * degree.size()));
    std::uniform_int_distribution<int> node(0, static_cast<int>(degree.size()) - 1);
    const int n = static_cast<int>(degree.size());
    for (int added = 0, attempts = 0; added < extra && attempts < 100 * n; ++attempts) {
      const int a = node(rng), b = node(rng);
      if (a == b || adj[a][b] || degree[a] >= cfg.max_degree || degree[b] >= cfg.max_degree) {
        continue;
      }
      connect(a, b);
      ++added;
    }
    out.push_back(Graph::from_edges(n, std::move(edges)));
  }
  return out;
}

std::vector<int> Dataset::queries_in(Split s) const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < query_splits.size(); ++i) {
    if (query_splits[i] == s) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

double Dataset::positive_fraction() const {
  std::size_t pos = 0, total = 0;
  for (const auto& row : relevance) {
    for (auto b : row) {
      pos += b;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(pos) / static_cast<double>(total);
}

SplitSizes split_sizes(int n, const SamplingConfig& cfg) {
  SplitSizes s;
  s.train = static_cast<int>(std::lround(cfg.train_fraction * n));
  s.val = static_cast<int>(std::lround(cfg.val_fraction * n));
  s.val = std::min(s.val, n - s.train);
  s.test = n - s.train - s.val;
  return s;
}

std::vector<std::vector<std::uint8_t>> label_relevance(
    const std::vector<Graph>& queries, const std::vector<Graph>& corpus,
    int threads) {
  std::vector<std::vector<std::uint8_t>> rel(
      queries.size(), std::vector<std::uint8_t>(corpus.size(), 0));
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t q = begin; q < queries.size(); q += step) {
      for (std::size_t c = 0; c < corpus.size(); ++c) {
        rel[q][c] = is_subgraph(queries[q], corpus[c]) ? 1 : 0;
      }
    }
  };
  const std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return rel;
}

namespace {

int largest_component(const Graph& g) {
  std::vector<char> seen(g.num_nodes(), 0);
  int best = 0;
  for (int s = 0; s < g.num_nodes(); ++s) {
    if (seen[s]) continue;
    int count = 0;
    std::vector<int> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++count;
      for (int w : g.neighbors(u)) {
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
    best = std::max(best, count);
  }
  return best;
}

std::vector<Graph> sample_many(const std::vector<Graph>& seeds, int count, int lo,
                               int hi, const char* role, std::mt19937_64& rng) {
  int biggest = 0;
  for (const Graph& g : seeds) biggest = std::max(biggest, largest_component(g));
  if (count > 0 && biggest < hi) {
    std::ostringstream os;
    os << "seed graphs too small for " << role << " size range [" << lo << ", "
       << hi << "]: largest connected component has " << biggest << " nodes";
    throw std::invalid_argument(os.str());
  }
  std::uniform_int_distribution<int> size_dist(lo, hi);
  std::uniform_int_distribution<std::size_t> seed_dist(0, seeds.size() - 1);
  std::vector<Graph> out;
  for (int i = 0; i < count; ++i) {
    const int target = size_dist(rng);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) {
        throw std::runtime_error(std::string("could not sample a ") + role +
                                 " graph of size " + std::to_string(target));
      }
      Graph g = bfs_sample(seeds[seed_dist(rng)], target, rng);
      if (g.num_nodes() == target) {
        out.push_back(std::move(g));
        break;
      }
    }
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const std::vector<Graph>& seed_graphs,
                         const SamplingConfig& cfg, std::uint64_t seed,
                         int threads) {
  cfg.validate();
  if (seed_graphs.empty() && (cfg.num_queries > 0 || cfg.num_corpus > 0)) {
    throw std::invalid_argument("generate_dataset: no seed graphs");
  }
  Dataset d;
  d.seed = seed;
  d.config = cfg;
  std::mt19937_64 rng(seed);
  if (!cfg.filters_queries()) {
    d.queries = sample_many(seed_graphs, cfg.num_queries, cfg.query_min_nodes,
                            cfg.query_max_nodes, "query", rng);
    d.corpus = sample_many(seed_graphs, cfg.num_corpus, cfg.corpus_min_nodes,
                           cfg.corpus_max_nodes, "corpus", rng);
    d.relevance = label_relevance(d.queries, d.corpus, threads);
  } else {
    d.corpus = sample_many(seed_graphs, cfg.num_corpus, cfg.corpus_min_nodes,
                           cfg.corpus_max_nodes, "corpus", rng);
    const double denom = std::max<std::size_t>(1, d.corpus.size());
    long long rejected = 0;
    while (static_cast<int>(d.queries.size()) < cfg.num_queries) {
      Graph q = sample_many(seed_graphs, 1, cfg.query_min_nodes, cfg.query_max_nodes,
                            "query", rng)
                    .front();
      std::vector<std::vector<std::uint8_t>> row = label_relevance({q}, d.corpus, threads);
      const double hits = std::count(row[0].begin(), row[0].end(), std::uint8_t{1});
      const double frac = hits / denom;
      if (frac < cfg.query_positive_min || frac > cfg.query_positive_max) {
        if (++rejected > 1000LL * std::max(1, cfg.num_queries)) {
          throw std::runtime_error(
              "could not sample queries inside the positive-fraction window; widen "
              "query_positive_min/query_positive_max");
        }
        continue;
      }
      d.queries.push_back(std::move(q));
      d.relevance.push_back(std::move(row[0]));
    }
  }
  const SplitSizes sizes = split_sizes(cfg.num_queries, cfg);
  for (int i = 0; i < cfg.num_queries; ++i) {
    d.query_splits.push_back(i < sizes.train ? Split::train
                             : i < sizes.train + sizes.val ? Split::val
                                                           : Split::test);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json graph_record(const Graph& g, const char* role, int id,
                  std::optional<Split> split) {
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.u, e.v});
  json rec = {{"type", "graph"},
              {"role", role},
              {"id", id},
              {"split", split ? json(to_string(*split)) : json(nullptr)},
              {"n_nodes", g.num_nodes()},
              {"edges", std::move(edges)},
              {"node_feat", g.node_features()},
              {"edge_feat", g.edge_features()}};
  return rec;
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write dataset: " + path.string());
  json header = {{"type", "header"},
                 {"format", "isonet-dataset"},
                 {"version", 1},
                 {"seed", d.seed},
                 {"config", d.config.to_json()},
                 {"num_queries", d.queries.size()},
                 {"num_corpus", d.corpus.size()}};
  os << header.dump() << '\n';
  for (std::size_t i = 0; i < d.queries.size(); ++i) {
    os << graph_record(d.queries[i], "query", static_cast<int>(i), d.query_splits[i]).dump()
       << '\n';
  }
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    os << graph_record(d.corpus[i], "corpus", static_cast<int>(i), std::nullopt).dump()
       << '\n';
  }
  for (std::size_t q = 0; q < d.relevance.size(); ++q) {
    std::string bits;
    for (auto b : d.relevance[q]) bits.push_back(b ? '1' : '0');
    os << json{{"type", "relevance"}, {"query", q}, {"bits", bits}}.dump() << '\n';
  }
  if (!os) throw std::runtime_error("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset: " + path.string());

  Dataset d;
  std::size_t line_no = 0;
  std::string line;
  std::size_t num_queries = 0, num_corpus = 0;
  bool have_header = false;

  auto parse = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw DatasetParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse(line);
    try {
      const std::string type = rec.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw DatasetParseError(line_no, "expected header record");
        d.seed = rec.at("seed").get<std::uint64_t>();
        d.config = SamplingConfig::from_json(rec.at("config"));
        num_queries = rec.at("num_queries").get<std::size_t>();
        num_corpus = rec.at("num_corpus").get<std::size_t>();
        have_header = true;
      } else if (type == "graph") {
        const std::string role = rec.at("role").get<std::string>();
        std::vector<Edge> edges;
        for (const auto& e : rec.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
        Graph g = Graph::from_edges(rec.at("n_nodes").get<int>(), std::move(edges),
                                    rec.at("node_feat").get<std::vector<double>>(),
                                    rec.at("edge_feat").get<std::vector<double>>());
        const auto id = rec.at("id").get<std::size_t>();
        if (role == "query") {
          if (id != d.queries.size() || !d.corpus.empty()) {
            throw DatasetParseError(line_no, "query record out of order");
          }
          d.queries.push_back(std::move(g));
          d.query_splits.push_back(split_from_string(rec.at("split").get<std::string>()));
        } else if (role == "corpus") {
          if (id != d.corpus.size() || d.queries.size() != num_queries) {
            throw DatasetParseError(line_no, "corpus record out of order");
          }
          d.corpus.push_back(std::move(g));
        } else {
          throw DatasetParseError(line_no, "unknown graph role " + role);
        }
      } else if (type == "relevance") {
        const auto q = rec.at("query").get<std::size_t>();
        const std::string bits = rec.at("bits").get<std::string>();
        if (q != d.relevance.size() || d.corpus.size() != num_corpus) {
          throw DatasetParseError(line_no, "relevance record out of order");
        }
        if (bits.size() != num_corpus) {
          throw DatasetParseError(line_no, "relevance row has wrong length");
        }
        std::vector<std::uint8_t> row;
        for (char ch : bits) {
          if (ch != '0' && ch != '1') throw DatasetParseError(line_no, "relevance bits must be 0/1");
          row.push_back(ch == '1' ? 1 : 0);
        }
        d.relevance.push_back(std::move(row));
      } else {
        throw DatasetParseError(line_no, "unknown record type " + type);
      }
    } catch (const DatasetParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetParseError(line_no, e.what());
    }
  }
  if (!have_header) throw DatasetParseError(line_no + 1, "missing header record");
  if (d.queries.size() != num_queries || d.corpus.size() != num_corpus ||
      d.relevance.size() != num_queries) {
    std::ostringstream os;
    os << "unexpected end of file: have " << d.queries.size() << "/" << num_queries
       << " queries, " << d.corpus.size() << "/" << num_corpus << " corpus graphs, "
       << d.relevance.size() << "/" << num_queries << " relevance rows";
    throw DatasetParseError(line_no + 1, os.str());
  }
  return d;
}

std::vector<Graph> load_edge_lists(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open edge lists: " + path.string());
  std::vector<Graph> out;
  std::vector<Edge> edges;
  int declared = -1, max_node = -1;
  std::size_t line_no = 0;
  auto flush = [&]() {
    if (edges.empty() && declared < 0) return;
    const int n = std::max(declared, max_node + 1);
    out.push_back(Graph::from_edges(n, std::move(edges)));
    edges.clear();
    declared = -1;
    max_node = -1;
  };
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      const auto at = line.find("n=");
      if (at != std::string::npos) declared = std::stoi(line.substr(at + 2));
      continue;
    }
    std::istringstream ls(line);
    int u = 0, v = 0;
    if (!(ls >> u >> v)) throw DatasetParseError(line_no, "expected \"u v\"");
    edges.push_back({u, v});
    max_node = std::max({max_node, u, v});
  }
  flush();
  return out;
}

}  // namespace isonet
