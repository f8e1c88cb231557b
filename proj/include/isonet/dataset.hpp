#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "isonet/graph.hpp"
#include "json.hpp"

namespace isonet {

enum class Split { train, val, test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct SamplingConfig {
  int num_queries = 300;
  int num_corpus = 800;
  int query_min_nodes = 6;
  int query_max_nodes = 15;
  int corpus_min_nodes = 17;
  int corpus_max_nodes = 20;
  double train_fraction = 0.60;
  double val_fraction = 0.15;
  double test_fraction = 0.25;
  /// Queries whose fraction of relevant corpus graphs falls outside
  /// [min, max] are redrawn. The corpus is sampled first when the window is
  /// narrower than [0, 1].
  double query_positive_min = 0.1;
  double query_positive_max = 0.3;

  bool filters_queries() const { return query_positive_min > 0.0 || query_positive_max < 1.0; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static SamplingConfig from_json(const nlohmann::json& j);

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

/// Settings for the synthetic molecule-like seed collection: chains grown
/// atom by atom with 5- and 6-rings attached or fused along the way, under a
/// degree cap, plus optional random ring closures.
struct SeedGraphConfig {
  int count = 60;
  int min_nodes = 22;
  int max_nodes = 40;
  int max_degree = 4;
  double ring_probability = 0.15;  // per growth step
  double fused_probability = 0.3;  // ring shares a bond with an existing ring
  double ring_edges_per_node = 0.0;
};

std::vector<Graph> synthetic_seed_graphs(const SeedGraphConfig& cfg,
                                         std::mt19937_64& rng);

struct Dataset {
  std::uint64_t seed = 0;
  SamplingConfig config;
  std::vector<Graph> queries;
  std::vector<Split> query_splits;
  std::vector<Graph> corpus;
  /// relevance[q][c] = 1 iff queries[q] is subgraph-isomorphic to corpus[c].
  std::vector<std::vector<std::uint8_t>> relevance;

  std::vector<int> queries_in(Split s) const;
  double positive_fraction() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Split sizes for `n` queries: train and val are rounded, test takes the rest.
struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};
SplitSizes split_sizes(int n, const SamplingConfig& cfg);

/// Labels every (query, corpus) pair with VF2; `threads` workers split the
/// query rows.
std::vector<std::vector<std::uint8_t>> label_relevance(
    const std::vector<Graph>& queries, const std::vector<Graph>& corpus,
    int threads = 1);

/// BFS-samples queries and corpus graphs from `seed_graphs`, labels every
/// pair and assigns train/val/test in query order. Deterministic in `seed`.
Dataset generate_dataset(const std::vector<Graph>& seed_graphs,
                         const SamplingConfig& cfg, std::uint64_t seed,
                         int threads = 1);

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// JSON-lines format: one header record, one record per graph, one record per
/// relevance row.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Reads a plain edge-list collection: graphs separated by blank lines, one
/// "u v" pair per line, "# n=<count>" optionally fixing the node count.
std::vector<Graph> load_edge_lists(const std::filesystem::path& path);

}  // namespace isonet
