#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "isonet/dataset.hpp"
#include "isonet/model.hpp"

namespace isonet {

struct RankedEntry {
  int corpus_id = 0;
  double distance = 0.0;
  bool relevant = false;
};

/// Ascending distance, ties by corpus id.
using RankedList = std::vector<RankedEntry>;

RankedList rank_by_distance(const std::vector<double>& distances,
                            const std::vector<std::uint8_t>& labels);
std::vector<bool> labels_of(const RankedList& list);

/// Distances of one query against every corpus graph, noise disabled.
/// Workers take strided corpus indices; the result is index-ordered.
std::vector<double> score_corpus(const ad::ParamStore& params, const ModelConfig& cfg,
                                 const Graph& query, const std::vector<Graph>& corpus,
                                 int threads = 1);

RankedList rank_corpus(const ad::ParamStore& params, const ModelConfig& cfg,
                       const Graph& query, const std::vector<Graph>& corpus,
                       const std::vector<std::uint8_t>& labels, int threads = 1);

// Metrics over a ranked 0/1 label list. Each returns nullopt when the list has
// no positives.
std::optional<double> average_precision(const std::vector<bool>& labels);
/// Fraction of positives ranked before the k-th negative.
std::optional<double> hits_at_k(const std::vector<bool>& labels, int k);
std::optional<double> reciprocal_rank(const std::vector<bool>& labels);
/// Positives among the first k, divided by k.
std::optional<double> precision_at_k(const std::vector<bool>& labels, int k);

struct QueryMetrics {
  int query_id = 0;
  double ap = 0.0;
  double hits20 = 0.0;
  double rr = 0.0;
  double p20 = 0.0;
};

struct MetricsSummary {
  std::vector<QueryMetrics> per_query;
  double map = 0.0;
  double hits20 = 0.0;
  double mrr = 0.0;
  double p20 = 0.0;
  int skipped = 0;  // queries without a positive
};

/// Metrics for a ranked label list; nullopt without positives.
std::optional<QueryMetrics> query_metrics(int query_id, const std::vector<bool>& labels);
/// Means over the given queries. Queries without positives are skipped.
MetricsSummary summarize(std::vector<QueryMetrics> per_query, int skipped);

MetricsSummary evaluate_queries(const ad::ParamStore& params, const ModelConfig& cfg,
                                const Dataset& data, const std::vector<int>& query_ids,
                                int threads = 1);

/// query_id, ap, hits20, rr, p20 per query plus a final "mean" row.
void write_metrics_csv(const std::filesystem::path& path, const MetricsSummary& m);

/// Alignment quality of one pair against its closest gold permutation.
struct AlignmentQualityRecord {
  int query_id = 0;
  int corpus_id = 0;
  int size = 0;              // n_pad (node) or e_pad (edge)
  int real_rows = 0;         // real query nodes or edges
  Matrix gold;               // the chosen P* or S*
  std::vector<double> traces;       // Tr(P_t^T P*) over all rows, per stage
  std::vector<double> real_traces;  // restricted to real query rows
};

/// Gold permutation for a node mapping with pad rows completed by a
/// maximum-weight assignment on `plan`'s unused block.
Matrix complete_gold_nodes(const NodeMapping& mapping, const Matrix& plan);
/// Gold edge permutation induced by a node mapping, completed the same way.
Matrix complete_gold_edges(const NodeMapping& mapping, const GraphPair& pair,
                           const Matrix& plan);

/// nullopt when the pair has no gold mapping. P* maximises the trace against
/// the final alignment.
std::optional<AlignmentQualityRecord> alignment_quality(const ForwardTrace& trace,
                                                        const GraphPair& pair,
                                                        Variant variant);

inline constexpr double kHistogramBinWidth = 0.1;

struct HistogramRow {
  int stage = 0;  // 1-based round (lazy) or layer (eager)
  double bin_lo = 0.0;
  double density = 0.0;  // fraction of records in the bin; sums to 1 per stage
};

struct StageMean {
  int stage = 0;
  double mean = 0.0;
  int count = 0;
};

struct HistogramSummary {
  std::vector<HistogramRow> bins;
  std::vector<StageMean> means;
};

/// Histograms of trace / size per stage.
HistogramSummary histogram_and_summary(const std::vector<AlignmentQualityRecord>& records,
                                       double bin_width = kHistogramBinWidth);

void write_histogram_csv(const std::filesystem::path& path, const HistogramSummary& h);
void write_stage_means_csv(const std::filesystem::path& path, const HistogramSummary& h);
void write_traces_csv(const std::filesystem::path& path,
                      const std::vector<AlignmentQualityRecord>& records);

/// Shortest round-trip decimal text for CSV output.
std::string format_double(double v);

}  // namespace isonet
