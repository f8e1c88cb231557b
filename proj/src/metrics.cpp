#include "isonet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <thread>

#include "isonet/qap.hpp"

namespace isonet {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

RankedList rank_by_distance(const std::vector<double>& distances,
                            const std::vector<std::uint8_t>& labels) {
  if (distances.size() != labels.size()) {
    throw std::invalid_argument("rank: distances and labels differ in length");
  }
  RankedList out;
  out.reserve(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    out.push_back({static_cast<int>(i), distances[i], labels[i] != 0});
  }
  std::sort(out.begin(), out.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.corpus_id < b.corpus_id;
  });
  return out;
}

std::vector<bool> labels_of(const RankedList& list) {
  std::vector<bool> out;
  out.reserve(list.size());
  for (const RankedEntry& e : list) out.push_back(e.relevant);
  return out;
}

std::vector<double> score_corpus(const ad::ParamStore& params, const ModelConfig& cfg,
                                 const Graph& query, const std::vector<Graph>& corpus,
                                 int threads) {
  ModelConfig eval_cfg = cfg;
  eval_cfg.gumbel_noise = false;
  std::vector<double> out(corpus.size(), 0.0);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t c = begin; c < corpus.size(); c += step) {
      out[c] = evaluate_pair(params, pad_pair(query, corpus[c]), eval_cfg).distance;
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)),
                            std::max<std::size_t>(1, corpus.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return out;
}

RankedList rank_corpus(const ad::ParamStore& params, const ModelConfig& cfg,
                       const Graph& query, const std::vector<Graph>& corpus,
                       const std::vector<std::uint8_t>& labels, int threads) {
  return rank_by_distance(score_corpus(params, cfg, query, corpus, threads), labels);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

int count_positives(const std::vector<bool>& labels) {
  return static_cast<int>(std::count(labels.begin(), labels.end(), true));
}

}  // namespace

std::optional<double> average_precision(const std::vector<bool>& labels) {
  const int pos = count_positives(labels);
  if (pos == 0) return std::nullopt;
  double sum = 0.0;
  int seen = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    ++seen;
    sum += static_cast<double>(seen) / static_cast<double>(i + 1);
  }
  return sum / pos;
}

std::optional<double> hits_at_k(const std::vector<bool>& labels, int k) {
  const int pos = count_positives(labels);
  if (pos == 0) return std::nullopt;
  int negatives = 0, hits = 0;
  for (bool l : labels) {
    if (l) {
      ++hits;
    } else if (++negatives == k) {
      break;
    }
  }
  return static_cast<double>(hits) / pos;
}

std::optional<double> reciprocal_rank(const std::vector<bool>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) return 1.0 / static_cast<double>(i + 1);
  }
  return std::nullopt;
}

std::optional<double> precision_at_k(const std::vector<bool>& labels, int k) {
  if (count_positives(labels) == 0) return std::nullopt;
  const auto top = std::min<std::size_t>(labels.size(), static_cast<std::size_t>(k));
  const auto hits = std::count(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(top), true);
  return static_cast<double>(hits) / k;
}

std::optional<QueryMetrics> query_metrics(int query_id, const std::vector<bool>& labels) {
  auto ap = average_precision(labels);
  if (!ap) return std::nullopt;
  return QueryMetrics{query_id, *ap, *hits_at_k(labels, 20), *reciprocal_rank(labels),
                      *precision_at_k(labels, 20)};
}

MetricsSummary summarize(std::vector<QueryMetrics> per_query, int skipped) {
  MetricsSummary s;
  s.per_query = std::move(per_query);
  s.skipped = skipped;
  if (s.per_query.empty()) return s;
  for (const QueryMetrics& q : s.per_query) {
    s.map += q.ap;
    s.hits20 += q.hits20;
    s.mrr += q.rr;
    s.p20 += q.p20;
  }
  const double n = static_cast<double>(s.per_query.size());
  s.map /= n;
  s.hits20 /= n;
  s.mrr /= n;
  s.p20 /= n;
  return s;
}

MetricsSummary evaluate_queries(const ad::ParamStore& params, const ModelConfig& cfg,
                                const Dataset& data, const std::vector<int>& query_ids,
                                int threads) {
  std::vector<QueryMetrics> rows;
  int skipped = 0;
  for (int q : query_ids) {
    const RankedList ranked =
        rank_corpus(params, cfg, data.queries[q], data.corpus, data.relevance[q], threads);
    auto m = query_metrics(q, labels_of(ranked));
    if (m) {
      rows.push_back(*m);
    } else {
      ++skipped;
      std::cerr << "warning: query " << q << " has no relevant corpus graph, skipped\n";
    }
  }
  return summarize(std::move(rows), skipped);
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsSummary& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "query_id,ap,hits20,rr,p20\n";
  for (const QueryMetrics& q : m.per_query) {
    out << q.query_id << ',' << format_double(q.ap) << ',' << format_double(q.hits20) << ','
        << format_double(q.rr) << ',' << format_double(q.p20) << '\n';
  }
  out << "mean," << format_double(m.map) << ',' << format_double(m.hits20) << ','
      << format_double(m.mrr) << ',' << format_double(m.p20) << '\n';
}

// ---------------------------------------------------------------------------
// Alignment quality

namespace {

/// Fills unassigned rows of `gold` (rows where `taken_row` is false) with the
/// maximum-weight assignment of `plan` over the unused columns.
void complete_rows(Matrix& gold, const std::vector<bool>& taken_row,
                   const std::vector<bool>& taken_col, const Matrix& plan) {
  std::vector<int> rows, cols;
  for (int r = 0; r < static_cast<int>(taken_row.size()); ++r) {
    if (!taken_row[r]) rows.push_back(r);
  }
  for (int c = 0; c < static_cast<int>(taken_col.size()); ++c) {
    if (!taken_col[c]) cols.push_back(c);
  }
  if (rows.size() != cols.size()) throw std::logic_error("gold completion: unbalanced block");
  if (rows.empty()) return;
  Matrix block(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) block(i, j) = plan(rows[i], cols[j]);
  }
  const Permutation a = hungarian_max(block);
  for (std::size_t i = 0; i < rows.size(); ++i) gold(rows[i], cols[a[i]]) = 1.0;
}

}  // namespace

Matrix complete_gold_nodes(const NodeMapping& mapping, const Matrix& plan) {
  const int n = static_cast<int>(plan.rows());
  Matrix gold = Matrix::Zero(n, n);
  std::vector<bool> row(n, false), col(n, false);
  for (std::size_t u = 0; u < mapping.size(); ++u) {
    gold(static_cast<Eigen::Index>(u), mapping[u]) = 1.0;
    row[u] = true;
    col[mapping[u]] = true;
  }
  complete_rows(gold, row, col, plan);
  return gold;
}

Matrix complete_gold_edges(const NodeMapping& mapping, const GraphPair& pair,
                           const Matrix& plan) {
  const int e = static_cast<int>(plan.rows());
  std::map<std::pair<int, int>, int> corpus_index;
  for (int i = 0; i < pair.corpus.num_edges(); ++i) {
    const Edge& ed = pair.corpus.edges()[i];
    corpus_index[{std::min(ed.u, ed.v), std::max(ed.u, ed.v)}] = i;
  }
  Matrix gold = Matrix::Zero(e, e);
  std::vector<bool> row(e, false), col(e, false);
  for (int i = 0; i < pair.query.num_edges(); ++i) {
    const Edge& ed = pair.query.edges()[i];
    const int a = mapping[ed.u], b = mapping[ed.v];
    const auto it = corpus_index.find({std::min(a, b), std::max(a, b)});
    if (it == corpus_index.end()) throw std::logic_error("gold mapping does not preserve an edge");
    gold(i, it->second) = 1.0;
    row[i] = true;
    col[it->second] = true;
  }
  complete_rows(gold, row, col, plan);
  return gold;
}

std::optional<AlignmentQualityRecord> alignment_quality(const ForwardTrace& trace,
                                                        const GraphPair& pair,
                                                        Variant variant) {
  if (pair.gold_mappings.empty() || trace.alignments.empty()) return std::nullopt;
  const Matrix& final_plan = trace.alignments.back();
  AlignmentQualityRecord rec;
  double best = -1.0;
  for (const NodeMapping& m : pair.gold_mappings) {
    Matrix g = variant == Variant::node ? complete_gold_nodes(m, final_plan)
                                        : complete_gold_edges(m, pair, final_plan);
    const double tr = final_plan.cwiseProduct(g).sum();
    if (tr > best) {
      best = tr;
      rec.gold = std::move(g);
    }
  }
  rec.size = static_cast<int>(final_plan.rows());
  rec.real_rows = variant == Variant::node ? pair.query_real_nodes : pair.query.num_edges();
  for (const Matrix& p : trace.alignments) {
    rec.traces.push_back(p.cwiseProduct(rec.gold).sum());
    rec.real_traces.push_back(
        p.topRows(rec.real_rows).cwiseProduct(rec.gold.topRows(rec.real_rows)).sum());
  }
  return rec;
}

HistogramSummary histogram_and_summary(const std::vector<AlignmentQualityRecord>& records,
                                       double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("histogram: bin width must be > 0");
  const int bins = static_cast<int>(std::ceil(1.0 / bin_width - 1e-9));
  std::size_t stages = 0;
  for (const auto& r : records) stages = std::max(stages, r.traces.size());

  HistogramSummary out;
  for (std::size_t s = 0; s < stages; ++s) {
    std::vector<int> counts(bins, 0);
    int total = 0;
    double sum = 0.0;
    for (const auto& r : records) {
      if (s >= r.traces.size() || r.size == 0) continue;
      const double x = std::clamp(r.traces[s] / r.size, 0.0, 1.0);
      const int b = std::min(bins - 1, static_cast<int>(std::floor(x / bin_width + 1e-12)));
      ++counts[b];
      ++total;
      sum += x;
    }
    const int stage = static_cast<int>(s) + 1;
    for (int b = 0; b < bins; ++b) {
      out.bins.push_back({stage, b * bin_width, total ? static_cast<double>(counts[b]) / total : 0.0});
    }
    out.means.push_back({stage, total ? sum / total : 0.0, total});
  }
  return out;
}

void write_histogram_csv(const std::filesystem::path& path, const HistogramSummary& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,bin_lo,density\n";
  for (const HistogramRow& r : h.bins) {
    out << r.stage << ',' << format_double(r.bin_lo) << ',' << format_double(r.density) << '\n';
  }
}

void write_stage_means_csv(const std::filesystem::path& path, const HistogramSummary& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,mean_normalized_trace,count\n";
  for (const StageMean& m : h.means) {
    out << m.stage << ',' << format_double(m.mean) << ',' << m.count << '\n';
  }
}

void write_traces_csv(const std::filesystem::path& path,
                      const std::vector<AlignmentQualityRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "query_id,corpus_id,stage,trace,real_trace,size,real_rows\n";
  for (const auto& r : records) {
    for (std::size_t s = 0; s < r.traces.size(); ++s) {
      out << r.query_id << ',' << r.corpus_id << ',' << s + 1 << ',' << format_double(r.traces[s])
          << ',' << format_double(r.real_traces[s]) << ',' << r.size << ',' << r.real_rows << '\n';
    }
  }
}

}  // namespace isonet
