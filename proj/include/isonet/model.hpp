#pragma once

// Early-interaction GNN with iteratively refined injective alignments.
//
// Two alignment granularities (node, edge), two refinement schedules (lazy:
// T rounds of K layers with the alignment frozen inside a round; eager: one
// K-layer pass refining after every layer) and, for the node variant, four
// ways of mixing the cross-graph signal into message passing.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "isonet/aligner.hpp"
#include "isonet/autodiff.hpp"
#include "isonet/graph.hpp"
#include "isonet/params.hpp"
#include "json.hpp"

namespace isonet {

inline constexpr int kNodeDim = 10;   // dim of h
inline constexpr int kEdgeDim = 20;   // dim of m and of aggregated messages
inline constexpr int kAlignDim = 16;  // LRL width inside the aligners

enum class Variant { node, edge };
enum class Schedule { lazy, eager };
/// node_pair_partner: z feeds both the combiner and the messages.
/// uonly: z feeds the combiner, messages use h.
/// monly: messages use z, the combiner keeps h.
/// node_partner_post: plain message passing on h, the partner signal is
/// mixed in by inter() after the combiner.
enum class Interaction { node_pair_partner, node_partner_post, uonly, monly };
/// Which layer's z feeds the edge-embedding update in the edge variant.
enum class EdgeUpdateReading { equation, prose };

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& why)
      : std::invalid_argument(field + ": " + why), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

std::string to_string(Variant v);
std::string to_string(Schedule s);
std::string to_string(Interaction i);
std::string to_string(EdgeUpdateReading r);
Variant parse_variant(const std::string& s);
Schedule parse_schedule(const std::string& s);
/// Accepts npp/node-pair-partner, post, uonly, monly.
Interaction parse_interaction(const std::string& s);
EdgeUpdateReading parse_edge_reading(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::node;
  Schedule schedule = Schedule::lazy;
  Interaction interaction = Interaction::node_pair_partner;
  int rounds = 3;  // T, ignored by the eager schedule
  int layers = 5;  // K
  SinkhornOptions sinkhorn;
  bool gumbel_noise = false;
  EdgeUpdateReading edge_reading = EdgeUpdateReading::equation;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.to_json() == b.to_json();
  }
};

/// Fresh parameters for `cfg`, uniform fan-in initialisation from `seed`.
ad::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Everything recorded during one forward pass of a pair.
struct ForwardTrace {
  /// P_1..P_T (lazy) or P_1..P_K (eager); S_t for the edge variant.
  std::vector<Matrix> alignments;
  /// Final node (or padded edge) embeddings of both sides.
  Matrix query_final;
  Matrix corpus_final;
  /// Final node embeddings per (round, layer) in traversal order; kept for
  /// the edge variant as well.
  std::vector<Matrix> query_node_history;
  double distance = 0.0;
  int aligner_calls = 0;
  int message_passing_layers = 0;
};

struct ForwardResult {
  ad::Var distance;
  ForwardTrace trace;
};

/// Bound view of the model weights on one tape.
class ModelWeights {
 public:
  ModelWeights(const ad::BoundParams& p, const ModelConfig& cfg);

  nn::Linear node_encoder;
  nn::Linear edge_encoder;  // edge variant only
  nn::Lrl inter;
  nn::Linear msg;
  nn::Gru comb;
  nn::Lrl aligner;
};

/// Per-graph constants on a tape: features, incidence selectors.
struct GraphTensors {
  GraphTensors(ad::Tape& tape, const Graph& g);

  int num_nodes = 0;
  int num_edges = 0;
  ad::Var node_feat;   // n x 1
  ad::Var edge_feat;   // E x 1
  ad::Var src;         // E x n one-hot of first endpoints
  ad::Var dst;         // E x n one-hot of second endpoints
  ad::Var incidence_t; // n x E, (src + dst)^T
};

/// H_0 = init(feat) and, for the edge variant, M_0 = init_edge(feat(e)).
struct Embeddings {
  ad::Var h;  // n x 10
  ad::Var m;  // E x 20 (edge variant, real edges only)
};

Embeddings encode_init(const ModelWeights& w, const GraphTensors& g,
                       const ModelConfig& cfg);

/// K layers of message passing on one graph with no cross-graph signal.
/// Returns the embeddings after every layer, index 0 being the encoder output.
std::vector<Embeddings> late_pass(const ModelWeights& w, const GraphTensors& g,
                                  const ModelConfig& cfg, int layers);

ForwardResult run_node_lazy(ad::Tape& tape, const ModelWeights& w,
                            const GraphPair& pair, const ModelConfig& cfg,
                            std::mt19937_64* noise = nullptr);
ForwardResult run_node_eager(ad::Tape& tape, const ModelWeights& w,
                             const GraphPair& pair, const ModelConfig& cfg,
                             std::mt19937_64* noise = nullptr);
ForwardResult run_edge_lazy(ad::Tape& tape, const ModelWeights& w,
                            const GraphPair& pair, const ModelConfig& cfg,
                            std::mt19937_64* noise = nullptr);
ForwardResult run_edge_eager(ad::Tape& tape, const ModelWeights& w,
                             const GraphPair& pair, const ModelConfig& cfg,
                             std::mt19937_64* noise = nullptr);

/// Dispatches on cfg.variant / cfg.schedule.
ForwardResult forward(ad::Tape& tape, const ad::BoundParams& params,
                      const GraphPair& pair, const ModelConfig& cfg,
                      std::mt19937_64* noise = nullptr);

/// Inference helper: forward on a private tape, noise disabled.
ForwardTrace evaluate_pair(const ad::ParamStore& params, const GraphPair& pair,
                           const ModelConfig& cfg);

/// sum_{u,d} ReLU(hq - P hc)[u,d]
ad::Var relevance_distance_node(ad::Var hq, ad::Var hc, ad::Var p);
/// sum_{e,d} ReLU(mq - S mc)[e,d]
ad::Var relevance_distance_edge(ad::Var mq, ad::Var mc, ad::Var s);

}  // namespace isonet
