#pragma once

// Self-checks shared by the command line tool and the test suites.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "isonet/graph.hpp"
#include "isonet/model.hpp"
#include "isonet/params.hpp"
#include "isonet/qap.hpp"

namespace isonet {

/// G(n, p) with optional Uniform(0.5, 1.5) node and edge features.
Graph random_graph(int n, double p, std::mt19937_64& rng, bool random_features = false);

/// Uniformly random permutation of 0..n-1.
Permutation random_permutation(int n, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Model gradient check

inline constexpr double kGradCheckEps = 1e-5;
/// Fixtures are rejected while any ReLU input lies closer than this to its
/// kink; central differences straddling a kink are meaningless.
inline constexpr double kMinKinkMargin = 1e-4;
/// Central differences on an f of magnitude |f| carry rounding noise of order
/// 1e-11 |f| at eps = 1e-5, so coordinates whose exact derivative is zero
/// (the aligner's output bias cancels inside Sinkhorn) cannot be resolved
/// against a 1e-8 floor. The reported error uses this floor times max(1, |f|).
inline constexpr double kGradCheckRelativeFloor = 1e-6;

struct ModelGradCheck {
  ModelConfig config;
  std::uint64_t fixture_seed = 0;
  double kink_margin = 0.0;
  double floor = 0.0;
  ad::GradCheckResult scaled;   // denominator |fd| + floor
  ad::GradCheckResult literal;  // denominator |fd| + 1e-8
};

/// Random 4-node pair (random features) and fresh parameters, redrawn until
/// the kink margin holds, then checked over every parameter coordinate.
ModelGradCheck model_grad_check(const ModelConfig& cfg, std::uint64_t seed, int nodes = 4);

// ---------------------------------------------------------------------------
// QAP / GW oracle bench

struct QapBenchInstance {
  int index = 0;
  Graph query;
  Graph corpus;
  PgdTrajectory trajectory;
  double brute_force_cost = 0.0;
};

struct QapBenchReport {
  std::vector<QapBenchInstance> instances;
  int recovered = 0;         // rounded final plan reaches cost 0
  int oracle_agreements = 0;  // brute force cost 0 iff VF2 finds a mapping
};

/// Random isomorphic pairs: a nonempty G(nodes, 0.5) graph and a relabelled
/// copy, solved by gw_pgd from the uniform plan.
QapBenchReport qap_bench(int instances, int nodes, int steps, double tau, std::uint64_t seed);

}  // namespace isonet
