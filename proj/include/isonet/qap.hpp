#pragma once

// Combinatorial reference points for the coverage-cost view of subgraph
// matching: exact minimisation over permutations, assignment rounding, and a
// projected-gradient Gromov-Wasserstein style solver built on Sinkhorn.

#include <vector>

#include "isonet/autodiff.hpp"
#include "isonet/graph.hpp"

namespace isonet {

/// Padded adjacency pair. a_q and a_c are n x n, symmetric, zero diagonal.
struct QapInstance {
  Matrix a_q;
  Matrix a_c;

  /// Pads the smaller graph with isolated nodes.
  static QapInstance from_graphs(const Graph& query, const Graph& corpus);
  /// Throws std::invalid_argument on shape mismatch, asymmetry or a nonzero
  /// diagonal.
  void validate() const;
  int size() const { return static_cast<int>(a_q.rows()); }
};

/// perm[u] = column of the one in row u.
using Permutation = std::vector<int>;

Matrix permutation_matrix(const Permutation& perm);
/// Inverse of permutation_matrix; throws unless `p` is a hard permutation.
Permutation permutation_of(const Matrix& p);

/// sum over entries of ReLU(A_q - P A_c P^T). Works for hard and soft P.
double qap_cost(const QapInstance& inst, const Matrix& p);
double qap_cost(const QapInstance& inst, const Permutation& perm);

inline constexpr int kBruteForceMaxNodes = 8;

struct BruteForceResult {
  double cost = 0.0;
  Permutation argmin;  // first minimiser in lexicographic order
};

/// Exhaustive search over all n! permutations. Refuses n > 8.
BruteForceResult brute_force_min_cost(const QapInstance& inst);

/// Maximum-weight perfect matching on a square matrix, O(n^3).
Permutation hungarian_max(const Matrix& weights);
/// Lexicographically first permutation among all maximum-weight matchings:
/// rows are fixed in increasing order, each to its lowest usable column.
Permutation hungarian_max_lexicographic(const Matrix& weights, double tol = 1e-9);

/// Hard permutation matrix maximising <P, p>, ties broken by lowest row index.
Matrix round_to_permutation(const Matrix& p);

struct EntropicOtOptions {
  double tolerance = 1e-10;  // max column-sum error after a row normalisation
  int max_iterations = 20000;
  double anneal_factor = 0.5;
};

/// argmin_P <P, cost> + tau sum P log P over doubly stochastic P.
///
/// Log-domain Sinkhorn on -cost / tau, warm-started through a geometric
/// temperature schedule from the cost range down to tau, then iterated to
/// `tolerance`. Rows sum to one exactly.
Matrix entropic_ot(const Matrix& cost, double tau, const EntropicOtOptions& opts = {});

/// Sharpness of the softplus that replaces ReLU inside gw_pgd.
inline constexpr double kSmoothingBeta = 20.0;

/// sum softplus_beta(A_q - P A_c P^T), softplus_beta(x) = log(1 + e^{beta x}) / beta.
double smoothed_qap_cost(const QapInstance& inst, const Matrix& p,
                         double beta = kSmoothingBeta);
/// Closed form gradient of smoothed_qap_cost with respect to P:
///   G = sigmoid(beta (A_q - P A_c P^T))
///   grad = -(G P A_c^T + G^T P A_c)
Matrix smoothed_qap_gradient(const QapInstance& inst, const Matrix& p,
                             double beta = kSmoothingBeta);

struct PgdStep {
  int step = 0;
  Matrix plan;
  double cost = 0.0;          // qap_cost of the soft plan
  double rounded_cost = 0.0;  // qap_cost after round_to_permutation
};

struct PgdTrajectory {
  std::vector<PgdStep> steps;
  Permutation rounded;  // rounding of the final plan
  double rounded_cost = 0.0;
};

/// P_t = entropic_ot(grad smoothed cost at P_{t-1}, tau) for `steps` steps.
PgdTrajectory gw_pgd(const QapInstance& inst, double tau, int steps,
                     const Matrix& p0, const EntropicOtOptions& opts = {});

/// n x n matrix with every entry 1/n.
Matrix uniform_plan(int n);

}  // namespace isonet
