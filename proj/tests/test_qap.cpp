#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "isonet/diagnostics.hpp"
#include "isonet/qap.hpp"

namespace isonet {
namespace {

Graph complete(int n) {
  std::vector<Edge> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) e.push_back({u, v});
  return Graph::from_edges(n, e);
}

Matrix random_matrix(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

double best_assignment(const Matrix& w, bool maximise) {
  const int n = static_cast<int>(w.rows());
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = maximise ? -1e300 : 1e300;
  do {
    double s = 0;
    for (int i = 0; i < n; ++i) s += w(i, p[i]);
    best = maximise ? std::max(best, s) : std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

TEST(QapCostTest, TriangleAgainstPathCostsTwo) {
  const Graph path3 = Graph::from_edges(3, {{0, 1}, {1, 2}});
  const QapInstance inst = QapInstance::from_graphs(complete(3), path3);
  const BruteForceResult r = brute_force_min_cost(inst);
  EXPECT_EQ(r.cost, 2.0);
  EXPECT_EQ(r.argmin, (Permutation{0, 1, 2}));
  EXPECT_EQ(qap_cost(inst, permutation_matrix(r.argmin)), 2.0);
}

TEST(QapCostTest, PermutationAndMatrixFormsAgree) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const QapInstance inst =
        QapInstance::from_graphs(random_graph(5, 0.5, rng), random_graph(6, 0.5, rng));
    const Permutation p = random_permutation(6, rng);
    EXPECT_EQ(qap_cost(inst, p), qap_cost(inst, permutation_matrix(p)));
    EXPECT_EQ(permutation_of(permutation_matrix(p)), p);
  }
}

TEST(QapCostTest, InvariantUnderSimultaneousRelabeling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 6;
    const QapInstance inst =
        QapInstance::from_graphs(random_graph(n, 0.5, rng), random_graph(n, 0.6, rng));
    const Matrix z = permutation_matrix(random_permutation(n, rng));
    const Matrix p = permutation_matrix(random_permutation(n, rng));
    const QapInstance moved{z * inst.a_q * z.transpose(), inst.a_c};
    EXPECT_DOUBLE_EQ(qap_cost(moved, z * p), qap_cost(inst, p));
  }
}

TEST(QapCostTest, ZeroMinimumIffSubgraph) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 80; ++trial) {
    const Graph q = random_graph(2 + trial % 4, 0.5, rng);
    const Graph c = random_graph(6, 0.45, rng);
    const BruteForceResult r = brute_force_min_cost(QapInstance::from_graphs(q, c));
    EXPECT_EQ(r.cost == 0.0, is_subgraph(q, c)) << "trial " << trial;
  }
}

TEST(QapCostTest, ValidationAndSizeLimit) {
  QapInstance bad{Matrix::Zero(3, 3), Matrix::Zero(4, 4)};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  QapInstance asym{Matrix::Zero(3, 3), Matrix::Zero(3, 3)};
  asym.a_q(0, 1) = 1;
  EXPECT_THROW(asym.validate(), std::invalid_argument);
  const QapInstance big = QapInstance::from_graphs(complete(9), complete(9));
  EXPECT_THROW(brute_force_min_cost(big), std::invalid_argument);
}

TEST(HungarianTest, MatchesExhaustiveOptimum) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    const Matrix w = random_matrix(n, rng);
    const Permutation p = hungarian_max(w);
    double s = 0;
    for (int i = 0; i < n; ++i) s += w(i, p[i]);
    EXPECT_NEAR(s, best_assignment(w, true), 1e-12);
    const Permutation lex = hungarian_max_lexicographic(w);
    double sl = 0;
    for (int i = 0; i < n; ++i) sl += w(i, lex[i]);
    EXPECT_NEAR(sl, s, 1e-12);
  }
}

TEST(HungarianTest, LexicographicTieBreak) {
  EXPECT_EQ(hungarian_max_lexicographic(Matrix::Ones(3, 3)), (Permutation{0, 1, 2}));
  Matrix w = Matrix::Zero(3, 3);
  w(0, 2) = 1;
  EXPECT_EQ(hungarian_max_lexicographic(w), (Permutation{2, 0, 1}));
}

TEST(HungarianTest, RoundingReturnsAPermutation) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix r = round_to_permutation(random_matrix(5, rng));
    EXPECT_TRUE((r * r.transpose()).isIdentity());
    EXPECT_TRUE((r.array() == 0.0 || r.array() == 1.0).all());
  }
}

TEST(EntropicOtTest, DoublyStochasticAndNearOptimal) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> digit(0, 9);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix cost(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) cost(i, j) = digit(rng);
    const Matrix p = entropic_ot(cost, 0.05);
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    // Tied integer optima slow the final convergence.
    EXPECT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-4);
    EXPECT_TRUE((p.array() >= 0.0).all());
    EXPECT_LE((p.cwiseProduct(cost)).sum(), best_assignment(cost, false) + 4 * 0.05 * std::log(4.0) + 1e-9);
  }
}

TEST(EntropicOtTest, ConvergesToTheUniqueOptimumAtLowTemperature) {
  Matrix cost(3, 3);
  cost << 0, 5, 5,
          5, 5, 0,
          5, 0, 5;
  const Matrix p = entropic_ot(cost, 0.01);
  EXPECT_LT((p - permutation_matrix({0, 2, 1})).norm(), 1e-6);
}

TEST(EntropicOtTest, LargeTemperatureApproachesUniform) {
  std::mt19937_64 rng(23);
  const Matrix p = entropic_ot(random_matrix(5, rng), 1e4);
  EXPECT_LT((p - uniform_plan(5)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SmoothedCostTest, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(25);
  const QapInstance inst =
      QapInstance::from_graphs(random_graph(5, 0.6, rng), random_graph(5, 0.6, rng));
  const Matrix p = entropic_ot(random_matrix(5, rng), 0.3);
  const Matrix g = smoothed_qap_gradient(inst, p);
  const double h = 1e-6;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      Matrix a = p, b = p;
      a(i, j) += h;
      b(i, j) -= h;
      const double fd = (smoothed_qap_cost(inst, a) - smoothed_qap_cost(inst, b)) / (2 * h);
      EXPECT_NEAR(g(i, j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(SmoothedCostTest, ApproachesTheHardCostForLargeBeta) {
  std::mt19937_64 rng(27);
  const QapInstance inst =
      QapInstance::from_graphs(random_graph(5, 0.5, rng), random_graph(5, 0.5, rng));
  const Matrix p = permutation_matrix(random_permutation(5, rng));
  const double hard = qap_cost(inst, p);
  // softplus(0) = log 2 / beta on the 25 entries where the residual is 0 or negative.
  EXPECT_NEAR(smoothed_qap_cost(inst, p, 1e4), hard, 25 * std::log(2.0) / 1e4 + 1e-9);
}

TEST(GwPgdTest, TrajectoryShapeAndRounding) {
  std::mt19937_64 rng(29);
  const Graph g = random_graph(4, 0.6, rng);
  const QapInstance inst = QapInstance::from_graphs(g, g.relabeled(random_permutation(4, rng)));
  const PgdTrajectory t = gw_pgd(inst, 0.05, 12, uniform_plan(4));
  ASSERT_EQ(t.steps.size(), 12u);
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    EXPECT_EQ(t.steps[s].step, static_cast<int>(s) + 1);
    EXPECT_LT((t.steps[s].plan.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(t.rounded_cost, qap_cost(inst, t.rounded));
  EXPECT_EQ(t.rounded_cost, t.steps.back().rounded_cost);
}

TEST(QapBenchTest, OracleAgreementIsExact) {
  const QapBenchReport r = qap_bench(20, 5, 10, 0.05, 31);
  EXPECT_EQ(r.oracle_agreements, 20);
  for (const QapBenchInstance& inst : r.instances) EXPECT_EQ(inst.brute_force_cost, 0.0);
}

}  // namespace
}  // namespace isonet
