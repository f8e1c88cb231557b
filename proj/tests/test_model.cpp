#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "isonet/aligner.hpp"
#include "isonet/diagnostics.hpp"
#include "isonet/model.hpp"
#include "isonet/nn.hpp"
#include "isonet/qap.hpp"

namespace isonet {
namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

ModelConfig make(Variant v, Schedule s, int T, int K,
                 Interaction i = Interaction::node_pair_partner) {
  ModelConfig c;
  c.variant = v;
  c.schedule = s;
  c.rounds = T;
  c.layers = K;
  c.interaction = i;
  return c;
}

double distance(const ad::ParamStore& p, const GraphPair& pair, const ModelConfig& cfg) {
  return evaluate_pair(p, pair, cfg).distance;
}

// ---------------------------------------------------------------------------
// Sinkhorn and the aligners

TEST(SinkhornTest, RowsExactColumnsClose) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    // Scores on the scale of tau; unit-scale scores need more than 20 rounds.
    const Matrix p = sinkhorn(random_matrix(6, 6, rng, 0.1), SinkhornOptions{});
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
    EXPECT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-3);
    EXPECT_TRUE((p.array() > 0.0).all());
  }
}

TEST(SinkhornTest, RowsExactEvenWhenColumnsHaveNotConverged) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = sinkhorn(random_matrix(6, 6, rng, 3.0), SinkhornOptions{});
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
  }
}

TEST(SinkhornTest, InvariantToAConstantShift) {
  std::mt19937_64 rng(2);
  const Matrix d = random_matrix(5, 5, rng);
  const Matrix shifted = (d.array() + 123.0).matrix();
  EXPECT_LT((sinkhorn(d, {}) - sinkhorn(shifted, {})).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SinkhornTest, HugeScoresStayFinite) {
  Matrix d = Matrix::Zero(4, 4);
  d(0, 0) = 1e4;
  d(1, 2) = -1e4;
  EXPECT_TRUE(sinkhorn(d, {}).allFinite());
}

TEST(SinkhornTest, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  const Matrix d0 = random_matrix(4, 4, rng, 0.3);
  const Matrix w = random_matrix(4, 4, rng);
  auto f = [&](const Matrix& d) { return sinkhorn(d, {}).cwiseProduct(w).sum(); };
  ad::Tape t;
  ad::Var d = t.variable(d0);
  t.backward(ad::sum_all(ad::mul(sinkhorn(d, {}), t.constant(w))));
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < d0.size(); ++i) {
    Matrix a = d0, b = d0;
    a(i) += h;
    b(i) -= h;
    const double fd = (f(a) - f(b)) / (2 * h);
    EXPECT_NEAR(d.grad()(i), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(SinkhornTest, NoiseChangesThePlan) {
  std::mt19937_64 rng(4), noise(5);
  const Matrix d = random_matrix(4, 4, rng);
  EXPECT_GT((sinkhorn(d, {}) - sinkhorn(d, {}, &noise)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AlignerTest, NodeAndEdgeAlignersAreRowAndColumnEquivariant) {
  std::mt19937_64 rng(6);
  ad::ParamStore s;
  nn::add_lrl(s, "node", kNodeDim, kAlignDim, kAlignDim, rng);
  nn::add_lrl(s, "edge", kEdgeDim, kAlignDim, kAlignDim, rng);
  for (int trial = 0; trial < 10; ++trial) {
    for (const auto& [prefix, dim, n] : {std::tuple{"node", kNodeDim, 6}, {"edge", kEdgeDim, 9}}) {
      const Matrix q = random_matrix(n, dim, rng), c = random_matrix(n, dim, rng);
      const Matrix zq = permutation_matrix(random_permutation(n, rng));
      const Matrix zc = permutation_matrix(random_permutation(n, rng));
      ad::Tape t;
      ad::BoundParams b(t, s, false);
      const nn::Lrl lrl = nn::bind_lrl(b, prefix);
      const Matrix p = refine_alignment(lrl, t.constant(q), t.constant(c), {}).value();
      const Matrix moved =
          refine_alignment(lrl, t.constant(zq * q), t.constant(zc * c), {}).value();
      EXPECT_LT((moved - zq * p * zc.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// Configuration and parameters

TEST(ModelConfigTest, ParameterCounts) {
  EXPECT_EQ(init_params(ModelConfig{}, 0).scalar_count(), 2498u);
  EXPECT_EQ(init_params(make(Variant::edge, Schedule::lazy, 3, 5), 0).scalar_count(), 4908u);
  for (Interaction i : {Interaction::node_partner_post, Interaction::uonly, Interaction::monly}) {
    EXPECT_EQ(init_params(make(Variant::node, Schedule::lazy, 3, 5, i), 0).scalar_count(), 2498u);
  }
}

TEST(ModelConfigTest, DefaultsAreThreeRoundsFiveLayers) {
  const ModelConfig c;
  EXPECT_EQ(c.rounds, 3);
  EXPECT_EQ(c.layers, 5);
  EXPECT_EQ(c.sinkhorn.tau, 0.1);
  EXPECT_EQ(c.sinkhorn.iterations, 20);
  EXPECT_FALSE(c.gumbel_noise);
}

TEST(ModelConfigTest, ValidationNamesTheField) {
  auto field_of = [](ModelConfig c) -> std::string {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return "";
  };
  ModelConfig c;
  c.layers = 0;
  EXPECT_EQ(field_of(c), "K");
  c = {};
  c.rounds = 0;
  EXPECT_EQ(field_of(c), "T");
  c.schedule = Schedule::eager;
  EXPECT_EQ(field_of(c), "");
  c = {};
  c.sinkhorn.tau = 0.0;
  EXPECT_EQ(field_of(c), "tau");
  c = {};
  c.sinkhorn.iterations = 0;
  EXPECT_EQ(field_of(c), "sinkhorn_iters");
  c = make(Variant::edge, Schedule::lazy, 2, 2, Interaction::uonly);
  EXPECT_EQ(field_of(c), "interaction");
  c = {};
  c.edge_reading = EdgeUpdateReading::prose;
  EXPECT_EQ(field_of(c), "edge_reading");
  EXPECT_THROW(parse_variant("both"), ConfigError);
  EXPECT_THROW(parse_interaction("gmn"), ConfigError);
}

TEST(ModelConfigTest, JsonRoundTrip) {
  ModelConfig c = make(Variant::edge, Schedule::lazy, 4, 2);
  c.sinkhorn.tau = 0.2;
  c.gumbel_noise = true;
  c.edge_reading = EdgeUpdateReading::prose;
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_EQ(parse_interaction("node-partner-post"), Interaction::node_partner_post);
}

TEST(ModelConfigTest, InitIsDeterministicInTheSeed) {
  EXPECT_TRUE(init_params(ModelConfig{}, 7) == init_params(ModelConfig{}, 7));
  EXPECT_FALSE(init_params(ModelConfig{}, 7) == init_params(ModelConfig{}, 8));
}

// ---------------------------------------------------------------------------
// Forward pass

class ForwardTest : public ::testing::TestWithParam<ModelConfig> {};

TEST_P(ForwardTest, CountersMatchTheSchedule) {
  const ModelConfig cfg = GetParam();
  std::mt19937_64 rng(8);
  const GraphPair pair = pad_pair(random_graph(4, 0.5, rng), random_graph(6, 0.5, rng));
  const ForwardTrace tr = evaluate_pair(init_params(cfg, 1), pair, cfg);
  const bool lazy = cfg.schedule == Schedule::lazy;
  EXPECT_EQ(tr.aligner_calls, lazy ? cfg.rounds : cfg.layers);
  EXPECT_EQ(tr.message_passing_layers, lazy ? cfg.rounds * cfg.layers : cfg.layers);
  EXPECT_EQ(static_cast<int>(tr.alignments.size()), tr.aligner_calls);
  const int side = cfg.variant == Variant::node ? pair.n_pad : pair.e_pad;
  for (const Matrix& p : tr.alignments) {
    ASSERT_EQ(p.rows(), side);
    ASSERT_EQ(p.cols(), side);
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
  EXPECT_GE(tr.distance, 0.0);
  EXPECT_TRUE(std::isfinite(tr.distance));
}

TEST_P(ForwardTest, DistanceInvariantUnderRelabeling) {
  const ModelConfig cfg = GetParam();
  std::mt19937_64 rng(9);
  const ad::ParamStore params = init_params(cfg, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph q = random_graph(5, 0.5, rng, true);
    const Graph c = random_graph(7, 0.5, rng, true);
    const double d = distance(params, pad_pair(q, c), cfg);
    const Graph q2 = q.relabeled(random_permutation(5, rng));
    const Graph c2 = c.relabeled(random_permutation(7, rng));
    EXPECT_NEAR(distance(params, pad_pair(q2, c2), cfg), d, 1e-9 * std::max(1.0, d));
  }
}

TEST_P(ForwardTest, DistanceInvariantUnderEdgeOrder) {
  const ModelConfig cfg = GetParam();
  std::mt19937_64 rng(10);
  const ad::ParamStore params = init_params(cfg, 3);
  const Graph q = random_graph(5, 0.6, rng, true);
  const Graph c = random_graph(6, 0.6, rng, true);
  const double d = distance(params, pad_pair(q, c), cfg);
  std::vector<int> order(q.num_edges());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  EXPECT_NEAR(distance(params, pad_pair(q.with_edge_order(order), c), cfg), d,
              1e-9 * std::max(1.0, d));
}

TEST_P(ForwardTest, HandlesEdgelessGraphs) {
  const ModelConfig cfg = GetParam();
  const Graph empty = Graph::from_edges(3, {});
  const Graph tri = Graph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  const ad::ParamStore params = init_params(cfg, 4);
  EXPECT_TRUE(std::isfinite(distance(params, pad_pair(empty, tri), cfg)));
  EXPECT_TRUE(std::isfinite(distance(params, pad_pair(tri, empty), cfg)));
}

std::string config_name(const ::testing::TestParamInfo<ModelConfig>& info) {
  const ModelConfig& c = info.param;
  return to_string(c.variant) + "_" + to_string(c.schedule) + "_" + to_string(c.interaction) +
         "_T" + std::to_string(c.rounds) + "K" + std::to_string(c.layers);
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ForwardTest,
    ::testing::Values(make(Variant::node, Schedule::lazy, 3, 2),
                      make(Variant::node, Schedule::eager, 1, 3),
                      make(Variant::edge, Schedule::lazy, 2, 2),
                      make(Variant::edge, Schedule::eager, 1, 3),
                      make(Variant::node, Schedule::lazy, 2, 2, Interaction::node_partner_post),
                      make(Variant::node, Schedule::lazy, 2, 2, Interaction::uonly),
                      make(Variant::node, Schedule::lazy, 2, 2, Interaction::monly)),
    config_name);

TEST(ForwardInteractionTest, AblationsDiffer) {
  std::mt19937_64 rng(11);
  const GraphPair pair = pad_pair(random_graph(5, 0.5, rng), random_graph(7, 0.5, rng));
  std::vector<double> d;
  for (Interaction i : {Interaction::node_pair_partner, Interaction::node_partner_post,
                        Interaction::uonly, Interaction::monly}) {
    const ModelConfig cfg = make(Variant::node, Schedule::lazy, 2, 2, i);
    d.push_back(distance(init_params(cfg, 5), pair, cfg));
  }
  for (std::size_t a = 0; a < d.size(); ++a)
    for (std::size_t b = a + 1; b < d.size(); ++b) EXPECT_NE(d[a], d[b]);
}

TEST(ForwardInteractionTest, ProseReadingIsADistinctLazyEdgeModel) {
  std::mt19937_64 rng(12);
  const GraphPair pair = pad_pair(random_graph(5, 0.5, rng), random_graph(7, 0.5, rng));
  ModelConfig eq = make(Variant::edge, Schedule::lazy, 2, 2);
  ModelConfig prose = eq;
  prose.edge_reading = EdgeUpdateReading::prose;
  const ad::ParamStore p = init_params(eq, 6);
  EXPECT_NE(distance(p, pair, eq), distance(p, pair, prose));
}

TEST(ForwardInteractionTest, FirstLazyRoundIgnoresTheOtherGraph) {
  // With T = 1 the single alignment comes from a pass with no cross term, so
  // the query embeddings do not depend on the corpus.
  std::mt19937_64 rng(13);
  const Graph q = random_graph(5, 0.6, rng);
  const ModelConfig cfg = make(Variant::node, Schedule::lazy, 1, 3);
  const ad::ParamStore p = init_params(cfg, 7);
  const ForwardTrace a = evaluate_pair(p, pad_pair(q, random_graph(6, 0.3, rng)), cfg);
  const ForwardTrace b = evaluate_pair(p, pad_pair(q, random_graph(6, 0.8, rng)), cfg);
  EXPECT_EQ(a.query_final.topRows(5), b.query_final.topRows(5));
}

TEST(ForwardInteractionTest, NoiseOnlyWhenRequested) {
  std::mt19937_64 rng(14);
  const GraphPair pair = pad_pair(random_graph(4, 0.6, rng), random_graph(6, 0.6, rng));
  ModelConfig cfg = make(Variant::node, Schedule::lazy, 2, 2);
  cfg.gumbel_noise = true;
  const ad::ParamStore p = init_params(cfg, 8);
  ad::Tape t1, t2;
  ad::BoundParams b1(t1, p, false), b2(t2, p, false);
  std::mt19937_64 n1(1);
  const double noisy = forward(t1, b1, pair, cfg, &n1).distance.value()(0, 0);
  const double clean = forward(t2, b2, pair, cfg, nullptr).distance.value()(0, 0);
  EXPECT_NE(noisy, clean);
  EXPECT_EQ(evaluate_pair(p, pair, cfg).distance, clean);
}

// ---------------------------------------------------------------------------
// Gradient check

class GradCheckTest : public ::testing::TestWithParam<ModelConfig> {};

TEST_P(GradCheckTest, FullModelWithinTolerance) {
  const ModelGradCheck g = model_grad_check(GetParam(), 1);
  EXPECT_GE(g.kink_margin, kMinKinkMargin);
  EXPECT_LT(g.scaled.max_rel_error, 1e-4) << g.scaled.worst_param << "[" << g.scaled.worst_index
                                          << "]";
  EXPECT_LT(g.scaled.max_abs_error, 1e-7);
}

INSTANTIATE_TEST_SUITE_P(Variants, GradCheckTest,
                         ::testing::Values(make(Variant::node, Schedule::lazy, 2, 2),
                                           make(Variant::node, Schedule::eager, 1, 2),
                                           make(Variant::edge, Schedule::lazy, 2, 2),
                                           make(Variant::edge, Schedule::eager, 1, 2)),
                         config_name);

}  // namespace
}  // namespace isonet
