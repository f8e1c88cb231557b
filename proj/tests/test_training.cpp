#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "isonet/training.hpp"

namespace isonet {
namespace {

Dataset tiny_dataset() {
  SeedGraphConfig sg;
  sg.count = 10;
  std::mt19937_64 rng(2);
  const std::vector<Graph> seeds = synthetic_seed_graphs(sg, rng);
  SamplingConfig sc;
  sc.num_queries = 10;
  sc.num_corpus = 12;
  sc.query_min_nodes = 4;
  sc.query_max_nodes = 6;
  sc.corpus_min_nodes = 8;
  sc.corpus_max_nodes = 10;
  sc.query_positive_min = 1.0 / 12;
  sc.query_positive_max = 11.0 / 12;
  return generate_dataset(seeds, sc, 6);
}

ModelConfig small_model() {
  ModelConfig m;
  m.rounds = 2;
  m.layers = 2;
  return m;
}

TEST(LossTest, HingeValues) {
  EXPECT_DOUBLE_EQ(hinge_ranking_loss(1.0, 3.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(hinge_ranking_loss(3.0, 1.0, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(hinge_ranking_loss(1.0, 1.5, 0.5), 0.0);
  ad::Tape t;
  ad::Var pos = t.variable(Matrix::Constant(1, 1, 2.0));
  ad::Var neg = t.variable(Matrix::Constant(1, 1, 1.0));
  ad::Var l = hinge_ranking_loss(pos, neg, 0.5);
  t.backward(l);
  EXPECT_DOUBLE_EQ(l.value()(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(pos.grad()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(neg.grad()(0, 0), -1.0);
}

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "batch_size");
  }
  c = {};
  c.margin = 0.25;
  c.seed = 99;
  const TrainConfig d = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(d.margin, 0.25);
  EXPECT_EQ(d.seed, 99u);
}

TEST(BatchTest, TriplesAreValidUniqueAndCapped) {
  const Dataset d = tiny_dataset();
  std::mt19937_64 rng(1);
  const BatchPlan plan = make_batches(d, Split::train, 7, 5, rng);
  std::set<std::tuple<int, int, int>> seen;
  std::map<int, int> per_query;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    if (b + 1 < plan.batches.size()) EXPECT_EQ(plan.batches[b].size(), 7u);
    for (const Triple& t : plan.batches[b]) {
      EXPECT_EQ(d.query_splits[t.query], Split::train);
      EXPECT_TRUE(d.relevance[t.query][t.positive]);
      EXPECT_FALSE(d.relevance[t.query][t.negative]);
      EXPECT_TRUE(seen.insert({t.query, t.positive, t.negative}).second);
      ++per_query[t.query];
    }
  }
  for (const auto& [q, n] : per_query) EXPECT_LE(n, 5);
}

TEST(BatchTest, UncappedCoversEveryTriple) {
  const Dataset d = tiny_dataset();
  std::mt19937_64 rng(1);
  const BatchPlan plan = make_batches(d, Split::train, 1000, 0, rng);
  std::size_t expected = 0;
  for (int q : d.queries_in(Split::train)) {
    int pos = 0;
    for (auto r : d.relevance[q]) pos += r;
    expected += static_cast<std::size_t>(pos) * (d.corpus.size() - pos);
  }
  std::size_t got = 0;
  for (const auto& b : plan.batches) got += b.size();
  EXPECT_EQ(got, expected);
}

TEST(BatchTest, SkipsQueriesWithoutBothLabels) {
  Dataset d = tiny_dataset();
  const int q = d.queries_in(Split::train).front();
  std::fill(d.relevance[q].begin(), d.relevance[q].end(), 0);
  std::mt19937_64 rng(1);
  const BatchPlan plan = make_batches(d, Split::train, 8, 0, rng);
  EXPECT_EQ(plan.skipped_queries, std::vector<int>{q});
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ad::ParamStore p;
  p.add("w", Matrix::Constant(1, 2, 1.0));
  ad::GradMap g{{"w", (Matrix(1, 2) << 3.0, -0.5).finished()}};
  AdamState s;
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  adam_step(p, g, s, cfg);
  EXPECT_NEAR(p.get("w")(0, 0), 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p.get("w")(0, 1), 1.0 + 0.01, 1e-8);
  EXPECT_EQ(s.step, 1);
}

TEST(AdamTest, WeightDecayShrinksAfterTheUpdate) {
  ad::ParamStore p;
  p.add("w", Matrix::Constant(1, 1, 2.0));
  ad::GradMap g{{"w", Matrix::Zero(1, 1)}};
  AdamState s;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  adam_step(p, g, s, cfg);
  EXPECT_DOUBLE_EQ(p.get("w")(0, 0), 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(AdamTest, NonFiniteGradientLeavesParametersUntouched) {
  ad::ParamStore p;
  p.add("a", Matrix::Constant(1, 1, 1.0));
  p.add("b", Matrix::Constant(1, 1, 1.0));
  ad::GradMap g{{"a", Matrix::Constant(1, 1, 1.0)},
                {"b", Matrix::Constant(1, 1, std::nan(""))}};
  AdamState s;
  try {
    adam_step(p, g, s, TrainConfig{});
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.param(), "b");
  }
  EXPECT_EQ(p.get("a")(0, 0), 1.0);
  EXPECT_EQ(s.step, 0);
}

TEST(BatchGradientTest, IndependentOfWorkerCount) {
  const Dataset d = tiny_dataset();
  const ModelConfig m = small_model();
  const ad::ParamStore p = init_params(m, 3);
  std::mt19937_64 rng(4);
  const BatchPlan plan = make_batches(d, Split::train, 6, 0, rng);
  TrainConfig one, three;
  three.threads = 3;
  const BatchResult a = batch_gradient(p, d, plan.batches[0], m, one, 17);
  const BatchResult b = batch_gradient(p, d, plan.batches[0], m, three, 17);
  EXPECT_EQ(a.loss, b.loss);
  for (const auto& [name, g] : a.grads) EXPECT_EQ(g, b.grads.at(name)) << name;
}

TEST(BatchGradientTest, MatchesFiniteDifferenceOfTheMeanLoss) {
  const Dataset d = tiny_dataset();
  const ModelConfig m = small_model();
  ad::ParamStore p = init_params(m, 5);
  std::mt19937_64 rng(6);
  const std::vector<Triple> batch = make_batches(d, Split::train, 4, 0, rng).batches[0];
  TrainConfig cfg;
  cfg.margin = 10.0;  // keeps every hinge active
  const BatchResult r = batch_gradient(p, d, batch, m, cfg, 0);
  const double h = 1e-5;
  Matrix& w = p.get("encoder.node.w");
  const double w0 = w(0, 0);
  w(0, 0) = w0 + h;
  const double up = batch_gradient(p, d, batch, m, cfg, 0).loss;
  w(0, 0) = w0 - h;
  const double down = batch_gradient(p, d, batch, m, cfg, 0).loss;
  w(0, 0) = w0;
  EXPECT_NEAR(r.grads.at("encoder.node.w")(0, 0), (up - down) / (2 * h), 1e-6);
}

TEST(TrainTest, DeterministicAndKeepsTheBestEpoch) {
  const Dataset d = tiny_dataset();
  const ModelConfig m = small_model();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 8;
  const TrainResult a = train(d, m, cfg, init_params(m, 1));
  const TrainResult b = train(d, m, cfg, init_params(m, 1));
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_TRUE(a.best_params == b.best_params);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_map, b.history[i].val_map);
  }
  double best = -1;
  for (const EpochRecord& r : a.history) best = std::max(best, r.val_map);
  EXPECT_EQ(a.best_val_map, best);
  EXPECT_EQ(a.history[a.best_epoch - 1].val_map, best);
}

TEST(TrainTest, PatienceStopsEarly) {
  const Dataset d = tiny_dataset();
  const ModelConfig m = small_model();
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 1;
  cfg.tolerance = 10.0;  // no epoch can improve by this much
  const TrainResult r = train(d, m, cfg, init_params(m, 1));
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(TrainTest, CallbackCanStop) {
  const Dataset d = tiny_dataset();
  const ModelConfig m = small_model();
  TrainConfig cfg;
  cfg.max_epochs = 10;
  const TrainResult r =
      train(d, m, cfg, init_params(m, 1), [](const EpochRecord& e) { return e.epoch < 2; });
  EXPECT_EQ(r.history.size(), 2u);
}

}  // namespace
}  // namespace isonet
