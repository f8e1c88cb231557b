#include "isonet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace isonet {

Graph random_graph(int n, double p, std::mt19937_64& rng, bool random_features) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (coin(rng)) edges.push_back({u, v});
    }
  }
  if (!random_features) return Graph::from_edges(n, std::move(edges));
  std::uniform_real_distribution<double> feat(0.5, 1.5);
  std::vector<double> nf(n), ef(edges.size());
  for (double& x : nf) x = feat(rng);
  for (double& x : ef) x = feat(rng);
  return Graph::from_edges(n, std::move(edges), std::move(nf), std::move(ef));
}

Permutation random_permutation(int n, std::mt19937_64& rng) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

ModelGradCheck model_grad_check(const ModelConfig& cfg, std::uint64_t seed, int nodes) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  for (int attempt = 0;; ++attempt) {
    const Graph q = random_graph(nodes, 0.6, rng, true);
    const Graph c = random_graph(nodes, 0.7, rng, true);
    const GraphPair pair = pad_pair(q, c);
    const std::uint64_t param_seed = rng();
    const ad::ParamStore params = init_params(cfg, param_seed);
    auto f = [&](ad::Tape& t, const ad::BoundParams& b) {
      return forward(t, b, pair, cfg).distance;
    };

    ad::Tape probe;
    ad::BoundParams bound(probe, params, false);
    const double value = f(probe, bound).value()(0, 0);
    if (probe.kink_margin() < kMinKinkMargin && attempt < 1000) continue;

    ModelGradCheck out;
    out.config = cfg;
    out.fixture_seed = seed;
    out.kink_margin = probe.kink_margin();
    out.floor = kGradCheckRelativeFloor * std::max(1.0, std::abs(value));
    out.scaled = ad::grad_check(f, params, kGradCheckEps, out.floor);
    out.literal = ad::grad_check(f, params, kGradCheckEps, 1e-8);
    return out;
  }
}

QapBenchReport qap_bench(int instances, int nodes, int steps, double tau, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QapBenchReport report;
  for (int i = 0; i < instances; ++i) {
    Graph g;
    do {
      g = random_graph(nodes, 0.5, rng);
    } while (g.num_edges() == 0);
    const Permutation perm = random_permutation(nodes, rng);
    QapBenchInstance inst;
    inst.index = i;
    inst.query = g;
    inst.corpus = g.relabeled(perm);
    const QapInstance qi = QapInstance::from_graphs(inst.query, inst.corpus);
    inst.trajectory = gw_pgd(qi, tau, steps, uniform_plan(qi.size()));
    if (inst.trajectory.rounded_cost == 0.0) ++report.recovered;
    if (qi.size() <= kBruteForceMaxNodes) {
      inst.brute_force_cost = brute_force_min_cost(qi).cost;
      if ((inst.brute_force_cost == 0.0) == is_subgraph(inst.query, inst.corpus)) {
        ++report.oracle_agreements;
      }
    }
    report.instances.push_back(std::move(inst));
  }
  return report;
}

}  // namespace isonet
