#include "isonet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include "isonet/metrics.hpp"

namespace isonet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (margin < 0.0) throw ConfigError("margin", "must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs", "must be >= 1");
  if (patience < 1) throw ConfigError("patience", "must be >= 1");
  if (tolerance < 0.0) throw ConfigError("tolerance", "must be >= 0");
  if (triples_per_query < 0) throw ConfigError("triples_per_query", "must be >= 0");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay},
          {"batch_size", batch_size},       {"margin", margin},
          {"max_epochs", max_epochs},       {"patience", patience},
          {"tolerance", tolerance},         {"triples_per_query", triples_per_query},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("margin")) c.margin = j.at("margin").get<double>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
  if (j.contains("triples_per_query")) c.triples_per_query = j.at("triples_per_query").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

double hinge_ranking_loss(double pos, double neg, double margin) {
  return std::max(0.0, margin + pos - neg);
}

ad::Var hinge_ranking_loss(ad::Var pos, ad::Var neg, double margin) {
  ad::Tape& t = *pos.tape();
  return ad::relu(pos - neg + t.constant(Matrix::Constant(1, 1, margin)));
}

BatchPlan make_batches(const Dataset& data, Split split, int batch_size, int cap,
                       std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  const std::vector<int> queries = data.queries_in(split);
  if (queries.empty()) {
    throw std::invalid_argument(std::string("make_batches: split '") + to_string(split) +
                                "' is empty");
  }
  BatchPlan plan;
  std::vector<Triple> all;
  for (int q : queries) {
    std::vector<int> pos, neg;
    for (std::size_t c = 0; c < data.corpus.size(); ++c) {
      (data.relevance[q][c] ? pos : neg).push_back(static_cast<int>(c));
    }
    if (pos.empty() || neg.empty()) {
      plan.skipped_queries.push_back(q);
      continue;
    }
    std::vector<Triple> mine;
    mine.reserve(pos.size() * neg.size());
    for (int p : pos) {
      for (int n : neg) mine.push_back({q, p, n});
    }
    std::shuffle(mine.begin(), mine.end(), rng);
    if (cap > 0 && static_cast<int>(mine.size()) > cap) mine.resize(cap);
    all.insert(all.end(), mine.begin(), mine.end());
  }
  std::shuffle(all.begin(), all.end(), rng);
  for (std::size_t i = 0; i < all.size(); i += batch_size) {
    const std::size_t end = std::min(all.size(), i + static_cast<std::size_t>(batch_size));
    plan.batches.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(i),
                              all.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

void adam_step(ad::ParamStore& params, const ad::GradMap& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient keys do not match parameters");
  }
  for (const std::string& name : params.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: no gradient for '" + name + "'");
    if (it->second.rows() != params.get(name).rows() || it->second.cols() != params.get(name).cols()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    }
    if (!it->second.allFinite()) throw NonFiniteGradient(name);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const std::string& name : params.names()) {
    Matrix& p = params.get(name);
    const Matrix& g = grads.at(name);
    auto [mit, m_new] = state.first.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    auto [vit, v_new] = state.second.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    p -= cfg.learning_rate *
         m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + state.epsilon).matrix());
    p -= cfg.learning_rate * cfg.weight_decay * p;
  }
}

namespace {

struct TripleResult {
  double loss = 0.0;
  ad::GradMap grads;
};

TripleResult triple_gradient(const ad::ParamStore& params, const Dataset& data, const Triple& tr,
                             const ModelConfig& model, double margin, double weight,
                             std::uint64_t noise_seed) {
  ad::Tape tape;
  ad::BoundParams bound(tape, params, /*trainable=*/true);
  std::mt19937_64 rng(noise_seed);
  const Graph& q = data.queries[tr.query];
  ad::Var pos = forward(tape, bound, pad_pair(q, data.corpus[tr.positive]), model, &rng).distance;
  ad::Var neg = forward(tape, bound, pad_pair(q, data.corpus[tr.negative]), model, &rng).distance;
  ad::Var loss = hinge_ranking_loss(pos, neg, margin);
  tape.backward(loss, weight);
  return {loss.value()(0, 0), bound.gradients()};
}

}  // namespace

BatchResult batch_gradient(const ad::ParamStore& params, const Dataset& data,
                           const std::vector<Triple>& batch, const ModelConfig& model,
                           const TrainConfig& cfg, std::uint64_t noise_seed) {
  BatchResult out;
  for (const std::string& name : params.names()) {
    out.grads[name] = Matrix::Zero(params.get(name).rows(), params.get(name).cols());
  }
  if (batch.empty()) return out;
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<TripleResult> parts(batch.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < batch.size(); i += step) {
      parts[i] = triple_gradient(params, data, batch[i], model, cfg.margin, weight,
                                 noise_seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), batch.size());
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  for (const TripleResult& r : parts) {
    out.loss += r.loss * weight;
    for (auto& [name, g] : out.grads) g += r.grads.at(name);
  }
  return out;
}

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg,
                  ad::ParamStore init, const EpochCallback& on_epoch) {
  model.validate();
  cfg.validate();
  const std::vector<int> val = data.queries_in(Split::val);
  if (data.queries_in(Split::train).empty()) throw std::invalid_argument("train: empty train split");
  if (val.empty()) throw std::invalid_argument("train: empty validation split");

  ModelConfig eval_model = model;
  eval_model.gumbel_noise = false;
  auto val_map = [&](const ad::ParamStore& p) {
    return evaluate_queries(p, eval_model, data, val, cfg.threads).map;
  };

  TrainResult res;
  ad::ParamStore params = std::move(init);
  res.initial_val_map = val_map(params);
  res.best_params = params;
  res.best_val_map = -std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(cfg.seed);
  AdamState adam;
  double reference = -std::numeric_limits<double>::infinity();
  int stale = 0;
  bool warned = false;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchPlan plan = make_batches(data, Split::train, cfg.batch_size, cfg.triples_per_query, rng);
    if (!warned && !plan.skipped_queries.empty()) {
      std::cerr << "warning: " << plan.skipped_queries.size()
                << " training queries lack a positive or a negative and are skipped\n";
      warned = true;
    }
    double loss_sum = 0.0;
    std::size_t triples = 0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const std::uint64_t noise_seed = rng();
      BatchResult br = batch_gradient(params, data, plan.batches[b], model, cfg, noise_seed);
      adam_step(params, br.grads, adam, cfg);
      loss_sum += br.loss * static_cast<double>(plan.batches[b].size());
      triples += plan.batches[b].size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = triples ? loss_sum / static_cast<double>(triples) : 0.0;
    rec.val_map = val_map(params);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rec);

    if (rec.val_map > res.best_val_map) {
      res.best_val_map = rec.val_map;
      res.best_epoch = epoch;
      res.best_params = params;
    }
    if (rec.val_map >= reference + cfg.tolerance) {
      reference = rec.val_map;
      stale = 0;
    } else {
      ++stale;
    }
    if (on_epoch && !on_epoch(rec)) break;
    if (stale >= cfg.patience) break;
  }
  return res;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       bool with_wall_ms) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_map" << (with_wall_ms ? ",wall_ms" : "") << '\n';
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_map);
    if (with_wall_ms) out << ',' << format_double(std::round(r.wall_ms * 1000.0) / 1000.0);
    out << '\n';
  }
}

}  // namespace isonet
