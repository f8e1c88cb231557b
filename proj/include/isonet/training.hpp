#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "isonet/dataset.hpp"
#include "isonet/model.hpp"
#include "isonet/params.hpp"

namespace isonet {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  int batch_size = 32;
  double margin = 0.5;
  int max_epochs = 100;
  int patience = 50;
  double tolerance = 1e-4;
  int triples_per_query = 20;  // 0 keeps every (q, c+, c-) triple
  std::uint64_t seed = 0;      // batching and noise
  int threads = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// max(0, margin + pos - neg)
double hinge_ranking_loss(double pos, double neg, double margin);
ad::Var hinge_ranking_loss(ad::Var pos, ad::Var neg, double margin);

struct Triple {
  int query = 0;
  int positive = 0;
  int negative = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
};

struct BatchPlan {
  std::vector<std::vector<Triple>> batches;
  std::vector<int> skipped_queries;  // no positive or no negative
};

/// Every (q, c+, c-) of the split's queries, at most `cap` per query (0 = no
/// cap) drawn without replacement, shuffled across queries and cut into
/// batches of `batch_size`.
BatchPlan make_batches(const Dataset& data, Split split, int batch_size, int cap,
                       std::mt19937_64& rng);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::map<std::string, Matrix> first;
  std::map<std::string, Matrix> second;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

/// Adam with bias-corrected moments followed by p -= lr * wd * p.
/// Throws NonFiniteGradient before touching any parameter.
void adam_step(ad::ParamStore& params, const ad::GradMap& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean hinge loss over the epoch's triples
  double val_map = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ad::ParamStore best_params;
  int best_epoch = 0;
  double best_val_map = 0.0;
  double initial_val_map = 0.0;
  std::vector<EpochRecord> history;
};

/// Mean hinge loss and summed parameter gradients of one batch. Triples are
/// evaluated on independent tapes by `threads` workers and reduced in triple
/// order, so the result does not depend on the worker count.
struct BatchResult {
  double loss = 0.0;
  ad::GradMap grads;
};
BatchResult batch_gradient(const ad::ParamStore& params, const Dataset& data,
                           const std::vector<Triple>& batch, const ModelConfig& model,
                           const TrainConfig& cfg, std::uint64_t noise_seed);

/// Called after every epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&)>;

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg,
                  ad::ParamStore init, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history, bool with_wall_ms = true);

}  // namespace isonet
