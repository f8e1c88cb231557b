#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "isonet/autodiff.hpp"
#include "json.hpp"

namespace isonet::ad {

using GradMap = std::map<std::string, Matrix>;

/// Named trainable tensors. Iteration follows insertion order so that every
/// traversal (init, optimizer, checkpoint) is deterministic.
class ParamStore {
 public:
  /// Throws std::invalid_argument on a duplicate name.
  void add(const std::string& name, Matrix init);

  bool contains(const std::string& name) const;
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t scalar_count() const;

  /// Fills `name` with Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void add_uniform(const std::string& name, Eigen::Index rows,
                   Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng);

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Matrix> values_;
};

/// Parameters placed on a tape as leaves. `trainable` controls whether the
/// leaves receive gradients.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store, bool trainable);

  Var operator[](const std::string& name) const;
  /// Gradients of every bound parameter after Tape::backward().
  GradMap gradients() const;

 private:
  std::map<std::string, Var> vars_;
};

/// Writes a checkpoint: 8-byte magic, u64 manifest length, JSON manifest
/// (names, shapes, offsets, plus `meta`), then raw little-endian doubles in
/// column-major order.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta);

struct Checkpoint {
  ParamStore params;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws std::runtime_error naming the first parameter whose presence or
/// shape differs between `loaded` and `expected`.
void validate_shapes(const ParamStore& loaded, const ParamStore& expected);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  double max_abs_error = 0.0;
  double value = 0.0;  // f(x0)
};

/// Builds a scalar on the tape from the bound parameters.
using ScalarBuilder = std::function<Var(Tape&, const BoundParams&)>;

/// Compares reverse-mode gradients with central differences over every
/// coordinate of `x0`: max |analytic - fd| / (|fd| + floor).
GradCheckResult grad_check(const ScalarBuilder& f, const ParamStore& x0,
                           double eps = 1e-5, double floor = 1e-8);

}  // namespace isonet::ad
