#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every primitive in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Nodes live in a
// deque so references to values stay valid while the tape grows.

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace isonet {

using Matrix = Eigen::MatrixXd;

}  // namespace isonet

namespace isonet::ad {

class Tape;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Handle to one node of a Tape. Copyable; valid while its tape is alive.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the upstream gradient of the node it was registered for.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf that accumulates a gradient during backward().
  Var variable(Matrix value);

  /// Records a derived node. `fn` may be empty when no parent needs a gradient.
  Var record(std::string_view kind, Matrix value, bool requires_grad,
             BackwardFn fn);

  /// Zeroes all gradients, seeds d(loss)/d(loss) = seed and sweeps backwards.
  /// Throws ShapeError unless `loss` is 1x1.
  void backward(Var loss, double seed = 1.0);
  void zero_grad();

  void accumulate(std::size_t id, const Matrix& g);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view kind(std::size_t id) const { return nodes_[id].kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Smallest |input| seen by any ReLU-type primitive on this tape; finite
  /// differences are only trustworthy well away from these kinks.
  double kink_margin() const { return kink_margin_; }
  void note_kink_margin(const Matrix& x);

 private:
  struct Node {
    std::string_view kind;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool touched = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

// ---------------------------------------------------------------------------
// Primitives. Every function throws ShapeError naming the primitive and the
// offending shapes when operands do not conform.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
/// Elementwise quotient.
Var divide(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
/// 1x1 sum of every entry.
Var sum_all(Var a);
/// n x 1: sum across each row.
Var sum_rows(Var a);
/// 1 x m: sum down each column.
Var sum_cols(Var a);
/// Divides each row by its sum.
Var row_normalize(Var a);
/// Divides each column by its sum.
Var col_normalize(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
/// 1x1 value sum(max(a - b, 0)).
Var relu_gap_sum(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace isonet::ad
