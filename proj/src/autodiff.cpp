#include "isonet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace isonet::ad {
namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(std::string_view kind, const Matrix& a,
                             const Matrix& b) {
  std::ostringstream os;
  os << kind << ": incompatible shapes " << shape_of(a) << " and "
     << shape_of(b);
  throw ShapeError(os.str());
}

Tape& same_tape(Var a, Var b, std::string_view kind) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(kind) +
                                ": operands must live on the same tape");
  }
  return *a.tape();
}

Tape& tape_of(Var a, std::string_view kind) {
  if (!a.valid()) {
    throw std::invalid_argument(std::string(kind) + ": invalid operand");
  }
  return *a.tape();
}

bool any_grad(const Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.requires_grad(v.id())) return true;
  }
  return false;
}

void require_same_shape(std::string_view kind, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail(kind, a.value(), b.value());
  }
}

// Shared body of the unary elementwise primitives whose derivative can be
// written in terms of input and output.
template <typename Fwd, typename Deriv>
Var unary(std::string_view kind, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a, kind);
  Matrix out = fwd(a.value());
  const bool rg = t.requires_grad(a.id());
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id();
    const std::size_t self = t.size();
    fn = [ia, self, deriv](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, deriv(tp.value(ia), tp.value(self), g));
    };
  }
  return t.record(kind, std::move(out), rg, std::move(fn));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  return record("constant", std::move(value), false, {});
}

Var Tape::variable(Matrix value) {
  return record("variable", std::move(value), true, {});
}

Var Tape::record(std::string_view kind, Matrix value, bool requires_grad,
                 BackwardFn fn) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::note_kink_margin(const Matrix& x) {
  if (x.size() > 0) kink_margin_ = std::min(kink_margin_, x.cwiseAbs().minCoeff());
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    n.touched = false;
    if (n.requires_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    }
  }
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    shape_fail("accumulate", n.value, g);
  }
  n.grad += g;
  n.touched = true;
}

const Matrix& Tape::grad(std::size_t id) const { return nodes_[id].grad; }

void Tape::backward(Var loss, double seed) {
  if (loss.tape() != this) {
    throw std::invalid_argument("backward: loss does not belong to this tape");
  }
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_of(lv));
  }
  zero_grad();
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss.id(), Matrix::Constant(1, 1, seed));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.touched || !n.backward) continue;
    // The callback may accumulate into earlier nodes only, so `n` stays put.
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
      if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
    };
  }
  return t.record("matmul", std::move(out), rg, std::move(fn));
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  Matrix out = a.value().transpose();
  const bool rg = t.requires_grad(a.id());
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id();
    fn = [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); };
  }
  return t.record("transpose", std::move(out), rg, std::move(fn));
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    };
  }
  return t.record("add", std::move(out), rg, std::move(fn));
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape("sub", a, b);
  Matrix out = a.value() - b.value();
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      if (tp.requires_grad(ib)) tp.accumulate(ib, -g);
    };
  }
  return t.record("sub", std::move(out), rg, std::move(fn));
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  require_same_shape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
      if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
    };
  }
  return t.record("mul", std::move(out), rg, std::move(fn));
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](const Matrix& x) -> Matrix { return x * factor; },
      [factor](const Matrix&, const Matrix&, const Matrix& g) -> Matrix {
        return g * factor;
      });
}

Var relu(Var a) {
  a.tape()->note_kink_margin(a.value());
  // Subgradient at exactly zero is zero.
  return unary(
      "relu", a, [](const Matrix& x) -> Matrix { return x.cwiseMax(0.0); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return (x.array() > 0.0).select(g, 0.0);
      });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return g.cwiseProduct(y);
      });
}

Var log(Var a) {
  return unary(
      "log", a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.cwiseQuotient(x);
      });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](const Matrix& x) -> Matrix {
        return (1.0 + (-x.array()).exp()).inverse();
      },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return g.array() * y.array() * (1.0 - y.array());
      });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return g.array() * (1.0 - y.array().square());
      });
}

Var divide(Var a, Var b) {
  Tape& t = same_tape(a, b, "divide");
  require_same_shape("divide", a, b);
  Matrix out = a.value().cwiseQuotient(b.value());
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      const Matrix& bv = tp.value(ib);
      if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseQuotient(bv));
      if (tp.requires_grad(ib)) {
        tp.accumulate(ib, -(g.array() * tp.value(ia).array() /
                            bv.array().square())
                               .matrix());
      }
    };
  }
  return t.record("divide", std::move(out), rg, std::move(fn));
}

Var sum_all(Var a) {
  return unary(
      "sum_all", a,
      [](const Matrix& x) -> Matrix { return Matrix::Constant(1, 1, x.sum()); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return Matrix::Constant(x.rows(), x.cols(), g(0, 0));
      });
}

Var sum_rows(Var a) {
  return unary(
      "sum_rows", a,
      [](const Matrix& x) -> Matrix { return x.rowwise().sum(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.replicate(1, x.cols());
      });
}

Var sum_cols(Var a) {
  return unary(
      "sum_cols", a,
      [](const Matrix& x) -> Matrix { return x.colwise().sum(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.replicate(x.rows(), 1);
      });
}

Var row_normalize(Var a) {
  return unary(
      "row_normalize", a,
      [](const Matrix& x) -> Matrix {
        return x.array().colwise() / x.rowwise().sum().array();
      },
      [](const Matrix& x, const Matrix& y, const Matrix& g) -> Matrix {
        // d/dx_ij of y_ik = x_ik / s_i, s_i = sum_k x_ik
        const Eigen::VectorXd s = x.rowwise().sum();
        const Eigen::VectorXd gy = g.cwiseProduct(y).rowwise().sum();
        return (g.colwise() - gy).array().colwise() / s.array();
      });
}

Var col_normalize(Var a) {
  return unary(
      "col_normalize", a,
      [](const Matrix& x) -> Matrix {
        return x.array().rowwise() / x.colwise().sum().array();
      },
      [](const Matrix& x, const Matrix& y, const Matrix& g) -> Matrix {
        const Eigen::RowVectorXd s = x.colwise().sum();
        const Eigen::RowVectorXd gy = g.cwiseProduct(y).colwise().sum();
        return (g.rowwise() - gy).array().rowwise() / s.array();
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts.front(), "concat_cols");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.tape() != &t) {
      throw std::invalid_argument("concat_cols: operands on different tapes");
    }
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    rg = rg || t.requires_grad(p.id());
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ids, widths](Tape& tp, const Matrix& g) {
      Eigen::Index off = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (tp.requires_grad(ids[i])) {
          tp.accumulate(ids[i], g.middleCols(off, widths[i]));
        }
        off += widths[i];
      }
    };
  }
  return t.record("concat_cols", std::move(out), rg, std::move(fn));
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a, "slice_rows");
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    std::ostringstream os;
    os << "slice_rows: rows [" << begin << ", " << begin + count
       << ") out of range for " << shape_of(a.value());
    throw ShapeError(os.str());
  }
  Matrix out = a.value().middleRows(begin, count);
  const bool rg = t.requires_grad(a.id());
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id();
    fn = [ia, begin, count](Tape& tp, const Matrix& g) {
      Matrix full = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
      full.middleRows(begin, count) = g;
      tp.accumulate(ia, full);
    };
  }
  return t.record("slice_rows", std::move(out), rg, std::move(fn));
}

Var relu_gap_sum(Var a, Var b) {
  Tape& t = same_tape(a, b, "relu_gap_sum");
  require_same_shape("relu_gap_sum", a, b);
  const Matrix gap = a.value() - b.value();
  t.note_kink_margin(gap);
  Matrix out = Matrix::Constant(1, 1, gap.cwiseMax(0.0).sum());
  const bool rg = any_grad(t, {a, b});
  Tape::BackwardFn fn;
  if (rg) {
    const std::size_t ia = a.id(), ib = b.id();
    fn = [ia, ib](Tape& tp, const Matrix& g) {
      const Matrix mask =
          ((tp.value(ia) - tp.value(ib)).array() > 0.0).cast<double>().matrix() *
          g(0, 0);
      tp.accumulate(ia, mask);
      if (tp.requires_grad(ib)) tp.accumulate(ib, -mask);
    };
  }
  return t.record("relu_gap_sum", std::move(out), rg, std::move(fn));
}

}  // namespace isonet::ad
