#include "isonet/qap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>


namespace isonet {

QapInstance QapInstance::from_graphs(const Graph& query, const Graph& corpus) {
  const int n = std::max(query.num_nodes(), corpus.num_nodes());
  return {query.padded(n).adjacency(), corpus.padded(n).adjacency()};
}

void QapInstance::validate() const {
  if (a_q.rows() != a_q.cols() || a_c.rows() != a_c.cols() || a_q.rows() != a_c.rows()) {
    std::ostringstream os;
    os << "qap: adjacency shapes differ: " << a_q.rows() << "x" << a_q.cols() << " vs "
       << a_c.rows() << "x" << a_c.cols();
    throw std::invalid_argument(os.str());
  }
  for (const Matrix* a : {&a_q, &a_c}) {
    if (a->rows() > 0 && (*a - a->transpose()).cwiseAbs().maxCoeff() > 0.0) {
      throw std::invalid_argument("qap: adjacency must be symmetric");
    }
    if (a->rows() > 0 && a->diagonal().cwiseAbs().maxCoeff() != 0.0) {
      throw std::invalid_argument("qap: adjacency must have a zero diagonal");
    }
  }
}

Matrix permutation_matrix(const Permutation& perm) {
  const int n = static_cast<int>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (int u = 0; u < n; ++u) p(u, perm[u]) = 1.0;
  return p;
}

Permutation permutation_of(const Matrix& p) {
  const int n = static_cast<int>(p.rows());
  if (p.cols() != n) throw std::invalid_argument("permutation_of: matrix must be square");
  Permutation perm(n, -1);
  std::vector<bool> seen(n, false);
  for (int u = 0; u < n; ++u) {
    for (int c = 0; c < n; ++c) {
      if (p(u, c) == 1.0) {
        if (perm[u] != -1 || seen[c]) throw std::invalid_argument("permutation_of: not a permutation");
        perm[u] = c;
        seen[c] = true;
      } else if (p(u, c) != 0.0) {
        throw std::invalid_argument("permutation_of: entries must be 0 or 1");
      }
    }
    if (perm[u] == -1) throw std::invalid_argument("permutation_of: empty row");
  }
  return perm;
}

namespace {

void require_plan_shape(const QapInstance& inst, const Matrix& p) {
  const int n = inst.size();
  if (inst.a_c.rows() != n || p.rows() != n || p.cols() != n) {
    std::ostringstream os;
    os << "qap_cost: plan is " << p.rows() << "x" << p.cols() << ", instance is " << n
       << "x" << n;
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

double qap_cost(const QapInstance& inst, const Matrix& p) {
  require_plan_shape(inst, p);
  return (inst.a_q - p * inst.a_c * p.transpose()).cwiseMax(0.0).sum();
}

double qap_cost(const QapInstance& inst, const Permutation& perm) {
  const int n = inst.size();
  if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("qap_cost: permutation size mismatch");
  double cost = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      cost += std::max(0.0, inst.a_q(u, v) - inst.a_c(perm[u], perm[v]));
    }
  }
  return cost;
}

BruteForceResult brute_force_min_cost(const QapInstance& inst) {
  inst.validate();
  const int n = inst.size();
  if (n > kBruteForceMaxNodes) {
    throw std::invalid_argument("brute_force_min_cost: n = " + std::to_string(n) +
                                " exceeds " + std::to_string(kBruteForceMaxNodes) +
                                "; use gw_pgd for larger instances");
  }
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BruteForceResult best{std::numeric_limits<double>::infinity(), perm};
  do {
    const double c = qap_cost(inst, perm);
    if (c < best.cost) {
      best = {c, perm};
      if (c == 0.0) break;  // nothing later in lexicographic order can beat it
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

/// Minimum-cost assignment for a rows <= cols matrix; returns row -> column.
std::vector<int> hungarian_min(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

double assignment_value(const Matrix& w, const std::vector<int>& rows,
                        const std::vector<int>& cols) {
  if (rows.empty()) return 0.0;
  Matrix sub(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) sub(r, c) = -w(rows[r], cols[c]);
  }
  const std::vector<int> a = hungarian_min(sub);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) total += w(rows[r], cols[a[r]]);
  return total;
}

}  // namespace

Permutation hungarian_max(const Matrix& weights) {
  if (weights.rows() != weights.cols()) throw std::invalid_argument("hungarian: matrix must be square");
  return hungarian_min(-weights);
}

Permutation hungarian_max_lexicographic(const Matrix& weights, double tol) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw std::invalid_argument("hungarian: matrix must be square");
  std::vector<int> rows(n), cols(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  const double best = assignment_value(weights, rows, cols);
  const double slack = tol * (1.0 + std::abs(best));

  Permutation perm(n, -1);
  double fixed = 0.0;
  for (int r = 0; r < n; ++r) {
    std::vector<int> rest_rows(rows.begin() + r + 1, rows.end());
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      const int c = cols[ci];
      std::vector<int> rest_cols = cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
      const double value = fixed + weights(r, c) + assignment_value(weights, rest_rows, rest_cols);
      if (value >= best - slack) {
        perm[r] = c;
        fixed += weights(r, c);
        cols = std::move(rest_cols);
        break;
      }
    }
    if (perm[r] == -1) throw std::logic_error("hungarian: no optimal completion found");
  }
  return perm;
}

Matrix round_to_permutation(const Matrix& p) {
  return permutation_matrix(hungarian_max_lexicographic(p));
}

namespace {

/// Shifts every row of log_p so that it log-sums to zero; returns the shifts.
void normalize_rows_log(Matrix& log_p, Eigen::VectorXd& f) {
  for (Eigen::Index i = 0; i < log_p.rows(); ++i) {
    const double m = log_p.row(i).maxCoeff();
    const double lse = m + std::log((log_p.row(i).array() - m).exp().sum());
    log_p.row(i).array() -= lse;
    f(i) -= lse;
  }
}

void normalize_cols_log(Matrix& log_p, Eigen::VectorXd& g) {
  for (Eigen::Index j = 0; j < log_p.cols(); ++j) {
    const double m = log_p.col(j).maxCoeff();
    const double lse = m + std::log((log_p.col(j).array() - m).exp().sum());
    log_p.col(j).array() -= lse;
    g(j) -= lse;
  }
}

}  // namespace

Matrix entropic_ot(const Matrix& cost, double tau, const EntropicOtOptions& opts) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("entropic_ot: cost must be square");
  if (!(tau > 0.0)) throw std::invalid_argument("entropic_ot: tau must be > 0");
  const Eigen::Index n = cost.rows();
  if (n == 0) return Matrix(0, 0);

  // Dual potentials in units of the current temperature are rescaled when the
  // temperature drops, so that they stay valid warm starts.
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(n);
  const double range = cost.maxCoeff() - cost.minCoeff();
  std::vector<double> schedule;
  for (double t = std::max(range, tau); t > tau; t *= opts.anneal_factor) schedule.push_back(t);
  schedule.push_back(tau);

  Matrix log_p(n, n);
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const double t = schedule[s];
    const bool last = s + 1 == schedule.size();
    const int budget = last ? opts.max_iterations : 50;
    for (int it = 0; it < budget; ++it) {
      log_p = (-cost / t).colwise() + f / t;
      log_p = log_p.rowwise() + g.transpose() / t;
      Eigen::VectorXd df = Eigen::VectorXd::Zero(n), dg = Eigen::VectorXd::Zero(n);
      normalize_cols_log(log_p, dg);
      normalize_rows_log(log_p, df);
      g += t * dg;
      f += t * df;
      const double err = (log_p.array().exp().colwise().sum() - 1.0).abs().maxCoeff();
      if (err < opts.tolerance) break;
    }
  }
  log_p = (-cost / tau).colwise() + f / tau;
  log_p = log_p.rowwise() + g.transpose() / tau;
  Eigen::VectorXd df = Eigen::VectorXd::Zero(n);
  normalize_rows_log(log_p, df);
  return log_p.array().exp().matrix();
}

namespace {

double softplus(double x, double beta) {
  const double z = beta * x;
  return (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / beta;
}

double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

double smoothed_qap_cost(const QapInstance& inst, const Matrix& p, double beta) {
  require_plan_shape(inst, p);
  const Matrix x = inst.a_q - p * inst.a_c * p.transpose();
  return x.unaryExpr([beta](double v) { return softplus(v, beta); }).sum();
}

Matrix smoothed_qap_gradient(const QapInstance& inst, const Matrix& p, double beta) {
  require_plan_shape(inst, p);
  const Matrix x = inst.a_q - p * inst.a_c * p.transpose();
  const Matrix g = x.unaryExpr([beta](double v) { return logistic(beta * v); });
  return -(g * p * inst.a_c.transpose() + g.transpose() * p * inst.a_c);
}

Matrix uniform_plan(int n) { return Matrix::Constant(n, n, n > 0 ? 1.0 / n : 0.0); }

PgdTrajectory gw_pgd(const QapInstance& inst, double tau, int steps, const Matrix& p0,
                     const EntropicOtOptions& opts) {
  inst.validate();
  if (steps < 1) throw std::invalid_argument("gw_pgd: steps must be >= 1");
  require_plan_shape(inst, p0);
  PgdTrajectory out;
  Matrix p = p0;
  for (int t = 1; t <= steps; ++t) {
    p = entropic_ot(smoothed_qap_gradient(inst, p), tau, opts);
    PgdStep s;
    s.step = t;
    s.plan = p;
    s.cost = qap_cost(inst, p);
    s.rounded_cost = qap_cost(inst, round_to_permutation(p));
    out.steps.push_back(std::move(s));
  }
  out.rounded = hungarian_max_lexicographic(p);
  out.rounded_cost = qap_cost(inst, out.rounded);
  return out;
}

}  // namespace isonet
