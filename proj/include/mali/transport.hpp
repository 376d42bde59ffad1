#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mali/bridge.hpp"
#include "mali/error.hpp"

namespace mali {

/// Prescribed row (a) and column (b) masses of a coupling.
struct MassVectors {
  Vector a;
  Vector b;

  void validate() const {
    if (a.size() < 1 || b.size() < 1) throw ValidationError("mass vectors must be non-empty");
    if (!(a.minCoeff() > 0.0) || !(b.minCoeff() > 0.0)) throw ValidationError("masses must be strictly positive");
    const double gap = std::abs(a.sum() - b.sum());
    if (!(gap <= 1e-10 * std::max(1.0, a.sum())))
      throw ValidationError("mass vectors are infeasible: total masses differ by " + std::to_string(gap));
  }
};

/// Transport plan between the source rows and target columns.
struct Coupling {
  Matrix values;
  double epsilon = 0.0;
  bool converged = true;
  /// Scaling iterations plus Newton steps.
  int iterations = 0;
  int newton_steps = 0;
  /// Largest marginal violation at exit (0 for exact assignment).
  double marginal_violation = 0.0;
  /// Row-marginal violation per scaling iteration of the final stage, filled
  /// when requested.
  std::vector<double> violation_trace;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 10000;
  bool record_trace = false;
  /// Anneal epsilon from the cost range down to the target value.
  bool epsilon_scaling = true;
  /// Finish with Newton steps on the dual once scaling iterations reach
  /// `newton_switch`; skipped when n + m exceeds `newton_max_size`.
  bool newton = true;
  double newton_switch = 1e-3;
  int newton_max_steps = 50;
  Index newton_max_size = 4000;
};

/// Source mass 1 per sample, target mass n/m per sample (total n on each side).
inline MassVectors uniform_masses(Index n, Index m) {
  if (n < 1 || m < 1) throw ValidationError("uniform_masses: n and m must be >= 1");
  return {Vector::Ones(n), Vector::Constant(m, static_cast<double>(n) / static_cast<double>(m))};
}

inline double transport_cost(const Coupling& t, const CrossCost& d) {
  return (t.values.array() * d.values.array()).sum();
}

/// Largest absolute deviation of the row and column sums from the masses.
inline double marginal_violation(const Matrix& t, const MassVectors& masses) {
  const double rows = (t.rowwise().sum() - masses.a).cwiseAbs().maxCoeff();
  const double cols = (t.colwise().sum().transpose() - masses.b).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

/// Minimum-cost permutation (square linear assignment) via shortest
/// augmenting paths with dual potentials, O(n^3).
inline Coupling exact_assignment(const CrossCost& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n)
    throw ValidationError("exact assignment needs a square cost (" + std::to_string(cost.rows()) + "x" +
                          std::to_string(cost.cols()) + " given); use epsilon > 0 for unbalanced domains");
  if (n < 1) throw ValidationError("exact assignment: empty cost matrix");
  if (!cost.values.allFinite()) throw ValidationError("exact assignment: non-finite cost entry");

  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto un = static_cast<std::size_t>(n);
  // 1-based rows/columns; column 0 is the virtual source of each augmentation
  std::vector<double> row_pot(un + 1, 0.0), col_pot(un + 1, 0.0), min_slack(un + 1);
  std::vector<std::size_t> col_owner(un + 1, 0), prev_col(un + 1, 0);
  std::vector<char> used(un + 1);

  for (std::size_t row = 1; row <= un; ++row) {
    col_owner[0] = row;
    std::size_t col = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col] = 1;
      const std::size_t r = col_owner[col];
      double delta = inf;
      std::size_t next = 0;
      for (std::size_t j = 1; j <= un; ++j) {
        if (used[j]) continue;
        const double slack = cost.values(static_cast<Index>(r - 1), static_cast<Index>(j - 1)) - row_pot[r] - col_pot[j];
        if (slack < min_slack[j]) {
          min_slack[j] = slack;
          prev_col[j] = col;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          next = j;
        }
      }
      for (std::size_t j = 0; j <= un; ++j) {
        if (used[j]) {
          row_pot[col_owner[j]] += delta;
          col_pot[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col = next;
    } while (col_owner[col] != 0);
    do {
      const std::size_t p = prev_col[col];
      col_owner[col] = col_owner[p];
      col = p;
    } while (col != 0);
  }

  Coupling t;
  t.values = Matrix::Zero(n, n);
  for (std::size_t j = 1; j <= un; ++j) t.values(static_cast<Index>(col_owner[j] - 1), static_cast<Index>(j - 1)) = 1.0;
  t.epsilon = 0.0;
  t.converged = true;
  t.iterations = 0;
  return t;
}

namespace detail {

// log sum_j exp(x_j), stable against overflow and underflow
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.derived().array() - mx).exp().sum());
}

// exp((f + g - D) / eps) with exponents below -700 flushed to zero
inline Matrix gibbs_plan(const Matrix& cost, const Vector& f, const Vector& g, double epsilon) {
  Matrix t = ((-cost).colwise() + f).rowwise() + g.transpose();
  return (t.array() / epsilon).unaryExpr([](double x) { return x < -700.0 ? 0.0 : std::exp(x); }).matrix();
}

}  // namespace detail

namespace detail {

struct SinkhornStage {
  int iterations = 0;
  bool converged = false;
  double violation = 0.0;
};

// Scaling iterations at a fixed epsilon around the potentials (f, g):
// K = exp((f + g - D) / eps), T = diag(u) K diag(v). Scalings are absorbed
// into the potentials whenever they leave [1e-50, 1e50], and on exit.
inline SinkhornStage sinkhorn_stage(const Matrix& cost, const MassVectors& masses, double epsilon, Vector& f, Vector& g,
                                    double tol, int max_iter, std::vector<double>* trace) {
  constexpr double kScalingBound = 1e50;
  const Index n = cost.rows();
  const Index m = cost.cols();
  const Vector log_a = masses.a.array().log();
  const Vector log_b = masses.b.array().log();

  Matrix kernel(n, m);
  Vector u = Vector::Ones(n);
  Vector v = Vector::Ones(m);
  auto rebuild_kernel = [&] {
    // entries below ~1e-304 would be subnormal and slow every product
    kernel = gibbs_plan(cost, f, g, epsilon);
  };
  auto absorb = [&] {
    f.array() += epsilon * u.array().log();
    g.array() += epsilon * v.array().log();
    u.setOnes();
    v.setOnes();
  };
  // one sweep on the potentials themselves; never underflows a full row or column
  auto log_domain_step = [&] {
    for (Index i = 0; i < n; ++i)
      f(i) = epsilon * log_a(i) - epsilon * log_sum_exp((g.transpose() - cost.row(i)) / epsilon);
    for (Index j = 0; j < m; ++j)
      g(j) = epsilon * log_b(j) - epsilon * log_sum_exp((f - cost.col(j)) / epsilon);
    rebuild_kernel();
    u.setOnes();
    v.setOnes();
  };
  auto underflow = [&](const char* side) {
    return NumericalError(std::string("sinkhorn: Gibbs kernel underflowed to zero on a full ") + side +
                          " (epsilon=" + std::to_string(epsilon) + "); raise epsilon");
  };

  SinkhornStage st;
  log_domain_step();
  st.iterations = 1;
  Vector kv = kernel * v;
  bool recovered = false;
  while (st.iterations < max_iter) {
    if (!(kv.minCoeff() > 0.0) || !kv.allFinite()) {
      if (recovered) throw underflow("row");
      absorb();
      log_domain_step();
      kv = kernel * v;
      recovered = true;
      continue;
    }
    ++st.iterations;
    u = masses.a.cwiseQuotient(kv);
    const Vector ktu = kernel.transpose() * u;
    if (!(ktu.minCoeff() > 0.0) || !ktu.allFinite()) {
      if (recovered) throw underflow("column");
      absorb();
      log_domain_step();
      kv = kernel * v;
      recovered = true;
      continue;
    }
    v = masses.b.cwiseQuotient(ktu);
    kv = kernel * v;
    st.violation = (u.cwiseProduct(kv) - masses.a).cwiseAbs().maxCoeff();
    recovered = false;
    if (trace) trace->push_back(st.violation);
    if (st.violation < tol) {
      st.converged = true;
      break;
    }
    if (u.maxCoeff() > kScalingBound || v.maxCoeff() > kScalingBound || u.minCoeff() < 1.0 / kScalingBound ||
        v.minCoeff() < 1.0 / kScalingBound) {
      absorb();
      rebuild_kernel();
      kv = kernel * v;
    }
  }
  if (!(u.minCoeff() > 0.0) || !u.allFinite() || !(v.minCoeff() > 0.0) || !v.allFinite()) throw underflow("row");
  absorb();
  return st;
}

struct NewtonResult {
  int steps = 0;
  bool converged = false;
};

// Newton's method on the marginal equations T 1 = a, T^T 1 = b in the
// potentials. The Jacobian [diag(T1) T; T^T diag(T^T 1)] / eps is singular
// along (1, -1), so the last target potential is held fixed. Steps are
// damped until the residual 2-norm decreases; returns early if it cannot.
inline NewtonResult newton_polish(const Matrix& cost, const MassVectors& masses, double epsilon, Vector& f, Vector& g,
                                  double tol, int max_steps) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  const Index k = n + m - 1;
  NewtonResult res;
  Matrix t = gibbs_plan(cost, f, g, epsilon);
  auto residual = [&](const Matrix& plan) {
    Vector r(n + m);
    r.head(n) = plan.rowwise().sum() - masses.a;
    r.tail(m) = plan.colwise().sum().transpose() - masses.b;
    return r;
  };
  Vector r = residual(t);
  while (res.steps < max_steps) {
    if (r.cwiseAbs().maxCoeff() < tol) {
      res.converged = true;
      break;
    }
    Matrix jac = Matrix::Zero(k, k);
    jac.topLeftCorner(n, n).diagonal() = t.rowwise().sum();
    jac.topRightCorner(n, m - 1) = t.leftCols(m - 1);
    jac.bottomLeftCorner(m - 1, n) = t.leftCols(m - 1).transpose();
    jac.bottomRightCorner(m - 1, m - 1).diagonal() = t.leftCols(m - 1).colwise().sum().transpose();
    // near-permutation plans make the Jacobian nearly singular and LDLT
    // reports it, but the step is still usable; the line search guards it
    const Eigen::LDLT<Matrix> ldlt(jac);
    const Vector step = ldlt.solve(-epsilon * r.head(k));
    if (!step.allFinite()) break;

    const double norm = r.norm();
    bool accepted = false;
    for (double s = 1.0; s > 1e-6; s *= 0.5) {
      Vector f2 = f + s * step.head(n);
      Vector g2 = g;
      g2.head(m - 1) += s * step.tail(m - 1);
      Matrix t2 = gibbs_plan(cost, f2, g2, epsilon);
      Vector r2 = residual(t2);
      if (r2.allFinite() && r2.norm() < norm) {
        f = std::move(f2);
        g = std::move(g2);
        t = std::move(t2);
        r = std::move(r2);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++res.steps;
  }
  if (!res.converged && r.cwiseAbs().maxCoeff() < tol) res.converged = true;
  return res;
}

}  // namespace detail

/// Entropic transport T = diag(u) exp(-D/eps) diag(v), computed on
/// log-domain potentials so small eps relative to the cost range does not
/// underflow. With epsilon scaling the regularization starts at the cost
/// range and halves down to `epsilon`, each stage warm-starting the next;
/// the fixed point is the same, only reached in fewer iterations.
inline Coupling sinkhorn(const CrossCost& cost, const MassVectors& masses, double epsilon,
                         const SinkhornOptions& options = {}) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("sinkhorn: epsilon must be finite and > 0");
  if (masses.a.size() != n || masses.b.size() != m) throw ValidationError("sinkhorn: mass vectors do not match cost shape");
  masses.validate();
  if (options.max_iter < 1 || !(options.tol > 0.0)) throw ValidationError("sinkhorn: max_iter >= 1 and tol > 0 required");
  if (!cost.values.allFinite()) throw ValidationError("sinkhorn: non-finite cost entry");

  std::vector<double> ladder;
  if (options.epsilon_scaling) {
    const double range = cost.values.maxCoeff() - cost.values.minCoeff();
    for (double e = range; e > 2.0 * epsilon; e *= 0.5) ladder.push_back(e);
  }
  ladder.push_back(epsilon);

  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  Coupling t;
  t.epsilon = epsilon;
  int used = 0;
  t.converged = false;
  for (std::size_t s = 0; s < ladder.size(); ++s) {
    const bool last = s + 1 == ladder.size();
    // warm-up stages may use at most half of what is left
    const int remaining = options.max_iter - used;
    const int budget = last ? remaining : std::max(1, remaining / 2);
    if (remaining < 1) break;
    const double mass_scale = masses.a.sum() / static_cast<double>(n);
    const bool newton = options.newton && n + m <= options.newton_max_size && m > 1;
    const bool polish = last && newton;
    // warm-up stages only need to land near the next fixed point
    double tol = last ? options.tol : std::max(options.tol, 1e-6 * mass_scale);
    if (newton) tol = std::max(tol, options.newton_switch * mass_scale);
    auto* trace = last && options.record_trace ? &t.violation_trace : nullptr;
    const auto st = detail::sinkhorn_stage(cost.values, masses, ladder[s], f, g, tol, budget, trace);
    used += st.iterations;
    if (!last) continue;
    t.converged = st.converged && tol <= options.tol;
    if (!polish || t.converged || used >= options.max_iter) break;
    const auto nr = detail::newton_polish(cost.values, masses, epsilon, f, g, options.tol,
                                          std::min(options.newton_max_steps, options.max_iter - used));
    t.newton_steps = nr.steps;
    used += nr.steps;
    t.converged = nr.converged;
    // plain scaling with whatever budget is left if Newton stalled
    if (!t.converged && options.max_iter > used) {
      const auto rest = detail::sinkhorn_stage(cost.values, masses, epsilon, f, g, options.tol, options.max_iter - used, trace);
      used += rest.iterations;
      t.converged = rest.converged;
    }
  }
  t.iterations = used;
  t.values = detail::gibbs_plan(cost.values, f, g, epsilon);
  if (!t.values.allFinite()) throw NumericalError("sinkhorn: non-finite coupling entries");
  t.marginal_violation = marginal_violation(t.values, masses);
  return t;
}

}  // namespace mali
