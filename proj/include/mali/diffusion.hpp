#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "mali/error.hpp"
#include "mali/graph.hpp"

namespace mali {

struct StationaryDistribution {
  Vector phi0;
};

/// Time-aggregated diffusion similarity sum_{t>=1} (P - 1 phi0^T)^t.
/// Rows sum to zero; entries may be negative.
struct DPTSimilarity {
  Matrix values;

  Index size() const { return values.rows(); }
};

inline constexpr double kStationaryResidualTol = 1e-10;
inline constexpr double kDptRowSumTol = 1e-8;

/// Degree-proportional law of the reversible chain, verified as a left
/// fixed point of P.
inline StationaryDistribution stationary_distribution(const DiffusionOperator& p) {
  const Index n = p.size();
  if (p.degrees.size() != n) throw ValidationError("diffusion operator is missing its degree vector");
  if (!(p.degrees.minCoeff() > 0.0)) throw NumericalError("stationary distribution: non-positive degree");

  StationaryDistribution s;
  s.phi0 = p.degrees / p.degrees.sum();
  const double residual = (p.values.transpose() * s.phi0 - s.phi0).cwiseAbs().maxCoeff();
  if (!(residual <= kStationaryResidualTol))
    throw NumericalError("stationary distribution residual " + std::to_string(residual) +
                         " exceeds tolerance; the operator is not reversible with respect to its degrees");
  return s;
}

/// Solves (I - P + 1 phi0^T) X = I and returns X - I. The deflated operator
/// has spectral radius < 1 only on connected graphs; otherwise the system is
/// numerically singular and a NumericalError is raised.
inline DPTSimilarity dpt_similarity(const DiffusionOperator& p, const StationaryDistribution& stationary) {
  const Index n = p.size();
  if (stationary.phi0.size() != n) throw ValidationError("stationary distribution size does not match operator");

  Matrix system = Matrix::Identity(n, n) - p.values;
  system.rowwise() += stationary.phi0.transpose();

  const Eigen::PartialPivLU<Matrix> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > std::numeric_limits<double>::epsilon() * static_cast<double>(n)))
    throw NumericalError("diffusion similarity solve is numerically singular (rcond " + std::to_string(rcond) +
                         "); the kernel graph is (nearly) disconnected");

  DPTSimilarity m;
  m.values = lu.solve(Matrix::Identity(n, n));
  m.values.diagonal().array() -= 1.0;

  const double worst = m.values.rowwise().sum().cwiseAbs().maxCoeff();
  if (!(worst <= kDptRowSumTol))
    throw NumericalError("diffusion similarity row sums deviate from zero by " + std::to_string(worst) +
                         "; the kernel graph is (nearly) disconnected");
  return m;
}

}  // namespace mali
