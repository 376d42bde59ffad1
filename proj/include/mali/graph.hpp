#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mali/dataio.hpp"
#include "mali/error.hpp"

namespace mali {

/// Symmetric alpha-decay affinity of one domain. Entries lie in [0, 1]
/// (far pairs may underflow to 0); the diagonal is exactly 1.
struct AffinityMatrix {
  Matrix values;
  double alpha = 10.0;
  int k = 10;

  Index size() const { return values.rows(); }
};

/// Row-stochastic P = D^-1 W together with the degrees D of the source kernel.
struct DiffusionOperator {
  Matrix values;
  Vector degrees;

  Index size() const { return values.rows(); }
};

/// Dense Euclidean distance matrix; exactly symmetric with zero diagonal.
inline Matrix pairwise_distances(const Matrix& x) {
  const Index n = x.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

namespace detail {

inline void check_neighbor_count(Index n, int k) {
  if (k < 1 || k > n - 1)
    throw ValidationError("neighbor count k=" + std::to_string(k) + " out of range [1, " + std::to_string(n - 1) +
                          "] for " + std::to_string(n) + " samples");
}

inline Vector bandwidths_from_distances(const Matrix& dist, int k) {
  const Index n = dist.rows();
  check_neighbor_count(n, k);
  Vector sigma(n);
  std::vector<double> row;
  row.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    row.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) row.push_back(dist(i, j));
    // k-th order statistic of the other n-1 distances; duplicates count separately
    auto kth = row.begin() + (k - 1);
    std::nth_element(row.begin(), kth, row.end());
    sigma(i) = *kth;
    if (!(sigma(i) > 0.0))
      throw ValidationError("zero bandwidth at row " + std::to_string(i) + ": at least " + std::to_string(k) +
                            " other samples coincide with it");
  }
  return sigma;
}

}  // namespace detail

/// sigma_k(x_i): distance from x_i to its k-th nearest other sample.
inline Vector knn_bandwidths(const DomainDataset& x, int k) {
  return detail::bandwidths_from_distances(pairwise_distances(x.features), k);
}

/// W(i,j) = 1/2 exp(-(d_ij / sigma_i)^alpha) + 1/2 exp(-(d_ij / sigma_j)^alpha).
inline AffinityMatrix alpha_decay_kernel(const DomainDataset& x, double alpha = 10.0, int k = 10) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be finite and > 0");
  const Matrix dist = pairwise_distances(x.features);
  const Vector sigma = detail::bandwidths_from_distances(dist, k);
  const Index n = dist.rows();

  AffinityMatrix w;
  w.alpha = alpha;
  w.k = k;
  w.values.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    w.values(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double a = std::exp(-std::pow(dist(i, j) / sigma(i), alpha));
      const double b = std::exp(-std::pow(dist(i, j) / sigma(j), alpha));
      const double v = 0.5 * a + 0.5 * b;
      w.values(i, j) = v;
      w.values(j, i) = v;
    }
  }
  return w;
}

inline DiffusionOperator diffusion_operator(const AffinityMatrix& w) {
  DiffusionOperator p;
  p.degrees = w.values.rowwise().sum();
  if (!(p.degrees.minCoeff() > 0.0)) throw NumericalError("affinity matrix has a row with zero degree");
  p.values = p.degrees.cwiseInverse().asDiagonal() * w.values;
  return p;
}

}  // namespace mali
