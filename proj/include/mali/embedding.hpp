#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mali/dataio.hpp"
#include "mali/error.hpp"
#include "mali/graph.hpp"
#include "mali/transport.hpp"

namespace mali {

/// How the cross-domain blocks of the joint affinity are built from T.
enum class OffDiagonalMode {
  wxy,  ///< W_X T + T W_Y
  t,    ///< T alone
};

inline std::string_view to_string(OffDiagonalMode mode) { return mode == OffDiagonalMode::wxy ? "wxy" : "t"; }

inline OffDiagonalMode parse_offdiag_mode(std::string_view s) {
  if (s == "wxy") return OffDiagonalMode::wxy;
  if (s == "t") return OffDiagonalMode::t;
  throw ValidationError("unknown off-diagonal mode '" + std::string(s) + "' (expected wxy or t)");
}

/// (n+m)x(n+m) block affinity [mu W_X, (1-mu) W_XY; (1-mu) W_XY^T, mu W_Y].
struct JointAffinity {
  Matrix values;
  double mu = 0.5;
  OffDiagonalMode offdiag_mode = OffDiagonalMode::wxy;
  Index source_count = 0;

  Index size() const { return values.rows(); }
};

/// Rows [0, domain_split) belong to the source domain, the rest to the target.
struct SharedEmbedding {
  Matrix coordinates;
  Vector eigenvalues;
  Index domain_split = 0;

  Index dims() const { return coordinates.cols(); }
  auto source() const { return coordinates.topRows(domain_split); }
  auto target() const { return coordinates.bottomRows(coordinates.rows() - domain_split); }
};

inline JointAffinity joint_affinity(const AffinityMatrix& wx, const AffinityMatrix& wy, const Coupling& t, double mu,
                                    OffDiagonalMode mode) {
  const Index n = wx.size();
  const Index m = wy.size();
  if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("mu must lie in [0, 1]");
  if (t.rows() != n || t.cols() != m)
    throw ValidationError("coupling is " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                          " but the kernels are " + std::to_string(n) + "x" + std::to_string(n) + " and " +
                          std::to_string(m) + "x" + std::to_string(m));

  Matrix cross = mode == OffDiagonalMode::wxy ? Matrix(wx.values * t.values + t.values * wy.values) : t.values;
  cross *= (1.0 - mu);

  JointAffinity w;
  w.mu = mu;
  w.offdiag_mode = mode;
  w.source_count = n;
  w.values.resize(n + m, n + m);
  w.values.topLeftCorner(n, n) = mu * wx.values;
  w.values.bottomRightCorner(m, m) = mu * wy.values;
  w.values.topRightCorner(n, m) = cross;
  w.values.bottomLeftCorner(m, n) = cross.transpose();
  return w;
}

/// True when every node reaches every other through positive-weight edges.
inline bool is_connected(const Matrix& w) {
  const Index n = w.rows();
  if (n == 0) return true;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index reached = 1;
  while (!stack.empty()) {
    const Index i = stack.back();
    stack.pop_back();
    for (Index j = 0; j < n; ++j) {
      if (!seen[static_cast<std::size_t>(j)] && w(i, j) > 0.0) {
        seen[static_cast<std::size_t>(j)] = 1;
        ++reached;
        stack.push_back(j);
      }
    }
  }
  return reached == n;
}

/// Full Laplacian-eigenmaps decomposition of a joint graph. Truncating it to
/// d columns gives the d-dimensional embedding, so sweeps over d share one
/// eigensolve.
class SpectralBasis {
 public:
  explicit SpectralBasis(const JointAffinity& w) : domain_split_(w.source_count) {
    const Index n = w.size();
    if (n < 2) throw ValidationError("spectral embedding needs at least two nodes");
    if ((w.values - w.values.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw ValidationError("joint affinity is not symmetric");
    if (!(w.values.minCoeff() >= 0.0)) throw ValidationError("joint affinity has negative entries");
    const Vector degree = w.values.rowwise().sum();
    for (Index i = 0; i < n; ++i)
      if (!(degree(i) > 0.0)) throw NumericalError("joint graph has an isolated node (row " + std::to_string(i) + ")");
    if (!is_connected(w.values))
      throw NumericalError("joint graph is disconnected; lower mu so the coupling links the two domains");

    const Vector inv_sqrt = degree.cwiseSqrt().cwiseInverse();
    const Matrix normalized = inv_sqrt.asDiagonal() * w.values * inv_sqrt.asDiagonal();
    Matrix laplacian = Matrix::Identity(n, n) - 0.5 * (normalized + normalized.transpose());

    const Eigen::SelfAdjointEigenSolver<Matrix> solver(laplacian);
    if (solver.info() != Eigen::Success) throw NumericalError("spectral embedding: eigensolver failed");
    eigenvalues_ = solver.eigenvalues();
    vectors_ = inv_sqrt.asDiagonal() * solver.eigenvectors();
    for (Index c = 0; c < vectors_.cols(); ++c) {
      Index arg = 0;
      vectors_.col(c).cwiseAbs().maxCoeff(&arg);
      if (vectors_(arg, c) < 0.0) vectors_.col(c) *= -1.0;
    }
  }

  Index max_dims() const { return vectors_.cols() - 1; }

  /// Eigenvalue of the dropped constant mode; ~0 for a connected graph.
  double trivial_eigenvalue() const { return eigenvalues_(0); }

  SharedEmbedding embedding(Index d) const {
    if (d < 1 || d > max_dims())
      throw ValidationError("embedding dimension " + std::to_string(d) + " out of range [1, " +
                            std::to_string(max_dims()) + "]");
    SharedEmbedding e;
    e.coordinates = vectors_.middleCols(1, d);
    e.eigenvalues = eigenvalues_.segment(1, d);
    e.domain_split = domain_split_;
    return e;
  }

 private:
  Vector eigenvalues_;
  Matrix vectors_;
  Index domain_split_;
};

/// Eigenvectors of I - Deg^-1/2 W Deg^-1/2 for the d smallest non-trivial
/// eigenvalues, mapped back by Deg^-1/2; each column's largest-magnitude
/// entry is positive.
inline SharedEmbedding spectral_embedding(const JointAffinity& w, Index d) {
  if (d < 1 || d > w.size() - 1)
    throw ValidationError("embedding dimension " + std::to_string(d) + " out of range [1, " +
                          std::to_string(w.size() - 1) + "]");
  return SpectralBasis(w).embedding(d);
}

/// Maps source row i to sum_j T_ij y_j / sum_j T_ij.
inline Matrix barycentric_projection(const Coupling& t, const DomainDataset& target) {
  if (t.cols() != target.rows())
    throw ValidationError("coupling has " + std::to_string(t.cols()) + " columns but the target has " +
                          std::to_string(target.rows()) + " rows");
  const Vector mass = t.values.rowwise().sum();
  for (Index i = 0; i < mass.size(); ++i)
    if (!(mass(i) > 0.0)) throw NumericalError("barycentric projection: coupling row " + std::to_string(i) + " is zero");
  return mass.cwiseInverse().asDiagonal() * (t.values * target.features);
}

}  // namespace mali
