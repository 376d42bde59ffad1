#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mali/dataio.hpp"
#include "mali/diffusion.hpp"
#include "mali/error.hpp"

namespace mali {

using ClassList = std::vector<std::string>;

/// Per-sample class aggregation of the diffusion similarity, normalized by
/// class priors. Column c corresponds to class_order[c].
struct LabelProfile {
  Matrix values;
  ClassList class_order;
  Vector priors;
};

/// Cosine distance between label profiles of the two domains, in [0, 2].
struct CrossCost {
  Matrix values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

inline constexpr double kMinProfileNorm = 1e-12;

namespace detail {

inline std::set<std::string> label_set(const std::vector<Label>& labels) {
  std::set<std::string> out;
  for (const auto& l : labels)
    if (l) out.insert(*l);
  return out;
}

inline std::unordered_map<std::string, Index> class_positions(const ClassList& classes) {
  std::unordered_map<std::string, Index> pos;
  for (std::size_t c = 0; c < classes.size(); ++c) pos.emplace(classes[c], static_cast<Index>(c));
  return pos;
}

}  // namespace detail

/// Labels present among the labeled samples of both domains, sorted.
inline ClassList shared_classes(const std::vector<Label>& source_labels, const std::vector<Label>& target_labels) {
  const auto sx = detail::label_set(source_labels);
  const auto sy = detail::label_set(target_labels);
  if (sx.empty()) throw ValidationError("source domain has no labeled samples");
  if (sy.empty()) throw ValidationError("target domain has no labeled samples");
  ClassList shared;
  std::set_intersection(sx.begin(), sx.end(), sy.begin(), sy.end(), std::back_inserter(shared));
  if (shared.empty()) throw ValidationError("source and target label sets are disjoint");
  if (shared.size() < 2)
    throw ValidationError("only one shared class ('" + shared.front() +
                          "'); at least two are needed because profiles of a single class are identically zero");
  return shared;
}

/// Number of labeled samples whose class is not in `classes`; these are
/// ignored when bridging.
inline Index labels_outside(const std::vector<Label>& labels, const ClassList& classes) {
  const auto pos = detail::class_positions(classes);
  return static_cast<Index>(std::count_if(labels.begin(), labels.end(),
                                          [&](const Label& l) { return l && !pos.contains(*l); }));
}

/// Class frequencies over the labeled samples whose class is in `classes`.
inline Vector class_priors(const std::vector<Label>& labels, const ClassList& classes) {
  const auto pos = detail::class_positions(classes);
  Vector counts = Vector::Zero(static_cast<Index>(classes.size()));
  for (const auto& l : labels) {
    if (!l) continue;
    if (const auto it = pos.find(*l); it != pos.end()) counts(it->second) += 1.0;
  }
  for (Index c = 0; c < counts.size(); ++c)
    if (counts(c) == 0.0)
      throw ValidationError("class '" + classes[static_cast<std::size_t>(c)] + "' has no labeled samples in this domain");
  return counts / counts.sum();
}

/// M^l(i, c) = (1 / p_c) * sum over labeled j of class c of M(i, j), for every row i.
inline LabelProfile label_profile(const DPTSimilarity& m, const std::vector<Label>& labels, const ClassList& classes,
                                  const Vector& priors) {
  const Index n = m.size();
  const auto n_classes = static_cast<Index>(classes.size());
  if (static_cast<Index>(labels.size()) != n) throw ValidationError("label count does not match similarity size");
  if (priors.size() != n_classes) throw ValidationError("prior vector length does not match class count");
  if (n_classes < 2) throw ValidationError("label profile needs at least two classes");

  const auto pos = detail::class_positions(classes);
  // indicator of class membership, one column per class
  Matrix membership = Matrix::Zero(n, n_classes);
  for (Index j = 0; j < n; ++j) {
    const auto& l = labels[static_cast<std::size_t>(j)];
    if (!l) continue;
    if (const auto it = pos.find(*l); it != pos.end()) membership(j, it->second) = 1.0;
  }

  LabelProfile profile;
  profile.class_order = classes;
  profile.priors = priors;
  profile.values = (m.values * membership) * priors.cwiseInverse().asDiagonal();
  for (Index i = 0; i < n; ++i) {
    if (!(profile.values.row(i).norm() >= kMinProfileNorm))
      throw NumericalError("label profile of row " + std::to_string(i) + " is degenerate (zero norm)");
  }
  return profile;
}

/// D(i,j) = 1 - cos(angle between M^l_X(i,:) and M^l_Y(j,:)), clamped to [0, 2].
inline CrossCost cosine_cost(const LabelProfile& source, const LabelProfile& target) {
  if (source.class_order != target.class_order)
    throw ValidationError("label profiles use different class orders");
  const Vector ns = source.values.rowwise().norm();
  const Vector nt = target.values.rowwise().norm();
  if (!(ns.minCoeff() >= kMinProfileNorm) || !(nt.minCoeff() >= kMinProfileNorm))
    throw NumericalError("cosine cost: zero-norm profile row");
  const Matrix us = ns.cwiseInverse().asDiagonal() * source.values;
  const Matrix ut = nt.cwiseInverse().asDiagonal() * target.values;
  CrossCost d;
  d.values = (1.0 - (us * ut.transpose()).array()).cwiseMax(0.0).cwiseMin(2.0).matrix();
  return d;
}

}  // namespace mali
