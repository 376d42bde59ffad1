#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mali/dataio.hpp"
#include "mali/error.hpp"

namespace mali {

enum class EvaluationSpace { spectral, ambient };

inline std::string_view to_string(EvaluationSpace s) { return s == EvaluationSpace::spectral ? "spectral" : "ambient"; }

struct MetricReport {
  std::optional<double> foscttm;
  std::map<int, double> label_transfer;  ///< k -> accuracy
  EvaluationSpace space = EvaluationSpace::spectral;
  Index n_pairs = 0;
  Index n_label_targets = 0;
};

namespace detail {

inline void check_same_dims(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ValidationError("coordinate dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()) + ")");
}

inline Matrix cross_distances(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

}  // namespace detail

/// Fraction of samples closer than the true match, averaged over both
/// directions. Ties do not count; 0 is a perfect alignment.
inline double foscttm(const Matrix& source, const Matrix& target, const PairSet& pairs) {
  detail::check_same_dims(source, target);
  if (pairs.empty()) throw ValidationError("foscttm needs at least one ground-truth pair");
  pairs.validate(source.rows(), target.rows());

  const Matrix dist = detail::cross_distances(source, target);
  const auto n = static_cast<double>(source.rows());
  const auto m = static_cast<double>(target.rows());
  double total = 0.0;
  for (const auto& [s, t] : pairs.pairs) {
    const double match = dist(s, t);
    total += static_cast<double>((dist.row(s).array() < match).count()) / m;
    total += static_cast<double>((dist.col(t).array() < match).count()) / n;
  }
  return total / (2.0 * static_cast<double>(pairs.size()));
}

/// Majority vote among the k nearest source rows for every target row that
/// has a true label. Distance ties go to the lower index; vote ties to the
/// label of the nearer neighbor.
inline double label_transfer(const Matrix& source, const std::vector<Label>& source_labels, const Matrix& target,
                             const std::vector<Label>& target_true_labels, int k) {
  detail::check_same_dims(source, target);
  const Index n = source.rows();
  if (static_cast<Index>(source_labels.size()) != n || static_cast<Index>(target_true_labels.size()) != target.rows())
    throw ValidationError("label_transfer: label counts do not match coordinate rows");
  if (k < 1 || k > n)
    throw ValidationError("label_transfer: k=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  for (Index i = 0; i < n; ++i)
    if (!source_labels[static_cast<std::size_t>(i)])
      throw ValidationError("label_transfer: source row " + std::to_string(i) + " is unlabeled");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  Index evaluated = 0;
  Index correct = 0;
  for (Index t = 0; t < target.rows(); ++t) {
    const auto& truth = target_true_labels[static_cast<std::size_t>(t)];
    if (!truth) continue;
    for (Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = (source.row(i) - target.row(t)).norm();
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
      return da < db || (da == db && a < b);
    });
    // neighbors are in distance order, so the first label reaching the top
    // count wins vote ties
    std::vector<std::pair<const std::string*, int>> votes;
    for (Index r = 0; r < k; ++r) {
      const std::string& l = *source_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
      auto it = std::find_if(votes.begin(), votes.end(), [&](const auto& v) { return *v.first == l; });
      if (it == votes.end())
        votes.emplace_back(&l, 1);
      else
        ++it->second;
    }
    const auto best = std::max_element(votes.begin(), votes.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    ++evaluated;
    if (*best->first == *truth) ++correct;
  }
  if (evaluated == 0) throw ValidationError("label_transfer: no target rows carry a true label");
  return static_cast<double>(correct) / static_cast<double>(evaluated);
}

/// Both metrics over one coordinate space. FOSCTTM is skipped when `pairs`
/// is empty; label transfer runs for each k in `ks`.
inline MetricReport evaluate(const Matrix& source, const Matrix& target, const PairSet& pairs,
                             const std::vector<Label>& source_labels, const std::vector<Label>& target_true_labels,
                             const std::vector<int>& ks, EvaluationSpace space) {
  if (static_cast<Index>(source_labels.size()) != source.rows() ||
      static_cast<Index>(target_true_labels.size()) != target.rows())
    throw ValidationError("evaluate: label counts do not match coordinate rows");
  MetricReport r;
  r.space = space;
  if (!pairs.empty()) {
    r.foscttm = foscttm(source, target, pairs);
    r.n_pairs = static_cast<Index>(pairs.size());
  }
  if (!ks.empty()) {
    // only labeled source rows can vote
    std::vector<Index> keep;
    for (Index i = 0; i < source.rows(); ++i)
      if (source_labels[static_cast<std::size_t>(i)]) keep.push_back(i);
    Matrix voters(static_cast<Index>(keep.size()), source.cols());
    std::vector<Label> voter_labels;
    for (std::size_t r2 = 0; r2 < keep.size(); ++r2) {
      voters.row(static_cast<Index>(r2)) = source.row(keep[r2]);
      voter_labels.push_back(source_labels[static_cast<std::size_t>(keep[r2])]);
    }
    for (int k : ks) r.label_transfer[k] = label_transfer(voters, voter_labels, target, target_true_labels, k);
    r.n_label_targets = static_cast<Index>(std::count_if(target_true_labels.begin(), target_true_labels.end(),
                                                         [](const Label& l) { return l.has_value(); }));
  }
  return r;
}

}  // namespace mali
