#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "mali/bridge.hpp"
#include "mali/dataio.hpp"
#include "mali/diffusion.hpp"
#include "mali/embedding.hpp"
#include "mali/error.hpp"
#include "mali/evaluation.hpp"
#include "mali/graph.hpp"
#include "mali/output.hpp"
#include "mali/transport.hpp"

namespace mali {

enum class Projection { spectral, barycentric, both };

inline std::string_view to_string(Projection p) {
  switch (p) {
    case Projection::spectral: return "spectral";
    case Projection::barycentric: return "barycentric";
    case Projection::both: return "both";
  }
  return "spectral";
}

inline Projection parse_projection(std::string_view s) {
  if (s == "spectral") return Projection::spectral;
  if (s == "barycentric") return Projection::barycentric;
  if (s == "both") return Projection::both;
  throw ValidationError("unknown projection '" + std::string(s) + "' (expected spectral, barycentric or both)");
}

inline bool wants_spectral(Projection p) { return p != Projection::barycentric; }
inline bool wants_barycentric(Projection p) { return p != Projection::spectral; }

/// Hyperparameters of one alignment run. Defaults: alpha = k = 10, d = 10,
/// hard assignment (epsilon 0), mu = 0.5.
struct AlignConfig {
  double alpha = 10.0;
  int knn = 10;
  double epsilon = 0.0;
  double mu = 0.5;
  int dim = 10;
  OffDiagonalMode offdiag_mode = OffDiagonalMode::wxy;
  Projection projection = Projection::spectral;
  /// Fraction of labeled target rows kept before alignment; unset keeps all.
  std::optional<double> target_label_fraction;
  std::uint64_t seed = 0;
  SinkhornOptions sinkhorn;
  std::vector<int> ks{1, 10};

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("--alpha must be finite and > 0");
    if (knn < 1) throw ValidationError("--knn must be >= 1");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("--epsilon must be finite and >= 0");
    if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("--mu must lie in [0, 1]");
    if (dim < 1) throw ValidationError("--dim must be >= 1");
    if (target_label_fraction && !(*target_label_fraction > 0.0 && *target_label_fraction <= 1.0))
      throw ValidationError("--target-label-fraction must lie in (0, 1]");
    if (!(sinkhorn.tol > 0.0) || sinkhorn.max_iter < 1) throw ValidationError("invalid Sinkhorn tolerance or iteration cap");
    for (int k : ks)
      if (k < 1) throw ValidationError("label-transfer k must be >= 1");
  }
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

/// Everything produced by one alignment run.
struct AlignResult {
  AffinityMatrix source_kernel;
  AffinityMatrix target_kernel;
  ClassList classes;
  CrossCost cost;
  Coupling coupling;
  std::optional<JointAffinity> joint;
  std::optional<SharedEmbedding> embedding;
  std::optional<Matrix> projection;  ///< source rows mapped into the target space
  std::vector<Label> target_labels_used;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
};

/// Runs `fn`, prefixing any library error with the stage name while keeping
/// its category.
template <typename Fn>
auto run_stage(const std::string& stage, std::vector<StageTiming>* timings, Fn&& fn) -> decltype(fn()) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    if (timings)
      timings->push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const NumericalError& e) {
    throw NumericalError("stage '" + stage + "': " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("stage '" + stage + "': " + e.what());
  } catch (const IoError& e) {
    throw IoError("stage '" + stage + "': " + e.what());
  }
}

/// Keeps round(fraction * labeled) target labels chosen uniformly at random.
inline std::vector<Label> mask_labels(const std::vector<Label>& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("label fraction must lie in (0, 1]");
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) labeled.push_back(i);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labeled.size())));
  std::mt19937_64 rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  std::vector<Label> out(labels.size());
  for (std::size_t r = 0; r < keep && r < labeled.size(); ++r) out[labeled[r]] = labels[labeled[r]];
  return out;
}

/// Kernel, diffusion similarity and label profile of one domain.
inline LabelProfile domain_profile(const AffinityMatrix& w, const std::vector<Label>& labels, const ClassList& classes) {
  const DiffusionOperator p = diffusion_operator(w);
  const StationaryDistribution phi = stationary_distribution(p);
  const DPTSimilarity m = dpt_similarity(p, phi);
  return label_profile(m, labels, classes, class_priors(labels, classes));
}

/// Cross cost between the domains for a fixed pair of kernels.
inline CrossCost bridge_cost(const AffinityMatrix& wx, const AffinityMatrix& wy, const std::vector<Label>& source_labels,
                             const std::vector<Label>& target_labels, const ClassList& classes) {
  const LabelProfile px = domain_profile(wx, source_labels, classes);
  const LabelProfile py = domain_profile(wy, target_labels, classes);
  return cosine_cost(px, py);
}

/// epsilon = 0 selects the exact assignment (balanced, unit masses only);
/// epsilon > 0 selects Sinkhorn with masses a = 1, b = n/m.
inline Coupling solve_transport(const CrossCost& cost, double epsilon, const SinkhornOptions& options) {
  if (epsilon == 0.0) {
    if (cost.rows() != cost.cols())
      throw ValidationError("epsilon = 0 requires equal sample counts (" + std::to_string(cost.rows()) + " vs " +
                            std::to_string(cost.cols()) + "); use --epsilon > 0 for unbalanced domains");
    return exact_assignment(cost);
  }
  return sinkhorn(cost, uniform_masses(cost.rows(), cost.cols()), epsilon, options);
}

inline AlignResult run_alignment(const DomainDataset& source, const DomainDataset& target, const AlignConfig& config) {
  AlignResult r;
  auto* timings = &r.timings;

  run_stage("validate", timings, [&] {
    config.validate();
    source.validate(true);
    target.validate(false);
    r.target_labels_used =
        config.target_label_fraction ? mask_labels(target.labels, *config.target_label_fraction, config.seed) : target.labels;
    if (std::none_of(r.target_labels_used.begin(), r.target_labels_used.end(), [](const Label& l) { return l.has_value(); }))
      throw ValidationError("target has no labeled rows after masking");
    r.classes = shared_classes(source.labels, r.target_labels_used);
    if (const Index k = labels_outside(source.labels, r.classes))
      r.warnings.push_back(std::to_string(k) + " source rows carry classes absent from the target; ignored for bridging");
    if (const Index k = labels_outside(r.target_labels_used, r.classes))
      r.warnings.push_back(std::to_string(k) + " target rows carry classes absent from the source; ignored for bridging");
  });

  run_stage("kernel", timings, [&] {
    r.source_kernel = alpha_decay_kernel(source, config.alpha, config.knn);
    r.target_kernel = alpha_decay_kernel(target, config.alpha, config.knn);
  });
  r.cost = run_stage("bridge", timings, [&] {
    return bridge_cost(r.source_kernel, r.target_kernel, source.labels, r.target_labels_used, r.classes);
  });
  r.coupling = run_stage("transport", timings, [&] { return solve_transport(r.cost, config.epsilon, config.sinkhorn); });
  if (config.epsilon > 0.0 && !r.coupling.converged)
    r.warnings.push_back("Sinkhorn stopped at max_iter with marginal violation " +
                         std::to_string(r.coupling.marginal_violation));

  if (wants_spectral(config.projection)) {
    r.joint = run_stage("joint", timings, [&] {
      return joint_affinity(r.source_kernel, r.target_kernel, r.coupling, config.mu, config.offdiag_mode);
    });
    r.embedding = run_stage("embedding", timings, [&] { return spectral_embedding(*r.joint, config.dim); });
  }
  if (wants_barycentric(config.projection))
    r.projection = run_stage("projection", timings, [&] { return barycentric_projection(r.coupling, target); });
  return r;
}

/// Scores every representation the run produced. Spectral metrics use bare
/// names (`foscttm`, `acc_1`); ambient ones are prefixed `ambient_`.
inline MetricMap alignment_metrics(const AlignResult& r, const DomainDataset& source, const DomainDataset& target,
                                   const PairSet& pairs, const std::vector<int>& ks) {
  MetricMap out;
  return run_stage("evaluation", nullptr, [&] {
    if (r.embedding) {
      append_metrics(out, evaluate(Matrix(r.embedding->source()), Matrix(r.embedding->target()), pairs, source.labels,
                                   target.labels, ks, EvaluationSpace::spectral));
    }
    if (r.projection) {
      append_metrics(out, evaluate(*r.projection, target.features, pairs, source.labels, target.labels, ks,
                                   EvaluationSpace::ambient),
                     "ambient_");
    }
    out["transport_cost"] = transport_cost(r.coupling, r.cost);
    out["transport_converged"] = r.coupling.converged ? 1.0 : 0.0;
    out["transport_iterations"] = r.coupling.iterations;
    out["marginal_violation"] = r.coupling.marginal_violation;
    return out;
  });
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep

struct SweepGrid {
  std::vector<double> alpha{10.0};
  std::vector<int> knn{10};
  std::vector<double> epsilon{0.0};
  std::vector<int> dim{10};
};

struct SweepRow {
  double alpha = 0.0;
  int knn = 0;
  double epsilon = 0.0;
  int dim = 0;
  std::string status = "ok";  ///< "ok" or "failed: <reason>"
  MetricMap metrics;

  bool ok() const { return status == "ok"; }
};

/// Cartesian sweep. Within one (alpha, knn, epsilon) cell the eigensolve is
/// shared by every dimension. A failing cell is recorded and skipped.
inline std::vector<SweepRow> run_sweep(const DomainDataset& source, const DomainDataset& target, const PairSet& pairs,
                                       const AlignConfig& base, const SweepGrid& grid) {
  std::vector<SweepRow> rows;
  auto fail_all = [&](double alpha, int knn, std::optional<double> eps, const std::string& why) {
    for (double e : grid.epsilon) {
      if (eps && e != *eps) continue;
      for (int d : grid.dim) rows.push_back({alpha, knn, e, d, "failed: " + why, {}});
    }
  };

  for (double alpha : grid.alpha) {
    for (int knn : grid.knn) {
      AlignConfig cfg = base;
      cfg.alpha = alpha;
      cfg.knn = knn;
      std::optional<AlignResult> shared;
      try {
        cfg.validate();
        AlignResult r;
        r.target_labels_used =
            cfg.target_label_fraction ? mask_labels(target.labels, *cfg.target_label_fraction, cfg.seed) : target.labels;
        r.classes = run_stage("validate", nullptr, [&] { return shared_classes(source.labels, r.target_labels_used); });
        run_stage("kernel", nullptr, [&] {
          r.source_kernel = alpha_decay_kernel(source, alpha, knn);
          r.target_kernel = alpha_decay_kernel(target, alpha, knn);
        });
        r.cost = run_stage("bridge", nullptr, [&] {
          return bridge_cost(r.source_kernel, r.target_kernel, source.labels, r.target_labels_used, r.classes);
        });
        shared = std::move(r);
      } catch (const Error& e) {
        fail_all(alpha, knn, std::nullopt, e.what());
        continue;
      }

      for (double eps : grid.epsilon) {
        AlignResult r = *shared;
        std::optional<SpectralBasis> basis;
        MetricMap ambient;
        try {
          r.coupling = run_stage("transport", nullptr, [&] { return solve_transport(r.cost, eps, cfg.sinkhorn); });
          if (wants_barycentric(cfg.projection)) {
            r.projection = run_stage("projection", nullptr, [&] { return barycentric_projection(r.coupling, target); });
            ambient = alignment_metrics(r, source, target, pairs, cfg.ks);
          }
          if (wants_spectral(cfg.projection)) {
            r.joint = run_stage("joint", nullptr, [&] {
              return joint_affinity(r.source_kernel, r.target_kernel, r.coupling, cfg.mu, cfg.offdiag_mode);
            });
            basis.emplace(run_stage("embedding", nullptr, [&] { return SpectralBasis(*r.joint); }));
          }
        } catch (const Error& e) {
          fail_all(alpha, knn, eps, e.what());
          continue;
        }
        for (int d : grid.dim) {
          SweepRow row{alpha, knn, eps, d, "ok", {}};
          try {
            r.projection.reset();
            if (basis) r.embedding = run_stage("embedding", nullptr, [&] { return basis->embedding(d); });
            row.metrics = alignment_metrics(r, source, target, pairs, cfg.ks);
            for (const auto& [k, v] : ambient) row.metrics.insert({k, v});
          } catch (const Error& e) {
            row.status = std::string("failed: ") + e.what();
            row.metrics.clear();
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

/// CSV with config columns, a status column and one column per metric name
/// seen in any successful row; failed rows leave metric cells empty.
inline void write_sweep_table(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::vector<std::string> names;
  for (const auto& row : rows)
    for (const auto& [k, v] : row.metrics)
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
  std::sort(names.begin(), names.end());

  auto out = detail::open_output(path);
  out << "alpha,knn,epsilon,dim,status";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& row : rows) {
    std::string status = row.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << detail::format_double(row.alpha) << ',' << row.knn << ',' << detail::format_double(row.epsilon) << ','
        << row.dim << ',' << status;
    for (const auto& n : names) {
      out << ',';
      if (const auto it = row.metrics.find(n); it != row.metrics.end()) out << detail::format_double(it->second);
    }
    out << '\n';
  }
  detail::finish_output(out, path);
}

}  // namespace mali
