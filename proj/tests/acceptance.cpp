// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mali/mali.hpp"

using namespace mali;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// every helix criterion runs on this benchmark: 10 fixed seeds, n = 300,
// 5 classes, noise 0.05
constexpr Index kHelixN = 300;
constexpr int kHelixClasses = 5;
constexpr double kHelixNoise = 0.05;
const std::vector<std::uint64_t> kHelixSeeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

const GeneratedPair& helix(std::uint64_t seed) {
  static std::map<std::uint64_t, GeneratedPair> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, generate_helix_pair(kHelixN, kHelixClasses, kHelixNoise, seed)).first;
  return it->second;
}

Matrix random_points(Index n, Index d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

DomainDataset dataset(const Matrix& x) {
  DomainDataset ds;
  ds.features = x;
  ds.labels.assign(static_cast<std::size_t>(x.rows()), std::nullopt);
  return ds;
}

double brute_force_assignment(const Matrix& c) {
  std::vector<Index> perm(static_cast<std::size_t>(c.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Index i = 0; i < c.rows(); ++i) s += c(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------

Outcome diffusion_identity() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(10, 50);
  double worst_series = 0.0, worst_rows = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = size(rng);
    const Matrix x = random_points(n, 3, rng);
    const auto w = alpha_decay_kernel(dataset(x), 2.0, static_cast<int>(std::max<Index>(3, n / 3)));
    if (!is_connected(w.values)) return {false, "trial " + std::to_string(trial) + " kernel is not connected"};
    const auto p = diffusion_operator(w);
    const auto phi = stationary_distribution(p);
    const auto m = dpt_similarity(p, phi);

    const Matrix q = p.values - Vector::Ones(n) * phi.phi0.transpose();
    Matrix power = Matrix::Identity(n, n), series = Matrix::Zero(n, n);
    for (int t = 1; t <= 500; ++t) {
      power = power * q;
      series += power;
    }
    worst_series = std::max(worst_series, (m.values - series).cwiseAbs().maxCoeff());
    worst_rows = std::max(worst_rows, m.values.rowwise().sum().cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(start);
  const bool ok = worst_series <= 1e-6 && worst_rows <= 1e-8 && secs < 5.0;
  return {ok, "20 kernels, max |M - series| = " + fmt(worst_series) + " (<= 1e-6), max |row sum| = " +
                  fmt(worst_rows) + " (<= 1e-8), " + fmt(secs, 3) + " s (< 5 s)"};
}

Outcome closed_form_oracle() {
  const auto p = DiffusionOperator{Matrix{{0.9, 0.1}, {0.5, 0.5}}, Vector{{1.0, 0.2}}};
  const auto m = dpt_similarity(p, stationary_distribution(p));
  const Matrix expected{{1.0 / 9, -1.0 / 9}, {-5.0 / 9, 5.0 / 9}};
  const double err = (m.values - expected).cwiseAbs().maxCoeff();
  return {err <= 1e-12, "max |M - [[1/9,-1/9],[-5/9,5/9]]| = " + fmt(err) + " (<= 1e-12)"};
}

Outcome transport_correctness() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  auto random_cost = [&](Index n, Index m) {
    Matrix c(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) c(i, j) = u(rng);
    return CrossCost{c};
  };

  int exact_ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_cost(1 + trial % 7, 1 + trial % 7);
    const auto t = exact_assignment(c);
    if (std::abs(transport_cost(t, c) - brute_force_assignment(c.values)) <= 1e-12) ++exact_ok;
  }

  double worst_marginal = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_cost(20, 30);
    const auto masses = uniform_masses(20, 30);
    for (double eps : {0.5, 0.1, 0.01}) {
      const auto t = sinkhorn(c, masses, eps);
      const double rows = (t.values.rowwise().sum() - masses.a).cwiseAbs().maxCoeff();
      const double cols = (t.values.colwise().sum().transpose() - masses.b).cwiseAbs().maxCoeff();
      worst_marginal = std::max({worst_marginal, rows, cols});
    }
  }

  double worst_gap = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_cost(6, 6);
    const double optimum = brute_force_assignment(c.values);
    const auto t = sinkhorn(c, uniform_masses(6, 6), 1e-3 * c.values.mean());
    worst_gap = std::max(worst_gap, std::abs(transport_cost(t, c) - optimum) / optimum);
  }
  const double secs = seconds_since(start);
  const bool ok = exact_ok == 50 && worst_marginal <= 1e-6 && worst_gap <= 0.01 && secs < 10.0;
  return {ok, "exact = brute force on " + std::to_string(exact_ok) + "/50, Sinkhorn 20x30 max marginal error " +
                  fmt(worst_marginal) + " (<= 1e-6), n=6 relative cost gap " + fmt(worst_gap) + " (<= 0.01), " +
                  fmt(secs, 3) + " s (< 10 s)"};
}

// Duplicated blobs with the copy's rows shuffled; target row r is source row perm[r].
struct DuplicateCase {
  DomainDataset source;
  DomainDataset target;
  std::vector<Index> perm;
  PairSet pairs;
};

DuplicateCase duplicate_blobs() {
  DuplicateCase c;
  c.source = generate_blobs_pair(200, 4, 5, 5, 2.0, 11).source;
  c.perm.resize(200);
  std::iota(c.perm.begin(), c.perm.end(), Index{0});
  std::mt19937_64 rng(5);
  std::shuffle(c.perm.begin(), c.perm.end(), rng);
  c.target.name = "target";
  c.target.features.resize(200, c.source.dims());
  for (Index r = 0; r < 200; ++r) {
    c.target.features.row(r) = c.source.features.row(c.perm[static_cast<std::size_t>(r)]);
    c.target.labels.push_back(c.source.labels[static_cast<std::size_t>(c.perm[static_cast<std::size_t>(r)])]);
    c.pairs.pairs.emplace_back(c.perm[static_cast<std::size_t>(r)], r);
  }
  return c;
}

bool coupling_is_shuffle(const Matrix& t, const std::vector<Index>& perm) {
  Matrix expected = Matrix::Zero(t.rows(), t.cols());
  for (Index r = 0; r < t.cols(); ++r) expected(perm[static_cast<std::size_t>(r)], r) = 1.0;
  return t == expected;
}

Outcome permutation_recovery() {
  const auto start = std::chrono::steady_clock::now();
  const auto c = duplicate_blobs();
  const auto r = run_alignment(c.source, c.target, AlignConfig{});
  const auto metrics = alignment_metrics(r, c.source, c.target, c.pairs, {1});
  const double secs = seconds_since(start);
  const bool exact = coupling_is_shuffle(r.coupling.values, c.perm);
  const bool ok = exact && metrics.at("foscttm") == 0.0 && metrics.at("acc_1") == 1.0 && secs < 10.0;
  return {ok, std::string("n=200, 4 classes: T ") + (exact ? "equals" : "differs from") +
                  " the shuffle permutation, FOSCTTM = " + fmt(metrics.at("foscttm")) + " (= 0), Acc1 = " +
                  fmt(metrics.at("acc_1")) + " (= 1), " + fmt(secs, 3) + " s (< 10 s)"};
}

Outcome helix_desk_scale() {
  double fos = 0.0, baseline = 0.0, acc = 0.0, slowest = 0.0;
  for (auto seed : kHelixSeeds) {
    const auto start = std::chrono::steady_clock::now();
    const auto& g = helix(seed);
    const auto r = run_alignment(g.source, g.target, AlignConfig{});
    const auto m = alignment_metrics(r, g.source, g.target, g.pairs, {1, 10});
    slowest = std::max(slowest, seconds_since(start));
    fos += m.at("foscttm");
    acc += m.at("acc_1");
    // same embedding scored against randomly shuffled ground-truth pairs
    PairSet shuffled = g.pairs;
    std::vector<Index> targets(static_cast<std::size_t>(kHelixN));
    std::iota(targets.begin(), targets.end(), Index{0});
    std::mt19937_64 rng(seed + 1000);
    std::shuffle(targets.begin(), targets.end(), rng);
    for (std::size_t i = 0; i < shuffled.pairs.size(); ++i) shuffled.pairs[i].second = targets[i];
    baseline += foscttm(Matrix(r.embedding->source()), Matrix(r.embedding->target()), shuffled);
  }
  const double k = static_cast<double>(kHelixSeeds.size());
  fos /= k;
  baseline /= k;
  acc /= k;
  const bool ok = fos * 3.0 <= baseline && acc >= 0.9 && slowest < 60.0;
  return {ok, "10 seeds: mean FOSCTTM " + fmt(fos) + " vs shuffled-pairs baseline " + fmt(baseline) + " (ratio " +
                  fmt(baseline / fos, 3) + ", >= 3), mean Acc1 " + fmt(acc) + " (>= 0.9), slowest seed " +
                  fmt(slowest, 3) + " s (< 60 s)"};
}

// Mean FOSCTTM over the benchmark seeds for each d in 2..20.
std::vector<double> dimension_curve(OffDiagonalMode mode) {
  std::vector<double> curve(19, 0.0);
  for (auto seed : kHelixSeeds) {
    const auto& g = helix(seed);
    AlignConfig cfg;
    cfg.offdiag_mode = mode;
    SweepGrid grid;
    grid.dim.clear();
    for (int d = 2; d <= 20; ++d) grid.dim.push_back(d);
    const auto rows = run_sweep(g.source, g.target, g.pairs, cfg, grid);
    for (std::size_t i = 0; i < rows.size(); ++i)
      curve[i] += rows[i].ok() ? rows[i].metrics.at("foscttm") / static_cast<double>(kHelixSeeds.size())
                               : std::numeric_limits<double>::quiet_NaN();
  }
  return curve;
}

std::string curve_text(const std::vector<double>& curve) {
  std::string s;
  for (std::size_t i = 0; i < curve.size(); ++i) s += (i ? " " : "") + fmt(curve[i], 3);
  return s;
}

Outcome dimension_robustness() {
  const auto wxy = dimension_curve(OffDiagonalMode::wxy);
  const auto wt = dimension_curve(OffDiagonalMode::t);
  const auto [lo, hi] = std::minmax_element(wxy.begin(), wxy.end());
  const bool finite = std::all_of(wxy.begin(), wxy.end(), [](double v) { return std::isfinite(v); });
  const bool ok = finite && *hi <= 2.0 * *lo;
  const auto best_d = 2 + (lo - wxy.begin());
  const auto worst_d = 2 + (hi - wxy.begin());
  return {ok, "Wxy mean FOSCTTM best " + fmt(*lo) + " at d=" + std::to_string(best_d) + ", worst " + fmt(*hi) +
                  " at d=" + std::to_string(worst_d) + " (ratio " + fmt(*hi / *lo, 3) + ", <= 2)\n" +
                  "    Wxy d=2..20: " + curve_text(wxy) + "\n    WT  d=2..20: " + curve_text(wt) + " (reported only)"};
}

Outcome kernel_robustness() {
  const std::vector<double> alphas{2.0, 10.0, 40.0};
  const std::vector<int> knns{5, 10, 20};
  std::map<std::pair<double, int>, double> mean;
  std::map<std::pair<double, int>, int> failures;
  for (auto seed : kHelixSeeds) {
    const auto& g = helix(seed);
    SweepGrid grid;
    grid.alpha = alphas;
    grid.knn = knns;
    for (const auto& row : run_sweep(g.source, g.target, g.pairs, AlignConfig{}, grid)) {
      const auto key = std::make_pair(row.alpha, row.knn);
      if (row.ok())
        mean[key] += row.metrics.at("foscttm");
      else
        ++failures[key];
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::string cells, failed;
  for (double a : alphas)
    for (int k : knns) {
      const auto key = std::make_pair(a, k);
      const int bad = failures.count(key) ? failures[key] : 0;
      const int good = static_cast<int>(kHelixSeeds.size()) - bad;
      if (bad) failed += " a=" + fmt(a) + "/k=" + std::to_string(k) + " failed on " + std::to_string(bad) + " seeds;";
      if (good == 0) {
        cells += " a=" + fmt(a) + "/k=" + std::to_string(k) + ":failed";
        continue;
      }
      const double v = mean[key] / good;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      cells += " a=" + fmt(a) + "/k=" + std::to_string(k) + ":" + fmt(v, 3);
    }
  const bool ok = failed.empty() && hi - lo <= 0.1;
  return {ok, "spread of mean FOSCTTM over completed cells " + fmt(hi - lo) + " (<= 0.1 over all 9 cells)" +
                  (failed.empty() ? std::string() : ";" + failed) + "\n    cells:" + cells};
}

Outcome scale_invariance() {
  const auto c = duplicate_blobs();
  DomainDataset scaled = c.source;
  scaled.features *= 1000.0;
  const auto w = alpha_decay_kernel(c.source);
  const auto ws = alpha_decay_kernel(scaled);
  const double diff = (w.values - ws.values).cwiseAbs().maxCoeff();
  const auto r = run_alignment(c.source, c.target, AlignConfig{});
  const auto rs = run_alignment(scaled, c.target, AlignConfig{});
  const bool same = r.coupling.values == rs.coupling.values;
  return {diff <= 1e-12 && same && coupling_is_shuffle(rs.coupling.values, c.perm),
          "max |W - W(1000 x)| = " + fmt(diff) + " (<= 1e-12), recovered permutation " +
              (same ? "identical" : "changed")};
}

Outcome soft_assignment() {
  double hard = 0.0, soft = 0.0, worst_marginal = 0.0, min_density = 1.0;
  bool all_converged = true;
  for (auto seed : kHelixSeeds) {
    const auto& g = helix(seed);
    const auto r0 = run_alignment(g.source, g.target, AlignConfig{});
    AlignConfig cfg;
    cfg.epsilon = 0.001;
    const auto r1 = run_alignment(g.source, g.target, cfg);
    hard += alignment_metrics(r0, g.source, g.target, g.pairs, {1}).at("foscttm");
    soft += alignment_metrics(r1, g.source, g.target, g.pairs, {1}).at("foscttm");
    const Matrix& t = r1.coupling.values;
    const auto masses = uniform_masses(t.rows(), t.cols());
    worst_marginal = std::max({worst_marginal, (t.rowwise().sum() - masses.a).cwiseAbs().maxCoeff(),
                               (t.colwise().sum().transpose() - masses.b).cwiseAbs().maxCoeff()});
    min_density = std::min(min_density, static_cast<double>((t.array() > 0.0).count()) / static_cast<double>(t.size()));
    all_converged = all_converged && r1.coupling.converged;
  }
  const double k = static_cast<double>(kHelixSeeds.size());
  hard /= k;
  soft /= k;
  // a permutation has density 1/n; anything above it spreads mass
  const bool dense = min_density > 1.0 / static_cast<double>(kHelixN);
  const bool ok = all_converged && worst_marginal <= 1e-6 && dense && soft <= hard + 0.05;
  return {ok, std::string("10 seeds at epsilon=0.001: ") + (all_converged ? "all converged" : "not all converged") +
                  ", max marginal error " + fmt(worst_marginal) + " (<= 1e-6), min nonzero fraction " +
                  fmt(min_density) + " (> 1/n), mean FOSCTTM " + fmt(soft) + " vs " + fmt(hard) +
                  " at epsilon=0 (difference " + fmt(soft - hard) + ", <= +0.05)"};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MALI_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("mali_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  if (run_cli("generate helix --n 300 --classes 5 --noise 0.05 --seed 42 --out-dir " + q(dir), dir / "gen.log") != 0)
    return {false, "generate failed: " + slurp(dir / "gen.log")};
  const std::vector<std::string> files{"coupling.csv", "embedding.csv", "projection.csv", "metrics.json"};
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir / run;
    fs::create_directories(out);
    const std::string args = "align --source " + q(dir / "source.csv") + " --target " + q(dir / "target.csv") +
                             " --pairs " + q(dir / "pairs.csv") +
                             " --epsilon 0.001 --projection both --target-label-fraction 0.5 --seed 3" +
                             " --out-coupling " + q(out / files[0]) + " --out-embedding " + q(out / files[1]) +
                             " --out-projection " + q(out / files[2]) + " --out-metrics " + q(out / files[3]);
    if (run_cli(args, out / "run.log") != 0) return {false, std::string("align run ") + run + " failed"};
  }
  std::string detail;
  bool ok = true;
  for (const auto& f : files) {
    const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + f + (same ? " identical" : " DIFFERS") + " (" + std::to_string(a.size()) +
              " bytes)";
  }
  fs::remove_all(dir);
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"diffusion identity", diffusion_identity},
      {"closed-form 2x2 oracle", closed_form_oracle},
      {"transport correctness", transport_correctness},
      {"permutation recovery", permutation_recovery},
      {"helix desk scale", helix_desk_scale},
      {"dimension robustness", dimension_robustness},
      {"kernel-parameter robustness", kernel_robustness},
      {"scale invariance", scale_invariance},
      {"soft-assignment regime", soft_assignment},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << " [" << fmt(seconds_since(start), 3) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failed ? 1 : 0;
}
