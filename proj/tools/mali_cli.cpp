// Command-line front end: generate synthetic pairs, align two domains,
// score an alignment, sweep hyperparameters.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mali/mali.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Accepts "2,10,40" and integer ranges "2..20" (inclusive), mixed freely.
template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto trimmed = std::string(mali::detail::trim(item));
    if (trimmed.empty()) continue;
    if (const auto dots = trimmed.find(".."); dots != std::string::npos) {
      const auto lo = mali::detail::parse_integer(trimmed.substr(0, dots));
      const auto hi = mali::detail::parse_integer(trimmed.substr(dots + 2));
      if (!lo || !hi || *lo > *hi) throw mali::ValidationError(std::string(flag) + ": bad range '" + trimmed + "'");
      for (auto v = *lo; v <= *hi; ++v) out.push_back(static_cast<T>(v));
      continue;
    }
    const auto v = mali::detail::parse_double(trimmed);
    if (!v) throw mali::ValidationError(std::string(flag) + ": bad value '" + trimmed + "'");
    if constexpr (std::is_integral_v<T>) {
      if (*v != static_cast<double>(static_cast<long long>(*v)))
        throw mali::ValidationError(std::string(flag) + ": expected integers, got '" + trimmed + "'");
    }
    out.push_back(static_cast<T>(*v));
  }
  if (out.empty()) throw mali::ValidationError(std::string(flag) + ": empty list");
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (const auto t = mali::detail::trim(item); !t.empty()) out.emplace_back(t);
  return out;
}

struct Inputs {
  std::string source;
  std::string target;
  std::string pairs;
  std::string label_column = "label";
};

void add_input_flags(CLI::App* cmd, Inputs& in, bool required) {
  auto* s = cmd->add_option("--source", in.source, "Source domain CSV");
  auto* t = cmd->add_option("--target", in.target, "Target domain CSV");
  if (required) {
    s->required();
    t->required();
  }
  cmd->add_option("--pairs", in.pairs, "Ground-truth pair CSV (source,target), used only for scoring");
  cmd->add_option("--label-column", in.label_column, "Name of the label column")->capture_default_str();
}

struct AlignFlags {
  mali::AlignConfig config;
  std::string offdiag = "wxy";
  std::string projection = "spectral";
  double target_label_fraction = 1.0;
  std::string ks = "1,10";
};

void add_config_flags(CLI::App* cmd, AlignFlags& f, bool scalar_grid) {
  auto& c = f.config;
  if (scalar_grid) {
    cmd->add_option("--alpha", c.alpha, "Kernel decay exponent")->capture_default_str();
    cmd->add_option("--knn", c.knn, "Neighbor count for bandwidths")->capture_default_str();
    cmd->add_option("--epsilon", c.epsilon, "Entropic regularization (0 = exact assignment)")->capture_default_str();
    cmd->add_option("--dim", c.dim, "Spectral embedding dimension")->capture_default_str();
  }
  cmd->add_option("--mu", c.mu, "Weight of within-domain topology in the joint graph")->capture_default_str();
  cmd->add_option("--offdiag", f.offdiag, "Cross-domain block: wxy or t")
      ->check(CLI::IsMember({"wxy", "t"}))
      ->capture_default_str();
  cmd->add_option("--projection", f.projection, "spectral, barycentric or both")
      ->check(CLI::IsMember({"spectral", "barycentric", "both"}))
      ->capture_default_str();
  cmd->add_option("--target-label-fraction", f.target_label_fraction, "Fraction of target labels kept")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for label masking")->capture_default_str();
  cmd->add_option("--tol", c.sinkhorn.tol, "Sinkhorn marginal tolerance")->capture_default_str();
  cmd->add_option("--max-iter", c.sinkhorn.max_iter, "Sinkhorn iteration cap")->capture_default_str();
  cmd->add_option("--ks", f.ks, "Comma-separated k values for label transfer")->capture_default_str();
}

void finalize_config(AlignFlags& f) {
  f.config.offdiag_mode = mali::parse_offdiag_mode(f.offdiag);
  f.config.projection = mali::parse_projection(f.projection);
  if (f.target_label_fraction != 1.0) f.config.target_label_fraction = f.target_label_fraction;
  f.config.ks = parse_list<int>(f.ks, "--ks");
  f.config.validate();
}

struct DomainPair {
  mali::DomainDataset source;
  mali::DomainDataset target;
};

DomainPair load_inputs(const Inputs& in) {
  DomainPair d{mali::load_domain_csv(in.source, in.label_column, "source"),
               mali::load_domain_csv(in.target, in.label_column, "target")};
  return d;
}

mali::PairSet load_pairs(const Inputs& in, const DomainPair& d) {
  if (in.pairs.empty()) return {};
  auto pairs = mali::read_pairs(in.pairs);
  pairs.validate(d.source.rows(), d.target.rows());
  return pairs;
}

// ---------------------------------------------------------------------------

struct GenerateFlags {
  std::string kind;
  long long n = 300;
  int classes = 5;
  double noise = 0.05;
  std::uint64_t seed = 0;
  long long dims_source = 3;
  long long dims_target = 5;
  double separation = 2.0;
  std::string out_dir = ".";
};

int cmd_generate(const GenerateFlags& g) {
  mali::GeneratedPair data = g.kind == "helix"
                                 ? mali::generate_helix_pair(g.n, g.classes, g.noise, g.seed)
                                 : mali::generate_blobs_pair(g.n, g.classes, g.dims_source, g.dims_target, g.separation,
                                                             g.seed);
  const fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  mali::write_domain_csv(data.source, dir / "source.csv");
  mali::write_domain_csv(data.target, dir / "target.csv");
  mali::write_pairs(data.pairs, dir / "pairs.csv");
  std::cerr << "wrote " << (dir / "source.csv").string() << ", " << (dir / "target.csv").string() << ", "
            << (dir / "pairs.csv").string() << '\n';
  return 0;
}

struct AlignOutputs {
  std::string coupling = "coupling.csv";
  std::string embedding = "embedding.csv";
  std::string projection = "projection.csv";
  std::string metrics;
  std::string joint_distance;
  std::string log;
  double threshold = 0.0;
};

int cmd_align(const Inputs& in, AlignFlags& f, const AlignOutputs& out) {
  finalize_config(f);
  const auto& cfg = f.config;
  const DomainPair d = load_inputs(in);
  const mali::PairSet pairs = load_pairs(in, d);

  const mali::AlignResult r = mali::run_alignment(d.source, d.target, cfg);

  mali::write_coupling(r.coupling, out.coupling, out.threshold);
  if (r.embedding) mali::write_embedding(*r.embedding, out.embedding);
  if (r.projection) mali::write_embedding(*r.projection, d.target.features, out.projection);
  if (!out.joint_distance.empty()) {
    if (!r.joint) throw mali::ValidationError("--out-joint-distance needs --projection spectral or both");
    mali::export_joint_distance(*r.joint, out.joint_distance);
  }
  if (!out.metrics.empty()) {
    mali::write_metrics(mali::alignment_metrics(r, d.source, d.target, pairs, cfg.ks), out.metrics);
  }

  std::ofstream log_file;
  if (!out.log.empty()) {
    log_file.open(out.log, std::ios::trunc);
    if (!log_file) throw mali::IoError("cannot open log file '" + out.log + "'");
  }
  std::ostream& log = out.log.empty() ? std::cerr : log_file;
  log << "alpha=" << cfg.alpha << " knn=" << cfg.knn << " epsilon=" << cfg.epsilon << " mu=" << cfg.mu
      << " dim=" << cfg.dim << " offdiag=" << mali::to_string(cfg.offdiag_mode)
      << " projection=" << mali::to_string(cfg.projection) << " seed=" << cfg.seed << " target_label_fraction="
      << cfg.target_label_fraction.value_or(1.0) << " tol=" << cfg.sinkhorn.tol << " max_iter=" << cfg.sinkhorn.max_iter
      << '\n';
  log << "source " << in.source << " " << file_digest(in.source) << " rows=" << d.source.rows()
      << " dims=" << d.source.dims() << '\n';
  log << "target " << in.target << " " << file_digest(in.target) << " rows=" << d.target.rows()
      << " dims=" << d.target.dims() << '\n';
  if (!in.pairs.empty()) log << "pairs " << in.pairs << " " << file_digest(in.pairs) << '\n';
  log << "classes=" << r.classes.size() << " transport: epsilon=" << r.coupling.epsilon
      << " converged=" << (r.coupling.converged ? "true" : "false") << " iterations=" << r.coupling.iterations << " newton_steps=" << r.coupling.newton_steps
      << " marginal_violation=" << r.coupling.marginal_violation << '\n';
  for (const auto& t : r.timings) log << "stage " << t.stage << " " << std::fixed << std::setprecision(4) << t.seconds
                                      << "s" << std::defaultfloat << '\n';
  for (const auto& w : r.warnings) log << "warning: " << w << '\n';
  return 0;
}

struct EvalFlags {
  std::string embedding;
  std::string metrics = "foscttm,label_transfer";
  std::string ks = "1,10";
  std::string out_metrics = "metrics.json";
};

int cmd_eval(const Inputs& in, const EvalFlags& e) {
  const mali::EmbeddingTable table = mali::read_embedding(e.embedding);
  bool want_foscttm = false;
  bool want_transfer = false;
  for (const auto& m : split_names(e.metrics)) {
    if (m == "foscttm") want_foscttm = true;
    else if (m == "label_transfer") want_transfer = true;
    else throw mali::ValidationError("--metrics: unknown metric '" + m + "'");
  }

  mali::PairSet pairs;
  if (want_foscttm) {
    if (in.pairs.empty()) throw mali::ValidationError("FOSCTTM requested but no --pairs file was given");
    pairs = mali::read_pairs(in.pairs);
    pairs.validate(table.source.rows(), table.target.rows());
  }
  std::vector<mali::Label> source_labels(static_cast<std::size_t>(table.source.rows()));
  std::vector<mali::Label> target_labels(static_cast<std::size_t>(table.target.rows()));
  std::vector<int> ks;
  if (want_transfer) {
    if (in.source.empty() || in.target.empty())
      throw mali::ValidationError("label transfer needs --source and --target for labels");
    const DomainPair d = load_inputs(in);
    if (d.source.rows() != table.source.rows() || d.target.rows() != table.target.rows())
      throw mali::ValidationError("row counts of the label files do not match the embedding (" +
                                  std::to_string(d.source.rows()) + "/" + std::to_string(d.target.rows()) + " vs " +
                                  std::to_string(table.source.rows()) + "/" + std::to_string(table.target.rows()) + ")");
    source_labels = d.source.labels;
    target_labels = d.target.labels;
    ks = parse_list<int>(e.ks, "--ks");
  }
  const mali::MetricReport report = mali::evaluate(table.source, table.target, pairs, source_labels, target_labels, ks,
                                                   mali::EvaluationSpace::spectral);
  mali::MetricMap out;
  mali::append_metrics(out, report);
  mali::write_metrics(out, e.out_metrics);
  return 0;
}

struct SweepFlags {
  std::string alpha = "10";
  std::string knn = "10";
  std::string epsilon = "0";
  std::string dim = "10";
  std::string out_table = "sweep.csv";
};

int cmd_sweep(const Inputs& in, AlignFlags& f, const SweepFlags& s) {
  finalize_config(f);
  const DomainPair d = load_inputs(in);
  const mali::PairSet pairs = load_pairs(in, d);
  mali::SweepGrid grid;
  grid.alpha = parse_list<double>(s.alpha, "--alpha");
  grid.knn = parse_list<int>(s.knn, "--knn");
  grid.epsilon = parse_list<double>(s.epsilon, "--epsilon");
  grid.dim = parse_list<int>(s.dim, "--dim");
  const auto rows = mali::run_sweep(d.source, d.target, pairs, f.config, grid);
  mali::write_sweep_table(rows, s.out_table);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  std::cerr << rows.size() << " configurations, " << failed << " failed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-guided manifold alignment of two domains"};
  app.require_subcommand(1);

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic source/target/pairs triple");
  generate->add_option("kind", gen.kind, "helix or blobs")->required()->check(CLI::IsMember({"helix", "blobs"}));
  generate->add_option("--n", gen.n, "Samples per domain")->capture_default_str();
  generate->add_option("--classes", gen.classes, "Class count")->capture_default_str();
  generate->add_option("--noise", gen.noise, "Helix noise standard deviation")->capture_default_str();
  generate->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  generate->add_option("--dims-source", gen.dims_source, "Blobs source dimension")->capture_default_str();
  generate->add_option("--dims-target", gen.dims_target, "Blobs target dimension")->capture_default_str();
  generate->add_option("--separation", gen.separation, "Blobs class separation")->capture_default_str();
  generate->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();

  Inputs align_in;
  AlignFlags align_flags;
  AlignOutputs align_out;
  auto* align = app.add_subcommand("align", "Align two domains and write coupling and embeddings");
  add_input_flags(align, align_in, true);
  add_config_flags(align, align_flags, true);
  align->add_option("--out-coupling", align_out.coupling, "Coupling triplets CSV")->capture_default_str();
  align->add_option("--out-embedding", align_out.embedding, "Spectral embedding CSV")->capture_default_str();
  align->add_option("--out-projection", align_out.projection, "Barycentric projection CSV")->capture_default_str();
  align->add_option("--out-metrics", align_out.metrics, "Metrics JSON (scored against --pairs and labels)");
  align->add_option("--out-joint-distance", align_out.joint_distance, "Dense 1-W distance CSV");
  align->add_option("--threshold", align_out.threshold, "Minimum coupling entry written")->capture_default_str();
  align->add_option("--log", align_out.log, "Run log path (default: standard error)");

  Inputs eval_in;
  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Score an embedding or projection file");
  add_input_flags(eval, eval_in, false);
  eval->add_option("--embedding", eval_flags.embedding, "Embedding or projection CSV")->required();
  eval->add_option("--metrics", eval_flags.metrics, "foscttm and/or label_transfer")->capture_default_str();
  eval->add_option("--ks", eval_flags.ks, "Comma-separated k values")->capture_default_str();
  eval->add_option("--out-metrics", eval_flags.out_metrics, "Metrics JSON")->capture_default_str();

  Inputs sweep_in;
  AlignFlags sweep_flags;
  SweepFlags sweep_grid;
  auto* sweep = app.add_subcommand("sweep", "Cartesian hyperparameter sweep, one metrics row per configuration");
  add_input_flags(sweep, sweep_in, true);
  add_config_flags(sweep, sweep_flags, false);
  sweep->add_option("--alpha", sweep_grid.alpha, "Alpha values, e.g. 2,10,40")->capture_default_str();
  sweep->add_option("--knn", sweep_grid.knn, "Neighbor counts, e.g. 5,10,20")->capture_default_str();
  sweep->add_option("--epsilon", sweep_grid.epsilon, "Epsilon values")->capture_default_str();
  sweep->add_option("--dim", sweep_grid.dim, "Dimensions, e.g. 2..20")->capture_default_str();
  sweep->add_option("--out-table", sweep_grid.out_table, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*align) return cmd_align(align_in, align_flags, align_out);
    if (*eval) return cmd_eval(eval_in, eval_flags);
    if (*sweep) return cmd_sweep(sweep_in, sweep_flags, sweep_grid);
  } catch (const mali::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const mali::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
