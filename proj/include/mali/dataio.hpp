#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mali/error.hpp"

namespace mali {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Class token of one sample; std::nullopt marks an unlabeled row.
using Label = std::optional<std::string>;

/// Feature matrix of one domain with optional per-row class labels.
struct DomainDataset {
  Matrix features;
  std::vector<Label> labels;
  std::string name;

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }

  Index labeled_count() const {
    return static_cast<Index>(std::count_if(labels.begin(), labels.end(),
                                            [](const Label& l) { return l.has_value(); }));
  }

  /// Checks shape, finiteness and label count; `require_labels` demands at
  /// least one labeled row.
  void validate(bool require_labels) const {
    if (features.rows() < 1) throw ValidationError("dataset '" + name + "' has no rows");
    if (features.cols() < 1) throw ValidationError("dataset '" + name + "' has no feature columns");
    if (static_cast<Index>(labels.size()) != features.rows())
      throw ValidationError("dataset '" + name + "': label count does not match row count");
    for (Index i = 0; i < features.rows(); ++i)
      for (Index j = 0; j < features.cols(); ++j)
        if (!std::isfinite(features(i, j)))
          throw ValidationError("dataset '" + name + "': non-finite value at row " + std::to_string(i) +
                                ", column " + std::to_string(j));
    if (require_labels && labeled_count() == 0)
      throw ValidationError("dataset '" + name + "' has no labeled rows");
  }
};

/// Ground-truth (source row, target row) correspondences, used only for scoring.
struct PairSet {
  std::vector<std::pair<Index, Index>> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  void validate(Index n_source, Index n_target) const {
    std::vector<bool> seen_source(static_cast<std::size_t>(n_source), false);
    std::vector<bool> seen_target(static_cast<std::size_t>(n_target), false);
    for (const auto& [s, t] : pairs) {
      if (s < 0 || s >= n_source || t < 0 || t >= n_target)
        throw ValidationError("pair (" + std::to_string(s) + "," + std::to_string(t) + ") out of range");
      if (seen_source[static_cast<std::size_t>(s)])
        throw ValidationError("duplicate source index " + std::to_string(s) + " in pairs");
      if (seen_target[static_cast<std::size_t>(t)])
        throw ValidationError("duplicate target index " + std::to_string(t) + " in pairs");
      seen_source[static_cast<std::size_t>(s)] = true;
      seen_target[static_cast<std::size_t>(t)] = true;
    }
  }
};

struct GeneratedPair {
  DomainDataset source;
  DomainDataset target;
  PairSet pairs;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) return true;
  }
  return false;
}

}  // namespace detail

/// Reads one domain from a header-bearing CSV. Every column except
/// `label_column` must be numeric; empty label cells become unlabeled rows.
inline DomainDataset load_domain_csv(const std::filesystem::path& path,
                                     const std::optional<std::string>& label_column = std::nullopt,
                                     std::string name = {}) {
  if (!std::filesystem::exists(path)) throw IoError("input file '" + path.string() + "' does not exist");
  auto in = detail::open_input(path);
  std::string line;
  if (!detail::next_line(in, line)) throw ValidationError("'" + path.string() + "' is empty (header row expected)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

  std::vector<std::string> header;
  for (auto cell : detail::split_csv_line(line)) header.emplace_back(cell);

  std::optional<std::size_t> label_index;
  if (label_column) {
    const auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end())
      throw ValidationError("'" + path.string() + "': label column '" + *label_column + "' not found in header");
    label_index = static_cast<std::size_t>(it - header.begin());
  }
  const std::size_t n_features = header.size() - (label_index ? 1 : 0);
  if (n_features == 0) throw ValidationError("'" + path.string() + "' has no feature columns");

  std::vector<double> values;
  std::vector<Label> labels;
  std::size_t line_no = 1;
  Index row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    Label label;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (label_index && c == *label_index) {
        if (!cells[c].empty()) label = std::string(cells[c]);
        continue;
      }
      const auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw ValidationError("'" + path.string() + "' row " + std::to_string(row) + " (line " +
                              std::to_string(line_no) + "), column '" + header[c] + "': invalid numeric value '" +
                              std::string(cells[c]) + "'");
      values.push_back(*v);
    }
    labels.push_back(std::move(label));
    ++row;
  }

  DomainDataset ds;
  ds.name = name.empty() ? path.stem().string() : std::move(name);
  ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), row, static_cast<Index>(n_features));
  ds.labels = std::move(labels);
  return ds;
}

/// Writes a dataset as `f0,...,f{p-1},label`; unlabeled rows get an empty cell.
inline void write_domain_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (Index j = 0; j < ds.dims(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.dims(); ++j) out << detail::format_double(ds.features(i, j)) << ',';
    if (ds.labels[static_cast<std::size_t>(i)]) out << *ds.labels[static_cast<std::size_t>(i)];
    out << '\n';
  }
  detail::finish_output(out, path);
}

inline void write_pairs(const PairSet& pairs, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "source,target\n";
  for (const auto& [s, t] : pairs.pairs) out << s << ',' << t << '\n';
  detail::finish_output(out, path);
}

inline PairSet read_pairs(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!detail::next_line(in, line)) throw ValidationError("'" + path.string() + "' is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 2 || header[0] != "source" || header[1] != "target")
    throw ValidationError("'" + path.string() + "': expected header 'source,target'");
  PairSet ps;
  while (detail::next_line(in, line)) {
    const auto cells = detail::split_csv_line(line);
    const auto s = cells.size() == 2 ? detail::parse_integer(cells[0]) : std::nullopt;
    const auto t = cells.size() == 2 ? detail::parse_integer(cells[1]) : std::nullopt;
    if (!s || !t) throw ValidationError("'" + path.string() + "': malformed pair line '" + line + "'");
    ps.pairs.emplace_back(static_cast<Index>(*s), static_cast<Index>(*t));
  }
  return ps;
}

namespace detail {

inline void check_generator_args(Index n, int classes) {
  if (classes < 2) throw ValidationError("classes must be >= 2 (got " + std::to_string(classes) + ")");
  if (n < classes)
    throw ValidationError("n must be >= classes (got n=" + std::to_string(n) + ", classes=" +
                          std::to_string(classes) + ")");
}

inline PairSet identity_pairs(Index n) {
  PairSet ps;
  ps.pairs.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ps.pairs.emplace_back(i, i);
  return ps;
}

}  // namespace detail

/// Helix (source) and straight line (target) sharing a latent parameter
/// t ~ U[0, 4pi]. Helix = (cos t, sin t, 0.15 t), line = (0, 0, 0.15 t), each
/// coordinate perturbed by N(0, noise^2). Labels bin t into `classes`
/// equal-width intervals, identically in both domains.
inline GeneratedPair generate_helix_pair(Index n, int classes, double noise, std::uint64_t seed) {
  detail::check_generator_args(n, classes);
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise must be finite and >= 0");

  constexpr double t_max = 4.0 * std::numbers::pi;
  constexpr double pitch = 0.15;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, t_max);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> t(static_cast<std::size_t>(n));
  for (auto& ti : t) ti = uniform(rng);

  GeneratedPair out;
  out.source.name = "source";
  out.target.name = "target";
  out.source.features.resize(n, 3);
  out.target.features.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    out.source.features(i, 0) = std::cos(ti) + noise * gauss(rng);
    out.source.features(i, 1) = std::sin(ti) + noise * gauss(rng);
    out.source.features(i, 2) = pitch * ti + noise * gauss(rng);
  }
  for (Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    out.target.features(i, 0) = noise * gauss(rng);
    out.target.features(i, 1) = noise * gauss(rng);
    out.target.features(i, 2) = pitch * ti + noise * gauss(rng);
  }
  for (Index i = 0; i < n; ++i) {
    const int bin = std::min(classes - 1, static_cast<int>(t[static_cast<std::size_t>(i)] / t_max * classes));
    out.source.labels.emplace_back(std::to_string(bin));
    out.target.labels.emplace_back(std::to_string(bin));
  }
  out.pairs = detail::identity_pairs(n);
  return out;
}

/// Per-class Gaussian blobs in two unrelated ambient spaces. Sample i has
/// class i mod classes and a 2-D latent offset u_i ~ N(0, I); each domain maps
/// u_i through its own random linear map and adds `separation` times its own
/// random unit class direction, so row i of both domains describes the same
/// latent point.
inline GeneratedPair generate_blobs_pair(Index n, int classes, Index dims_source, Index dims_target,
                                         double separation, std::uint64_t seed) {
  detail::check_generator_args(n, classes);
  if (dims_source < 1 || dims_target < 1) throw ValidationError("dims must be >= 1");
  if (!(separation >= 0.0) || !std::isfinite(separation))
    throw ValidationError("separation must be finite and >= 0");

  constexpr Index latent_dim = 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gaussian_matrix = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
  };

  const Matrix latent = gaussian_matrix(n, latent_dim);

  auto make_domain = [&](Index dims, const char* name) {
    Matrix directions = gaussian_matrix(classes, dims);
    for (Index c = 0; c < classes; ++c) {
      const double norm = directions.row(c).norm();
      if (norm > 0.0) directions.row(c) /= norm;
    }
    const Matrix map = gaussian_matrix(latent_dim, dims) / std::sqrt(static_cast<double>(latent_dim));
    DomainDataset ds;
    ds.name = name;
    ds.features = latent * map;
    for (Index i = 0; i < n; ++i) {
      const Index c = i % classes;
      ds.features.row(i) += separation * directions.row(c);
      ds.labels.emplace_back(std::to_string(c));
    }
    return ds;
  };

  GeneratedPair out;
  out.source = make_domain(dims_source, "source");
  out.target = make_domain(dims_target, "target");
  out.pairs = detail::identity_pairs(n);
  return out;
}

}  // namespace mali
