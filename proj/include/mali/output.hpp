#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "mali/dataio.hpp"
#include "mali/embedding.hpp"
#include "mali/evaluation.hpp"
#include "mali/transport.hpp"

namespace mali {

using MetricMap = std::map<std::string, double>;

/// Sparse triplets `i,j,value` for entries strictly above `threshold`.
inline void write_coupling(const Coupling& t, const std::filesystem::path& path, double threshold = 0.0) {
  auto out = detail::open_output(path);
  out << "i,j,value\n";
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      if (t.values(i, j) > threshold) out << i << ',' << j << ',' << detail::format_double(t.values(i, j)) << '\n';
  detail::finish_output(out, path);
}

/// Coordinates for both domains, `domain,row,e0,...`. Used for spectral
/// embeddings and for barycentric projections alike.
inline void write_embedding(const Matrix& source, const Matrix& target, const std::filesystem::path& path) {
  if (source.cols() != target.cols()) throw ValidationError("write_embedding: source and target widths differ");
  auto out = detail::open_output(path);
  out << "domain,row";
  for (Index c = 0; c < source.cols(); ++c) out << ",e" << c;
  out << '\n';
  auto emit = [&](const Matrix& block, const char* domain) {
    for (Index i = 0; i < block.rows(); ++i) {
      out << domain << ',' << i;
      for (Index c = 0; c < block.cols(); ++c) out << ',' << detail::format_double(block(i, c));
      out << '\n';
    }
  };
  emit(source, "source");
  emit(target, "target");
  detail::finish_output(out, path);
}

inline void write_embedding(const SharedEmbedding& e, const std::filesystem::path& path) {
  write_embedding(Matrix(e.source()), Matrix(e.target()), path);
}

/// Source and target coordinate blocks read back from an embedding CSV.
struct EmbeddingTable {
  Matrix source;
  Matrix target;
};

inline EmbeddingTable read_embedding(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!detail::next_line(in, line)) throw ValidationError("'" + path.string() + "' is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "row")
    throw ValidationError("'" + path.string() + "': expected header 'domain,row,e0,...'");
  const auto width = static_cast<Index>(header.size() - 2);

  std::vector<std::pair<Index, std::vector<double>>> rows[2];
  std::size_t line_no = 1;
  while (detail::next_line(in, line)) {
    ++line_no;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": wrong field count");
    int side = -1;
    if (cells[0] == "source") side = 0;
    if (cells[0] == "target") side = 1;
    const auto row = detail::parse_integer(cells[1]);
    if (side < 0 || !row || *row < 0)
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad domain or row");
    std::vector<double> v;
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const auto x = detail::parse_double(cells[c]);
      if (!x) throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": non-numeric coordinate");
      v.push_back(*x);
    }
    rows[side].emplace_back(static_cast<Index>(*row), std::move(v));
  }

  auto assemble = [&](auto& list, const char* domain) {
    Matrix m(static_cast<Index>(list.size()), width);
    std::vector<char> seen(list.size(), 0);
    for (auto& [r, v] : list) {
      if (r >= m.rows() || seen[static_cast<std::size_t>(r)])
        throw ValidationError("'" + path.string() + "': " + domain + " rows are not a permutation of 0..n-1");
      seen[static_cast<std::size_t>(r)] = 1;
      for (Index c = 0; c < width; ++c) m(r, c) = v[static_cast<std::size_t>(c)];
    }
    return m;
  };
  return {assemble(rows[0], "source"), assemble(rows[1], "target")};
}

inline void write_metrics(const MetricMap& metrics, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) doc[k] = v;
  auto out = detail::open_output(path);
  out << doc.dump(2) << '\n';
  detail::finish_output(out, path);
}

/// Flattens a report into `foscttm`, `acc_<k>` entries, each key prefixed.
inline void append_metrics(MetricMap& out, const MetricReport& r, const std::string& prefix = {}) {
  if (r.foscttm) out[prefix + "foscttm"] = *r.foscttm;
  for (const auto& [k, acc] : r.label_transfer) out[prefix + "acc_" + std::to_string(k)] = acc;
}

/// Dense CSV (no header) of 1 - W clamped to [0, 1].
inline void export_joint_distance(const JointAffinity& w, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (Index i = 0; i < w.size(); ++i) {
    for (Index j = 0; j < w.size(); ++j) {
      if (j) out << ',';
      out << detail::format_double(std::clamp(1.0 - w.values(i, j), 0.0, 1.0));
    }
    out << '\n';
  }
  detail::finish_output(out, path);
}

}  // namespace mali
