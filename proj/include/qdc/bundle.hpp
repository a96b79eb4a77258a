#pragma once

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdc/binary_io.hpp"
#include "qdc/graph.hpp"

namespace qdc {

// Graph bundle directory:
//   edges.tsv     "i<TAB>j" per line, 0-indexed
//   features.csv  N lines of d comma-separated numbers
//   labels.txt    N lines, one class id each
//   splits.json   optional, array of {"train":[...],"val":[...],"test":[...]}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw std::runtime_error("missing bundle file: " + path.string());
  }
}

inline std::vector<std::size_t> index_array(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw std::runtime_error("splits.json: '" + what + "' is not an array");
  std::vector<std::size_t> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw std::runtime_error("splits.json: '" + what + "' holds a non-index value");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace detail

inline std::vector<Split> parse_splits(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_array()) throw std::runtime_error("splits.json: top level must be an array");
  std::vector<Split> splits;
  for (const auto& s : j) {
    Split split;
    split.train = detail::index_array(s.at("train"), "train");
    split.val = detail::index_array(s.at("val"), "val");
    split.test = detail::index_array(s.at("test"), "test");
    splits.push_back(std::move(split));
  }
  return splits;
}

inline nlohmann::json splits_to_json(const std::vector<Split>& splits) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : splits) j.push_back({{"train", s.train}, {"val", s.val}, {"test", s.test}});
  return j;
}

/// Loads and validates a bundle directory. Duplicate edges and self-loops are
/// dropped and counted in `report`.
inline GraphDataset load_graph_bundle(const std::filesystem::path& dir, IngestReport* report = nullptr) {
  const auto edges_path = dir / "edges.tsv";
  const auto features_path = dir / "features.csv";
  const auto labels_path = dir / "labels.txt";
  detail::require_file(edges_path);
  detail::require_file(features_path);
  detail::require_file(labels_path);

  const auto label_lines = detail::read_lines(labels_path);
  std::vector<int> labels;
  labels.reserve(label_lines.size());
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    labels.push_back(static_cast<int>(
        io::parse_integer(label_lines[i], "labels.txt line " + std::to_string(i + 1))));
  }
  const std::size_t n = labels.size();

  const auto feature_lines = detail::read_lines(features_path);
  if (feature_lines.size() != n) {
    throw std::runtime_error("features.csv has " + std::to_string(feature_lines.size()) +
                             " rows but labels.txt has " + std::to_string(n));
  }
  RowMatrix features;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    std::string_view line = feature_lines[i];
    const std::string context = "features.csv line " + std::to_string(i + 1);
    while (true) {
      const auto comma = line.find(',');
      row.push_back(io::parse_double(line.substr(0, comma), context));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (i == 0) features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(row.size()));
    if (static_cast<Eigen::Index>(row.size()) != features.cols()) {
      throw std::runtime_error(context + ": expected " + std::to_string(features.cols()) +
                               " columns, found " + std::to_string(row.size()));
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const auto edge_lines = detail::read_lines(edges_path);
  pairs.reserve(edge_lines.size());
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    const std::string context = "edges.tsv line " + std::to_string(i + 1);
    const std::string_view line = edge_lines[i];
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw std::runtime_error(context + ": expected 'i<TAB>j'");
    const long long a = io::parse_integer(line.substr(0, tab), context);
    const long long b = io::parse_integer(line.substr(tab + 1), context);
    if (a < 0 || b < 0) throw std::runtime_error(context + ": negative vertex index");
    pairs.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }

  std::vector<Split> splits;
  const auto splits_path = dir / "splits.json";
  if (std::filesystem::is_regular_file(splits_path)) splits = parse_splits(io::read_file(splits_path));

  return GraphDataset::from_pairs(n, pairs, std::move(features), std::move(labels),
                                  std::move(splits), report);
}

/// Writes the canonical form of `g`; loading it back yields an identical dataset.
inline void save_graph_bundle(const GraphDataset& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string edges;
  for (const auto& e : g.edges()) {
    edges += std::to_string(e.u);
    edges += '\t';
    edges += std::to_string(e.v);
    edges += '\n';
  }
  io::write_file(dir / "edges.tsv", edges);

  std::string features;
  const auto& x = g.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) features += ',';
      features += io::format_double(x(i, c));
    }
    features += '\n';
  }
  io::write_file(dir / "features.csv", features);

  std::string labels;
  for (int l : g.labels()) {
    labels += std::to_string(l);
    labels += '\n';
  }
  io::write_file(dir / "labels.txt", labels);

  const auto splits_path = dir / "splits.json";
  if (!g.splits().empty()) {
    io::write_file(splits_path, splits_to_json(g.splits()).dump() + "\n");
  } else if (std::filesystem::exists(splits_path)) {
    std::filesystem::remove(splits_path);
  }
}

}  // namespace qdc
