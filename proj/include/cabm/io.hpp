#pragma once

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cabm/errors.hpp"
#include "cabm/network.hpp"

namespace cabm {

/// How a nodal covariate column becomes an edge covariate.
enum class NodalMap { product, absdiff, match };

inline NodalMap nodal_map_from_string(std::string_view s) {
  if (s == "product") return NodalMap::product;
  if (s == "absdiff") return NodalMap::absdiff;
  if (s == "match") return NodalMap::match;
  throw Error(ErrorCode::unknown_map, "unknown covariate map '" + std::string(s) +
                                          "' (expected product, absdiff or match)");
}

inline double apply_map(NodalMap m, double a, double b) {
  switch (m) {
    case NodalMap::product: return a * b;
    case NodalMap::absdiff: return std::abs(a - b);
    case NodalMap::match: return a == b ? 1.0 : 0.0;
  }
  return 0.0;
}

struct Dataset {
  Network network;
  CovariateTensor covariates;
  std::vector<std::string> covariate_names;
};

namespace detail {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<std::string> split_tabs(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find('\t', start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Reads a TSV file: the first non-comment line is the header. Blank lines and
/// lines starting with '#' are skipped.
inline std::pair<Row, std::vector<Row>> read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  Row header;
  std::vector<Row> rows;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    Row row{number, split_tabs(line)};
    if (!have_header) {
      header = std::move(row);
      have_header = true;
    } else {
      rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw Error(ErrorCode::parse, path + ": missing header line");
  return {std::move(header), std::move(rows)};
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::parse, path + ":" + std::to_string(line) + ": " + what);
}

inline double parse_real(const std::string& path, std::size_t line, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  parse_fail(path, line, "expected a number, got '" + s + "'");
}

inline Index parse_node(const std::string& path, std::size_t line, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size() && v >= 1) return static_cast<Index>(v);
  } catch (const std::exception&) {
  }
  parse_fail(path, line, "expected a 1-based node index, got '" + s + "'");
}

struct EdgeRecord {
  Index i, j;
  double weight;
};

inline std::vector<EdgeRecord> read_edges(const std::string& path, Index& max_node) {
  auto [header, rows] = read_tsv(path);
  if (header.fields.size() != 3) parse_fail(path, header.line, "edge header must be i<TAB>j<TAB>weight");
  std::vector<EdgeRecord> edges;
  std::set<std::pair<Index, Index>> seen;
  for (const auto& row : rows) {
    if (row.fields.size() != 3) {
      parse_fail(path, row.line, "expected 3 tab-separated fields, got " + std::to_string(row.fields.size()));
    }
    Index i = parse_node(path, row.line, row.fields[0]);
    Index j = parse_node(path, row.line, row.fields[1]);
    const double w = parse_real(path, row.line, row.fields[2]);
    if (i == j) parse_fail(path, row.line, "self-loop on node " + std::to_string(i));
    if (w < 0.0) {
      throw Error(ErrorCode::negative_weight, path + ":" + std::to_string(row.line) + ": negative weight");
    }
    if (i > j) std::swap(i, j);
    if (!seen.emplace(i, j).second) {
      throw Error(ErrorCode::duplicate_pair, path + ":" + std::to_string(row.line) + ": pair (" +
                                                 std::to_string(i) + "," + std::to_string(j) + ") repeated");
    }
    max_node = std::max(max_node, j);
    edges.push_back({i - 1, j - 1, w});
  }
  return edges;
}

}  // namespace detail

/// Loads an edge list and a covariate file (edge-level or nodal with
/// declared maps) into a validated Network and CovariateTensor.
///
/// Nodal covariate headers declare the map per column as `name:map`, e.g.
/// `i<TAB>gender:match<TAB>age:absdiff`.
inline Dataset load_dataset(const std::string& edge_path, const std::string& covariate_path) {
  Index max_edge_node = 0;
  const auto edges = detail::read_edges(edge_path, max_edge_node);

  auto [header, rows] = detail::read_tsv(covariate_path);
  const auto& h = header.fields;
  if (h.empty() || h[0] != "i") detail::parse_fail(covariate_path, header.line, "covariate header must start with 'i'");
  const bool edge_mode = h.size() >= 2 && h[1] == "j";

  Dataset ds;
  Index n = 0;
  if (edge_mode) {
    const Index p = static_cast<Index>(h.size()) - 2;
    ds.covariate_names.assign(h.begin() + 2, h.end());
    std::map<std::pair<Index, Index>, std::pair<std::size_t, Vector>> values;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.fields.size()) != p + 2) {
        detail::parse_fail(covariate_path, row.line, "expected " + std::to_string(p + 2) + " fields");
      }
      Index i = detail::parse_node(covariate_path, row.line, row.fields[0]);
      Index j = detail::parse_node(covariate_path, row.line, row.fields[1]);
      if (i == j) detail::parse_fail(covariate_path, row.line, "covariates given for a self-pair");
      if (i > j) std::swap(i, j);
      Vector z(p);
      for (Index k = 0; k < p; ++k) z[k] = detail::parse_real(covariate_path, row.line, row.fields[static_cast<std::size_t>(k + 2)]);
      if (!values.emplace(std::make_pair(i, j), std::make_pair(row.line, z)).second) {
        throw Error(ErrorCode::duplicate_pair, covariate_path + ":" + std::to_string(row.line) + ": pair repeated");
      }
      n = std::max(n, j);
    }
    n = std::max(n, max_edge_node);
    if (n < 3) throw Error(ErrorCode::shape, "a network needs at least 3 nodes");
    ds.covariates = CovariateTensor(n, p);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const auto it = values.find({i + 1, j + 1});
        if (it == values.end()) {
          throw Error(ErrorCode::parse, covariate_path + ": no covariates for pair (" + std::to_string(i + 1) + "," +
                                            std::to_string(j + 1) + ")");
        }
        ds.covariates.set(i, j, it->second.second);
      }
    }
  } else {
    const std::size_t q = h.size() - 1;
    std::vector<NodalMap> maps;
    for (std::size_t c = 1; c < h.size(); ++c) {
      const auto colon = h[c].rfind(':');
      if (colon == std::string::npos) {
        throw Error(ErrorCode::unknown_map, covariate_path + ": column '" + h[c] + "' declares no map (use name:map)");
      }
      maps.push_back(nodal_map_from_string(std::string_view(h[c]).substr(colon + 1)));
      ds.covariate_names.push_back(h[c].substr(0, colon));
    }
    std::map<Index, std::vector<double>> nodes;
    for (const auto& row : rows) {
      if (row.fields.size() != q + 1) {
        detail::parse_fail(covariate_path, row.line, "expected " + std::to_string(q + 1) + " fields");
      }
      const Index i = detail::parse_node(covariate_path, row.line, row.fields[0]);
      std::vector<double> x(q);
      for (std::size_t k = 0; k < q; ++k) x[k] = detail::parse_real(covariate_path, row.line, row.fields[k + 1]);
      if (!nodes.emplace(i, std::move(x)).second) {
        detail::parse_fail(covariate_path, row.line, "node " + std::to_string(i) + " listed twice");
      }
    }
    n = nodes.empty() ? 0 : nodes.rbegin()->first;
    if (static_cast<Index>(nodes.size()) != n) {
      throw Error(ErrorCode::parse, covariate_path + ": nodal covariates must list every node 1.." + std::to_string(n));
    }
    if (max_edge_node > n) {
      throw Error(ErrorCode::parse, edge_path + ": node " + std::to_string(max_edge_node) + " has no covariates");
    }
    if (n < 3) throw Error(ErrorCode::shape, "a network needs at least 3 nodes");
    ds.covariates = CovariateTensor(n, static_cast<Index>(q));
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        auto z = ds.covariates.z(i, j);
        const auto& xi = nodes.at(i + 1);
        const auto& xj = nodes.at(j + 1);
        for (std::size_t k = 0; k < q; ++k) z[static_cast<Index>(k)] = apply_map(maps[k], xi[k], xj[k]);
      }
    }
  }

  Matrix A = Matrix::Zero(n, n);
  for (const auto& e : edges) {
    A(e.i, e.j) = e.weight;
    A(e.j, e.i) = e.weight;
  }
  ds.network = Network(std::move(A));
  return ds;
}

/// Full-precision text form of a double.
inline std::string format_real(double v) { return fmt::format("{:.17g}", v); }

/// Writes the edge list (nonzero weights only) and an edge-level covariate file.
inline void write_dataset(const Dataset& ds, const std::string& edge_path, const std::string& covariate_path) {
  const Index n = ds.network.size();
  const Index p = ds.covariates.dim();
  std::ofstream edges(edge_path);
  if (!edges) throw Error(ErrorCode::io, "cannot write '" + edge_path + "'");
  edges << "i\tj\tweight\n";
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (ds.network.weight(i, j) != 0.0) edges << i + 1 << '\t' << j + 1 << '\t' << format_real(ds.network.weight(i, j)) << '\n';

  std::ofstream cov(covariate_path);
  if (!cov) throw Error(ErrorCode::io, "cannot write '" + covariate_path + "'");
  cov << "i\tj";
  for (Index k = 0; k < p; ++k) {
    const auto k_ = static_cast<std::size_t>(k);
    cov << '\t' << (k_ < ds.covariate_names.size() ? ds.covariate_names[k_] : "z" + std::to_string(k + 1));
  }
  cov << '\n';
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      cov << i + 1 << '\t' << j + 1;
      for (Index k = 0; k < p; ++k) cov << '\t' << format_real(ds.covariates(i, j, k));
      cov << '\n';
    }
  }
}

}  // namespace cabm
