#pragma once

#include <Eigen/Core>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "invariant_atlas/core/error.hpp"

namespace atlas::io {

/// Columnar numeric text: `# key v1 v2 ...` metadata lines, one line of
/// column names, then one whitespace-separated row per record.
struct Table {
  std::vector<std::pair<std::string, std::vector<std::string>>> meta;
  std::vector<std::string> columns;
  Eigen::MatrixXd rows;

  const std::vector<std::string>* find_meta(std::string_view key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }

  const std::vector<std::string>& require_meta(std::string_view key) const {
    const auto* v = find_meta(key);
    if (v == nullptr || v->empty())
      throw Error("table is missing metadata '" + std::string(key) + "'");
    return *v;
  }

  Eigen::Index column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<Eigen::Index>(i);
    throw Error("table has no column '" + std::string(name) + "'");
  }
};

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    // from_chars rejects "inf"/"nan" spellings produced by some writers
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::string format_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string out;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j > 0) out.push_back(' ');
    out += fmt::format("{}", row(j));
  }
  return out;
}

inline void write_table(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& [key, values] : t.meta) {
    out << "# " << key;
    for (const auto& v : values) out << ' ' << v;
    out << '\n';
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i > 0) out << ' ';
    out << t.columns[i];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) out << format_row(t.rows.row(i)) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  Table t;
  std::vector<std::vector<double>> data;
  bool have_header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto toks = split_ws(line.substr(1));
      if (toks.empty()) continue;
      std::string key = toks.front();
      toks.erase(toks.begin());
      t.meta.emplace_back(std::move(key), std::move(toks));
      continue;
    }
    if (!have_header) {
      t.columns = split_ws(line);
      have_header = true;
      continue;
    }
    auto toks = split_ws(line);
    if (toks.size() != t.columns.size())
      throw Error("row width mismatch in '" + path + "'");
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto& tok : toks) row.push_back(parse_double(tok));
    data.push_back(std::move(row));
  }
  t.rows.resize(static_cast<Eigen::Index>(data.size()),
                static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data[i].size(); ++j)
      t.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
  return t;
}

template <class Range>
std::vector<std::string> to_strings(const Range& values) {
  std::vector<std::string> out;
  for (const auto& v : values) out.push_back(fmt::format("{}", v));
  return out;
}

}  // namespace atlas::io
