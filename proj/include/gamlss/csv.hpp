#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/tokenizer.hpp>

#include "gamlss/data.hpp"
#include "gamlss/error.hpp"
#include "gamlss/formula.hpp"

namespace gamlss {

/// Column name and declared type, in output order.
using Schema = std::vector<std::pair<std::string, ColumnType>>;

/// Row filter "column op value"; op is one of < <= > >= == !=.
struct RowFilter {
  std::string column;
  std::string op;
  std::string value;
  std::string text;  // as written, used as the drop category

  [[nodiscard]] bool keep(const Column& c, std::size_t row) const {
    if (c.is_categorical()) {
      const bool eq = c.levels[row] == value;
      return op == "==" ? eq : !eq;
    }
    const double x = c.numbers[row];
    const double v = std::stod(value);
    if (op == "<") return x < v;
    if (op == "<=") return x <= v;
    if (op == ">") return x > v;
    if (op == ">=") return x >= v;
    if (op == "==") return x == v;
    return x != v;
  }
};

inline RowFilter parse_filter(std::string_view text) {
  static const char* kOps[] = {"<=", ">=", "==", "!=", "<", ">"};
  for (const char* op : kOps) {
    const auto at = text.find(op);
    if (at == std::string_view::npos) continue;
    RowFilter f;
    f.column = detail::trim(text.substr(0, at));
    f.op = op;
    f.value = detail::trim(text.substr(at + std::char_traits<char>::length(op)));
    if (f.value.size() >= 2 && (f.value.front() == '"' || f.value.front() == '\'') && f.value.back() == f.value.front())
      f.value = f.value.substr(1, f.value.size() - 2);
    f.text = f.column + " " + f.op + " " + f.value;
    if (!detail::valid_identifier(f.column) || f.value.empty())
      throw ConfigError("filter '" + std::string(text) + "': expected '<column> <op> <value>'");
    return f;
  }
  throw ConfigError("filter '" + std::string(text) + "': no comparison operator (< <= > >= == !=)");
}

struct IngestResult {
  Dataset data;
  std::size_t rows_read = 0;
  std::map<std::string, std::size_t> dropped;  // category -> rows

  [[nodiscard]] std::size_t total_dropped() const {
    std::size_t s = 0;
    for (const auto& [_, n] : dropped) s += n;
    return s;
  }
};

namespace detail {

using CsvTokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  try {
    CsvTokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
    for (const auto& t : tok) out.push_back(trim(t));
  } catch (const boost::escaped_list_error& e) {
    throw DataError("line " + std::to_string(line_no) + ": malformed CSV (" + e.what() + ")");
  }
  return out;
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

inline std::optional<double> parse_double(const std::string& s) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  double v = 0.0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\\\n") == std::string::npos && s == trim(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// Reads a CSV with a header row. Only schema columns are kept; other columns
/// are ignored. Rows with a missing value in a schema column and rows failing
/// a filter are dropped and counted by category. Unparseable cells are errors.
inline IngestResult ingest_csv(std::istream& in, const Schema& schema, const std::vector<RowFilter>& filters = {}) {
  if (schema.empty()) throw ConfigError("ingest: schema declares no columns");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("CSV is empty: header row missing");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line, line_no);
  std::map<std::string, std::size_t> position;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (position.contains(header[j])) throw DataError("CSV header repeats column '" + header[j] + "'");
    position[header[j]] = j;
  }
  std::vector<std::size_t> src;
  for (const auto& [name, _] : schema) {
    auto it = position.find(name);
    if (it == position.end()) throw DataError("schema column '" + name + "' is not in the CSV header");
    src.push_back(it->second);
  }
  for (const auto& f : filters) {
    bool found = false;
    for (const auto& [name, type] : schema)
      if (name == f.column) {
        found = true;
        if (type == ColumnType::categorical && f.op != "==" && f.op != "!=")
          throw ConfigError("filter '" + f.text + "': categorical columns support only == and !=");
        if (type != ColumnType::categorical && !detail::parse_double(f.value))
          throw ConfigError("filter '" + f.text + "': '" + f.value + "' is not a number");
      }
    if (!found) throw ConfigError("filter '" + f.text + "' refers to a column outside the schema");
  }

  std::vector<Column> cols(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    cols[j].name = schema[j].first;
    cols[j].type = schema[j].second;
  }
  IngestResult r;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++r.rows_read;
    const auto cells = detail::split_csv_line(line, line_no);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    std::optional<std::string> missing;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const std::string& cell = cells[src[j]];
      Column& c = cols[j];
      auto where = [&] { return "line " + std::to_string(line_no) + ", column '" + c.name + "'"; };
      if (detail::is_missing_token(cell)) {
        if (!missing) missing = c.name;
        if (c.is_categorical()) c.levels.emplace_back();
        else c.numbers.push_back(std::nan(""));
        continue;
      }
      if (c.is_categorical()) {
        c.levels.push_back(cell);
        continue;
      }
      const auto v = detail::parse_double(cell);
      if (!v) throw DataError(where() + ": cannot parse '" + cell + "' as a number");
      if (c.type == ColumnType::count && (*v < 0 || *v != std::floor(*v)))
        throw DataError(where() + ": integer-count column holds '" + cell + "'");
      c.numbers.push_back(*v);
    }
    if (missing) {
      ++r.dropped["missing " + *missing];
      for (auto& c : cols) {
        if (c.is_categorical()) c.levels.pop_back();
        else c.numbers.pop_back();
      }
    }
  }
  Dataset all;
  for (auto& c : cols) all.add(std::move(c));
  if (all.rows() == 0) {
    r.data = std::move(all);
    return r;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < all.rows(); ++i) {
    const RowFilter* failed = nullptr;
    for (const auto& f : filters)
      if (!f.keep(all.column(f.column), i)) {
        failed = &f;
        break;
      }
    if (failed) ++r.dropped["filter " + failed->text];
    else keep.push_back(i);
  }
  r.data = keep.size() == all.rows() ? std::move(all) : all.take(keep);
  return r;
}

inline IngestResult ingest_csv(const std::string& path, const Schema& schema, const std::vector<RowFilter>& filters = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return ingest_csv(in, schema, filters);
}

/// Shortest round-trip decimal form for numbers; missing values are empty.
inline void write_csv(std::ostream& out, const Dataset& data) {
  const auto& cols = data.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << detail::quote_csv(cols[j].name);
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j) out << ',';
      if (cols[j].is_categorical()) out << detail::quote_csv(cols[j].levels[i]);
      else out << detail::format_number(cols[j].numbers[i]);
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, data);
}

inline Schema schema_of(const Dataset& data) {
  Schema s;
  for (const auto& c : data.columns()) s.emplace_back(c.name, c.type);
  return s;
}

}  // namespace gamlss
