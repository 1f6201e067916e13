#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gamlss/error.hpp"

namespace gamlss {

enum class ColumnType { numeric, categorical, count };

inline std::string_view column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::numeric: return "numeric";
    case ColumnType::categorical: return "categorical";
    case ColumnType::count: return "integer-count";
  }
  return "numeric";
}

inline ColumnType column_type_from_name(std::string_view name) {
  if (name == "numeric") return ColumnType::numeric;
  if (name == "categorical") return ColumnType::categorical;
  if (name == "integer-count" || name == "count") return ColumnType::count;
  throw ConfigError("unknown column type '" + std::string(name) + "'");
}

/// A named, typed column. Numeric and count columns store doubles (NaN marks
/// a missing value); categorical columns store level strings (empty = missing).
struct Column {
  std::string name;
  ColumnType type = ColumnType::numeric;
  std::vector<double> numbers;
  std::vector<std::string> levels;

  [[nodiscard]] bool is_categorical() const noexcept { return type == ColumnType::categorical; }
  [[nodiscard]] std::size_t size() const noexcept {
    return is_categorical() ? levels.size() : numbers.size();
  }
  [[nodiscard]] bool missing(std::size_t row) const {
    return is_categorical() ? levels[row].empty() : std::isnan(numbers[row]);
  }

  /// Sorted distinct levels (categorical only).
  [[nodiscard]] std::vector<std::string> distinct_levels() const {
    std::set<std::string> s;
    for (const auto& v : levels)
      if (!v.empty()) s.insert(v);
    return {s.begin(), s.end()};
  }
};

/// Column-oriented table with a fixed row count.
class Dataset {
 public:
  Dataset() = default;

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return columns_.size(); }
  [[nodiscard]] const std::vector<Column>& columns() const noexcept { return columns_; }

  [[nodiscard]] bool has(const std::string& name) const { return index_.contains(name); }

  [[nodiscard]] const Column& column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidInput("unknown column '" + name + "'");
    return columns_[it->second];
  }

  Column& column(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidInput("unknown column '" + name + "'");
    return columns_[it->second];
  }

  [[nodiscard]] const std::vector<double>& numeric(const std::string& name) const {
    const Column& c = column(name);
    if (c.is_categorical()) throw InvalidInput("column '" + name + "' is categorical, expected numeric");
    return c.numbers;
  }

  void add_numeric(const std::string& name, std::vector<double> values,
                   ColumnType type = ColumnType::numeric) {
    Column c;
    c.name = name;
    c.type = type;
    c.numbers = std::move(values);
    add(std::move(c));
  }

  void add_categorical(const std::string& name, std::vector<std::string> values) {
    Column c;
    c.name = name;
    c.type = ColumnType::categorical;
    c.levels = std::move(values);
    add(std::move(c));
  }

  /// Adds or replaces a column.
  void add(Column c) {
    if (columns_.empty()) rows_ = c.size();
    if (c.size() != rows_)
      throw InvalidInput("column '" + c.name + "' has " + std::to_string(c.size()) +
                         " rows, dataset has " + std::to_string(rows_));
    if (auto it = index_.find(c.name); it != index_.end()) {
      columns_[it->second] = std::move(c);
      return;
    }
    index_[c.name] = columns_.size();
    columns_.push_back(std::move(c));
  }

  void set_numeric(const std::string& name, std::vector<double> values) {
    Column& c = column(name);
    if (values.size() != rows_) throw InvalidInput("set_numeric: row count mismatch");
    c.numbers = std::move(values);
  }

  /// New dataset made of the given rows (repeats allowed), in order.
  [[nodiscard]] Dataset take(const std::vector<std::size_t>& rows) const {
    Dataset out;
    for (const auto& c : columns_) {
      Column nc;
      nc.name = c.name;
      nc.type = c.type;
      if (c.is_categorical()) {
        nc.levels.reserve(rows.size());
        for (auto r : rows) nc.levels.push_back(c.levels[r]);
      } else {
        nc.numbers.reserve(rows.size());
        for (auto r : rows) nc.numbers.push_back(c.numbers[r]);
      }
      out.add(std::move(nc));
    }
    if (columns_.empty()) out.rows_ = rows.size();
    return out;
  }

  template <class Pred>
  [[nodiscard]] Dataset filter(Pred&& keep) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < rows_; ++i)
      if (keep(i)) rows.push_back(i);
    return take(rows);
  }

  /// Row indices with a missing value in any of the named columns.
  [[nodiscard]] std::vector<std::size_t> rows_with_missing(const std::vector<std::string>& names) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows_; ++i) {
      for (const auto& n : names) {
        if (column(n).missing(i)) {
          out.push_back(i);
          break;
        }
      }
    }
    return out;
  }

 private:
  std::vector<Column> columns_;
  std::map<std::string, std::size_t> index_;
  std::size_t rows_ = 0;
};

}  // namespace gamlss
