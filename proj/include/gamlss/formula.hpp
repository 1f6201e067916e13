#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gamlss/error.hpp"
#include "gamlss/family.hpp"
#include "gamlss/link.hpp"

namespace gamlss {

enum class TermKind { intercept, linear, categorical, interaction, pspline, random_effect, mundlak_mean };

struct PsplineOptions {
  int knots = 20;       // interior segments
  int degree = 3;
  int diff_order = 2;
};

/// One additive term of a predictor.
struct TermSpec {
  TermKind kind = TermKind::linear;
  std::vector<std::string> variables;
  PsplineOptions spline;
  bool center = true;
  std::optional<double> lambda;   // smoothing weight for penalized terms
  std::string by;                 // unit id for Mundlak means

  static TermSpec intercept() { return {TermKind::intercept, {}, {}, false, {}, {}}; }
  static TermSpec linear(std::string var) { return {TermKind::linear, {std::move(var)}, {}, false, {}, {}}; }
  static TermSpec interaction(std::vector<std::string> vars) {
    return {TermKind::interaction, std::move(vars), {}, false, {}, {}};
  }
  static TermSpec pspline(std::string var, PsplineOptions o = {}, std::optional<double> lambda = {}) {
    return {TermKind::pspline, {std::move(var)}, o, true, lambda, {}};
  }
  static TermSpec random_effect(std::string group, double lambda = 1.0) {
    return {TermKind::random_effect, {std::move(group)}, {}, false, lambda, {}};
  }
  static TermSpec mundlak(std::string var, std::string unit) {
    return {TermKind::mundlak_mean, {std::move(var)}, {}, false, {}, std::move(unit)};
  }

  [[nodiscard]] std::string label() const {
    switch (kind) {
      case TermKind::intercept: return "(Intercept)";
      case TermKind::linear:
      case TermKind::categorical: return variables.front();
      case TermKind::interaction: {
        std::string s;
        for (std::size_t i = 0; i < variables.size(); ++i) s += (i ? ":" : "") + variables[i];
        return s;
      }
      case TermKind::pspline: return "s(" + variables.front() + ")";
      case TermKind::random_effect: return "re(" + variables.front() + ")";
      case TermKind::mundlak_mean: return "m(" + variables.front() + ")";
    }
    return {};
  }

  [[nodiscard]] bool penalized() const {
    return kind == TermKind::pspline || kind == TermKind::random_effect;
  }
};

/// Predictor specification for each distribution parameter, in the family's
/// declared order, plus the link per parameter.
struct FormulaSet {
  std::vector<std::vector<TermSpec>> terms;
  std::vector<Link> links;

  /// Every variable referenced by any term (unit ids included).
  [[nodiscard]] std::vector<std::string> variables() const {
    std::vector<std::string> out;
    auto push = [&](const std::string& v) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    };
    for (const auto& param : terms)
      for (const auto& t : param) {
        for (const auto& v : t.variables) push(v);
        if (!t.by.empty()) push(t.by);
      }
    return out;
  }

  void validate() const {
    if (terms.size() != links.size()) throw ConfigError("formula set: one link per parameter required");
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& param = terms[k];
      const auto n_int = std::count_if(param.begin(), param.end(),
                                       [](const TermSpec& t) { return t.kind == TermKind::intercept; });
      if (n_int != 1)
        throw ConfigError("parameter " + std::to_string(k + 1) + " must have exactly one intercept");
      for (const auto& t : param) {
        if (t.kind == TermKind::pspline && (t.spline.degree < 1 || t.spline.diff_order < 1 || t.spline.knots < 1))
          throw ConfigError("s(" + t.variables.front() + "): degree, difference order and knots must be >= 1");
        if (t.kind == TermKind::interaction) {
          for (const auto& v : t.variables) {
            const bool main = std::any_of(param.begin(), param.end(), [&](const TermSpec& o) {
              return (o.kind == TermKind::linear || o.kind == TermKind::categorical) && o.variables.front() == v;
            });
            if (!main)
              throw ConfigError("interaction " + t.label() + " references '" + v +
                                "' which is not a main effect of the same predictor");
          }
        }
        if (t.lambda && *t.lambda < 0) throw ConfigError(t.label() + ": smoothing weight must be >= 0");
      }
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

// Splits on `sep` at parenthesis depth zero.
inline std::vector<std::string> split_top(std::string_view s, char sep) {
  std::vector<std::string> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    else if (s[i] == ')') --depth;
    if (depth < 0) throw ConfigError("unbalanced parentheses in '" + std::string(s) + "'");
    if (s[i] == sep && depth == 0) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (depth != 0) throw ConfigError("unbalanced parentheses in '" + std::string(s) + "'");
  parts.push_back(trim(s.substr(start)));
  return parts;
}

inline double parse_number(const std::string& s, const std::string& ctx) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a number in " + ctx + ", got '" + s + "'");
  }
}

inline TermSpec parse_call(const std::string& term) {
  const auto open = term.find('(');
  const std::string fn = trim(std::string_view(term).substr(0, open));
  if (term.back() != ')') throw ConfigError("malformed term '" + term + "'");
  const auto args = split_top(std::string_view(term).substr(open + 1, term.size() - open - 2), ',');
  if (args.empty() || !valid_identifier(args[0])) throw ConfigError("term '" + term + "' needs a variable");
  std::map<std::string, std::string> kv;
  std::vector<std::string> positional;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto eq = args[i].find('=');
    if (eq == std::string::npos) {
      positional.push_back(args[i]);
    } else {
      kv[trim(std::string_view(args[i]).substr(0, eq))] = trim(std::string_view(args[i]).substr(eq + 1));
    }
  }
  auto take_int = [&](const char* key, int fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const double v = parse_number(it->second, term);
    kv.erase(it);
    return static_cast<int>(v);
  };
  TermSpec t;
  if (fn == "s") {
    PsplineOptions o;
    o.knots = take_int("k", o.knots);
    o.degree = take_int("degree", o.degree);
    o.diff_order = take_int("diff", o.diff_order);
    std::optional<double> lambda;
    if (auto it = kv.find("lambda"); it != kv.end()) {
      lambda = parse_number(it->second, term);
      kv.erase(it);
    }
    t = TermSpec::pspline(args[0], o, lambda);
    if (auto it = kv.find("center"); it != kv.end()) {
      t.center = it->second != "false";
      kv.erase(it);
    }
  } else if (fn == "re") {
    double lambda = 1.0;
    if (auto it = kv.find("lambda"); it != kv.end()) {
      lambda = parse_number(it->second, term);
      kv.erase(it);
    }
    t = TermSpec::random_effect(args[0], lambda);
  } else if (fn == "m") {
    std::string unit;
    if (auto it = kv.find("by"); it != kv.end()) {
      unit = it->second;
      kv.erase(it);
    } else if (!positional.empty()) {
      unit = positional.front();
      positional.clear();
    }
    if (!valid_identifier(unit)) throw ConfigError("m(" + args[0] + ") needs by=<unit id>");
    t = TermSpec::mundlak(args[0], unit);
  } else {
    throw ConfigError("unknown term function '" + fn + "' in '" + term + "'");
  }
  if (!kv.empty() || !positional.empty())
    throw ConfigError("unrecognized option in '" + term + "'");
  return t;
}

}  // namespace detail

/// Parses a predictor formula such as "1 + T + x + T:x + s(age, k=20) + re(village)".
/// The intercept is implicit; "1" may be written explicitly.
inline std::vector<TermSpec> parse_formula(std::string_view text) {
  std::vector<TermSpec> terms{TermSpec::intercept()};
  const std::string body = detail::trim(text);
  if (body.empty()) return terms;
  for (const auto& raw : detail::split_top(body, '+')) {
    if (raw.empty()) throw ConfigError("empty term in formula '" + body + "'");
    if (raw == "1") continue;
    TermSpec t;
    if (raw.find('(') != std::string::npos) {
      t = detail::parse_call(raw);
    } else if (raw.find(':') != std::string::npos) {
      std::vector<std::string> vars;
      for (const auto& v : detail::split_top(raw, ':')) {
        if (!detail::valid_identifier(v)) throw ConfigError("bad variable name '" + v + "'");
        vars.push_back(v);
      }
      t = TermSpec::interaction(std::move(vars));
    } else {
      if (!detail::valid_identifier(raw)) throw ConfigError("bad variable name '" + raw + "'");
      t = TermSpec::linear(raw);
    }
    const bool dup = std::any_of(terms.begin(), terms.end(), [&](const TermSpec& o) {
      return o.kind == t.kind && o.variables == t.variables;
    });
    if (dup) throw ConfigError("duplicate term '" + raw + "' in formula '" + body + "'");
    terms.push_back(std::move(t));
  }
  return terms;
}

/// Builds a formula set for `family` from per-parameter strings keyed by the
/// parameter symbol ("mu", "sigma", ...). Missing parameters get an
/// intercept-only predictor; links default to the family's.
inline FormulaSet make_formulas(const Family& family, const std::map<std::string, std::string>& by_symbol,
                                const std::map<std::string, std::string>& link_overrides = {}) {
  FormulaSet f;
  for (const auto& d : family.parameters()) {
    const std::string sym(d.symbol);
    auto it = by_symbol.find(sym);
    f.terms.push_back(parse_formula(it == by_symbol.end() ? "" : it->second));
    auto lk = link_overrides.find(sym);
    f.links.push_back(lk == link_overrides.end() ? d.default_link : link_from_name(lk->second));
  }
  for (const auto& [sym, _] : by_symbol) {
    const auto params = family.parameters();
    if (std::none_of(params.begin(), params.end(), [&](const ParamDescriptor& d) { return d.symbol == sym; }))
      throw ConfigError(std::string(family.name()) + " has no parameter '" + sym + "'");
  }
  f.validate();
  return f;
}

}  // namespace gamlss
