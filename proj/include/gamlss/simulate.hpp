#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gamlss/config.hpp"
#include "gamlss/csv.hpp"
#include "gamlss/data.hpp"
#include "gamlss/error.hpp"
#include "gamlss/families.hpp"
#include "gamlss/rng.hpp"
#include "gamlss/special.hpp"

namespace gamlss {

/// One term of a linear predictor: coefficient times a product of factors.
/// A factor is a numeric variable or an indicator "var[level]".
struct LinearTerm {
  double coefficient = 0.0;
  std::vector<std::pair<std::string, std::string>> factors;  // (variable, level or "")

  [[nodiscard]] std::string label() const {
    if (factors.empty()) return "(Intercept)";
    std::string s;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      s += (i ? ":" : "") + factors[i].first;
      if (!factors[i].second.empty()) s += "[" + factors[i].second + "]";
    }
    return s;
  }
};

/// Parses "1.5 + 0.3*T - 2e-1*x1 + 0.4*region[b]".
inline std::vector<LinearTerm> parse_linear_predictor(const std::string& text) {
  std::vector<LinearTerm> out;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto fail = [&](const std::string& why) -> LinearTerm {
    throw ConfigError("linear predictor '" + text + "': " + why + " at position " + std::to_string(i + 1));
  };
  skip();
  if (i == text.size()) throw ConfigError("linear predictor is empty");
  bool first = true;
  while (i < text.size()) {
    double sign = 1.0;
    skip();
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
      sign = text[i] == '-' ? -1.0 : 1.0;
      ++i;
    } else if (!first) {
      fail("expected '+' or '-'");
    }
    first = false;
    LinearTerm t;
    t.coefficient = sign;
    for (;;) {
      skip();
      if (i >= text.size()) fail("missing factor");
      const char c = text[i];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* b = text.c_str() + i;
        char* e = nullptr;
        const double v = std::strtod(b, &e);
        if (e == b) fail("bad number");
        t.coefficient *= v;
        i += static_cast<std::size_t>(e - b);
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_' || text[j] == '.'))
          ++j;
        std::string var = text.substr(i, j - i), level;
        i = j;
        if (i < text.size() && text[i] == '[') {
          const auto close = text.find(']', i);
          if (close == std::string::npos) fail("unclosed '['");
          level = detail::trim(text.substr(i + 1, close - i - 1));
          i = close + 1;
        }
        t.factors.emplace_back(std::move(var), std::move(level));
      } else {
        fail(std::string("unexpected '") + c + "'");
      }
      skip();
      if (i < text.size() && text[i] == '*') {
        ++i;
        continue;
      }
      break;
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline double eval_linear_predictor(const std::vector<LinearTerm>& terms, const Dataset& data, std::size_t row) {
  double s = 0.0;
  for (const auto& t : terms) {
    double v = t.coefficient;
    for (const auto& [var, level] : t.factors) {
      const Column& c = data.column(var);
      if (c.is_categorical()) {
        if (level.empty()) throw ConfigError("categorical '" + var + "' needs a level, e.g. " + var + "[a]");
        v *= c.levels[row] == level ? 1.0 : 0.0;
      } else {
        if (!level.empty()) throw ConfigError("'" + var + "' is numeric and takes no [level]");
        v *= c.numbers[row];
      }
    }
    s += v;
  }
  return s;
}

/// Covariate generator "normal(m, s)", "uniform(a, b)", "bernoulli(p)",
/// "integer(lo, hi)" or "categorical(a, b, ...)".
struct CovariateGenerator {
  std::string name;
  std::string kind;
  std::vector<double> args;
  std::vector<std::string> levels;
  std::string text;

  [[nodiscard]] ColumnType type() const {
    if (kind == "categorical") return ColumnType::categorical;
    return ColumnType::numeric;
  }
};

inline CovariateGenerator parse_generator(const std::string& name, const std::string& text) {
  CovariateGenerator g;
  g.name = name;
  g.text = text;
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')')
    throw ConfigError("[simulate] x." + name + ": expected e.g. normal(0, 1), got '" + text + "'");
  g.kind = detail::trim(text.substr(0, open));
  const auto args = detail::split_list(text.substr(open + 1, text.size() - open - 2));
  const std::string ctx = "[simulate] x." + name;
  if (g.kind == "categorical") {
    if (args.size() < 2) throw ConfigError(ctx + ": categorical needs at least two levels");
    g.levels = args;
    return g;
  }
  for (const auto& a : args) g.args.push_back(detail::parse_number(a, ctx));
  auto need = [&](std::size_t k) {
    if (g.args.size() != k) throw ConfigError(ctx + ": " + g.kind + " takes " + std::to_string(k) + " argument(s)");
  };
  if (g.kind == "normal") {
    need(2);
    if (!(g.args[1] > 0)) throw ConfigError(ctx + ": standard deviation must be > 0");
  } else if (g.kind == "uniform") {
    need(2);
    if (!(g.args[1] > g.args[0])) throw ConfigError(ctx + ": uniform needs a < b");
  } else if (g.kind == "bernoulli") {
    need(1);
    if (!(g.args[0] >= 0 && g.args[0] <= 1)) throw ConfigError(ctx + ": probability must lie in [0,1]");
  } else if (g.kind == "integer") {
    need(2);
    if (g.args[0] != std::floor(g.args[0]) || g.args[1] != std::floor(g.args[1]) || g.args[1] < g.args[0])
      throw ConfigError(ctx + ": integer needs integer bounds lo <= hi");
  } else {
    throw ConfigError(ctx + ": unknown generator '" + g.kind + "'");
  }
  return g;
}

struct SimulationConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string family;
  std::string response = "y";
  std::string output;  // CSV path
  std::string truth;   // sidecar JSON path
  std::vector<CovariateGenerator> covariates;
  std::map<std::string, std::string> beta;  // parameter -> linear predictor
  std::map<std::string, std::string> links;
  std::size_t clusters = 0;
  std::string cluster_column = "cluster";
  std::map<std::string, double> cluster_sd;
  std::string endogenous;
  std::string endogenous_beta;
  double endogenous_sd = 1.0;
  double endogenous_rho = 0.0;
  std::string rdd_forcing;
  double rdd_cutoff = 0.0;
  std::map<std::string, double> rdd_jump;
  bool rdd_fuzzy = false;
  double rdd_p_left = 0.0, rdd_p_right = 1.0;
  std::string rdd_treatment = "D";
};

inline SimulationConfig load_simulation(const AnalysisConfig& cfg) {
  SectionReader s(cfg.source, "simulate");
  if (!s.present()) throw ConfigError("config has no [simulate] section");
  SimulationConfig c;
  c.n = static_cast<std::size_t>(s.integer("n", 1000, 0));
  c.seed = static_cast<std::uint64_t>(s.integer("seed", 1, 0));
  c.family = s.get("family", cfg.model.family);
  if (c.family.empty()) throw ConfigError("[simulate] family is required");
  c.response = s.get("response", cfg.model.response.empty() ? std::string("y") : cfg.model.response);
  c.output = s.get("output", cfg.data_path);
  if (c.output.empty()) throw ConfigError("[simulate] output (or [data] path) is required");
  c.truth = s.get("truth", c.output + ".truth.json");
  for (auto& [name, text] : s.prefixed("x")) c.covariates.push_back(parse_generator(name, text));
  for (auto& [p, text] : s.prefixed("beta")) c.beta[p] = text;
  for (auto& [p, text] : s.prefixed("link")) c.links[p] = text;
  c.clusters = static_cast<std::size_t>(s.integer("clusters", 0, 0));
  c.cluster_column = s.get("cluster_column", "cluster");
  for (auto& [p, v] : s.prefixed("cluster_sd")) c.cluster_sd[p] = detail::parse_number(v, "[simulate] cluster_sd." + p);
  c.endogenous = s.get("endogenous", "");
  for (auto& [k, v] : s.prefixed("endogenous")) {
    if (k == "beta") c.endogenous_beta = v;
    else if (k == "sd") c.endogenous_sd = detail::parse_number(v, "[simulate] endogenous.sd");
    else if (k == "rho") c.endogenous_rho = detail::parse_number(v, "[simulate] endogenous.rho");
    else throw ConfigError("[simulate] unknown key 'endogenous." + k + "'");
  }
  for (auto& [k, v] : s.prefixed("rdd")) {
    const std::string ctx = "[simulate] rdd." + k;
    if (k == "forcing") c.rdd_forcing = v;
    else if (k == "cutoff") c.rdd_cutoff = detail::parse_number(v, ctx);
    else if (k.rfind("jump.", 0) == 0) c.rdd_jump[k.substr(5)] = detail::parse_number(v, ctx);
    else if (k == "fuzzy") c.rdd_fuzzy = v == "true" || v == "yes" || v == "1";
    else if (k == "p_left") c.rdd_p_left = detail::parse_number(v, ctx);
    else if (k == "p_right") c.rdd_p_right = detail::parse_number(v, ctx);
    else if (k == "treatment") c.rdd_treatment = v;
    else throw ConfigError("[simulate] unknown key 'rdd." + k + "'");
  }
  s.finish();

  const FamilyPtr fam = make_family(c.family);
  for (const auto& d : fam->parameters())
    if (!c.beta.contains(std::string(d.symbol)))
      throw ConfigError("[simulate] beta." + std::string(d.symbol) + " is required for family '" + c.family + "'");
  auto check_param = [&](const std::string& p, const std::string& key) {
    const auto params = fam->parameters();
    if (std::none_of(params.begin(), params.end(), [&](const ParamDescriptor& d) { return d.symbol == p; }))
      throw ConfigError("[simulate] " + key + "." + p + ": family '" + c.family + "' has no such parameter");
  };
  for (const auto& [p, _] : c.beta) check_param(p, "beta");
  for (const auto& [p, _] : c.links) check_param(p, "link");
  for (const auto& [p, _] : c.cluster_sd) check_param(p, "cluster_sd");
  for (const auto& [p, _] : c.rdd_jump) check_param(p, "rdd.jump");
  for (const auto& [p, sd] : c.cluster_sd)
    if (!(sd >= 0)) throw ConfigError("[simulate] cluster_sd." + p + " must be >= 0");
  if (!c.cluster_sd.empty() && c.clusters < 2) throw ConfigError("[simulate] cluster_sd needs clusters >= 2");
  if (!c.endogenous.empty()) {
    if (c.endogenous_beta.empty()) throw ConfigError("[simulate] endogenous.beta is required");
    if (!(c.endogenous_sd > 0)) throw ConfigError("[simulate] endogenous.sd must be > 0");
    if (!(std::abs(c.endogenous_rho) < 1)) throw ConfigError("[simulate] endogenous.rho must lie in (-1,1)");
  }
  if (!c.rdd_forcing.empty()) {
    if (std::none_of(c.covariates.begin(), c.covariates.end(),
                     [&](const auto& g) { return g.name == c.rdd_forcing && g.type() == ColumnType::numeric; }))
      throw ConfigError("[simulate] rdd.forcing must name a numeric generated covariate");
    if (!(c.rdd_p_left >= 0 && c.rdd_p_left <= 1 && c.rdd_p_right >= 0 && c.rdd_p_right <= 1))
      throw ConfigError("[simulate] rdd.p_left and rdd.p_right must lie in [0,1]");
  }
  return c;
}

struct Simulation {
  Dataset data;
  nlohmann::ordered_json truth;
};

namespace detail {
inline RngStream named_stream(const RngStream& master, const std::string& name) {
  return master.substream(fnv1a(name));
}
}  // namespace detail

/// Draws the dataset. Each component (covariate, cluster effects, first
/// stage, treatment, outcome) has its own stream keyed by its name, so adding
/// a column leaves the others unchanged.
inline Simulation simulate(const SimulationConfig& c) {
  const FamilyPtr fam = make_family(c.family);
  const RngStream master(c.seed);
  const std::size_t n = c.n;
  Dataset d;
  nlohmann::ordered_json truth;
  truth["family"] = c.family;
  truth["n"] = n;
  truth["seed"] = c.seed;
  truth["response"] = c.response;

  auto add_numeric = [&](const std::string& name, std::vector<double> v) { d.add_numeric(name, std::move(v)); };

  for (const auto& g : c.covariates) {
    RngStream rng = detail::named_stream(master, "x." + g.name);
    truth["covariates"][g.name] = g.text;
    if (g.type() == ColumnType::categorical) {
      std::vector<std::string> v(n);
      for (auto& s : v) s = g.levels[rng.below(g.levels.size())];
      d.add_categorical(g.name, std::move(v));
      continue;
    }
    std::vector<double> v(n);
    for (auto& x : v) {
      if (g.kind == "normal") x = g.args[0] + g.args[1] * rng.normal();
      else if (g.kind == "uniform") x = rng.uniform(g.args[0], g.args[1]);
      else if (g.kind == "bernoulli") x = rng.uniform() < g.args[0] ? 1.0 : 0.0;
      else x = g.args[0] + static_cast<double>(rng.below(static_cast<std::uint64_t>(g.args[1] - g.args[0]) + 1));
    }
    add_numeric(g.name, std::move(v));
  }

  std::vector<std::size_t> cluster_of(n, 0);
  if (c.clusters > 0) {
    if (n > 0 && c.clusters > n) throw InvalidInput("simulate: more clusters than rows");
    const int width = static_cast<int>(std::to_string(c.clusters).size());
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      cluster_of[i] = i * c.clusters / n;
      char buf[32];
      std::snprintf(buf, sizeof buf, "g%0*zu", width, cluster_of[i] + 1);
      ids[i] = buf;
    }
    Column col;
    col.name = c.cluster_column;
    col.type = ColumnType::categorical;
    col.levels = std::move(ids);
    d.add(std::move(col));
    truth["clusters"] = c.clusters;
    truth["cluster_column"] = c.cluster_column;
  }

  std::vector<double> v_err(n, 0.0);
  if (!c.endogenous.empty()) {
    const auto terms = parse_linear_predictor(c.endogenous_beta);
    RngStream rng = detail::named_stream(master, "endogenous");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      v_err[i] = c.endogenous_sd * rng.normal();
      x[i] = eval_linear_predictor(terms, d, i) + v_err[i];
    }
    add_numeric(c.endogenous, std::move(x));
    auto& e = truth["endogenous"];
    e["variable"] = c.endogenous;
    for (const auto& t : terms) e["coefficients"][t.label()] = t.coefficient;
    e["sd"] = c.endogenous_sd;
    e["rho"] = c.endogenous_rho;
  }

  std::vector<double> treated(n, 0.0);
  if (!c.rdd_forcing.empty()) {
    const auto& r = d.numeric(c.rdd_forcing);
    RngStream rng = detail::named_stream(master, "rdd");
    for (std::size_t i = 0; i < n; ++i) {
      const bool right = r[i] >= c.rdd_cutoff;
      if (c.rdd_fuzzy) treated[i] = rng.uniform() < (right ? c.rdd_p_right : c.rdd_p_left) ? 1.0 : 0.0;
      else treated[i] = right ? 1.0 : 0.0;
    }
    add_numeric(c.rdd_treatment, treated);
    auto& t = truth["rdd"];
    t["forcing"] = c.rdd_forcing;
    t["cutoff"] = c.rdd_cutoff;
    t["treatment"] = c.rdd_treatment;
    t["fuzzy"] = c.rdd_fuzzy;
    if (c.rdd_fuzzy) {
      t["p_left"] = c.rdd_p_left;
      t["p_right"] = c.rdd_p_right;
    }
    for (const auto& [p, j] : c.rdd_jump) t["jump"][p] = j;
  }

  const auto params = fam->parameters();
  const std::size_t K = params.size();
  std::vector<std::vector<LinearTerm>> beta(K);
  std::vector<Link> links(K);
  std::vector<std::vector<double>> effects(K);
  std::vector<double> jump(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const std::string sym(params[k].symbol);
    beta[k] = parse_linear_predictor(c.beta.at(sym));
    links[k] = c.links.contains(sym) ? link_from_name(c.links.at(sym)) : params[k].default_link;
    for (const auto& t : beta[k]) truth["coefficients"][sym][t.label()] = t.coefficient;
    truth["links"][sym] = links[k].name();
    if (auto it = c.cluster_sd.find(sym); it != c.cluster_sd.end()) {
      RngStream rng = detail::named_stream(master, "cluster." + sym);
      effects[k].resize(c.clusters);
      for (auto& u : effects[k]) u = it->second * rng.normal();
      truth["cluster_sd"][sym] = it->second;
    }
    if (auto it = c.rdd_jump.find(sym); it != c.rdd_jump.end()) jump[k] = it->second;
  }
  for (std::size_t k = 0; k < K; ++k)
    for (const auto& t : beta[k])
      for (const auto& [var, _] : t.factors)
        if (!d.has(var)) throw ConfigError("[simulate] beta." + std::string(params[k].symbol) + ": unknown variable '" + var + "'");

  RngStream rng = detail::named_stream(master, "outcome");
  const double rho = c.endogenous_rho;
  std::vector<double> y(n);
  std::vector<double> theta(K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double eta = eval_linear_predictor(beta[k], d, i) + treated[i] * jump[k];
      if (!effects[k].empty()) eta += effects[k][cluster_of[i]];
      theta[k] = links[k].invert(eta);
    }
    const ParamVector tv(*fam, std::span<const double>(theta.data(), K));
    double u;
    if (!c.endogenous.empty() && rho != 0.0) {
      const double z = rho * v_err[i] / c.endogenous_sd + std::sqrt(1 - rho * rho) * rng.normal();
      u = std::clamp(normal_cdf(z), 1e-16, 1 - 1e-16);
    } else {
      u = rng.uniform();
    }
    y[i] = fam->quantile(u, tv);
  }
  d.add_numeric(c.response, std::move(y), fam->kind() == Kind::discrete ? ColumnType::count : ColumnType::numeric);
  for (const auto& col : d.columns()) truth["schema"][col.name] = column_type_name(col.type);
  return {std::move(d), std::move(truth)};
}

}  // namespace gamlss
