#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gamlss/bootstrap.hpp"
#include "gamlss/csv.hpp"
#include "gamlss/effects.hpp"
#include "gamlss/families.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/formula.hpp"
#include "gamlss/functionals.hpp"

namespace gamlss {

/// Sections in canonical order; keys keep file order inside a section.
struct IniDocument {
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>* find(const std::string& name) const {
    for (const auto& s : sections)
      if (s.first == name) return &s.second;
    return nullptr;
  }
  void set(const std::string& section, const std::string& key, const std::string& value) {
    auto it = std::find_if(sections.begin(), sections.end(), [&](const auto& s) { return s.first == section; });
    if (it == sections.end()) {
      sections.push_back({section, {}});
      it = std::prev(sections.end());
    }
    for (auto& kv : it->second)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    it->second.emplace_back(key, value);
  }
};

namespace detail {

inline std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  return v;
}

inline std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (auto& part : split_top(text, sep)) {
    auto t = unquote(part);
    if (t.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(std::move(t));
  }
  return out;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline IniDocument parse_ini(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  IniDocument doc;
  for (const auto& [section, node] : tree) {
    if (node.empty()) throw ConfigError("config: key '" + section + "' must be inside a [section]");
    if (doc.find(section)) throw ConfigError("config: duplicate section [" + section + "]");
    doc.sections.push_back({section, {}});
    for (const auto& [key, value] : node) doc.sections.back().second.emplace_back(key, detail::unquote(value.data()));
  }
  return doc;
}

inline IniDocument read_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_ini(in);
}

inline std::string write_ini(const IniDocument& doc) {
  std::ostringstream out;
  for (std::size_t s = 0; s < doc.sections.size(); ++s) {
    out << (s ? "\n" : "") << '[' << doc.sections[s].first << "]\n";
    for (const auto& [k, v] : doc.sections[s].second) out << k << " = " << v << '\n';
  }
  return out.str();
}

/// Typed access to one section. Every key must be consumed; leftovers are
/// reported by finish() so typos do not pass silently.
class SectionReader {
 public:
  SectionReader(const IniDocument& doc, std::string name) : name_(std::move(name)) {
    if (const auto* s = doc.find(name_)) entries_ = *s;
  }

  [[nodiscard]] bool present() const { return !entries_.empty(); }

  std::optional<std::string> get(const std::string& key) {
    for (const auto& [k, v] : entries_)
      if (k == key) {
        used_.insert(k);
        return v;
      }
    return std::nullopt;
  }
  std::string get(const std::string& key, const std::string& fallback) { return get(key).value_or(fallback); }
  std::string require(const std::string& key) {
    auto v = get(key);
    if (!v || v->empty()) throw ConfigError("[" + name_ + "] " + key + " is required");
    return *v;
  }
  double number(const std::string& key, double fallback) {
    auto v = get(key);
    return v ? detail::parse_number(*v, "[" + name_ + "] " + key) : fallback;
  }
  long long integer(const std::string& key, long long fallback, long long min_value = 0) {
    auto v = get(key);
    if (!v) return fallback;
    const double x = detail::parse_number(*v, "[" + name_ + "] " + key);
    if (x != std::floor(x) || x < static_cast<double>(min_value))
      throw ConfigError("[" + name_ + "] " + key + " must be an integer >= " + std::to_string(min_value));
    return static_cast<long long>(x);
  }
  bool boolean(const std::string& key, bool fallback) {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw ConfigError("[" + name_ + "] " + key + " must be true or false, got '" + *v + "'");
  }
  std::vector<std::string> list(const std::string& key, char sep = ',') {
    auto v = get(key);
    return v ? detail::split_list(*v, sep) : std::vector<std::string>{};
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    for (const auto& s : list(key)) out.push_back(detail::parse_number(s, "[" + name_ + "] " + key));
    return out;
  }
  /// Keys "prefix.<suffix>" mapped by suffix, in file order.
  std::vector<std::pair<std::string, std::string>> prefixed(const std::string& prefix) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : entries_)
      if (k.size() > prefix.size() + 1 && k.compare(0, prefix.size(), prefix) == 0 && k[prefix.size()] == '.') {
        used_.insert(k);
        out.emplace_back(k.substr(prefix.size() + 1), v);
      }
    return out;
  }
  void finish() const {
    for (const auto& [k, _] : entries_)
      if (!used_.contains(k)) throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
  }

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Typed configuration

struct ModelConfig {
  std::string family;
  std::string response;
  std::map<std::string, std::string> formulas;  // parameter symbol -> formula
  std::map<std::string, std::string> links;
  std::map<std::string, std::string> references;
  FitControl control;
};

struct EffectsConfig {
  std::string treatment;
  std::vector<std::string> functionals{"mean"};
  std::map<std::string, std::string> profile;  // overrides
  bool ame = false;
  std::size_t density_points = 200;
};

enum class BootstrapMethod { none, parametric, pairs_cluster };

struct BootstrapConfig {
  BootstrapMethod method = BootstrapMethod::none;
  std::size_t replicates = 499;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  std::string cluster;
  unsigned threads = 0;
  double max_failure_rate = kMaxFailureRate;
  bool warm_start = true;
};

struct IvConfig {
  std::vector<EndogenousSpec> endogenous;
  TsriOptions options;
  std::size_t outer = 20;
  std::size_t inner = 25;
  FirstStageResampling first_stage = FirstStageResampling::nonparametric;
};

struct RddConfig {
  std::string forcing;
  double cutoff = 0.0;
  std::vector<double> bandwidths{0.0};
  bool fuzzy = false;
  std::string treatment;
  std::string treatment_formula;
  double epsilon = 0.05;
};

struct PanelConfig {
  std::string unit;
  PanelOptions options;
};

struct DiagnoseConfig {
  std::vector<std::string> families;  // empty: the model family only
  std::string cluster;
};

struct OutputConfig {
  std::string dir = "out";
};

inline std::string_view bootstrap_method_name(BootstrapMethod m) {
  switch (m) {
    case BootstrapMethod::none: return "none";
    case BootstrapMethod::parametric: return "parametric";
    case BootstrapMethod::pairs_cluster: return "pairs-cluster";
  }
  return "none";
}

inline std::string_view first_stage_name(FirstStageResampling f) {
  switch (f) {
    case FirstStageResampling::parametric: return "parametric";
    case FirstStageResampling::nonparametric: return "nonparametric";
    case FirstStageResampling::frozen: return "frozen";
  }
  return "nonparametric";
}

struct AnalysisConfig {
  IniDocument source;            // canonical document (paths resolved)
  std::string data_path;
  std::vector<RowFilter> filters;
  Schema schema;
  ModelConfig model;
  EffectsConfig effects;
  BootstrapConfig bootstrap;
  std::optional<IvConfig> iv;
  std::optional<RddConfig> rdd;
  std::optional<PanelConfig> panel;
  DiagnoseConfig diagnose;
  OutputConfig output;

  [[nodiscard]] bool in_schema(const std::string& column) const {
    return std::any_of(schema.begin(), schema.end(), [&](const auto& s) { return s.first == column; });
  }
  [[nodiscard]] ColumnType column_type(const std::string& column) const {
    for (const auto& [n, t] : schema)
      if (n == column) return t;
    throw ConfigError("column '" + column + "' is not declared in [schema]");
  }
  [[nodiscard]] std::vector<Functional> functionals() const {
    std::vector<Functional> out;
    for (const auto& f : effects.functionals) out.push_back(parse_functional(f));
    return out;
  }
  [[nodiscard]] ModelSpec model_spec() const {
    ModelSpec spec;
    spec.family = make_family(model.family);
    spec.formulas = make_formulas(*spec.family, model.formulas, model.links);
    spec.response = model.response;
    spec.design.reference_levels = model.references;
    spec.control = model.control;
    return spec;
  }

  /// Canonical text without the output section; the basis of the hash.
  [[nodiscard]] std::string canonical_text() const {
    IniDocument d;
    for (const auto& s : source.sections)
      if (s.first != "output") d.sections.push_back(s);
    return write_ini(d);
  }
  [[nodiscard]] std::string hash() const { return detail::hex64(detail::fnv1a(canonical_text())); }
};

inline const std::vector<std::string>& known_sections() {
  static const std::vector<std::string> k{"data",      "schema", "model",    "effects",  "bootstrap", "iv",
                                          "rdd",       "panel",  "diagnose", "simulate", "output"};
  return k;
}

namespace detail {

inline std::string resolve_path(const std::string& path, const std::filesystem::path& base) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal().generic_string();
}

inline void require_column(const AnalysisConfig& c, const std::string& col, const std::string& where) {
  if (!c.in_schema(col)) throw ConfigError(where + ": column '" + col + "' is not declared in [schema]");
}

}  // namespace detail

/// Builds and validates the configuration. Relative paths resolve against
/// `base_dir` and are stored resolved in the canonical document.
inline AnalysisConfig load_config(IniDocument doc, const std::filesystem::path& base_dir) {
  for (const auto& [name, _] : doc.sections)
    if (std::find(known_sections().begin(), known_sections().end(), name) == known_sections().end())
      throw ConfigError("config: unknown section [" + name + "]");
  // Canonical order: known sections in a fixed order, keys sorted.
  IniDocument canon;
  for (const auto& name : known_sections())
    if (const auto* s = doc.find(name)) {
      auto entries = *s;
      if (name != "schema") std::sort(entries.begin(), entries.end());
      for (auto& [k, v] : entries) {
        if ((name == "data" && k == "path") || (name == "output" && k == "dir") ||
            (name == "simulate" && (k == "output" || k == "truth")))
          v = detail::resolve_path(v, base_dir);
      }
      canon.sections.push_back({name, std::move(entries)});
    }

  AnalysisConfig c;
  c.source = canon;

  SectionReader data(canon, "data");
  c.data_path = data.get("path", "");
  for (const auto& f : data.list("filters", ';')) c.filters.push_back(parse_filter(f));
  data.finish();

  if (const auto* s = canon.find("schema"))
    for (const auto& [col, type] : *s) {
      if (!detail::valid_identifier(col)) throw ConfigError("[schema] invalid column name '" + col + "'");
      c.schema.emplace_back(col, column_type_from_name(type));
    }

  SectionReader model(canon, "model");
  if (model.present()) {
    c.model.family = model.require("family");
    const FamilyPtr fam = make_family(c.model.family);
    c.model.response = model.require("response");
    for (auto& [sym, f] : model.prefixed("param")) c.model.formulas[sym] = f;
    for (auto& [sym, l] : model.prefixed("link")) c.model.links[sym] = l;
    for (auto& [var, lvl] : model.prefixed("reference")) c.model.references[var] = lvl;
    auto& ctl = c.model.control;
    ctl.max_cycles = static_cast<int>(model.integer("max_cycles", ctl.max_cycles, 1));
    ctl.inner_iterations = static_cast<int>(model.integer("inner_iterations", ctl.inner_iterations, 1));
    ctl.tolerance = model.number("tolerance", ctl.tolerance);
    const std::string lambda = model.get("lambda", "fixed");
    if (lambda == "gaic") ctl.lambda_mode = LambdaMode::gaic_grid;
    else if (lambda != "fixed") throw ConfigError("[model] lambda must be 'fixed' or 'gaic'");
    ctl.lambda_grid = model.numbers("lambda_grid");
    if (ctl.lambda_mode == LambdaMode::gaic_grid && ctl.lambda_grid.empty())
      throw ConfigError("[model] lambda = gaic needs lambda_grid = <w1, w2, ...>");
    ctl.validate();
    (void)make_formulas(*fam, c.model.formulas, c.model.links);
    detail::require_column(c, c.model.response, "[model] response");
    const ColumnType rt = c.column_type(c.model.response);
    if (rt == ColumnType::categorical) throw ConfigError("[model] response must be numeric");
    if (fam->kind() == Kind::discrete && rt != ColumnType::count)
      throw ConfigError("[model] family '" + c.model.family + "' needs an integer-count response column");
    for (const auto& v : make_formulas(*fam, c.model.formulas, c.model.links).variables())
      detail::require_column(c, v, "[model] formula");
    for (const auto& [v, _] : c.model.references) detail::require_column(c, v, "[model] reference level");
  }
  model.finish();

  SectionReader eff(canon, "effects");
  c.effects.treatment = eff.get("treatment", "");
  if (auto f = eff.list("functionals"); !f.empty()) c.effects.functionals = f;
  for (auto& [var, v] : eff.prefixed("at")) c.effects.profile[var] = v;
  c.effects.ame = eff.boolean("ame", false);
  c.effects.density_points = static_cast<std::size_t>(eff.integer("density_points", 200, 2));
  eff.finish();
  for (const auto& f : c.effects.functionals) (void)parse_functional(f);
  if (!c.effects.treatment.empty()) {
    detail::require_column(c, c.effects.treatment, "[effects] treatment");
    if (c.column_type(c.effects.treatment) == ColumnType::categorical)
      throw ConfigError("[effects] treatment must be a numeric 0/1 column");
  }
  for (const auto& [v, _] : c.effects.profile) detail::require_column(c, v, "[effects] at");

  SectionReader boot(canon, "bootstrap");
  const std::string method = boot.get("method", "none");
  if (method == "parametric") c.bootstrap.method = BootstrapMethod::parametric;
  else if (method == "pairs-cluster") c.bootstrap.method = BootstrapMethod::pairs_cluster;
  else if (method != "none")
    throw ConfigError("[bootstrap] method must be exactly one of none, parametric, pairs-cluster; got '" + method + "'");
  c.bootstrap.replicates = static_cast<std::size_t>(boot.integer("replicates", 499, 1));
  c.bootstrap.seed = static_cast<std::uint64_t>(boot.integer("seed", 1, 0));
  c.bootstrap.alpha = boot.number("alpha", 0.05);
  if (!(c.bootstrap.alpha > 0 && c.bootstrap.alpha < 1)) throw ConfigError("[bootstrap] alpha must lie in (0,1)");
  c.bootstrap.cluster = boot.get("cluster", "");
  c.bootstrap.threads = static_cast<unsigned>(boot.integer("threads", 0, 0));
  c.bootstrap.max_failure_rate = boot.number("max_failure_rate", kMaxFailureRate);
  if (!(c.bootstrap.max_failure_rate >= 0 && c.bootstrap.max_failure_rate < 1))
    throw ConfigError("[bootstrap] max_failure_rate must lie in [0,1)");
  c.bootstrap.warm_start = boot.boolean("warm_start", true);
  boot.finish();
  if (c.bootstrap.method == BootstrapMethod::pairs_cluster) {
    if (c.bootstrap.cluster.empty()) throw ConfigError("[bootstrap] pairs-cluster needs cluster = <column>");
    detail::require_column(c, c.bootstrap.cluster, "[bootstrap] cluster");
  } else if (!c.bootstrap.cluster.empty()) {
    throw ConfigError("[bootstrap] cluster is only used with method = pairs-cluster");
  }

  SectionReader iv(canon, "iv");
  if (iv.present()) {
    IvConfig ic;
    for (const auto& var : iv.list("endogenous")) {
      EndogenousSpec e;
      e.variable = var;
      e.instruments = iv.list("instruments." + var);
      e.formula = iv.require("formula." + var);
      e.link = iv.get("link." + var, "identity");
      detail::require_column(c, var, "[iv] endogenous");
      for (const auto& z : e.instruments) detail::require_column(c, z, "[iv] instruments." + var);
      for (const auto& t : parse_formula(e.formula))
        for (const auto& v : t.variables) detail::require_column(c, v, "[iv] formula." + var);
      ic.endogenous.push_back(std::move(e));
    }
    if (ic.endogenous.empty()) throw ConfigError("[iv] endogenous lists no variable");
    ic.options.standardize = iv.boolean("standardize", false);
    ic.options.nonlinear = iv.boolean("nonlinear", false);
    ic.options.weak_instrument_floor = iv.number("weak_instrument_floor", 0.01);
    ic.outer = static_cast<std::size_t>(iv.integer("outer", 20, 1));
    ic.inner = static_cast<std::size_t>(iv.integer("inner", 25, 1));
    const std::string fs = iv.get("first_stage", "nonparametric");
    if (fs == "parametric") ic.first_stage = FirstStageResampling::parametric;
    else if (fs == "frozen") ic.first_stage = FirstStageResampling::frozen;
    else if (fs != "nonparametric") throw ConfigError("[iv] first_stage must be nonparametric, parametric or frozen");
    c.iv = std::move(ic);
  }
  iv.finish();

  SectionReader rdd(canon, "rdd");
  if (rdd.present()) {
    RddConfig rc;
    rc.forcing = rdd.require("forcing");
    rc.cutoff = rdd.number("cutoff", 0.0);
    if (auto b = rdd.numbers("bandwidths"); !b.empty()) rc.bandwidths = b;
    rc.fuzzy = rdd.boolean("fuzzy", false);
    rc.treatment = rdd.get("treatment", "");
    rc.treatment_formula = rdd.get("treatment_formula", "");
    rc.epsilon = rdd.number("epsilon", 0.05);
    detail::require_column(c, rc.forcing, "[rdd] forcing");
    if (rc.fuzzy) {
      if (rc.treatment.empty()) throw ConfigError("[rdd] fuzzy design needs treatment = <column>");
      detail::require_column(c, rc.treatment, "[rdd] treatment");
    }
    if (!(rc.epsilon > 0)) throw ConfigError("[rdd] epsilon must be > 0");
    c.rdd = std::move(rc);
  }
  rdd.finish();

  SectionReader panel(canon, "panel");
  if (panel.present()) {
    PanelConfig pc;
    pc.unit = panel.require("unit");
    pc.options.mundlak = panel.list("mundlak");
    if (auto p = panel.list("parameters"); !p.empty()) pc.options.parameters = p;
    pc.options.random_effect = panel.boolean("random_effect", true);
    pc.options.lambda = panel.number("lambda", 1.0);
    detail::require_column(c, pc.unit, "[panel] unit");
    for (const auto& v : pc.options.mundlak) detail::require_column(c, v, "[panel] mundlak");
    c.panel = std::move(pc);
  }
  panel.finish();

  SectionReader diag(canon, "diagnose");
  c.diagnose.families = diag.list("families");
  for (const auto& f : c.diagnose.families) (void)make_family(f);
  c.diagnose.cluster = diag.get("cluster", "");
  if (!c.diagnose.cluster.empty()) detail::require_column(c, c.diagnose.cluster, "[diagnose] cluster");
  diag.finish();

  SectionReader out(canon, "output");
  c.output.dir = out.get("dir", detail::resolve_path("out", base_dir));
  out.finish();
  return c;
}

inline AnalysisConfig load_config_file(const std::string& path) {
  const auto base = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  return load_config(read_ini_file(path), base);
}

}  // namespace gamlss
