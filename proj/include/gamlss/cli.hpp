#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gamlss/bootstrap.hpp"
#include "gamlss/config.hpp"
#include "gamlss/csv.hpp"
#include "gamlss/diagnostics.hpp"
#include "gamlss/effects.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/functionals.hpp"
#include "gamlss/report.hpp"
#include "gamlss/simulate.hpp"
#include "gamlss/svg.hpp"

namespace gamlss::cli {

using report::Json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitEstimation = 4;
inline constexpr int kExitInference = 5;

/// Exit status for an exception escaping a run.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidInput*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const EstimationError*>(&e) || dynamic_cast<const MomentError*>(&e)) return kExitEstimation;
  if (dynamic_cast<const InferenceBlocked*>(&e)) return kExitInference;
  return kExitOther;
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> k{"fit", "diagnose", "effects", "bootstrap", "iv", "rdd", "panel", "simulate"};
  return k;
}

struct Artifact {
  std::string name;
  std::string content;
};

struct RunResult {
  Json report;
  std::vector<Artifact> artifacts;
  int status = kExitOk;
  std::string message;  // first reason for a nonzero status
};

namespace detail {

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return gamlss::detail::hex64(gamlss::detail::fnv1a(bytes));
}

inline std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

inline void flag(RunResult& r, int status, const std::string& why) {
  if (r.status == kExitOk) {
    r.status = status;
    r.message = why;
  }
}

struct Loaded {
  Dataset data;
  Json summary;
};

inline Loaded load_data(const AnalysisConfig& cfg) {
  if (cfg.data_path.empty()) throw ConfigError("[data] path is required");
  if (cfg.schema.empty()) throw ConfigError("[schema] declares no columns");
  auto in = ingest_csv(cfg.data_path, cfg.schema, cfg.filters);
  Json s;
  s["path"] = cfg.data_path;
  s["file_hash"] = file_hash(cfg.data_path);
  s["rows_read"] = in.rows_read;
  s["rows_used"] = in.data.rows();
  Json d = Json::object();
  for (const auto& [k, v] : in.dropped) d[k] = v;
  s["dropped"] = std::move(d);
  s["rows_dropped"] = in.total_dropped();
  if (in.data.rows() == 0) throw DataError("no rows left after filters and missing-value drops");
  return {std::move(in.data), std::move(s)};
}

inline void require_model(const AnalysisConfig& cfg) {
  if (cfg.model.family.empty()) throw ConfigError("[model] section with family and response is required");
}

inline void require_treatment(const AnalysisConfig& cfg) {
  if (cfg.effects.treatment.empty()) throw ConfigError("[effects] treatment is required for effect estimates");
}

/// Functionals with vulnerability:auto60 resolved to 60% of the sample
/// median of the response.
inline std::vector<Functional> resolved_functionals(const AnalysisConfig& cfg, const Dataset& data, Json* note) {
  auto fs = cfg.functionals();
  for (auto& f : fs)
    if (f.auto_line) {
      f.arg = poverty_line_auto60(data.numeric(cfg.model.response));
      f.auto_line = false;
      if (note) (*note)["poverty_line"] = report::num(f.arg);
    }
  return fs;
}

inline std::vector<std::string> model_variables(const FittedModel& m) {
  std::vector<std::string> v;
  for (const auto& [name, _] : m.schema) v.push_back(name);
  return v;
}

inline ResidualSummary residuals_for(const FittedModel& m, const Dataset& data, std::uint64_t seed,
                                     std::vector<double>* out = nullptr) {
  RngStream rng = RngStream(seed).substream(gamlss::detail::fnv1a("residuals"));
  auto r = quantile_residuals(m, data, rng);
  if (out) *out = r.values;
  return residual_summary(r.values);
}

inline void check_converged(RunResult& r, const FittedModel& m, const std::string& what) {
  if (!m.converged) flag(r, kExitEstimation, what + " did not converge within max_cycles");
}

inline std::vector<double> density_grid(const Family& fam, const std::vector<double>& y, std::size_t points) {
  std::vector<double> s = y;
  std::sort(s.begin(), s.end());
  double lo = s.front(), hi = type7_quantile(s, 0.99);
  if (fam.kind() == Kind::discrete) {
    lo = 0;
    hi = std::max(hi, 1.0);
  } else if (fam.support() != Support::real) {
    lo = std::max(lo, 0.0);
  }
  if (!(hi > lo)) hi = lo + 1;
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  if (fam.support() == Support::positive_real && g.front() <= 0) g.front() = (hi - lo) * 1e-4;
  return g;
}

/// MTE rows at the profile; a functional that does not exist is reported
/// with its reason and flags an estimation failure.
inline Json mte_rows(RunResult& r, const FittedModel& m, const CovariateProfile& profile,
                     const std::vector<Functional>& fs, const std::vector<std::string>& names, const std::string& treatment,
                     std::vector<std::string>& warnings) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    try {
      const auto e = mte(m, profile, fs[i], treatment, &warnings);
      Json row = report::effect_row(report::effect_label("MTE", fs[i]), names[i], e.difference, m.rows());
      row["treated"] = report::num(e.treated);
      row["control"] = report::num(e.control);
      rows.push_back(std::move(row));
    } catch (const MomentError& e) {
      Json row = report::effect_row(report::effect_label("MTE", fs[i]), names[i], std::nan(""), m.rows());
      row["error"] = e.what();
      rows.push_back(std::move(row));
      flag(r, kExitEstimation, e.what());
    }
  }
  return rows;
}

inline Json effect_table(Json rows) {
  Json t;
  t["columns"] = report::effect_columns();
  t["rows"] = std::move(rows);
  return t;
}

inline void dedupe(std::vector<std::string>& w) {
  std::vector<std::string> out;
  for (auto& s : w)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  w = std::move(out);
}

/// Density curves of both arms at the profile.
inline Artifact density_artifact(const FittedModel& m, const CovariateProfile& profile, const std::string& treatment,
                                 std::size_t points) {
  const auto grid = density_grid(m.family(), m.y, points);
  const auto curves = conditional_density_curves(m, {{"profile", profile}}, grid, treatment);
  std::vector<svg::Series> series;
  for (const auto& c : curves)
    series.push_back({c.arm == 1.0 ? treatment + " = 1" : treatment + " = 0", c.grid, c.density, c.arm == 0.0});
  const bool discrete = m.family().kind() == Kind::discrete;
  return {"density.svg", svg::line_plot("Conditional distributions at the covariate profile", m.spec.response,
                                        discrete ? "Probability" : "Density", series)};
}

inline void add_boot_artifacts(RunResult& r, const std::vector<BootstrapResult>& results, double alpha) {
  for (const auto& b : results) {
    const std::string s = slug(b.statistic);
    const auto t = convergence_trace(b, alpha);
    std::vector<double> x(t.replicates.begin(), t.replicates.end());
    r.artifacts.push_back({"trace_" + s + ".svg",
                           svg::line_plot("Percentile bounds over replicates: " + b.statistic, "Replicates",
                                          "Bound", {{"lower", x, t.lower, false}, {"upper", x, t.upper, false}})});
    r.artifacts.push_back({"replicates_" + s + ".svg",
                           svg::box_histogram("Bootstrap replicates: " + b.statistic, b.values, b.point)});
  }
}

inline Json bootstrap_block(const AnalysisConfig& cfg, const std::string& method, const std::vector<BootstrapResult>& res) {
  Json j;
  j["method"] = method;
  j["replicates"] = res.empty() ? 0 : res.front().requested;
  j["seed"] = cfg.bootstrap.seed;
  j["alpha"] = cfg.bootstrap.alpha;
  j["max_failure_rate"] = cfg.bootstrap.max_failure_rate;
  j["warm_start"] = cfg.bootstrap.warm_start;
  if (!res.empty()) j["variance_scale"] = res.front().scale;
  if (!cfg.bootstrap.cluster.empty()) j["cluster"] = cfg.bootstrap.cluster;
  Json d = Json::array();
  for (const auto& b : res) d.push_back(report::boot_diagnostics_json(b, cfg.bootstrap.alpha));
  j["diagnostics"] = std::move(d);
  return j;
}

inline BootstrapOptions boot_options(const AnalysisConfig& cfg) {
  BootstrapOptions o;
  o.replicates = cfg.bootstrap.replicates;
  o.seed = cfg.bootstrap.seed;
  o.threads = cfg.bootstrap.threads;
  o.warm_start = cfg.bootstrap.warm_start;
  return o;
}

// ---------------------------------------------------------------------------
// Subcommands

inline void run_fit(const AnalysisConfig& cfg, RunResult& r) {
  require_model(cfg);
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  const FittedModel m = fit_spec(cfg.model_spec(), data);
  check_converged(r, m, "model");
  r.report["fit"] = report::model_json(m);
  r.report["residuals"] = report::residual_table({cfg.model.family}, {residuals_for(m, data, cfg.bootstrap.seed)});
}

inline void run_diagnose(const AnalysisConfig& cfg, RunResult& r) {
  require_model(cfg);
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  std::vector<std::string> families = cfg.diagnose.families;
  if (families.empty()) families.push_back(cfg.model.family);
  std::vector<ResidualSummary> sums;
  Json fits = Json::array(), checks = Json::array();
  for (const auto& name : families) {
    ModelSpec spec = cfg.model_spec();
    spec.family = make_family(name);
    // Formulas and links carry over for the parameters this family has.
    std::map<std::string, std::string> f, l;
    for (const auto& d : spec.family->parameters()) {
      const std::string sym(d.symbol);
      if (auto it = cfg.model.formulas.find(sym); it != cfg.model.formulas.end()) f[sym] = it->second;
      if (auto it = cfg.model.links.find(sym); it != cfg.model.links.end()) l[sym] = it->second;
    }
    spec.formulas = make_formulas(*spec.family, f, l);
    const FittedModel m = fit_spec(spec, data);
    check_converged(r, m, name + " model");
    std::vector<double> res;
    sums.push_back(residuals_for(m, data, cfg.bootstrap.seed, &res));
    Json fj = report::model_json(m);
    fits.push_back(std::move(fj));
    r.artifacts.push_back({"qq_" + slug(name) + ".svg", svg::qq_plot("Quantile residuals: " + name, qq_data(res))});
    if (!cfg.diagnose.cluster.empty()) {
      const Column& c = data.column(cfg.diagnose.cluster);
      std::vector<std::string> ids(data.rows());
      for (std::size_t i = 0; i < ids.size(); ++i)
        ids[i] = c.is_categorical() ? c.levels[i] : report::Json(c.numbers[i]).dump();
      Json cj = report::cluster_check_json(cluster_heterogeneity_check(res, ids));
      cj["family"] = name;
      checks.push_back(std::move(cj));
    }
  }
  r.report["fits"] = std::move(fits);
  r.report["residuals"] = report::residual_table(families, sums);
  if (!cfg.diagnose.cluster.empty()) {
    r.report["cluster_check"] = std::move(checks);
    r.report["cluster_column"] = cfg.diagnose.cluster;
  }
}

inline void run_effects(const AnalysisConfig& cfg, RunResult& r, bool with_bootstrap) {
  require_model(cfg);
  require_treatment(cfg);
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  const ModelSpec spec = cfg.model_spec();
  const FittedModel m = fit_spec(spec, data);
  check_converged(r, m, "model");
  r.report["fit"] = report::model_json(m);
  Json note = Json::object();
  const auto fs = resolved_functionals(cfg, data, &note);
  const auto profile = covariate_profile(data, model_variables(m), cfg.effects.profile);
  std::vector<std::string> warnings;
  Json rows = mte_rows(r, m, profile, fs, cfg.effects.functionals, cfg.effects.treatment, warnings);
  if (cfg.effects.ame) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      try {
        const auto a = average_marginal_effects(m, data, fs[i], cfg.effects.treatment);
        Json row = report::effect_row(report::effect_label("AME", fs[i]), cfg.effects.functionals[i], a.mean, m.rows());
        row["row_failures"] = a.failures;
        rows.push_back(std::move(row));
      } catch (const MomentError& e) {
        Json row = report::effect_row(report::effect_label("AME", fs[i]), cfg.effects.functionals[i], std::nan(""), m.rows());
        row["error"] = e.what();
        rows.push_back(std::move(row));
        flag(r, kExitEstimation, e.what());
      }
    }
  }
  r.report["profile"] = report::profile_json(profile);
  r.report["treatment"] = cfg.effects.treatment;
  if (!note.empty()) r.report["functional_settings"] = std::move(note);
  r.artifacts.push_back(density_artifact(m, profile, cfg.effects.treatment, cfg.effects.density_points));

  if (with_bootstrap) {
    if (cfg.bootstrap.method == BootstrapMethod::none)
      throw ConfigError("the bootstrap subcommand needs [bootstrap] method = parametric or pairs-cluster");
    std::vector<std::string> labels = cfg.effects.functionals;
    const MultiStatistic stat = mte_multi_statistic(profile, fs, cfg.effects.treatment);
    const auto opts = boot_options(cfg);
    const auto res = cfg.bootstrap.method == BootstrapMethod::parametric
                         ? parametric_bootstrap_multi(m, data, stat, labels, opts)
                         : pairs_cluster_bootstrap_multi(data, cfg.bootstrap.cluster, spec, stat, labels, opts);
    bool blocked = false;
    for (std::size_t i = 0; i < res.size(); ++i)
      report::add_inference(rows[i], res[i], cfg.bootstrap.alpha, cfg.bootstrap.max_failure_rate, &blocked);
    if (blocked) flag(r, kExitInference, "bootstrap inference blocked by the failure-rate policy");
    r.report["bootstrap"] = bootstrap_block(cfg, std::string(bootstrap_method_name(cfg.bootstrap.method)), res);
    add_boot_artifacts(r, res, cfg.bootstrap.alpha);
  }
  r.report["effects"] = effect_table(std::move(rows));
  dedupe(warnings);
  r.report["warnings"] = warnings;
}

inline void run_iv(const AnalysisConfig& cfg, RunResult& r) {
  require_model(cfg);
  if (!cfg.iv) throw ConfigError("the iv subcommand needs an [iv] section");
  const auto& ic = *cfg.iv;
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  const ModelSpec spec = cfg.model_spec();
  const FittedModel naive = fit_spec(spec, data);
  const TsriFit t = tsri_fit(data, ic.endogenous, spec, ic.options);
  check_converged(r, t.model, "second stage");
  const auto params = spec.family->parameters();

  Json first = Json::array();
  for (std::size_t s = 0; s < ic.endogenous.size(); ++s) {
    Json j;
    j["variable"] = ic.endogenous[s].variable;
    j["instruments"] = ic.endogenous[s].instruments;
    j["formula"] = ic.endogenous[s].formula;
    j["partial_r2"] = report::num(t.first.partial_r2[s]);
    j["residual_column"] = t.first.residual_columns[s];
    j["residual_scale"] = report::num(t.first.scale[s]);
    j["model"] = report::model_json(t.first.models[s]);
    first.push_back(std::move(j));
  }
  r.report["first_stage"] = std::move(first);
  r.report["first_stage_warnings"] = t.first.warnings;

  // Statistics: each endogenous coefficient in every parameter it enters,
  // then the MTEs when a treatment is configured.
  std::vector<std::pair<std::size_t, std::string>> coefs;
  for (const auto& e : ic.endogenous)
    for (std::size_t k = 0; k < params.size(); ++k) {
      try {
        (void)t.model.coefficient(k, e.variable);
        coefs.emplace_back(k, e.variable);
      } catch (const InvalidInput&) {
      }
    }
  Json rows = Json::array();
  for (const auto& [k, var] : coefs) {
    Json row = report::effect_row("coefficient " + std::string(params[k].symbol) + ":" + var,
                                  std::string(params[k].symbol) + ":" + var, t.model.coefficient(k, var), t.model.rows());
    double nv = std::nan("");
    try {
      nv = naive.coefficient(k, var);
    } catch (const InvalidInput&) {
    }
    row["naive"] = report::num(nv);
    rows.push_back(std::move(row));
  }
  std::vector<Functional> fs;
  std::optional<CovariateProfile> profile;
  std::vector<std::string> warnings;
  if (!cfg.effects.treatment.empty()) {
    Json note = Json::object();
    fs = resolved_functionals(cfg, data, &note);
    profile = covariate_profile(t.data, model_variables(t.model), cfg.effects.profile);
    Json mrows = mte_rows(r, t.model, *profile, fs, cfg.effects.functionals, cfg.effects.treatment, warnings);
    for (auto& row : mrows) rows.push_back(std::move(row));
    r.report["profile"] = report::profile_json(*profile);
    if (!note.empty()) r.report["functional_settings"] = std::move(note);
  }
  std::vector<std::string> labels;
  for (const auto& [k, var] : coefs) labels.push_back(std::string(params[k].symbol) + ":" + var);
  for (const auto& f : cfg.effects.functionals)
    if (profile) labels.push_back(f);
  const MultiStatistic stat = [&coefs, &fs, &profile, treatment = cfg.effects.treatment](const FittedModel& m,
                                                                                          const Dataset& d) {
    std::vector<double> out;
    for (const auto& [k, var] : coefs) out.push_back(m.coefficient(k, var));
    if (profile) {
      const auto more = mte_multi_statistic(*profile, fs, treatment)(m, d);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  };
  IvBootstrapOptions o;
  o.outer = ic.outer;
  o.inner = ic.inner;
  o.seed = cfg.bootstrap.seed;
  o.threads = cfg.bootstrap.threads;
  o.first_stage = ic.first_stage;
  const auto res = iv_bootstrap_multi(data, ic.endogenous, spec, ic.options, stat, labels, o);
  bool blocked = false;
  for (std::size_t i = 0; i < res.size(); ++i)
    report::add_inference(rows[i], res[i], cfg.bootstrap.alpha, cfg.bootstrap.max_failure_rate, &blocked);
  if (blocked) flag(r, kExitInference, "bootstrap inference blocked by the failure-rate policy");
  Json bj = bootstrap_block(cfg, "iv-nested", res);
  bj["outer"] = ic.outer;
  bj["inner"] = ic.inner;
  bj["first_stage"] = std::string(first_stage_name(ic.first_stage));
  r.report["bootstrap"] = std::move(bj);
  add_boot_artifacts(r, res, cfg.bootstrap.alpha);
  r.report["naive_fit"] = report::model_json(naive);
  r.report["fit"] = report::model_json(t.model);
  r.report["effects"] = effect_table(std::move(rows));
  dedupe(warnings);
  r.report["warnings"] = warnings;
}

inline void run_rdd(const AnalysisConfig& cfg, RunResult& r) {
  require_model(cfg);
  if (!cfg.rdd) throw ConfigError("the rdd subcommand needs an [rdd] section");
  if (cfg.bootstrap.method == BootstrapMethod::pairs_cluster)
    throw ConfigError("rdd inference uses parametric resampling; set [bootstrap] method = parametric or none");
  const auto& rc = *cfg.rdd;
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  Json note = Json::object();
  const auto fs = resolved_functionals(cfg, data, &note);
  Json rows = Json::array();
  std::vector<BootstrapResult> all;
  bool blocked = false;
  for (double bw : rc.bandwidths) {
    RddSpec spec;
    spec.forcing = rc.forcing;
    spec.cutoff = rc.cutoff;
    spec.bandwidth = bw;
    spec.model = cfg.model_spec();
    spec.fuzzy = rc.fuzzy;
    spec.treatment = rc.treatment;
    spec.treatment_formula = rc.treatment_formula;
    spec.epsilon = rc.epsilon;
    std::vector<Json> bw_rows;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      Json row = report::effect_row(report::effect_label(rc.fuzzy ? "Fuzzy RDD effect" : "RDD effect", fs[i]),
                                    cfg.effects.functionals[i], std::nan(""), 0);
      row["bandwidth"] = bw > 0 ? Json(bw) : Json("full");
      try {
        const auto e = rdd_fit(data, spec, fs[i]);
        row["Estimate"] = report::num(e.effect.difference);
        row["n"] = e.n_left + e.n_right;
        row["right_limit"] = report::num(e.effect.treated);
        row["left_limit"] = report::num(e.effect.control);
        row["numerator"] = report::num(e.numerator);
        row["denominator"] = report::num(e.denominator);
        row["p_left"] = report::num(e.p_left);
        row["p_right"] = report::num(e.p_right);
        row["n_left"] = e.n_left;
        row["n_right"] = e.n_right;
      } catch (const MomentError& e) {
        row["error"] = e.what();
        flag(r, kExitEstimation, e.what());
      } catch (const EstimationError& e) {
        row["error"] = e.what();
        flag(r, kExitEstimation, e.what());
      }
      bw_rows.push_back(std::move(row));
    }
    if (cfg.bootstrap.method == BootstrapMethod::parametric) {
      auto res = rdd_bootstrap_multi(data, spec, fs, boot_options(cfg));
      for (std::size_t i = 0; i < res.size(); ++i) {
        res[i].statistic = cfg.effects.functionals[i] + "@" + (bw > 0 ? report::Json(bw).dump() : std::string("full"));
        report::add_inference(bw_rows[i], res[i], cfg.bootstrap.alpha, cfg.bootstrap.max_failure_rate, &blocked);
        all.push_back(std::move(res[i]));
      }
    }
    for (auto& row : bw_rows) rows.push_back(std::move(row));
  }
  if (blocked) flag(r, kExitInference, "bootstrap inference blocked by the failure-rate policy");
  Json design;
  design["forcing"] = rc.forcing;
  design["cutoff"] = rc.cutoff;
  design["fuzzy"] = rc.fuzzy;
  if (rc.fuzzy) design["treatment"] = rc.treatment;
  design["epsilon"] = rc.epsilon;
  r.report["design"] = std::move(design);
  if (!note.empty()) r.report["functional_settings"] = std::move(note);
  if (cfg.bootstrap.method == BootstrapMethod::parametric) {
    r.report["bootstrap"] = bootstrap_block(cfg, rc.fuzzy ? "rdd-fuzzy" : "rdd-sharp", all);
    add_boot_artifacts(r, all, cfg.bootstrap.alpha);
  }
  r.report["effects"] = effect_table(std::move(rows));
}

inline void run_panel(const AnalysisConfig& cfg, RunResult& r) {
  require_model(cfg);
  if (!cfg.panel) throw ConfigError("the panel subcommand needs a [panel] section");
  auto [data, summary] = load_data(cfg);
  r.report["data"] = std::move(summary);
  const PanelFit p = panel_fit(data, cfg.panel->unit, cfg.model_spec(), cfg.panel->options);
  check_converged(r, p.model, "panel model");
  r.report["fit"] = report::model_json(p.model);
  r.report["residuals"] = report::residual_table({cfg.model.family}, {residuals_for(p.model, p.data, cfg.bootstrap.seed)});
  Json pj;
  pj["unit"] = cfg.panel->unit;
  pj["mundlak"] = cfg.panel->options.mundlak;
  pj["parameters"] = cfg.panel->options.parameters;
  pj["random_effect"] = cfg.panel->options.random_effect;
  pj["lambda"] = cfg.panel->options.lambda;
  r.report["panel"] = std::move(pj);
  if (!cfg.effects.treatment.empty()) {
    std::vector<std::string> vars;
    for (const auto& v : model_variables(p.model))
      if (v != cfg.panel->unit) vars.push_back(v);
    auto profile = covariate_profile(p.data, vars, cfg.effects.profile);
    // A level absent from the fit: the unit effect drops out of the profile.
    if (!p.data.column(cfg.panel->unit).is_categorical())
      throw ConfigError("panel: unit column '" + cfg.panel->unit + "' must be categorical");
    profile.set(cfg.panel->unit, std::string("(population)"));
    Json note = Json::object();
    const auto fs = resolved_functionals(cfg, data, &note);
    std::vector<std::string> warnings;
    r.report["effects"] = effect_table(mte_rows(r, p.model, profile, fs, cfg.effects.functionals, cfg.effects.treatment, warnings));
    r.report["profile"] = report::profile_json(profile);
    if (!note.empty()) r.report["functional_settings"] = std::move(note);
    dedupe(warnings);
    r.report["warnings"] = warnings;
  }
}

inline void run_simulate(const AnalysisConfig& cfg, RunResult& r) {
  const auto sc = load_simulation(cfg);
  auto sim = simulate(sc);
  std::filesystem::path out(sc.output);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_csv(sc.output, sim.data);
  report::write_json(sc.truth, sim.truth);
  Json j;
  j["output"] = sc.output;
  j["truth"] = sc.truth;
  j["rows"] = sim.data.rows();
  j["file_hash"] = file_hash(sc.output);
  Json schema = Json::object();
  for (const auto& c : sim.data.columns()) schema[c.name] = std::string(column_type_name(c.type));
  j["schema"] = std::move(schema);
  r.report["simulation"] = std::move(j);
  r.report["truth"] = std::move(sim.truth);
}

}  // namespace detail

/// Runs one subcommand. Errors that stop the pipeline propagate as
/// exceptions; problems found after a report can still be written (moment
/// failures, blocked inference, non-convergence) set `status` instead.
inline RunResult run(const std::string& subcommand, const AnalysisConfig& cfg) {
  RunResult r;
  r.report["schema_version"] = report::kSchemaVersion;
  r.report["subcommand"] = subcommand;
  Json prov;
  prov["config_hash"] = cfg.hash();
  prov["seed"] = cfg.bootstrap.seed;
  prov["config"] = report::config_json(cfg.source);
  r.report["provenance"] = std::move(prov);
  if (subcommand == "fit") detail::run_fit(cfg, r);
  else if (subcommand == "diagnose") detail::run_diagnose(cfg, r);
  else if (subcommand == "effects") detail::run_effects(cfg, r, false);
  else if (subcommand == "bootstrap") detail::run_effects(cfg, r, true);
  else if (subcommand == "iv") detail::run_iv(cfg, r);
  else if (subcommand == "rdd") detail::run_rdd(cfg, r);
  else if (subcommand == "panel") detail::run_panel(cfg, r);
  else if (subcommand == "simulate") detail::run_simulate(cfg, r);
  else throw ConfigError("unknown subcommand '" + subcommand + "'");
  Json names = Json::array();
  for (const auto& a : r.artifacts) names.push_back(a.name);
  r.report["artifacts"] = std::move(names);
  r.report["status"] = r.status;
  if (r.status != kExitOk) r.report["status_message"] = r.message;
  return r;
}

/// Writes report.json and the artifacts into `dir`/<subcommand>.
inline std::filesystem::path write_outputs(const RunResult& r, const std::filesystem::path& dir) {
  const auto target = dir / r.report.at("subcommand").get<std::string>();
  std::filesystem::create_directories(target);
  report::write_json((target / "report.json").string(), r.report);
  for (const auto& a : r.artifacts) {
    std::ofstream out(target / a.name, std::ios::binary);
    if (!out) throw DataError("cannot write '" + (target / a.name).string() + "'");
    out << a.content;
  }
  return target;
}

/// Configuration and subcommand recorded in a report's provenance block.
inline std::pair<std::string, AnalysisConfig> from_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("report '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("provenance") || !j.contains("subcommand")) throw ConfigError("report has no provenance block");
  if (j.value("schema_version", 0) != report::kSchemaVersion)
    throw ConfigError("report schema version " + j["schema_version"].dump() + " is not supported");
  AnalysisConfig cfg = load_config(report::config_from_json(j["provenance"]["config"]),
                                   std::filesystem::current_path());
  if (cfg.hash() != j["provenance"]["config_hash"].get<std::string>())
    throw ConfigError("report provenance does not reproduce its config hash");
  if (j.contains("data") && j["data"].contains("file_hash") &&
      detail::file_hash(cfg.data_path) != j["data"]["file_hash"].get<std::string>())
    throw DataError("data file '" + cfg.data_path + "' changed since the report was written");
  return {j["subcommand"].get<std::string>(), std::move(cfg)};
}

}  // namespace gamlss::cli
