#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gamlss/bootstrap.hpp"
#include "gamlss/config.hpp"
#include "gamlss/diagnostics.hpp"
#include "gamlss/effects.hpp"
#include "gamlss/fit.hpp"

namespace gamlss::report {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kModelFormatVersion = 1;

/// Non-finite numbers become null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json num_list(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

/// Versioned fitted-model document: coefficients, smoothing weights, edf and
/// the deviance trace.
inline Json model_json(const FittedModel& m) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["family"] = std::string(m.family().name());
  j["response"] = m.spec.response;
  j["n"] = m.rows();
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  j["loglik"] = num(m.loglik);
  j["global_deviance"] = num(m.global_deviance);
  j["penalized_deviance"] = num(m.penalized_deviance);
  j["edf"] = num(m.total_edf());
  j["gaic"] = num(gaic(m));
  const auto params = m.family().parameters();
  Json ps = Json::array();
  for (std::size_t k = 0; k < m.coefficients.size(); ++k) {
    Json p;
    p["parameter"] = std::string(params[k].symbol);
    p["link"] = std::string(m.spec.formulas.links[k].name());
    Json coef = Json::object();
    Eigen::Index off = 0;
    for (const auto& b : m.design[k].blocks) {
      for (std::size_t c = 0; c < b.column_names.size(); ++c)
        coef[b.column_names[c]] = num(m.coefficients[k][off + static_cast<Eigen::Index>(c)]);
      off += b.size();
    }
    p["coefficients"] = std::move(coef);
    Json blocks = Json::array();
    for (const auto& b : m.blocks[k]) {
      Json bj;
      bj["term"] = b.label;
      bj["size"] = b.size;
      bj["penalized"] = b.penalized;
      bj["lambda"] = num(b.lambda);
      bj["edf"] = num(b.edf);
      blocks.push_back(std::move(bj));
    }
    p["blocks"] = std::move(blocks);
    ps.push_back(std::move(p));
  }
  j["parameters"] = std::move(ps);
  j["trace"] = num_list(m.trace);
  j["warnings"] = m.warnings;
  return j;
}

inline const std::vector<std::string>& residual_row_labels() {
  static const std::vector<std::string> k{"Mean", "Variance", "Coef. of Skewness", "Coef. of Kurtosis",
                                          "Filliben Correlation Coef."};
  return k;
}

/// Residual summaries side by side, one column per model.
inline Json residual_table(const std::vector<std::string>& columns, const std::vector<ResidualSummary>& s) {
  Json t;
  t["columns"] = columns;
  Json rows = Json::array();
  for (std::size_t r = 0; r < 5; ++r) {
    Json row;
    row["statistic"] = residual_row_labels()[r];
    Json vals = Json::array();
    for (const auto& x : s) {
      const double v[] = {x.mean, x.variance, x.skewness, x.kurtosis, x.filliben};
      vals.push_back(num(v[r]));
    }
    row["values"] = std::move(vals);
    rows.push_back(std::move(row));
  }
  t["rows"] = std::move(rows);
  t["reference"] = {0.0, 1.0, 0.0, 3.0, 1.0};
  return t;
}

inline Json cluster_check_json(const ClusterCheck& c) {
  Json j;
  j["clusters"] = c.clusters;
  j["adjusted_r2"] = num(c.adjusted_r2);
  j["f_statistic"] = num(c.f_statistic);
  j["p_value"] = num(c.p_value);
  return j;
}

/// Row label in the effect table, e.g. "MTE on Gini coefficient".
inline std::string effect_label(const std::string& prefix, const Functional& f) {
  char buf[64];
  switch (f.kind) {
    case FunctionalKind::mean: return prefix + " on mean";
    case FunctionalKind::variance: return prefix + " on variance";
    case FunctionalKind::gini: return prefix + " on Gini coefficient";
    case FunctionalKind::theil: return prefix + " on Theil index";
    case FunctionalKind::vulnerability: return prefix + " on vulnerability";
    case FunctionalKind::atkinson: std::snprintf(buf, sizeof buf, " on Atkinson index (e=%g)", f.arg); break;
    case FunctionalKind::quantile: std::snprintf(buf, sizeof buf, " on quantile (p=%g)", f.arg); break;
  }
  return prefix + buf;
}

inline const std::vector<std::string>& effect_columns() {
  static const std::vector<std::string> k{"Estimate", "Lower Bound", "Upper Bound", "n", "B"};
  return k;
}

/// Effect-table row without inference.
inline Json effect_row(const std::string& label, const std::string& functional, double estimate, std::size_t n) {
  Json r;
  r["label"] = label;
  r["functional"] = functional;
  r["Estimate"] = num(estimate);
  r["Lower Bound"] = nullptr;
  r["Upper Bound"] = nullptr;
  r["n"] = n;
  r["B"] = 0;
  return r;
}

/// Adds bootstrap inference to a row. Refused summaries leave the bounds
/// null and record the reason.
inline void add_inference(Json& row, const BootstrapResult& r, double alpha, double max_failure_rate,
                          bool* blocked) {
  row["B"] = r.requested;
  row["successes"] = r.successes();
  row["failures"] = r.failures.size();
  std::map<std::string, std::size_t> reasons;
  for (const auto& f : r.failures) ++reasons[f.reason];
  Json rj = Json::object();
  for (const auto& [k, v] : reasons) rj[k] = v;
  row["failure_reasons"] = std::move(rj);
  try {
    const auto s = summarize(r, alpha, max_failure_rate);
    row["Lower Bound"] = num(s.ci.lower);
    row["Upper Bound"] = num(s.ci.upper);
    row["bootstrap_mean"] = num(s.replicate_mean);
    row["variance"] = num(s.variance);
    row["se"] = num(s.se);
    row["t"] = s.test.defined ? num(s.test.t) : Json(nullptr);
    row["p_value"] = s.test.defined ? num(s.test.p) : Json(nullptr);
    row["alpha"] = alpha;
    if (!s.warnings.empty()) row["warnings"] = s.warnings;
    row["inference"] = "ok";
  } catch (const InferenceBlocked& e) {
    row["inference"] = "blocked";
    row["blocked_reason"] = e.what();
    if (blocked) *blocked = true;
  }
}

inline Json boot_diagnostics_json(const BootstrapResult& r, double alpha) {
  Json j;
  j["statistic"] = r.statistic;
  if (r.values.empty()) {
    j["available"] = false;
    return j;
  }
  const auto d = diagnose_boot(r);
  j["available"] = true;
  j["min"] = num(d.minimum);
  j["q1"] = num(d.q1);
  j["median"] = num(d.median);
  j["q3"] = num(d.q3);
  j["max"] = num(d.maximum);
  j["iqr"] = num(d.iqr);
  j["lower_fence"] = num(d.lower_fence);
  j["upper_fence"] = num(d.upper_fence);
  j["outliers"] = d.outliers;
  j["skewness"] = num(d.skewness);
  j["warning"] = d.warning;
  if (!d.message.empty()) j["message"] = d.message;
  const auto t = convergence_trace(r, alpha);
  j["trace_stable"] = t.stable;
  return j;
}

inline Json profile_json(const CovariateProfile& p) {
  Json a = Json::array();
  for (const auto& e : p.entries) {
    Json j;
    j["variable"] = e.variable;
    if (e.categorical()) j["level"] = e.level;
    else j["value"] = num(e.number);
    j["source"] = std::string(provenance_name(e.provenance));
    a.push_back(std::move(j));
  }
  return a;
}

inline Json config_json(const IniDocument& doc) {
  Json j = Json::object();
  for (const auto& [section, entries] : doc.sections) {
    if (section == "output") continue;
    Json s = Json::object();
    for (const auto& [k, v] : entries) s[k] = v;
    j[section] = std::move(s);
  }
  return j;
}

inline IniDocument config_from_json(const Json& j) {
  IniDocument doc;
  if (!j.is_object()) throw ConfigError("provenance: config block is missing");
  for (const auto& [section, entries] : j.items()) {
    if (!entries.is_object()) throw ConfigError("provenance: section '" + section + "' is not an object");
    for (const auto& [k, v] : entries.items()) {
      if (!v.is_string()) throw ConfigError("provenance: " + section + "." + k + " is not a string");
      doc.set(section, k, v.get<std::string>());
    }
  }
  return doc;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace gamlss::report
