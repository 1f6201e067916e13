#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gamlss/data.hpp"
#include "gamlss/design.hpp"
#include "gamlss/error.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/formula.hpp"
#include "gamlss/functionals.hpp"

namespace gamlss {

// ---------------------------------------------------------------------------
// Covariate profiles

enum class Provenance { mean, mode, user };

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::mean: return "mean";
    case Provenance::mode: return "mode";
    case Provenance::user: return "user";
  }
  return "mean";
}

struct ProfileEntry {
  std::string variable;
  ColumnType type = ColumnType::numeric;
  double number = 0.0;
  std::string level;
  Provenance provenance = Provenance::mean;

  [[nodiscard]] bool categorical() const { return type == ColumnType::categorical; }
};

/// One representative covariate row: means of numeric columns, modes of
/// categorical ones, plus user overrides.
struct CovariateProfile {
  std::vector<ProfileEntry> entries;

  [[nodiscard]] const ProfileEntry& at(const std::string& var) const {
    for (const auto& e : entries)
      if (e.variable == var) return e;
    throw InvalidInput("profile has no variable '" + var + "'");
  }

  void set(const std::string& var, double value) {
    for (auto& e : entries)
      if (e.variable == var) {
        if (e.categorical()) throw InvalidInput("profile: '" + var + "' is categorical");
        e.number = value;
        e.provenance = Provenance::user;
        return;
      }
    entries.push_back({var, ColumnType::numeric, value, {}, Provenance::user});
  }

  void set(const std::string& var, const std::string& level) {
    for (auto& e : entries)
      if (e.variable == var) {
        if (!e.categorical()) throw InvalidInput("profile: '" + var + "' is numeric");
        e.level = level;
        e.provenance = Provenance::user;
        return;
      }
    entries.push_back({var, ColumnType::categorical, 0.0, level, Provenance::user});
  }

  /// The profile as a one-row dataset.
  [[nodiscard]] Dataset row() const {
    Dataset d;
    for (const auto& e : entries) {
      if (e.categorical()) d.add_categorical(e.variable, {e.level});
      else d.add_numeric(e.variable, {e.number}, e.type);
    }
    return d;
  }
};

/// Profile over every column of `data` (or only `variables` when given).
/// Overrides are parsed according to the column type.
inline CovariateProfile covariate_profile(const Dataset& data, const std::vector<std::string>& variables = {},
                                          const std::map<std::string, std::string>& overrides = {}) {
  if (data.rows() == 0) throw InvalidInput("covariate profile: dataset is empty");
  std::vector<std::string> vars = variables;
  if (vars.empty())
    for (const auto& c : data.columns()) vars.push_back(c.name);
  CovariateProfile p;
  for (const auto& v : vars) {
    const Column& c = data.column(v);
    ProfileEntry e;
    e.variable = v;
    e.type = c.type;
    if (auto it = overrides.find(v); it != overrides.end()) {
      e.provenance = Provenance::user;
      if (c.is_categorical()) e.level = it->second;
      else e.number = detail::parse_number(it->second, "profile override for '" + v + "'");
    } else if (c.is_categorical()) {
      e.provenance = Provenance::mode;
      std::map<std::string, std::size_t> counts;
      for (const auto& l : c.levels)
        if (!l.empty()) ++counts[l];
      if (counts.empty()) throw InvalidInput("covariate profile: '" + v + "' has no observed level");
      std::size_t best = 0;
      // std::map iterates in lexicographic order, so strict > keeps the first level on ties.
      for (const auto& [l, n] : counts)
        if (n > best) {
          best = n;
          e.level = l;
        }
    } else {
      e.provenance = Provenance::mean;
      double s = 0.0;
      std::size_t n = 0;
      for (double x : c.numbers)
        if (!std::isnan(x)) {
          s += x;
          ++n;
        }
      if (n == 0) throw InvalidInput("covariate profile: '" + v + "' has no observed value");
      e.number = s / static_cast<double>(n);
    }
    p.entries.push_back(std::move(e));
  }
  for (const auto& [v, _] : overrides)
    if (std::find(vars.begin(), vars.end(), v) == vars.end())
      throw InvalidInput("profile override for unknown variable '" + v + "'");
  return p;
}

// ---------------------------------------------------------------------------
// Treatment effects

struct EffectEstimate {
  std::string functional;
  double treated = 0.0;     // value under T = 1
  double control = 0.0;     // value under T = 0
  double difference = 0.0;  // treated - control
  std::optional<double> lower, upper;
};

namespace detail {

inline void require_binary_treatment(const FittedModel& model, const std::string& treatment) {
  auto it = std::find_if(model.schema.begin(), model.schema.end(),
                         [&](const auto& s) { return s.first == treatment; });
  if (it == model.schema.end()) throw InvalidInput("treatment '" + treatment + "' does not enter the model");
  if (it->second != "numeric") throw InvalidInput("treatment '" + treatment + "' must be a numeric 0/1 column");
}

inline DistSpec arm_distribution(const FittedModel& model, CovariateProfile profile, const std::string& treatment,
                                 double arm, std::vector<std::string>* warnings) {
  profile.set(treatment, arm);
  const auto theta = predict_parameters(model, profile.row(), warnings);
  return {model.spec.family, theta.front()};
}

template <class E>
[[noreturn]] void rethrow_for_arm(const E& e, double arm) {
  throw E("arm " + std::string(arm == 1.0 ? "T=1" : "T=0") + ": " + e.what());
}

inline double evaluate_arm(const Functional& f, const DistSpec& d, double arm) {
  try {
    return evaluate(f, d);
  } catch (const MomentError& e) {
    rethrow_for_arm(e, arm);
  } catch (const InvalidInput& e) {
    rethrow_for_arm(e, arm);
  }
}

}  // namespace detail

/// Effect of switching the treatment from 0 to 1 at a fixed covariate profile.
inline EffectEstimate mte(const FittedModel& model, const CovariateProfile& profile, const Functional& functional,
                          const std::string& treatment, std::vector<std::string>* warnings = nullptr) {
  detail::require_binary_treatment(model, treatment);
  EffectEstimate e;
  e.functional = functional.name();
  e.treated = detail::evaluate_arm(functional, detail::arm_distribution(model, profile, treatment, 1.0, warnings), 1.0);
  e.control = detail::evaluate_arm(functional, detail::arm_distribution(model, profile, treatment, 0.0, warnings), 0.0);
  e.difference = e.treated - e.control;
  return e;
}

struct AverageEffects {
  std::string functional;
  std::vector<double> effects;  // per row; NaN where the functional failed
  std::size_t failures = 0;
  double mean = 0.0;
  std::vector<std::pair<double, double>> quantiles;  // (probability, value)
};

inline double type7_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Per-row treatment effects over the observed covariate rows.
inline AverageEffects average_marginal_effects(const FittedModel& model, const Dataset& data,
                                               const Functional& functional, const std::string& treatment) {
  detail::require_binary_treatment(model, treatment);
  if (data.rows() == 0) throw InvalidInput("average marginal effects: dataset is empty");
  Dataset d1 = data, d0 = data;
  d1.set_numeric(treatment, std::vector<double>(data.rows(), 1.0));
  d0.set_numeric(treatment, std::vector<double>(data.rows(), 0.0));
  const auto th1 = predict_parameters(model, d1);
  const auto th0 = predict_parameters(model, d0);
  AverageEffects out;
  out.functional = functional.name();
  out.effects.resize(data.rows());
  std::vector<double> ok;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    try {
      out.effects[i] = evaluate(functional, {model.spec.family, th1[i]}) - evaluate(functional, {model.spec.family, th0[i]});
      ok.push_back(out.effects[i]);
    } catch (const MomentError&) {
      out.effects[i] = std::numeric_limits<double>::quiet_NaN();
      ++out.failures;
    }
  }
  if (ok.empty()) throw MomentError("average marginal effects: functional failed on every row");
  double s = 0.0;
  for (double v : ok) s += v;
  out.mean = s / static_cast<double>(ok.size());
  std::sort(ok.begin(), ok.end());
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) out.quantiles.emplace_back(p, type7_quantile(ok, p));
  return out;
}

struct DensityCurve {
  std::string label;
  double arm = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
};

/// Conditional densities (probability masses for count families) on `grid`
/// for each labelled profile under both treatment arms.
inline std::vector<DensityCurve> conditional_density_curves(
    const FittedModel& model, const std::vector<std::pair<std::string, CovariateProfile>>& profiles,
    const std::vector<double>& grid, const std::string& treatment) {
  detail::require_binary_treatment(model, treatment);
  const Family& fam = model.family();
  std::vector<double> points = grid;
  if (fam.kind() == Kind::discrete) {
    std::set<double> ints;
    for (double g : grid)
      if (g >= 0) ints.insert(std::round(g));
    points.assign(ints.begin(), ints.end());
  }
  std::vector<DensityCurve> out;
  for (const auto& [label, profile] : profiles) {
    for (double arm : {0.0, 1.0}) {
      const DistSpec d = detail::arm_distribution(model, profile, treatment, arm, nullptr);
      DensityCurve c{label, arm, points, {}};
      for (double y : points) c.density.push_back(fam.in_support(y) ? fam.pdf(y, d.theta) : 0.0);
      out.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression (treatment probabilities)

struct LogisticFit {
  Eigen::VectorXd beta;
  bool converged = false;
  bool constant = false;   // all responses equal; probability is exact
  double constant_p = 0.0;
  int iterations = 0;

  [[nodiscard]] double probability(const Eigen::RowVectorXd& x) const {
    if (constant) return constant_p;
    const double eta = std::clamp(x.dot(beta), -36.0, 36.0);
    return 1.0 / (1.0 + std::exp(-eta));
  }
};

/// Newton-Raphson (IRLS) for P(t = 1 | x) = logistic(x'beta).
inline LogisticFit logistic_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& t, int max_iter = 100,
                                       double tol = 1e-10) {
  if (X.rows() != t.size() || X.rows() == 0) throw InvalidInput("logistic regression: bad dimensions");
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if (t[i] != 0.0 && t[i] != 1.0) throw InvalidInput("logistic regression: treatment must be 0/1");
  LogisticFit f;
  f.beta = Eigen::VectorXd::Zero(X.cols());
  const double share = t.mean();
  if (share == 0.0 || share == 1.0) {
    f.constant = true;
    f.constant_p = share;
    f.converged = true;
    return f;
  }
  for (f.iterations = 1; f.iterations <= max_iter; ++f.iterations) {
    const Eigen::VectorXd eta = (X * f.beta).array().max(-36.0).min(36.0);
    const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-10).matrix();
    const Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd g = X.transpose() * (t - p);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw EstimationError("logistic regression: singular information matrix");
    const Eigen::VectorXd step = ldlt.solve(g);
    f.beta += step;
    if (step.lpNorm<Eigen::Infinity>() < tol * (1.0 + f.beta.lpNorm<Eigen::Infinity>())) {
      f.converged = true;
      break;
    }
  }
  return f;
}

/// Logistic model of a 0/1 column on a formula, kept with its design recipe.
struct ProbabilityModel {
  ParameterDesign design;
  LogisticFit fit;

  [[nodiscard]] double predict(const Dataset& row) const {
    Eigen::RowVectorXd x(design.size());
    for (std::size_t j = 0; j < design.blocks.size(); ++j)
      x.segment(design.offsets[j], design.blocks[j].size()) = rebuild_basis(design.blocks[j], row).row(0);
    return fit.probability(x);
  }
};

inline ProbabilityModel fit_probability_model(const Dataset& data, const std::string& treatment,
                                              const std::string& formula) {
  FormulaSet fs;
  fs.terms.push_back(parse_formula(formula));
  fs.links.push_back(Link(LinkKind::logit));
  ProbabilityModel m;
  m.design = std::move(assemble_design(fs, data).params.front());
  const auto& t = data.numeric(treatment);
  m.fit = logistic_regression(m.design.X, Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size())));
  return m;
}

// ---------------------------------------------------------------------------
// Two-stage residual inclusion

struct EndogenousSpec {
  std::string variable;
  std::vector<std::string> instruments;
  std::string formula;          // first-stage mean predictor, instruments included
  std::string link = "identity";
};

struct TsriOptions {
  bool standardize = false;
  bool nonlinear = false;       // enter residuals as P-splines instead of linearly
  PsplineOptions spline{10, 3, 2};
  double weak_instrument_floor = 0.01;  // partial R² of the instruments
};

struct FirstStage {
  std::vector<FittedModel> models;
  std::vector<std::string> residual_columns;
  std::vector<std::vector<double>> residuals;
  std::vector<double> scale;        // divisor applied to each residual vector
  std::vector<double> partial_r2;
  std::vector<std::string> warnings;
};

struct TsriFit {
  FittedModel model;   // second stage
  FirstStage first;
  Dataset data;        // input plus residual columns
};

inline std::string residual_column(const std::string& variable) { return "xi_" + variable; }

namespace detail {

inline double ols_rss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
  return (y - X * b).squaredNorm();
}

inline void validate_tsri(const std::vector<EndogenousSpec>& endo, const FormulaSet& outcome) {
  if (endo.empty()) throw InvalidInput("2SRI: no endogenous variable given");
  const auto used = outcome.variables();
  for (const auto& e : endo) {
    if (e.instruments.empty())
      throw InvalidInput("2SRI: endogenous '" + e.variable + "' has no instrument");
    if (std::find(used.begin(), used.end(), e.variable) == used.end())
      throw InvalidInput("2SRI: endogenous '" + e.variable + "' does not enter the outcome model");
    FormulaSet fs;
    fs.terms.push_back(parse_formula(e.formula));
    fs.links.push_back(Link(LinkKind::identity));
    const auto first_vars = fs.variables();
    for (const auto& w : e.instruments) {
      if (std::find(first_vars.begin(), first_vars.end(), w) == first_vars.end())
        throw InvalidInput("2SRI: instrument '" + w + "' is missing from the first stage of '" + e.variable + "'");
      if (std::find(used.begin(), used.end(), w) != used.end())
        throw InvalidInput("2SRI: instrument '" + w + "' also enters the outcome model");
    }
    if (std::find(first_vars.begin(), first_vars.end(), e.variable) != first_vars.end())
      throw InvalidInput("2SRI: '" + e.variable + "' appears in its own first stage");
  }
}

}  // namespace detail

/// Gaussian mean models of each endogenous regressor. When `refit_on` is
/// given the models are estimated on those rows (bootstrap) but residuals are
/// always formed on `data`. Standardization scales come from `fixed_scale`
/// when supplied.
inline FirstStage tsri_first_stage(const Dataset& data, const std::vector<EndogenousSpec>& endo,
                                   const TsriOptions& opts, const Dataset* refit_on = nullptr,
                                   const std::vector<double>* fixed_scale = nullptr) {
  const auto normal = make_family("normal");
  const Dataset& est = refit_on ? *refit_on : data;
  FirstStage fs;
  for (std::size_t s = 0; s < endo.size(); ++s) {
    const auto& e = endo[s];
    ModelSpec spec;
    spec.family = normal;
    spec.formulas = make_formulas(*normal, {{"mu", e.formula}}, {{"mu", e.link}});
    spec.response = e.variable;
    FittedModel m = fit_model(spec, est);
    if (!m.converged) throw EstimationError("2SRI first stage for '" + e.variable + "' did not converge");
    const auto& x = data.numeric(e.variable);
    const auto theta = predict_parameters(m, data);
    std::vector<double> xi(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xi[i] = x[i] - theta[i][0];
    double scale = 1.0;
    if (fixed_scale) {
      scale = (*fixed_scale)[s];
    } else if (opts.standardize) {
      double mean = 0, ss = 0;
      for (double v : xi) mean += v;
      mean /= static_cast<double>(xi.size());
      for (double v : xi) ss += (v - mean) * (v - mean);
      scale = std::sqrt(ss / static_cast<double>(xi.size() - 1));
      if (!(scale > 0)) throw EstimationError("2SRI: first-stage residuals of '" + e.variable + "' are constant");
    }
    for (double& v : xi) v /= scale;

    // Partial R² of the instruments from linear projections on the estimation rows.
    const Eigen::MatrixXd& Xf = m.design[0].X;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < m.design[0].blocks.size(); ++j) {
      const auto& b = m.design[0].blocks[j];
      const bool instrument = std::any_of(b.variables.begin(), b.variables.end(), [&](const std::string& v) {
        return std::find(e.instruments.begin(), e.instruments.end(), v) != e.instruments.end();
      });
      if (!instrument)
        for (Eigen::Index c = 0; c < b.size(); ++c) keep.push_back(m.design[0].offsets[j] + c);
    }
    Eigen::MatrixXd Xr(Xf.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) Xr.col(static_cast<Eigen::Index>(c)) = Xf.col(keep[c]);
    const auto& xe = est.numeric(e.variable);
    const Eigen::Map<const Eigen::VectorXd> yv(xe.data(), static_cast<Eigen::Index>(xe.size()));
    const double rss_r = detail::ols_rss(Xr, yv);
    const double rss_f = detail::ols_rss(Xf, yv);
    const double pr2 = rss_r > 0 ? (rss_r - rss_f) / rss_r : 0.0;
    if (pr2 < opts.weak_instrument_floor) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "weak instruments for '%s': partial R^2 %.4g below %.4g", e.variable.c_str(),
                    pr2, opts.weak_instrument_floor);
      fs.warnings.emplace_back(buf);
    }
    fs.models.push_back(std::move(m));
    fs.residual_columns.push_back(residual_column(e.variable));
    fs.residuals.push_back(std::move(xi));
    fs.scale.push_back(scale);
    fs.partial_r2.push_back(pr2);
  }
  return fs;
}

/// Outcome formulas with every residual column appended to every parameter.
inline FormulaSet with_residual_terms(FormulaSet f, const std::vector<std::string>& columns, const TsriOptions& opts) {
  for (auto& terms : f.terms)
    for (const auto& c : columns)
      terms.push_back(opts.nonlinear ? TermSpec::pspline(c, opts.spline) : TermSpec::linear(c));
  return f;
}

inline Dataset with_residual_columns(Dataset data, const FirstStage& fs) {
  for (std::size_t s = 0; s < fs.residuals.size(); ++s) data.add_numeric(fs.residual_columns[s], fs.residuals[s]);
  return data;
}

inline TsriFit tsri_fit(const Dataset& data, const std::vector<EndogenousSpec>& endo, const ModelSpec& outcome,
                        const TsriOptions& opts = {}) {
  detail::validate_tsri(endo, outcome.formulas);
  TsriFit out;
  out.first = tsri_first_stage(data, endo, opts);
  out.data = with_residual_columns(data, out.first);
  ModelSpec spec = outcome;
  spec.formulas = with_residual_terms(outcome.formulas, out.first.residual_columns, opts);
  out.model = fit_spec(spec, out.data);
  out.model.warnings.insert(out.model.warnings.end(), out.first.warnings.begin(), out.first.warnings.end());
  return out;
}

// ---------------------------------------------------------------------------
// Regression discontinuity

struct RddSpec {
  std::string forcing;
  double cutoff = 0.0;
  double bandwidth = 0.0;   // <= 0 uses the full range
  ModelSpec model;          // fitted separately on each side
  bool fuzzy = false;
  std::string treatment;    // fuzzy only
  std::string treatment_formula;  // fuzzy only; defaults to the forcing variable
  double epsilon = 0.05;    // minimum |denominator| for identification
};

struct RddEstimate {
  EffectEstimate effect;   // treated = right limit, control = left limit (divided by the denominator when fuzzy)
  double numerator = 0.0;
  double denominator = 1.0;
  double p_left = 0.0, p_right = 1.0;
  std::size_t n_left = 0, n_right = 0;
  double bandwidth = 0.0;
  std::optional<FittedModel> left, right;
};

namespace detail {

struct RddWindow {
  Dataset left, right;
  Dataset at_cutoff;  // profile row with the forcing variable at the cutoff
};

inline RddWindow rdd_window(const Dataset& data, const RddSpec& spec) {
  if (spec.forcing.empty()) throw InvalidInput("RDD: no forcing variable");
  const auto& x = data.numeric(spec.forcing);
  const bool full = !(spec.bandwidth > 0);
  auto in = [&](std::size_t i) { return full || std::abs(x[i] - spec.cutoff) <= spec.bandwidth; };
  Dataset window = data.filter(in);
  RddWindow w;
  w.left = data.filter([&](std::size_t i) { return in(i) && x[i] < spec.cutoff; });
  w.right = data.filter([&](std::size_t i) { return in(i) && x[i] >= spec.cutoff; });
  if (w.left.rows() == 0 || w.right.rows() == 0)
    throw InvalidInput(std::string("RDD: no observations on the ") + (w.left.rows() == 0 ? "left" : "right") +
                       " side of the cutoff within the window");
  std::vector<std::string> vars = spec.model.formulas.variables();
  if (spec.fuzzy) {
    FormulaSet tf;
    tf.terms.push_back(parse_formula(spec.treatment_formula.empty() ? spec.forcing : spec.treatment_formula));
    tf.links.push_back(Link(LinkKind::logit));
    for (const auto& v : tf.variables()) vars.push_back(v);
  }
  if (std::find(vars.begin(), vars.end(), spec.forcing) == vars.end()) vars.push_back(spec.forcing);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  CovariateProfile p = covariate_profile(window, vars);
  p.set(spec.forcing, spec.cutoff);
  w.at_cutoff = p.row();
  return w;
}

inline FittedModel rdd_side_fit(const ModelSpec& spec, const Dataset& side, const char* name) {
  const Eigen::Index p = assemble_design(spec.formulas, side, spec.design).total_coefficients();
  if (static_cast<Eigen::Index>(side.rows()) <= p)
    throw InvalidInput(std::string("RDD ") + name + " side: " + std::to_string(side.rows()) +
                       " observations for " + std::to_string(p) + " coefficients");
  FittedModel m = fit_spec(spec, side);
  if (!m.converged) throw EstimationError(std::string("RDD ") + name + " side model did not converge");
  return m;
}

inline std::string treatment_formula(const RddSpec& spec) {
  return spec.treatment_formula.empty() ? spec.forcing : spec.treatment_formula;
}

/// Combines side fits and side probabilities into an estimate.
inline RddEstimate rdd_combine(const RddSpec& spec, const RddWindow& w, FittedModel left, FittedModel right,
                               double p_left, double p_right, const Functional& functional) {
  RddEstimate r;
  r.effect.functional = functional.name();
  const DistSpec dl{spec.model.family, predict_parameters(left, w.at_cutoff).front()};
  const DistSpec dr{spec.model.family, predict_parameters(right, w.at_cutoff).front()};
  const double fl = evaluate(functional, dl);
  const double fr = evaluate(functional, dr);
  r.numerator = fr - fl;
  r.p_left = p_left;
  r.p_right = p_right;
  r.denominator = spec.fuzzy ? p_right - p_left : 1.0;
  if (std::abs(r.denominator) < spec.epsilon)
    throw EstimationError("RDD: treatment probability jump " + std::to_string(r.denominator) +
                          " at the cutoff is below the identification threshold; no identification");
  r.effect.treated = fr / r.denominator;
  r.effect.control = fl / r.denominator;
  r.effect.difference = r.effect.treated - r.effect.control;
  r.n_left = w.left.rows();
  r.n_right = w.right.rows();
  r.bandwidth = spec.bandwidth;
  r.left = std::move(left);
  r.right = std::move(right);
  return r;
}

}  // namespace detail

/// Sharp design: right limit minus left limit of the functional at the cutoff.
inline RddEstimate srd_fit(const Dataset& data, const RddSpec& spec, const Functional& functional) {
  RddSpec sharp = spec;
  sharp.fuzzy = false;
  const auto w = detail::rdd_window(data, sharp);
  auto left = detail::rdd_side_fit(sharp.model, w.left, "left");
  auto right = detail::rdd_side_fit(sharp.model, w.right, "right");
  return detail::rdd_combine(sharp, w, std::move(left), std::move(right), 0.0, 1.0, functional);
}

/// Fuzzy design: the sharp numerator divided by the jump in the fitted
/// treatment probability at the cutoff.
inline RddEstimate frd_fit(const Dataset& data, const RddSpec& spec, const Functional& functional) {
  if (spec.treatment.empty()) throw InvalidInput("fuzzy RDD needs a treatment variable");
  RddSpec fuzzy = spec;
  fuzzy.fuzzy = true;
  const auto w = detail::rdd_window(data, fuzzy);
  auto left = detail::rdd_side_fit(fuzzy.model, w.left, "left");
  auto right = detail::rdd_side_fit(fuzzy.model, w.right, "right");
  const std::string tf = detail::treatment_formula(fuzzy);
  const double pl = fit_probability_model(w.left, fuzzy.treatment, tf).predict(w.at_cutoff);
  const double pr = fit_probability_model(w.right, fuzzy.treatment, tf).predict(w.at_cutoff);
  return detail::rdd_combine(fuzzy, w, std::move(left), std::move(right), pl, pr, functional);
}

inline RddEstimate rdd_fit(const Dataset& data, const RddSpec& spec, const Functional& functional) {
  return spec.fuzzy ? frd_fit(data, spec, functional) : srd_fit(data, spec, functional);
}

// ---------------------------------------------------------------------------
// Panel wrapper

struct PanelOptions {
  std::vector<std::string> mundlak;          // variables whose unit means enter
  std::vector<std::string> parameters{"mu"}; // parameters receiving means and unit effects
  bool random_effect = true;
  double lambda = 1.0;
};

struct PanelFit {
  FittedModel model;
  Dataset data;  // input plus "<var>.mean" columns
};

/// Adds Mundlak means and a unit random effect to the configured parameters
/// of `spec` and fits it.
inline PanelFit panel_fit(const Dataset& data, const std::string& unit, ModelSpec spec, const PanelOptions& opts) {
  if (!data.has(unit)) throw InvalidInput("panel: unknown unit column '" + unit + "'");
  PanelFit out;
  out.data = build_mundlak_means(data, opts.mundlak, unit);
  const auto params = spec.family->parameters();
  for (const auto& sym : opts.parameters) {
    auto it = std::find_if(params.begin(), params.end(), [&](const ParamDescriptor& d) { return d.symbol == sym; });
    if (it == params.end()) throw ConfigError("panel: family has no parameter '" + sym + "'");
    auto& terms = spec.formulas.terms[static_cast<std::size_t>(it - params.begin())];
    for (const auto& v : opts.mundlak) terms.push_back(TermSpec::mundlak(v, unit));
    if (opts.random_effect) terms.push_back(TermSpec::random_effect(unit, opts.lambda));
  }
  out.model = fit_spec(spec, out.data);
  return out;
}

}  // namespace gamlss
