#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamlss/data.hpp"
#include "gamlss/design.hpp"
#include "gamlss/error.hpp"
#include "gamlss/families.hpp"
#include "gamlss/formula.hpp"

namespace gamlss {

enum class LambdaMode { fixed, gaic_grid };

struct FitControl {
  int max_cycles = 200;
  int inner_iterations = 1;
  double tolerance = 1e-6;  // relative change in penalized deviance
  int step_halving = 10;
  LambdaMode lambda_mode = LambdaMode::fixed;
  std::vector<double> lambda_grid;

  // Optional starting coefficients (one vector per parameter). Ignored when
  // the dimensions do not match the assembled design.
  std::vector<Eigen::VectorXd> start;

  void validate() const {
    if (!(tolerance > 0) || max_cycles < 1 || inner_iterations < 1 || step_halving < 0)
      throw InvalidInput("fit control: tolerances and iteration limits must be positive");
  }
};

/// Everything needed to (re)fit a model on a dataset.
struct ModelSpec {
  FamilyPtr family;
  FormulaSet formulas;
  std::string response;
  DesignOptions design;
  FitControl control;
};

struct BlockFit {
  std::string label;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  bool penalized = false;
  double lambda = 0.0;
  double edf = 0.0;
};

struct FittedModel {
  ModelSpec spec;
  std::vector<ParameterDesign> design;
  std::vector<Eigen::VectorXd> coefficients;  // per parameter
  std::vector<Eigen::VectorXd> eta;           // fitted predictors per parameter
  std::vector<std::vector<BlockFit>> blocks;  // per parameter
  std::vector<double> y;
  double loglik = 0.0;
  double global_deviance = 0.0;     // -2 loglik
  double penalized_deviance = 0.0;  // -2 loglik + sum lambda c'Sc
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;  // penalized deviance after each outer cycle
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> schema;  // (variable, type) used by the model

  [[nodiscard]] const Family& family() const { return *spec.family; }
  [[nodiscard]] std::size_t rows() const { return y.size(); }

  [[nodiscard]] ParamVector fitted_params(std::size_t i) const {
    std::array<double, kMaxParams> v{};
    for (std::size_t k = 0; k < eta.size(); ++k) v[k] = spec.formulas.links[k].invert(eta[k][static_cast<Eigen::Index>(i)]);
    return ParamVector::unchecked(std::span<const double>(v.data(), eta.size()));
  }

  [[nodiscard]] double total_edf() const {
    double s = 0.0;
    for (const auto& p : blocks)
      for (const auto& b : p) s += b.edf;
    return s;
  }

  [[nodiscard]] Eigen::Index total_coefficients() const {
    Eigen::Index p = 0;
    for (const auto& c : coefficients) p += c.size();
    return p;
  }

  /// Coefficient of a named design column for parameter k.
  [[nodiscard]] double coefficient(std::size_t k, const std::string& column) const {
    Eigen::Index off = 0;
    for (const auto& b : design[k].blocks) {
      for (std::size_t j = 0; j < b.column_names.size(); ++j)
        if (b.column_names[j] == column) return coefficients[k][off + static_cast<Eigen::Index>(j)];
      off += b.size();
    }
    throw InvalidInput("no coefficient '" + column + "' for parameter " + std::to_string(k + 1));
  }
};

namespace detail {

inline double clamp_eta(Link link, double eta) {
  switch (link.kind()) {
    case LinkKind::log: return std::clamp(eta, -700.0, 700.0);
    case LinkKind::logit: return std::clamp(eta, -36.0, 36.0);
    default: return eta;
  }
}

inline double total_loglik(const Family& fam, const std::vector<double>& y,
                           const std::vector<Eigen::VectorXd>& eta, std::span<const Link> links) {
  double ll = 0.0;
  std::array<double, kMaxParams> v{};
  const std::size_t K = eta.size();
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) v[k] = links[k].invert(eta[k][static_cast<Eigen::Index>(i)]);
    ll += fam.log_pdf(y[i], ParamVector::unchecked(std::span<const double>(v.data(), K)));
  }
  return ll;
}

inline double penalty_value(const ParameterDesign& d, const Eigen::VectorXd& c) {
  double s = 0.0;
  for (std::size_t j = 0; j < d.blocks.size(); ++j) {
    const auto& b = d.blocks[j];
    if (!b.penalized || b.lambda <= 0) continue;
    const auto cj = c.segment(d.offsets[j], b.size());
    s += b.lambda * cj.dot(b.penalty * cj);
  }
  return s;
}

// Index of the first block whose columns are linearly dependent on earlier
// ones under the given system matrix.
inline std::size_t singular_block(const ParameterDesign& d, const Eigen::MatrixXd& H) {
  for (std::size_t j = 0; j < d.blocks.size(); ++j) {
    const Eigen::Index end = d.offsets[j] + d.blocks[j].size();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H.topLeftCorner(end, end));
    lu.setThreshold(1e-10);
    if (lu.rank() < end) return j;
  }
  return d.blocks.size() - 1;
}

struct PwlsSolution {
  Eigen::VectorXd coef;
  Eigen::MatrixXd H;   // X'WX + P
  Eigen::MatrixXd XtWX;
};

inline PwlsSolution solve_pwls(const ParameterDesign& d, const Eigen::VectorXd& w, const Eigen::VectorXd& rhs_obs,
                               std::size_t param_index) {
  PwlsSolution s;
  s.XtWX = d.X.transpose() * w.asDiagonal() * d.X;
  s.H = s.XtWX + d.penalty();
  const Eigen::VectorXd rhs = d.X.transpose() * rhs_obs;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s.H);
  const double scale = s.H.diagonal().cwiseAbs().maxCoeff();
  const double min_pivot = ldlt.vectorD().minCoeff();
  if (ldlt.info() != Eigen::Success || !(min_pivot > 1e-12 * std::max(scale, 1e-300))) {
    const std::size_t j = singular_block(d, s.H);
    throw EstimationError("singular system for parameter " + std::to_string(param_index + 1) + " at block '" +
                          d.blocks[j].label + "'");
  }
  s.coef = ldlt.solve(rhs);
  return s;
}

}  // namespace detail

/// Penalized maximum likelihood over all parameters by cyclic Newton-Raphson
/// updates (one penalized weighted least-squares solve per parameter and
/// inner iteration), with step-halving on any increase of the penalized
/// deviance.
inline FittedModel fit(const FamilyPtr& family, std::vector<ParameterDesign> designs, const std::vector<double>& y,
                       std::span<const Link> links, const FitControl& control = {}) {
  control.validate();
  const Family& fam = *family;
  const std::size_t K = fam.size();
  if (designs.size() != K || links.size() != K)
    throw InvalidInput("fit: need one design and one link per distribution parameter");
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::Index total_p = 0;
  for (const auto& d : designs) {
    if (d.X.rows() != n) throw InvalidInput("fit: design rows do not match response length");
    total_p += d.size();
  }
  if (n <= total_p)
    throw InvalidInput("fit: " + std::to_string(n) + " observations for " + std::to_string(total_p) + " coefficients");
  for (std::size_t i = 0; i < y.size(); ++i) {
    fam.check_type(y[i]);
    if (!fam.in_support(y[i]))
      throw InvalidInput("fit: observation " + std::to_string(i) + " (" + std::to_string(y[i]) +
                         ") outside the support of " + std::string(fam.name()));
  }

  FittedModel m;
  m.spec.family = family;
  m.spec.formulas.links.assign(links.begin(), links.end());
  m.spec.control = control;
  m.y = y;

  // Start: constant predictors at moment estimates, or supplied coefficients.
  std::vector<Eigen::VectorXd> coef(K);
  std::vector<Eigen::VectorXd> eta(K);
  bool warm = control.start.size() == K;
  for (std::size_t k = 0; k < K && warm; ++k) warm = control.start[k].size() == designs[k].size();
  const ParamVector init = fam.initial_params(y);
  for (std::size_t k = 0; k < K; ++k) {
    if (warm) {
      coef[k] = control.start[k];
      eta[k] = designs[k].X * coef[k];
    } else {
      coef[k] = Eigen::VectorXd::Zero(designs[k].size());
      const double e0 = links[k].apply(init[k]);
      Eigen::Index icpt = -1;
      for (std::size_t j = 0; j < designs[k].blocks.size(); ++j)
        if (designs[k].blocks[j].kind == TermKind::intercept) icpt = designs[k].offsets[j];
      if (icpt < 0) throw InvalidInput("fit: parameter " + std::to_string(k + 1) + " has no intercept");
      coef[k][icpt] = e0;
      eta[k] = designs[k].X * coef[k];
    }
    for (Eigen::Index i = 0; i < n; ++i) eta[k][i] = detail::clamp_eta(links[k], eta[k][i]);
  }

  auto pen_dev = [&](const std::vector<Eigen::VectorXd>& e, const std::vector<Eigen::VectorXd>& c) {
    double d = -2.0 * detail::total_loglik(fam, y, e, links);
    for (std::size_t k = 0; k < K; ++k) d += detail::penalty_value(designs[k], c[k]);
    return std::isfinite(d) ? d : std::numeric_limits<double>::infinity();
  };

  double current = pen_dev(eta, coef);
  if (!std::isfinite(current)) {
    // Warm start landed outside the support of some observation; restart cold.
    FitControl cold = control;
    cold.start.clear();
    if (warm) return fit(family, std::move(designs), y, links, cold);
    throw EstimationError("fit: initial parameter values give zero likelihood");
  }

  std::vector<std::array<double, kMaxParams>> theta(static_cast<std::size_t>(n));
  Eigen::VectorXd u(n), w(n), rhs(n);
  std::vector<detail::PwlsSolution> last(K);

  int cycle = 0;
  for (cycle = 1; cycle <= control.max_cycles; ++cycle) {
    const double before = current;
    for (std::size_t k = 0; k < K; ++k) {
      for (int inner = 0; inner < control.inner_iterations; ++inner) {
        for (Eigen::Index i = 0; i < n; ++i) {
          std::array<double, kMaxParams> v{};
          for (std::size_t j = 0; j < K; ++j) v[j] = links[j].invert(eta[j][i]);
          const auto pv = ParamVector::unchecked(std::span<const double>(v.data(), K));
          const LoglikDerivs dv = loglik_derivs(fam, y[static_cast<std::size_t>(i)], pv, links);
          u[i] = dv.u[k];
          w[i] = dv.w[k];
          // W z with z = eta + u / w, formed without the division so rows at
          // the weight floor keep their score contribution.
          rhs[i] = w[i] * eta[k][i] + u[i];
        }
        detail::PwlsSolution sol = detail::solve_pwls(designs[k], w, rhs, k);
        const Eigen::VectorXd old_coef = coef[k];
        const Eigen::VectorXd old_eta = eta[k];
        const Eigen::VectorXd dir = sol.coef - old_coef;
        double alpha = 1.0;
        bool accepted = false;
        for (int h = 0; h <= control.step_halving; ++h, alpha *= 0.5) {
          coef[k] = old_coef + alpha * dir;
          eta[k] = designs[k].X * coef[k];
          for (Eigen::Index i = 0; i < n; ++i) eta[k][i] = detail::clamp_eta(links[k], eta[k][i]);
          const double trial = pen_dev(eta, coef);
          if (trial <= current + 1e-10 * std::max(1.0, std::abs(current))) {
            current = std::min(trial, current);
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          coef[k] = old_coef;
          eta[k] = old_eta;
        }
        last[k] = std::move(sol);
      }
    }
    m.trace.push_back(current);
    if (std::abs(before - current) < control.tolerance * std::max(1.0, std::abs(current))) {
      m.converged = true;
      break;
    }
  }
  m.iterations = std::min(cycle, control.max_cycles);
  if (!m.converged)
    m.warnings.push_back("fit did not converge within " + std::to_string(control.max_cycles) + " cycles");

  // Effective degrees of freedom from the final working weights.
  m.blocks.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::array<double, kMaxParams> v{};
      for (std::size_t j = 0; j < K; ++j) v[j] = links[j].invert(eta[j][i]);
      w[i] = loglik_derivs(fam, y[static_cast<std::size_t>(i)], ParamVector::unchecked(std::span<const double>(v.data(), K)), links).w[k];
    }
    const Eigen::MatrixXd XtWX = designs[k].X.transpose() * w.asDiagonal() * designs[k].X;
    const Eigen::MatrixXd H = XtWX + designs[k].penalty();
    const Eigen::MatrixXd F = H.ldlt().solve(XtWX);
    for (std::size_t j = 0; j < designs[k].blocks.size(); ++j) {
      const auto& b = designs[k].blocks[j];
      BlockFit bf;
      bf.label = b.label;
      bf.offset = designs[k].offsets[j];
      bf.size = b.size();
      bf.penalized = b.penalized;
      bf.lambda = b.lambda;
      bf.edf = b.penalized ? F.diagonal().segment(bf.offset, bf.size).sum() : static_cast<double>(bf.size);
      m.blocks[k].push_back(bf);
    }
  }

  m.coefficients = std::move(coef);
  m.eta = std::move(eta);
  m.design = std::move(designs);
  m.loglik = detail::total_loglik(fam, y, m.eta, links);
  m.global_deviance = -2.0 * m.loglik;
  m.penalized_deviance = current;
  return m;
}

/// Assembles the design for `spec` on `data` and fits it.
inline FittedModel fit_model(const ModelSpec& spec, const Dataset& data) {
  if (!spec.family) throw InvalidInput("model spec has no family");
  AssembledDesign design = assemble_design(spec.formulas, data, spec.design);
  const auto& y = data.numeric(spec.response);
  FittedModel m = fit(spec.family, std::move(design.params), y, spec.formulas.links, spec.control);
  m.spec = spec;
  m.spec.control.start.clear();
  m.warnings.insert(m.warnings.begin(), design.warnings.begin(), design.warnings.end());
  for (const auto& v : spec.formulas.variables())
    m.schema.emplace_back(v, data.column(v).is_categorical() ? "categorical" : "numeric");
  return m;
}

/// Predictors eta_k for every row of `newdata`, one vector per parameter.
inline std::vector<Eigen::VectorXd> predict_eta(const FittedModel& model, const Dataset& newdata,
                                                std::vector<std::string>* warnings = nullptr) {
  for (const auto& [var, type] : model.schema) {
    if (!newdata.has(var)) throw InvalidInput("schema mismatch: newdata lacks '" + var + "'");
    const bool cat = newdata.column(var).is_categorical();
    if (cat != (type == "categorical"))
      throw InvalidInput("schema mismatch: '" + var + "' should be " + type);
  }
  std::vector<Eigen::VectorXd> out;
  std::size_t clamped = 0;
  for (std::size_t k = 0; k < model.design.size(); ++k) {
    const auto& d = model.design[k];
    // Same concatenated product as the fitter so training rows reproduce bit for bit.
    Eigen::MatrixXd X(static_cast<Eigen::Index>(newdata.rows()), d.size());
    for (std::size_t j = 0; j < d.blocks.size(); ++j)
      X.middleCols(d.offsets[j], d.blocks[j].size()) = rebuild_basis(d.blocks[j], newdata, &clamped);
    Eigen::VectorXd eta = X * model.coefficients[k];
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = detail::clamp_eta(model.spec.formulas.links[k], eta[i]);
    out.push_back(std::move(eta));
  }
  if (clamped > 0 && warnings)
    warnings->push_back(std::to_string(clamped) + " spline input value(s) clamped to the training range");
  return out;
}

/// Link-inverted parameters for every row of `newdata`.
inline std::vector<ParamVector> predict_parameters(const FittedModel& model, const Dataset& newdata,
                                                   std::vector<std::string>* warnings = nullptr) {
  const auto eta = predict_eta(model, newdata, warnings);
  const std::size_t K = eta.size();
  std::vector<ParamVector> out(newdata.rows());
  for (std::size_t i = 0; i < newdata.rows(); ++i) {
    std::array<double, kMaxParams> v{};
    for (std::size_t k = 0; k < K; ++k)
      v[k] = model.spec.formulas.links[k].invert(eta[k][static_cast<Eigen::Index>(i)]);
    out[i] = ParamVector::unchecked(std::span<const double>(v.data(), K));
  }
  return out;
}

/// Generalized AIC: -2 loglik + penalty_k * total effective degrees of freedom.
inline double gaic(const FittedModel& model, double penalty_k = 2.0) {
  return model.global_deviance + penalty_k * model.total_edf();
}

struct SmoothingSelection {
  std::vector<std::vector<double>> lambdas;  // per parameter, per block (0 for unpenalized)
  FittedModel model;
  double criterion = 0.0;
};

/// Coordinate-wise grid search of the smoothing weights of all penalized
/// blocks, minimizing GAIC(2). Ties go to the larger weight.
inline SmoothingSelection select_smoothing(const ModelSpec& spec, const Dataset& data, std::vector<double> grid,
                                           int max_sweeps = 3) {
  if (grid.empty()) throw InvalidInput("select_smoothing: empty lambda grid");
  std::sort(grid.begin(), grid.end());
  AssembledDesign base = assemble_design(spec.formulas, data, spec.design);
  const auto& y = data.numeric(spec.response);
  auto fit_with = [&](const std::vector<ParameterDesign>& designs) {
    FittedModel m = fit(spec.family, designs, y, spec.formulas.links, spec.control);
    m.spec = spec;
    m.spec.control.start.clear();
    for (const auto& v : spec.formulas.variables())
      m.schema.emplace_back(v, data.column(v).is_categorical() ? "categorical" : "numeric");
    return m;
  };
  std::vector<ParameterDesign> designs = base.params;
  for (auto& d : designs)
    for (auto& b : d.blocks)
      if (b.penalized) b.lambda = grid.back();
  std::optional<FittedModel> best_model;
  double best = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t k = 0; k < designs.size(); ++k) {
      for (std::size_t j = 0; j < designs[k].blocks.size(); ++j) {
        if (!designs[k].blocks[j].penalized) continue;
        const double prev = designs[k].blocks[j].lambda;
        double chosen = prev;
        double chosen_score = std::numeric_limits<double>::infinity();
        std::optional<FittedModel> chosen_model;
        for (double lam : grid) {
          designs[k].blocks[j].lambda = lam;
          FittedModel m = fit_with(designs);
          const double g = gaic(m, 2.0);
          if (g <= chosen_score) {
            chosen_score = g;
            chosen = lam;
            chosen_model = std::move(m);
          }
        }
        designs[k].blocks[j].lambda = chosen;
        if (chosen != prev) changed = true;
        best = chosen_score;
        best_model = std::move(chosen_model);
      }
    }
    if (!changed) break;
  }
  if (!best_model) {
    best_model = fit_with(designs);
    best = gaic(*best_model, 2.0);
  }
  SmoothingSelection out{{}, std::move(*best_model), best};
  for (const auto& d : designs) {
    std::vector<double> l;
    for (const auto& b : d.blocks) l.push_back(b.penalized ? b.lambda : 0.0);
    out.lambdas.push_back(std::move(l));
  }
  return out;
}

/// Fits `spec` on `data`, running the smoothing-weight grid search when the
/// control asks for it.
inline FittedModel fit_spec(const ModelSpec& spec, const Dataset& data) {
  if (spec.control.lambda_mode == LambdaMode::gaic_grid) {
    bool any_penalized = false;
    for (const auto& p : spec.formulas.terms)
      for (const auto& t : p) any_penalized = any_penalized || t.penalized();
    if (any_penalized) {
      FittedModel m = select_smoothing(spec, data, spec.control.lambda_grid).model;
      return m;
    }
  }
  return fit_model(spec, data);
}

}  // namespace gamlss
