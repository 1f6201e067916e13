#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamlss/data.hpp"
#include "gamlss/error.hpp"
#include "gamlss/formula.hpp"

namespace gamlss {

/// Basis matrix plus quadratic penalty for one additive term, together with
/// everything needed to rebuild the basis on new data.
struct DesignBlock {
  std::string label;
  TermKind kind = TermKind::linear;
  std::vector<std::string> variables;
  std::vector<std::string> column_names;

  Eigen::MatrixXd basis;    // n x m
  Eigen::MatrixXd penalty;  // m x m, symmetric PSD; zero for unpenalized blocks
  double lambda = 0.0;
  bool penalized = false;
  std::string constraint = "none";  // identifiability constraint applied

  // Recipe.
  std::vector<std::vector<std::string>> var_levels;  // per variable: kept levels (categorical) or empty
  std::vector<std::string> levels;                   // random-effect groups
  double lo = 0.0, hi = 0.0;
  PsplineOptions spline;
  Eigen::MatrixXd absorb;  // m_raw x m constraint absorption (P-splines)
  std::string by;

  [[nodiscard]] Eigen::Index size() const { return basis.cols(); }
};

/// Cox-de Boor B-spline basis on equally spaced knots over [lo, hi] with
/// `segments` interior intervals. Result has segments + degree columns;
/// inputs outside [lo, hi] are clamped.
inline Eigen::MatrixXd bspline_basis(const std::vector<double>& x, double lo, double hi, int segments,
                                     int degree) {
  if (!(hi > lo)) throw InvalidInput("bspline_basis: empty range");
  const int m = segments + degree;
  const double dx = (hi - lo) / segments;
  const int n_knots = segments + 2 * degree + 1;
  std::vector<double> knots(n_knots);
  for (int j = 0; j < n_knots; ++j) knots[j] = lo + (j - degree) * dx;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), m);
  std::vector<double> N(degree + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = std::clamp(x[i], lo, hi);
    int span = static_cast<int>(std::floor((xi - lo) / dx));
    span = std::clamp(span, 0, segments - 1) + degree;  // knots[span] <= xi < knots[span+1]
    // Triangular recursion for the degree+1 nonzero functions.
    std::fill(N.begin(), N.end(), 0.0);
    N[0] = 1.0;
    for (int d = 1; d <= degree; ++d) {
      double saved = 0.0;
      for (int r = 0; r < d; ++r) {
        const double left = knots[span + r + 1 - d];
        const double right = knots[span + r + 1];
        const double tmp = N[r] / (right - left);
        N[r] = saved + (right - xi) * tmp;
        saved = (xi - left) * tmp;
      }
      N[d] = saved;
    }
    for (int r = 0; r <= degree; ++r) B(static_cast<Eigen::Index>(i), span - degree + r) = N[r];
  }
  return B;
}

/// (m - order) x m matrix of order-th differences.
inline Eigen::MatrixXd difference_matrix(Eigen::Index m, int order) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(m, m);
  for (int o = 0; o < order; ++o) {
    const Eigen::Index r = D.rows();
    D = (D.bottomRows(r - 1) - D.topRows(r - 1)).eval();
  }
  return D;
}

namespace detail {

inline void require_finite(const std::vector<double>& v, const std::string& name) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) bad.push_back(i);
  if (bad.empty()) return;
  std::string rows;
  for (std::size_t j = 0; j < std::min<std::size_t>(bad.size(), 10); ++j)
    rows += (j ? "," : "") + std::to_string(bad[j]);
  if (bad.size() > 10) rows += ",...";
  throw InvalidInput("column '" + name + "' has non-finite values at rows " + rows);
}

// Reference-coded indicators, or the raw column for numeric variables.
inline Eigen::MatrixXd main_effect_columns(const Dataset& data, const std::string& var,
                                           const std::vector<std::string>& kept_levels,
                                           std::vector<std::string>* names) {
  const Column& c = data.column(var);
  const auto n = static_cast<Eigen::Index>(data.rows());
  if (!c.is_categorical()) {
    require_finite(c.numbers, var);
    if (names) names->push_back(var);
    return Eigen::Map<const Eigen::VectorXd>(c.numbers.data(), n);
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kept_levels.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = std::find(kept_levels.begin(), kept_levels.end(), c.levels[i]);
    if (it != kept_levels.end()) M(i, it - kept_levels.begin()) = 1.0;
  }
  if (names)
    for (const auto& l : kept_levels) names->push_back(var + "[" + l + "]");
  return M;
}

inline std::vector<std::string> kept_levels_for(const Column& c, const std::map<std::string, std::string>& refs) {
  auto levels = c.distinct_levels();
  if (levels.size() < 2) throw InvalidInput("categorical '" + c.name + "' needs at least two levels");
  std::string ref = levels.front();
  if (auto it = refs.find(c.name); it != refs.end()) {
    if (std::find(levels.begin(), levels.end(), it->second) == levels.end())
      throw InvalidInput("reference level '" + it->second + "' not present in '" + c.name + "'");
    ref = it->second;
  }
  levels.erase(std::find(levels.begin(), levels.end(), ref));
  return levels;
}

// Per-unit means broadcast to rows, no degeneracy checks.
inline std::vector<double> unit_means(const Dataset& data, const std::string& var, const std::string& unit) {
  const auto& x = data.numeric(var);
  const Column& u = data.column(unit);
  auto key = [&](std::size_t i) { return u.is_categorical() ? u.levels[i] : std::to_string(u.numbers[i]); };
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto& a = acc[key(i)];
    a.first += x[i];
    a.second += 1;
  }
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto& a = acc[key(i)];
    out[i] = a.first / static_cast<double>(a.second);
  }
  return out;
}

}  // namespace detail

struct DesignOptions {
  std::map<std::string, std::string> reference_levels;  // categorical var -> reference level
};

/// Unpenalized block for a numeric column (raw values) or a categorical
/// column (indicators for every level except the reference).
inline DesignBlock build_linear_block(const Dataset& data, const std::string& variable,
                                      const DesignOptions& opts = {}) {
  DesignBlock b;
  b.variables = {variable};
  b.label = variable;
  const Column& c = data.column(variable);
  std::vector<std::string> kept;
  if (c.is_categorical()) {
    kept = detail::kept_levels_for(c, opts.reference_levels);
    b.kind = TermKind::categorical;
  }
  b.var_levels = {kept};
  b.basis = detail::main_effect_columns(data, variable, kept, &b.column_names);
  b.penalty = Eigen::MatrixXd::Zero(b.basis.cols(), b.basis.cols());
  return b;
}

/// P-spline block: cubic-by-default B-splines on equally spaced knots with a
/// difference penalty; optionally reparameterized so that every column sums
/// to zero over the data.
inline DesignBlock build_pspline_block(const std::vector<double>& x, int knots, int degree, int diff_order,
                                       bool center = true, const std::string& name = "x") {
  if (degree < 1 || diff_order < 1 || knots < 1)
    throw InvalidInput("s(" + name + "): degree, difference order and knots must be >= 1");
  detail::require_finite(x, name);
  std::set<double> distinct(x.begin(), x.end());
  if (static_cast<int>(distinct.size()) < degree + 2)
    throw InvalidInput("s(" + name + "): needs at least " + std::to_string(degree + 2) + " distinct values");
  DesignBlock b;
  b.kind = TermKind::pspline;
  b.variables = {name};
  b.label = "s(" + name + ")";
  b.spline = {knots, degree, diff_order};
  b.lo = *distinct.begin();
  b.hi = *distinct.rbegin();
  b.penalized = true;
  Eigen::MatrixXd B = bspline_basis(x, b.lo, b.hi, knots, degree);
  const Eigen::MatrixXd D = difference_matrix(B.cols(), diff_order);
  Eigen::MatrixXd S = D.transpose() * D;
  if (center) {
    // Null space of the column-sum constraint 1'B c = 0.
    const Eigen::VectorXd csum = B.colwise().sum().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(csum);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(B.cols(), B.cols());
    b.absorb = Q.rightCols(B.cols() - 1);
    B = (B * b.absorb).eval();
    S = (b.absorb.transpose() * S * b.absorb).eval();
    b.constraint = "sum-to-zero";
  }
  b.basis = std::move(B);
  b.penalty = 0.5 * (S + S.transpose());
  for (Eigen::Index j = 0; j < b.basis.cols(); ++j) b.column_names.push_back(b.label + "." + std::to_string(j + 1));
  return b;
}

/// Group-indicator block with identity (ridge) penalty.
inline DesignBlock build_random_effect_block(const Column& groups, double lambda = 1.0) {
  DesignBlock b;
  b.kind = TermKind::random_effect;
  b.variables = {groups.name};
  b.label = "re(" + groups.name + ")";
  b.penalized = true;
  b.lambda = lambda;
  if (groups.is_categorical()) {
    b.levels = groups.distinct_levels();
  } else {
    std::set<std::string> s;
    for (double v : groups.numbers) s.insert(std::to_string(v));
    b.levels.assign(s.begin(), s.end());
  }
  if (b.levels.size() < 2) throw InvalidInput(b.label + ": needs at least two groups");
  const auto n = static_cast<Eigen::Index>(groups.size());
  b.basis = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(b.levels.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string key = groups.is_categorical() ? groups.levels[i] : std::to_string(groups.numbers[i]);
    auto it = std::lower_bound(b.levels.begin(), b.levels.end(), key);
    if (it != b.levels.end() && *it == key) b.basis(i, it - b.levels.begin()) = 1.0;
  }
  b.penalty = Eigen::MatrixXd::Identity(b.basis.cols(), b.basis.cols());
  for (const auto& l : b.levels) b.column_names.push_back(b.label + "[" + l + "]");
  return b;
}

/// Returns `data` with a column "<var>.mean" per variable holding the
/// within-unit mean of that variable.
inline Dataset build_mundlak_means(const Dataset& data, const std::vector<std::string>& variables,
                                   const std::string& unit) {
  Dataset out = data;
  for (const auto& v : variables) {
    const auto& x = data.numeric(v);
    auto means = detail::unit_means(data, v, unit);
    bool varies = false;
    for (std::size_t i = 0; i < x.size() && !varies; ++i) varies = x[i] != means[i];
    if (!varies)
      throw InvalidInput("m(" + v + "): variable does not vary within any " + unit +
                         "; its unit mean equals the variable");
    out.add_numeric(v + ".mean", std::move(means));
  }
  return out;
}

/// The blocks of one distribution parameter's predictor.
struct ParameterDesign {
  std::vector<DesignBlock> blocks;
  Eigen::MatrixXd X;                       // concatenated basis, n x p
  std::vector<Eigen::Index> offsets;       // first column of each block in X

  [[nodiscard]] Eigen::Index size() const { return X.cols(); }

  /// Block-diagonal penalty sum_j lambda_j S_j.
  [[nodiscard]] Eigen::MatrixXd penalty() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      const auto& b = blocks[j];
      if (b.penalized && b.lambda > 0)
        P.block(offsets[j], offsets[j], b.size(), b.size()) = b.lambda * b.penalty;
    }
    return P;
  }

  void rebuild_matrix() {
    Eigen::Index p = 0;
    offsets.clear();
    for (const auto& b : blocks) {
      offsets.push_back(p);
      p += b.size();
    }
    const Eigen::Index n = blocks.empty() ? 0 : blocks.front().basis.rows();
    X.resize(n, p);
    for (std::size_t j = 0; j < blocks.size(); ++j) X.middleCols(offsets[j], blocks[j].size()) = blocks[j].basis;
  }
};

struct AssembledDesign {
  std::vector<ParameterDesign> params;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::Index total_coefficients() const {
    Eigen::Index p = 0;
    for (const auto& d : params) p += d.size();
    return p;
  }
};

namespace detail {

inline DesignBlock build_block(const TermSpec& t, const Dataset& data, const DesignOptions& opts,
                               std::vector<std::string>& warnings) {
  switch (t.kind) {
    case TermKind::intercept: {
      DesignBlock b;
      b.kind = TermKind::intercept;
      b.label = "(Intercept)";
      b.basis = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(data.rows()), 1);
      b.penalty = Eigen::MatrixXd::Zero(1, 1);
      b.column_names = {b.label};
      return b;
    }
    case TermKind::linear:
    case TermKind::categorical: {
      DesignBlock b = build_linear_block(data, t.variables.front(), opts);
      for (Eigen::Index j = 0; j < b.basis.cols(); ++j) {
        const auto col = b.basis.col(j);
        if (col.size() > 0 && (col.array() == col(0)).all())
          warnings.push_back("term '" + b.column_names[j] + "' is constant; collinear with the intercept");
      }
      return b;
    }
    case TermKind::interaction: {
      DesignBlock b;
      b.kind = TermKind::interaction;
      b.label = t.label();
      b.variables = t.variables;
      const auto n = static_cast<Eigen::Index>(data.rows());
      Eigen::MatrixXd M = Eigen::MatrixXd::Ones(n, 1);
      std::vector<std::string> names{""};
      for (const auto& v : t.variables) {
        const Column& c = data.column(v);
        std::vector<std::string> kept;
        if (c.is_categorical()) kept = kept_levels_for(c, opts.reference_levels);
        b.var_levels.push_back(kept);
        std::vector<std::string> vnames;
        const Eigen::MatrixXd P = main_effect_columns(data, v, kept, &vnames);
        Eigen::MatrixXd next(n, M.cols() * P.cols());
        std::vector<std::string> next_names;
        for (Eigen::Index a = 0; a < M.cols(); ++a)
          for (Eigen::Index c2 = 0; c2 < P.cols(); ++c2) {
            next.col(a * P.cols() + c2) = M.col(a).cwiseProduct(P.col(c2));
            next_names.push_back(names[a].empty() ? vnames[c2] : names[a] + ":" + vnames[c2]);
          }
        M = std::move(next);
        names = std::move(next_names);
      }
      b.basis = std::move(M);
      b.column_names = std::move(names);
      b.penalty = Eigen::MatrixXd::Zero(b.basis.cols(), b.basis.cols());
      return b;
    }
    case TermKind::pspline: {
      const auto& var = t.variables.front();
      DesignBlock b = build_pspline_block(data.numeric(var), t.spline.knots, t.spline.degree,
                                          t.spline.diff_order, t.center, var);
      b.lambda = t.lambda.value_or(1.0);
      return b;
    }
    case TermKind::random_effect: {
      DesignBlock b = build_random_effect_block(data.column(t.variables.front()), t.lambda.value_or(1.0));
      std::map<std::string, int> counts;
      const Column& g = data.column(t.variables.front());
      for (std::size_t i = 0; i < g.size(); ++i)
        counts[g.is_categorical() ? g.levels[i] : std::to_string(g.numbers[i])]++;
      if (std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 1; }))
        warnings.push_back(b.label + ": every group is a singleton; effects are not identifiable from the residual scale");
      return b;
    }
    case TermKind::mundlak_mean: {
      const auto& var = t.variables.front();
      Dataset with = build_mundlak_means(data, {var}, t.by);
      DesignBlock b;
      b.kind = TermKind::mundlak_mean;
      b.label = t.label();
      b.variables = {var};
      b.by = t.by;
      const auto& m = with.numeric(var + ".mean");
      b.basis = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
      b.penalty = Eigen::MatrixXd::Zero(1, 1);
      b.column_names = {var + ".mean"};
      return b;
    }
  }
  throw InvalidInput("unsupported term");
}

}  // namespace detail

/// Compiles each parameter's terms against `data`.
inline AssembledDesign assemble_design(const FormulaSet& formulas, const Dataset& data,
                                       const DesignOptions& opts = {}) {
  formulas.validate();
  for (const auto& v : formulas.variables())
    if (!data.has(v)) throw InvalidInput("formula references missing variable '" + v + "'");
  AssembledDesign out;
  for (const auto& terms : formulas.terms) {
    ParameterDesign pd;
    for (const auto& t : terms) pd.blocks.push_back(detail::build_block(t, data, opts, out.warnings));
    pd.rebuild_matrix();
    out.params.push_back(std::move(pd));
  }
  return out;
}

/// Rebuilds a block's basis on new data using the recipe stored at fit time.
/// Spline inputs outside the training range are clamped; the number of
/// clamped values is added to `clamped`.
inline Eigen::MatrixXd rebuild_basis(const DesignBlock& b, const Dataset& data, std::size_t* clamped = nullptr) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  switch (b.kind) {
    case TermKind::intercept: return Eigen::MatrixXd::Ones(n, 1);
    case TermKind::linear:
    case TermKind::categorical:
      return detail::main_effect_columns(data, b.variables.front(), b.var_levels.front(), nullptr);
    case TermKind::interaction: {
      Eigen::MatrixXd M = Eigen::MatrixXd::Ones(n, 1);
      for (std::size_t v = 0; v < b.variables.size(); ++v) {
        const Eigen::MatrixXd P = detail::main_effect_columns(data, b.variables[v], b.var_levels[v], nullptr);
        Eigen::MatrixXd next(n, M.cols() * P.cols());
        for (Eigen::Index a = 0; a < M.cols(); ++a)
          for (Eigen::Index c = 0; c < P.cols(); ++c) next.col(a * P.cols() + c) = M.col(a).cwiseProduct(P.col(c));
        M = std::move(next);
      }
      return M;
    }
    case TermKind::pspline: {
      const auto& x = data.numeric(b.variables.front());
      detail::require_finite(x, b.variables.front());
      if (clamped)
        for (double v : x)
          if (v < b.lo || v > b.hi) ++*clamped;
      Eigen::MatrixXd B = bspline_basis(x, b.lo, b.hi, b.spline.knots, b.spline.degree);
      if (b.absorb.size() > 0) B = (B * b.absorb).eval();
      return B;
    }
    case TermKind::random_effect: {
      const Column& g = data.column(b.variables.front());
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(b.levels.size()));
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::string key = g.is_categorical() ? g.levels[i] : std::to_string(g.numbers[i]);
        auto it = std::lower_bound(b.levels.begin(), b.levels.end(), key);
        if (it != b.levels.end() && *it == key) M(i, it - b.levels.begin()) = 1.0;
      }
      return M;
    }
    case TermKind::mundlak_mean: {
      const auto& var = b.variables.front();
      if (data.has(var + ".mean")) {
        const auto& m = data.numeric(var + ".mean");
        return Eigen::Map<const Eigen::VectorXd>(m.data(), n);
      }
      if (data.has(b.by)) {
        const auto m = detail::unit_means(data, var, b.by);
        return Eigen::Map<const Eigen::VectorXd>(m.data(), n);
      }
      const auto& x = data.numeric(var);
      return Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    }
  }
  throw InvalidInput("unsupported block kind");
}

}  // namespace gamlss
