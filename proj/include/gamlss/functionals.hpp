#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "gamlss/data.hpp"
#include "gamlss/design.hpp"
#include "gamlss/error.hpp"
#include "gamlss/families.hpp"
#include "gamlss/special.hpp"

namespace gamlss {

/// One conditional distribution: a family and its parameter values.
struct DistSpec {
  FamilyPtr family;
  ParamVector theta;

  [[nodiscard]] const Family& fam() const { return *family; }
};

enum class FunctionalKind { mean, variance, quantile, gini, atkinson, theil, vulnerability };

/// A scalar functional of a distribution. `arg` is p for quantiles, e for
/// Atkinson, z for vulnerability. `auto_line` marks a vulnerability line
/// still to be resolved to 60% of a reference median.
struct Functional {
  FunctionalKind kind = FunctionalKind::mean;
  double arg = 0.0;
  bool auto_line = false;

  [[nodiscard]] std::string name() const {
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      return std::string(buf);
    };
    switch (kind) {
      case FunctionalKind::mean: return "mean";
      case FunctionalKind::variance: return "variance";
      case FunctionalKind::quantile: return "quantile:" + num(arg);
      case FunctionalKind::gini: return "gini";
      case FunctionalKind::atkinson: return "atkinson:" + num(arg);
      case FunctionalKind::theil: return "theil";
      case FunctionalKind::vulnerability: return auto_line ? "vulnerability:auto60" : "vulnerability:" + num(arg);
    }
    return {};
  }
};

/// Parses "mean", "variance", "quantile:<p>", "gini", "atkinson:<e>",
/// "theil", "vulnerability:<z>" or "vulnerability:auto60".
inline Functional parse_functional(std::string_view text) {
  const auto colon = text.find(':');
  const std::string head(text.substr(0, colon));
  const std::string arg = colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  auto number = [&]() {
    try {
      std::size_t used = 0;
      const double v = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("functional '" + std::string(text) + "': expected a number after ':'");
    }
  };
  auto no_arg = [&](FunctionalKind k) {
    if (!arg.empty()) throw ConfigError("functional '" + head + "' takes no argument");
    return Functional{k, 0.0, false};
  };
  if (head == "mean") return no_arg(FunctionalKind::mean);
  if (head == "variance") return no_arg(FunctionalKind::variance);
  if (head == "gini") return no_arg(FunctionalKind::gini);
  if (head == "theil") return no_arg(FunctionalKind::theil);
  if (head == "quantile") {
    const double p = number();
    if (!(p > 0 && p < 1)) throw ConfigError("quantile level must lie in (0,1)");
    return {FunctionalKind::quantile, p, false};
  }
  if (head == "atkinson") {
    const double e = number();
    if (!(e > 0)) throw ConfigError("Atkinson inequality aversion must be > 0");
    return {FunctionalKind::atkinson, e, false};
  }
  if (head == "vulnerability") {
    if (arg == "auto60") return {FunctionalKind::vulnerability, 0.0, true};
    const double z = number();
    if (!(z > 0)) throw ConfigError("poverty line must be > 0");
    return {FunctionalKind::vulnerability, z, false};
  }
  throw ConfigError("unknown functional '" + std::string(text) + "'");
}

namespace detail {

inline constexpr double kQuadTol = 1e-10;
inline constexpr double kUpperCut = 1.0 - 1e-9;

struct Quadrature {
  double value = 0.0;
  double error = 0.0;
  double tail = 0.0;  // contribution beyond Q(1 - 1e-9)
};

// Integrates g(y) dF(y) over the continuous part of a positive distribution,
// on the log scale, split at the median and at Q(1 - 1e-9). The piece above
// the cut is integrated to infinity rather than dropped.
template <class G>
Quadrature integrate_positive(const Family& fam, const ParamVector& t, G&& g) {
  using boost::math::quadrature::gauss_kronrod;
  const double atom = fam.cdf(0.0, t);
  const double center = std::log(fam.quantile(atom + 0.5 * (1.0 - atom), t));
  const double cut = std::max(std::log(fam.quantile(atom + kUpperCut * (1.0 - atom), t)), center);
  auto h = [&](double s) {
    const double y = std::exp(s);
    if (!(y > 0) || !std::isfinite(y)) return 0.0;
    const double f = std::exp(fam.log_pdf(y, t) + s);
    return f == 0.0 ? 0.0 : g(y) * f;
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  Quadrature q;
  double e1 = 0, e2 = 0, e3 = 0;
  const double lower = gauss_kronrod<double, 61>::integrate(h, -inf, center, 15, kQuadTol, &e1);
  const double middle = gauss_kronrod<double, 61>::integrate(h, center, cut, 15, kQuadTol, &e2);
  q.tail = gauss_kronrod<double, 61>::integrate(h, cut, inf, 15, kQuadTol, &e3);
  q.value = lower + middle + q.tail;
  q.error = e1 + e2 + e3;
  return q;
}

// Same over the real line on the probability scale, E[g(Y)] = ∫ g(Q(p)) dp.
template <class G>
Quadrature integrate_real(const Family& fam, const ParamVector& t, G&& g) {
  using boost::math::quadrature::gauss_kronrod;
  auto h = [&](double p) { return g(fam.quantile(p, t)); };
  Quadrature q;
  double e1 = 0, e2 = 0;
  q.value = gauss_kronrod<double, 61>::integrate(h, 0.0, 0.5, 15, kQuadTol, &e1) +
            gauss_kronrod<double, 61>::integrate(h, 0.5, 1.0, 15, kQuadTol, &e2);
  q.error = e1 + e2;
  return q;
}

// Largest count needed for sums over a discrete distribution.
inline double discrete_upper(const Family& fam, const ParamVector& t) {
  return fam.quantile(1.0 - 1e-15, t) + 20.0;
}

template <class G>
double sum_discrete(const Family& fam, const ParamVector& t, G&& g) {
  const double K = discrete_upper(fam, t);
  double s = 0.0;
  for (double k = 0; k <= K; k += 1.0) s += g(k) * fam.pdf(k, t);
  return s;
}

// E[g(Y)] for any family: atom at zero, continuous part, or count sum.
template <class G>
double expectation(const DistSpec& d, G&& g, double g_at_zero_atom = 0.0) {
  const Family& fam = d.fam();
  switch (fam.support()) {
    case Support::count: return sum_discrete(fam, d.theta, g);
    case Support::real:
    case Support::unit_interval: return integrate_real(fam, d.theta, g).value;
    case Support::positive_real: return integrate_positive(fam, d.theta, g).value;
    case Support::nonnegative_with_zero_mass: {
      const double atom = fam.cdf(0.0, d.theta);
      return atom * g_at_zero_atom + integrate_positive(fam, d.theta, g).value;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Existence of E[Y^s] for the continuous part (s may be negative).
inline bool power_moment_exists(const DistSpec& d, double s) {
  const std::string name(d.fam().name());
  const auto& t = d.theta;
  if (name == "singh-maddala") return s > -t[1] && s < t[1] * t[2];
  if (name == "gamma" || name == "zero-adjusted-gamma") return s > -1.0 / (t[1] * t[1]);
  return true;
}

inline bool has_zero_mass(const DistSpec& d) {
  const auto sup = d.fam().support();
  return (sup == Support::count || sup == Support::nonnegative_with_zero_mass) && d.fam().cdf(0.0, d.theta) > 0.0;
}

inline void require_nonnegative(const DistSpec& d, const char* what) {
  const auto sup = d.fam().support();
  if (sup == Support::real && d.fam().cdf(0.0, d.theta) > 1e-12)
    throw InvalidInput(std::string(what) + " requires a nonnegative outcome; " + std::string(d.fam().name()) +
                       " puts mass below zero");
}

inline double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw MomentError(std::string(what) + ": integral did not converge to a finite value");
  return v;
}

}  // namespace detail

inline double dist_mean(const DistSpec& d) {
  const std::string name(d.fam().name());
  const auto& t = d.theta;
  if (name == "normal" || name == "gamma" || name == "poisson") return t[0];
  if (name == "lognormal") return std::exp(t[0] + 0.5 * t[1] * t[1]);
  if (name == "singh-maddala") {
    const double a = t[1], q = t[2];
    if (!(a * q > 1)) throw MomentError("singh-maddala mean does not exist (a*q <= 1)");
    return t[0] * std::exp(std::lgamma(1 + 1 / a) + std::lgamma(q - 1 / a) - std::lgamma(q));
  }
  if (name == "zero-adjusted-gamma") return (1 - t[2]) * t[0];
  if (name == "zero-inflated-poisson") return (1 - t[1]) * t[0];
  return detail::checked(detail::expectation(d, [](double y) { return y; }), "mean");
}

inline double dist_variance(const DistSpec& d) {
  const std::string name(d.fam().name());
  const auto& t = d.theta;
  if (name == "normal") return t[1] * t[1];
  if (name == "lognormal") {
    const double s2 = t[1] * t[1];
    return std::expm1(s2) * std::exp(2 * t[0] + s2);
  }
  if (name == "gamma") return t[1] * t[1] * t[0] * t[0];
  if (name == "poisson") return t[0];
  if (name == "singh-maddala") {
    const double b = t[0], a = t[1], q = t[2];
    if (!(a * q > 2)) throw MomentError("singh-maddala variance does not exist (a*q <= 2)");
    const double lg = std::lgamma(q);
    const double m1 = b * std::exp(std::lgamma(1 + 1 / a) + std::lgamma(q - 1 / a) - lg);
    const double m2 = b * b * std::exp(std::lgamma(1 + 2 / a) + std::lgamma(q - 2 / a) - lg);
    return m2 - m1 * m1;
  }
  if (name == "zero-adjusted-gamma") {
    const double nu = t[2], mu = t[0], s2 = t[1] * t[1];
    return (1 - nu) * mu * mu * (s2 + nu);
  }
  if (name == "zero-inflated-poisson") return (1 - t[1]) * t[0] * (1 + t[1] * t[0]);
  const double m = dist_mean(d);
  return detail::checked(detail::expectation(d, [m](double y) { return (y - m) * (y - m); }), "variance");
}

inline double dist_quantile(const DistSpec& d, double p) { return d.fam().quantile(p, d.theta); }

/// G = 1 - (1/μ) ∫₀^∞ (1 - F(y))² dy, for nonnegative outcomes.
inline double gini(const DistSpec& d) {
  detail::require_nonnegative(d, "gini");
  const double mu = dist_mean(d);
  if (!(mu > 0)) throw MomentError("gini requires a positive mean");
  const Family& fam = d.fam();
  double integral = 0.0;
  switch (fam.support()) {
    case Support::count: {
      const double K = detail::discrete_upper(fam, d.theta);
      for (double k = 0; k <= K; k += 1.0) {
        const double s = 1.0 - fam.cdf(k, d.theta);
        integral += s * s;
      }
      break;
    }
    case Support::real:
    case Support::unit_interval:
      // ∫(1-F)² dy = E[min(Y₁, Y₂)] = ∫ Q(p) · 2(1-p) dp.
    {
      using boost::math::quadrature::gauss_kronrod;
      auto h = [&](double p) { return fam.quantile(p, d.theta) * 2.0 * (1.0 - p); };
      integral = gauss_kronrod<double, 61>::integrate(h, 0.0, 0.5, 15, detail::kQuadTol) +
                 gauss_kronrod<double, 61>::integrate(h, 0.5, 1.0, 15, detail::kQuadTol);
      break;
    }
    case Support::positive_real:
    case Support::nonnegative_with_zero_mass: {
      // dy = y ds on the log scale.
      using boost::math::quadrature::gauss_kronrod;
      const double atom = fam.cdf(0.0, d.theta);
      auto h = [&](double s) {
        const double y = std::exp(s);
        if (!(y > 0) || !std::isfinite(y)) return 0.0;
        const double sf = fam.sf(y, d.theta);
        return sf * sf * y;
      };
      constexpr double inf = std::numeric_limits<double>::infinity();
      const double center = std::log(fam.quantile(atom + 0.5 * (1.0 - atom), d.theta));
      const double cut =
          std::max(std::log(fam.quantile(atom + detail::kUpperCut * (1.0 - atom), d.theta)), center);
      integral = gauss_kronrod<double, 61>::integrate(h, -inf, center, 15, detail::kQuadTol) +
                 gauss_kronrod<double, 61>::integrate(h, center, cut, 15, detail::kQuadTol) +
                 gauss_kronrod<double, 61>::integrate(h, cut, inf, 15, detail::kQuadTol);
      break;
    }
  }
  return detail::checked(1.0 - integral / mu, "gini");
}

/// Atkinson index with inequality aversion e > 0. Any probability mass at
/// zero makes the index 1 for e >= 1.
inline double atkinson(const DistSpec& d, double e) {
  if (!(e > 0)) throw InvalidInput("atkinson: e must be > 0");
  detail::require_nonnegative(d, "atkinson");
  const double mu = dist_mean(d);
  if (!(mu > 0)) throw MomentError("atkinson requires a positive mean");
  if (e >= 1 && detail::has_zero_mass(d)) return 1.0;
  if (e == 1.0) {
    const double elog = detail::expectation(d, [mu](double y) { return std::log(y / mu); });
    return detail::checked(1.0 - std::exp(elog), "atkinson");
  }
  const double s = 1.0 - e;
  if (!detail::power_moment_exists(d, s))
    throw MomentError("atkinson: E[Y^" + std::to_string(s) + "] does not exist for these parameters");
  // Work with Y/μ so the power stays near one in magnitude.
  const double m = detail::expectation(d, [mu, s](double y) { return std::pow(y / mu, s); });
  return detail::checked(1.0 - std::pow(m, 1.0 / s), "atkinson");
}

/// Theil index E[(Y/μ) ln(Y/μ)].
inline double theil(const DistSpec& d) {
  detail::require_nonnegative(d, "theil");
  const double mu = dist_mean(d);
  if (!(mu > 0)) throw MomentError("theil requires a positive mean");
  const double v = detail::expectation(d, [mu](double y) {
    const double r = y / mu;
    return r > 0 ? r * std::log(r) : 0.0;
  });
  return detail::checked(v, "theil");
}

/// Probability of falling at or below the poverty line z.
inline double vulnerability(const DistSpec& d, double z) {
  if (!(z > 0)) throw InvalidInput("vulnerability: poverty line must be > 0");
  return d.fam().cdf(z, d.theta);
}

inline bool is_vulnerable(double probability) { return probability >= 0.5; }

/// Evaluates a functional; an unresolved auto poverty line is an error.
inline double evaluate(const Functional& f, const DistSpec& d) {
  switch (f.kind) {
    case FunctionalKind::mean: return dist_mean(d);
    case FunctionalKind::variance: return dist_variance(d);
    case FunctionalKind::quantile: return dist_quantile(d, f.arg);
    case FunctionalKind::gini: return gini(d);
    case FunctionalKind::atkinson: return atkinson(d, f.arg);
    case FunctionalKind::theil: return theil(d);
    case FunctionalKind::vulnerability:
      if (f.auto_line) throw ConfigError("vulnerability:auto60 needs its poverty line resolved first");
      return vulnerability(d, f.arg);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// 60% of the sample median.
inline double poverty_line_auto60(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("poverty line: no reference observations");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return 0.6 * median;
}

/// Discrete-sample Gini, mean absolute difference over twice the mean.
inline double sample_gini(std::vector<double> y) {
  if (y.size() < 2) throw InvalidInput("sample_gini: needs at least two values");
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(y.size());
  double total = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total += y[i];
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * y[i];
  }
  if (!(total > 0)) throw InvalidInput("sample_gini: mean must be positive");
  return weighted / (n * total);
}

struct FglsResult {
  Eigen::VectorXd beta_mean;      // log-outcome mean equation
  Eigen::VectorXd beta_variance;  // linear variance equation
  std::vector<double> mean, variance, probability;
  std::size_t floored = 0;  // rows whose fitted variance was floored
};

namespace detail {

inline Eigen::VectorXd wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtW * X);
  if (ldlt.info() != Eigen::Success) throw EstimationError("FGLS: singular design");
  return ldlt.solve(XtW * y);
}

}  // namespace detail

inline constexpr double kVarianceFloor = 1e-8;

/// Three-step FGLS vulnerability: (1) OLS of ln y on X; (2) OLS of squared
/// residuals on X for a linear variance function; (3) reweighted estimates of
/// both equations, then Φ((ln z - x'β) / sqrt(x'γ)).
inline FglsResult fgls_vulnerability(const Eigen::MatrixXd& X, const std::vector<double>& y, double z) {
  if (!(z > 0)) throw InvalidInput("FGLS: poverty line must be > 0");
  const auto n = X.rows();
  if (static_cast<std::size_t>(n) != y.size()) throw InvalidInput("FGLS: design/response length mismatch");
  if (n <= X.cols()) throw InvalidInput("FGLS: more coefficients than observations");
  Eigen::VectorXd ly(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(y[static_cast<std::size_t>(i)] > 0)) throw InvalidInput("FGLS: outcome must be positive");
    ly[i] = std::log(y[static_cast<std::size_t>(i)]);
  }
  FglsResult r;
  auto floor_var = [&](Eigen::VectorXd v, bool count) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(v[i] > kVarianceFloor)) {
        v[i] = kVarianceFloor;
        if (count) ++r.floored;
      }
    return v;
  };
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd b_ols = detail::wls(X, ly, ones);
  const Eigen::VectorXd e2 = (ly - X * b_ols).array().square();
  const Eigen::VectorXd g_ols = detail::wls(X, e2, ones);
  const Eigen::VectorXd v1 = floor_var(X * g_ols, false);
  // Squared residuals have variance proportional to σ⁴ under normality.
  r.beta_variance = detail::wls(X, e2, v1.array().square().inverse().matrix());
  const Eigen::VectorXd v2 = floor_var(X * r.beta_variance, true);
  r.beta_mean = detail::wls(X, ly, v2.array().inverse().matrix());
  const Eigen::VectorXd m = X * r.beta_mean;
  const double lz = std::log(z);
  r.mean.resize(static_cast<std::size_t>(n));
  r.variance.resize(static_cast<std::size_t>(n));
  r.probability.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    r.mean[k] = m[i];
    r.variance[k] = v2[i];
    r.probability[k] = normal_cdf((lz - m[i]) / std::sqrt(v2[i]));
  }
  return r;
}

/// FGLS on a dataset with a formula of linear terms (shared by both equations).
inline FglsResult fgls_vulnerability(const Dataset& data, const std::string& response, const std::string& formula,
                                     double z, const DesignOptions& opts = {}) {
  const auto terms = parse_formula(formula);
  for (const auto& t : terms)
    if (t.penalized() || t.kind == TermKind::mundlak_mean)
      throw ConfigError("FGLS: only linear terms are supported, got " + t.label());
  FormulaSet f;
  f.terms = {terms};
  f.links = {Link(LinkKind::identity)};
  const auto design = assemble_design(f, data, opts);
  return fgls_vulnerability(design.params.front().X, data.numeric(response), z);
}

}  // namespace gamlss
