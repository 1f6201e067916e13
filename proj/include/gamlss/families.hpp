#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "gamlss/family.hpp"

namespace gamlss {

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double sample_mean(std::span<const double> y) {
  return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

inline double sample_sd(std::span<const double> y) {
  const double m = sample_mean(y);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  return y.size() > 1 ? std::sqrt(ss / static_cast<double>(y.size() - 1)) : 0.0;
}

inline double positive_or(double v, double fallback) {
  return (std::isfinite(v) && v > 0) ? v : fallback;
}

// Two-parameter gamma with mean mu and coefficient of variation sigma
// (shape 1/sigma^2, scale mu*sigma^2).
struct GammaMuSigma {
  static double log_pdf(double y, double mu, double sigma) {
    if (!(y > 0)) return kNegInf;
    const double shape = 1.0 / (sigma * sigma);
    return shape * std::log(shape / mu) + (shape - 1.0) * std::log(y) - shape * y / mu -
           boost::math::lgamma(shape);
  }
  static double cdf(double y, double mu, double sigma) {
    if (!(y > 0)) return 0.0;
    const double shape = 1.0 / (sigma * sigma);
    return boost::math::gamma_p(shape, y * shape / mu);
  }
  static double sf(double y, double mu, double sigma) {
    if (!(y > 0)) return 1.0;
    const double shape = 1.0 / (sigma * sigma);
    return boost::math::gamma_q(shape, y * shape / mu);
  }
  static double quantile(double p, double mu, double sigma) {
    const double shape = 1.0 / (sigma * sigma);
    return boost::math::gamma_p_inv(shape, p) * mu / shape;
  }
  static void derivs(double y, double mu, double sigma, double& d1mu, double& d2mu, double& d1s,
                     double& d2s) {
    const double shape = 1.0 / (sigma * sigma);
    d1mu = shape * (y - mu) / (mu * mu);
    d2mu = -shape * (2.0 * y - mu) / (mu * mu * mu);
    // log p as a function of the shape, then chain through shape = sigma^-2.
    const double a1 = std::log(shape) + 1.0 - std::log(mu) + std::log(y) - y / mu -
                      boost::math::digamma(shape);
    const double a2 = 1.0 / shape - boost::math::trigamma(shape);
    const double ds = -2.0 * shape / sigma;
    const double dss = 6.0 * shape / (sigma * sigma);
    d1s = a1 * ds;
    d2s = a2 * ds * ds + a1 * dss;
  }
};

inline double poisson_cdf(double k, double mu) {
  if (k < 0) return 0.0;
  return boost::math::gamma_q(std::floor(k) + 1.0, mu);
}

inline double poisson_quantile(double p, double mu) {
  double k = std::max(0.0, std::floor(mu + normal_quantile(p) * std::sqrt(mu)));
  while (k > 0 && poisson_cdf(k - 1, mu) >= p) k -= 1;
  while (poisson_cdf(k, mu) < p) k += 1;
  return k;
}

inline double clamp_unit(double v) { return std::clamp(v, 0.01, 0.99); }

}  // namespace detail

class NormalFamily final : public Family {
 public:
  std::string_view name() const override { return "normal"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::real; }

  double log_pdf(double y, const ParamVector& t) const override {
    const double z = (y - t[0]) / t[1];
    return -detail::kLogSqrt2Pi - std::log(t[1]) - 0.5 * z * z;
  }
  double cdf(double y, const ParamVector& t) const override { return normal_cdf((y - t[0]) / t[1]); }
  double sf(double y, const ParamVector& t) const override { return normal_cdf((t[0] - y) / t[1]); }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    const double r = y - t[0];
    const double s2 = t[1] * t[1];
    d1[0] = r / s2;
    d2[0] = -1.0 / s2;
    d1[1] = -1.0 / t[1] + r * r / (s2 * t[1]);
    d2[1] = 1.0 / s2 - 3.0 * r * r / (s2 * s2);
  }
  ParamVector initial_params(std::span<const double> y) const override {
    const double v[] = {detail::sample_mean(y), detail::positive_or(detail::sample_sd(y), 1.0)};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    return t[0] + t[1] * normal_quantile(p);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::real, Link(LinkKind::identity)},
      {"sigma", Domain::positive, Link(LinkKind::log)},
  };
};

/// log Y ~ Normal(mu, sigma).
class LogNormalFamily final : public Family {
 public:
  std::string_view name() const override { return "lognormal"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::positive_real; }

  double log_pdf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return detail::kNegInf;
    const double ly = std::log(y);
    const double z = (ly - t[0]) / t[1];
    return -detail::kLogSqrt2Pi - std::log(t[1]) - ly - 0.5 * z * z;
  }
  double cdf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return 0.0;
    return normal_cdf((std::log(y) - t[0]) / t[1]);
  }
  double sf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return 1.0;
    return normal_cdf((t[0] - std::log(y)) / t[1]);
  }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    const double r = std::log(y) - t[0];
    const double s2 = t[1] * t[1];
    d1[0] = r / s2;
    d2[0] = -1.0 / s2;
    d1[1] = -1.0 / t[1] + r * r / (s2 * t[1]);
    d2[1] = 1.0 / s2 - 3.0 * r * r / (s2 * s2);
  }
  ParamVector initial_params(std::span<const double> y) const override {
    std::vector<double> ly;
    ly.reserve(y.size());
    for (double v : y) ly.push_back(std::log(v));
    const double v[] = {detail::sample_mean(ly), detail::positive_or(detail::sample_sd(ly), 1.0)};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    return std::exp(t[0] + t[1] * normal_quantile(p));
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::real, Link(LinkKind::identity)},
      {"sigma", Domain::positive, Link(LinkKind::log)},
  };
};

/// Gamma with mean mu and variance sigma^2 mu^2.
class GammaFamily final : public Family {
 public:
  std::string_view name() const override { return "gamma"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::positive_real; }

  double log_pdf(double y, const ParamVector& t) const override {
    return detail::GammaMuSigma::log_pdf(y, t[0], t[1]);
  }
  double cdf(double y, const ParamVector& t) const override {
    return detail::GammaMuSigma::cdf(y, t[0], t[1]);
  }
  double sf(double y, const ParamVector& t) const override { return detail::GammaMuSigma::sf(y, t[0], t[1]); }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    detail::GammaMuSigma::derivs(y, t[0], t[1], d1[0], d2[0], d1[1], d2[1]);
  }
  ParamVector initial_params(std::span<const double> y) const override {
    const double m = detail::positive_or(detail::sample_mean(y), 1.0);
    const double v[] = {m, detail::positive_or(detail::sample_sd(y) / m, 1.0)};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    return detail::GammaMuSigma::quantile(p, t[0], t[1]);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::positive, Link(LinkKind::log)},
      {"sigma", Domain::positive, Link(LinkKind::log)},
  };
};

/// Singh-Maddala (Burr XII): F(y) = 1 - [1 + (y/b)^a]^(-q) with mu = b,
/// sigma = a and tau = q.
class SinghMaddalaFamily final : public Family {
 public:
  std::string_view name() const override { return "singh-maddala"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::positive_real; }

  double log_pdf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return detail::kNegInf;
    const double b = t[0], a = t[1], q = t[2];
    const double tt = a * std::log(y / b);
    return std::log(a) + std::log(q) - std::log(y) + tt - (q + 1.0) * softplus(tt);
  }
  double cdf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return 0.0;
    const double tt = t[1] * std::log(y / t[0]);
    return -std::expm1(-t[2] * softplus(tt));
  }
  double sf(double y, const ParamVector& t) const override {
    if (!(y > 0)) return 1.0;
    return std::exp(-t[2] * softplus(t[1] * std::log(y / t[0])));
  }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    const double b = t[0], a = t[1], q = t[2];
    const double lr = std::log(y / b);
    const double tt = a * lr;
    const double frac = logistic(tt);                  // s / (1 + s)
    const double frac2 = frac * logistic(-tt);         // s / (1 + s)^2
    const double h = (q + 1.0) * frac - 1.0;
    d1[0] = a / b * h;
    d2[0] = -a / (b * b) * h - (a / b) * (q + 1.0) * frac2 * a / b;
    d1[1] = 1.0 / a + lr - (q + 1.0) * lr * frac;
    d2[1] = -1.0 / (a * a) - (q + 1.0) * lr * lr * frac2;
    d1[2] = 1.0 / q - softplus(tt);
    d2[2] = -1.0 / (q * q);
  }
  ParamVector initial_params(std::span<const double> y) const override {
    std::vector<double> ly;
    ly.reserve(y.size());
    for (double v : y) ly.push_back(std::log(v));
    std::vector<double> sorted = ly;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    // With q = 1 the log response is logistic with scale 1/a.
    const double sd = detail::positive_or(detail::sample_sd(ly), 1.0);
    const double v[] = {std::exp(median), std::numbers::pi / (std::sqrt(3.0) * sd), 1.0};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    const double base = std::expm1(-std::log1p(-p) / t[2]);
    return t[0] * std::pow(base, 1.0 / t[1]);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::positive, Link(LinkKind::log)},
      {"sigma", Domain::positive, Link(LinkKind::log)},
      {"tau", Domain::positive, Link(LinkKind::log)},
  };
};

/// Point mass nu at zero, otherwise Gamma(mu, sigma).
class ZeroAdjustedGammaFamily final : public Family {
 public:
  std::string_view name() const override { return "zero-adjusted-gamma"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::nonnegative_with_zero_mass; }

  double log_pdf(double y, const ParamVector& t) const override {
    if (y < 0) return detail::kNegInf;
    if (y == 0) return std::log(t[2]);
    return std::log1p(-t[2]) + detail::GammaMuSigma::log_pdf(y, t[0], t[1]);
  }
  double cdf(double y, const ParamVector& t) const override {
    if (y < 0) return 0.0;
    return t[2] + (1.0 - t[2]) * detail::GammaMuSigma::cdf(y, t[0], t[1]);
  }
  double sf(double y, const ParamVector& t) const override {
    if (y < 0) return 1.0;
    return (1.0 - t[2]) * detail::GammaMuSigma::sf(y, t[0], t[1]);
  }
  double cdf_left(double y, const ParamVector& t) const override {
    if (y <= 0) return 0.0;
    return cdf(y, t);
  }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    if (y == 0) {
      d1[0] = d2[0] = d1[1] = d2[1] = 0.0;
      d1[2] = 1.0 / t[2];
      d2[2] = -1.0 / (t[2] * t[2]);
      return;
    }
    detail::GammaMuSigma::derivs(y, t[0], t[1], d1[0], d2[0], d1[1], d2[1]);
    d1[2] = -1.0 / (1.0 - t[2]);
    d2[2] = -1.0 / ((1.0 - t[2]) * (1.0 - t[2]));
  }
  ParamVector initial_params(std::span<const double> y) const override {
    std::vector<double> pos;
    for (double v : y)
      if (v > 0) pos.push_back(v);
    const double nu = detail::clamp_unit(1.0 - static_cast<double>(pos.size()) / y.size());
    double m = 1.0, cv = 1.0;
    if (!pos.empty()) {
      m = detail::positive_or(detail::sample_mean(pos), 1.0);
      cv = detail::positive_or(detail::sample_sd(pos) / m, 1.0);
    }
    const double v[] = {m, cv, nu};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    if (p <= t[2]) return 0.0;
    return detail::GammaMuSigma::quantile((p - t[2]) / (1.0 - t[2]), t[0], t[1]);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::positive, Link(LinkKind::log)},
      {"sigma", Domain::positive, Link(LinkKind::log)},
      {"nu", Domain::unit_interval, Link(LinkKind::logit)},
  };
};

class PoissonFamily final : public Family {
 public:
  std::string_view name() const override { return "poisson"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::count; }

  double log_pdf(double y, const ParamVector& t) const override {
    if (y < 0) return detail::kNegInf;
    return y * std::log(t[0]) - t[0] - boost::math::lgamma(y + 1.0);
  }
  double cdf(double y, const ParamVector& t) const override { return detail::poisson_cdf(y, t[0]); }
  double cdf_left(double y, const ParamVector& t) const override {
    return detail::poisson_cdf(std::ceil(y) - 1.0, t[0]);
  }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    d1[0] = y / t[0] - 1.0;
    d2[0] = -y / (t[0] * t[0]);
  }
  ParamVector initial_params(std::span<const double> y) const override {
    const double v[] = {detail::positive_or(detail::sample_mean(y), 0.5)};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    return detail::poisson_quantile(p, t[0]);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::positive, Link(LinkKind::log)},
  };
};

/// Extra zeros with probability sigma, otherwise Poisson(mu).
class ZeroInflatedPoissonFamily final : public Family {
 public:
  std::string_view name() const override { return "zero-inflated-poisson"; }
  std::span<const ParamDescriptor> parameters() const override { return kParams; }
  Support support() const override { return Support::count; }

  double log_pdf(double y, const ParamVector& t) const override {
    if (y < 0) return detail::kNegInf;
    if (y == 0) return std::log(t[1] + (1.0 - t[1]) * std::exp(-t[0]));
    return std::log1p(-t[1]) + y * std::log(t[0]) - t[0] - boost::math::lgamma(y + 1.0);
  }
  double cdf(double y, const ParamVector& t) const override {
    if (y < 0) return 0.0;
    return t[1] + (1.0 - t[1]) * detail::poisson_cdf(y, t[0]);
  }
  double cdf_left(double y, const ParamVector& t) const override {
    return cdf(std::ceil(y) - 1.0, t);
  }
  void theta_derivs(double y, const ParamVector& t, std::span<double> d1,
                    std::span<double> d2) const override {
    const double mu = t[0], pi0 = t[1];
    if (y == 0) {
      const double e = std::exp(-mu);
      const double p0 = pi0 + (1.0 - pi0) * e;
      const double g1 = -(1.0 - pi0) * e / p0;
      const double g2 = (1.0 - pi0) * e / p0;
      d1[0] = g1;
      d2[0] = g2 - g1 * g1;
      const double s1 = (1.0 - e) / p0;
      d1[1] = s1;
      d2[1] = -s1 * s1;
      return;
    }
    d1[0] = y / mu - 1.0;
    d2[0] = -y / (mu * mu);
    d1[1] = -1.0 / (1.0 - pi0);
    d2[1] = -1.0 / ((1.0 - pi0) * (1.0 - pi0));
  }
  ParamVector initial_params(std::span<const double> y) const override {
    std::vector<double> pos;
    for (double v : y)
      if (v > 0) pos.push_back(v);
    const double mu = pos.empty() ? 0.5 : detail::positive_or(detail::sample_mean(pos), 0.5);
    const double zero_share = 1.0 - static_cast<double>(pos.size()) / y.size();
    const double e = std::exp(-mu);
    const double v[] = {mu, detail::clamp_unit((zero_share - e) / (1.0 - e))};
    return ParamVector::unchecked(v);
  }

 protected:
  double quantile_impl(double p, const ParamVector& t) const override {
    if (p <= cdf(0.0, t)) return 0.0;
    return detail::poisson_quantile((p - t[1]) / (1.0 - t[1]), t[0]);
  }

 private:
  static constexpr ParamDescriptor kParams[] = {
      {"mu", Domain::positive, Link(LinkKind::log)},
      {"sigma", Domain::unit_interval, Link(LinkKind::logit)},
  };
};

/// Looks up a family by its stable identifier.
inline FamilyPtr make_family(std::string_view name) {
  if (name == "normal") return std::make_shared<NormalFamily>();
  if (name == "lognormal") return std::make_shared<LogNormalFamily>();
  if (name == "gamma") return std::make_shared<GammaFamily>();
  if (name == "singh-maddala") return std::make_shared<SinghMaddalaFamily>();
  if (name == "zero-adjusted-gamma") return std::make_shared<ZeroAdjustedGammaFamily>();
  if (name == "poisson") return std::make_shared<PoissonFamily>();
  if (name == "zero-inflated-poisson") return std::make_shared<ZeroInflatedPoissonFamily>();
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

inline std::vector<std::string> family_names() {
  return {"normal", "lognormal", "gamma", "singh-maddala", "zero-adjusted-gamma", "poisson",
          "zero-inflated-poisson"};
}

}  // namespace gamlss
