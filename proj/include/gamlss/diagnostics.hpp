#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "gamlss/data.hpp"
#include "gamlss/error.hpp"
#include "gamlss/family.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/rng.hpp"
#include "gamlss/special.hpp"

namespace gamlss {

inline constexpr double kResidualClamp = 1e-12;

struct QuantileResiduals {
  std::vector<double> values;
  std::size_t clamped = 0;  // observations whose CDF value hit 0 or 1
};

/// Normalized quantile residuals Φ⁻¹(F(y_i | θ_i)). For discrete and mixed
/// families the CDF value is drawn uniformly on (F(y⁻), F(y)] from `rng`,
/// one draw per observation in row order.
inline QuantileResiduals quantile_residuals(const Family& family, std::span<const double> y,
                                            std::span<const ParamVector> theta, RngStream& rng) {
  if (y.size() != theta.size()) throw InvalidInput("quantile_residuals: length mismatch");
  QuantileResiduals out;
  out.values.resize(y.size());
  const bool randomize = family.kind() != Kind::continuous;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double p = family.cdf(y[i], theta[i]);
    if (randomize) {
      const double lo = family.cdf_left(y[i], theta[i]);
      p = lo + rng.uniform() * (p - lo);
    }
    if (!(p >= kResidualClamp && p <= 1 - kResidualClamp)) {
      p = std::clamp(std::isnan(p) ? 0.5 : p, kResidualClamp, 1 - kResidualClamp);
      ++out.clamped;
    }
    out.values[i] = normal_quantile(p);
  }
  return out;
}

/// In-sample residuals of a fitted model.
inline QuantileResiduals quantile_residuals(const FittedModel& model, RngStream& rng) {
  std::vector<ParamVector> theta(model.rows());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = model.fitted_params(i);
  return quantile_residuals(model.family(), model.y, theta, rng);
}

/// Residuals of a fitted model on (possibly new) data holding the response.
inline QuantileResiduals quantile_residuals(const FittedModel& model, const Dataset& data, RngStream& rng) {
  const auto theta = predict_parameters(model, data);
  return quantile_residuals(model.family(), data.numeric(model.spec.response), theta, rng);
}

/// Plotting position of the i-th (0-based) of n order statistics.
inline double plotting_position(std::size_t i, std::size_t n) {
  return (static_cast<double>(i + 1) - 0.375) / (static_cast<double>(n) + 0.25);
}

struct QQPoint {
  double theoretical;
  double sample;
};

inline std::vector<QQPoint> qq_data(std::vector<double> r) {
  std::sort(r.begin(), r.end());
  std::vector<QQPoint> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = {normal_quantile(plotting_position(i, r.size())), r[i]};
  return out;
}

/// Correlation between sorted residuals and normal order-statistic medians.
inline double filliben(const std::vector<double>& r) {
  const auto qq = qq_data(r);
  const double n = static_cast<double>(qq.size());
  double mx = 0, my = 0;
  for (const auto& p : qq) {
    mx += p.theoretical;
    my += p.sample;
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& p : qq) {
    sxy += (p.theoretical - mx) * (p.sample - my);
    sxx += (p.theoretical - mx) * (p.theoretical - mx);
    syy += (p.sample - my) * (p.sample - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

struct ResidualSummary {
  double mean = 0, variance = 0, skewness = 0, kurtosis = 0, filliben = 0;
};

/// Moment summary with population (biased) central moments.
inline ResidualSummary residual_summary(const std::vector<double>& r) {
  if (r.size() < 8) throw InvalidInput("residual_summary: needs at least 8 residuals");
  const double n = static_cast<double>(r.size());
  ResidualSummary s;
  for (double v : r) s.mean += v;
  s.mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : r) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0)) throw InvalidInput("residual_summary: residuals have zero variance");
  s.variance = m2;
  s.skewness = m3 / std::pow(m2, 1.5);
  s.kurtosis = m4 / (m2 * m2);
  s.filliben = filliben(r);
  return s;
}

struct ClusterCheck {
  double adjusted_r2 = 0;
  double f_statistic = 0;
  double p_value = 1;
  std::size_t clusters = 0;
};

/// OLS of residuals on cluster indicators (one-way ANOVA): adjusted R² and
/// the overall F-test p-value.
inline ClusterCheck cluster_heterogeneity_check(const std::vector<double>& r, const std::vector<std::string>& cluster) {
  if (r.size() != cluster.size()) throw InvalidInput("cluster check: length mismatch");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < r.size(); ++i) {
    auto& a = acc[cluster[i]];
    a.first += r[i];
    a.second += 1;
  }
  const std::size_t G = acc.size();
  const std::size_t n = r.size();
  if (G < 2) throw InvalidInput("cluster check: needs at least two clusters");
  if (n <= G) throw InvalidInput("cluster check: one observation per cluster saturates the regression");
  double grand = 0;
  for (double v : r) grand += v;
  grand /= static_cast<double>(n);
  double sst = 0, ssw = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = acc[cluster[i]];
    const double m = a.first / static_cast<double>(a.second);
    sst += (r[i] - grand) * (r[i] - grand);
    ssw += (r[i] - m) * (r[i] - m);
  }
  const double ssb = sst - ssw;
  ClusterCheck c;
  c.clusters = G;
  const double df1 = static_cast<double>(G - 1), df2 = static_cast<double>(n - G);
  if (!(sst > 0)) throw InvalidInput("cluster check: residuals have zero variance");
  c.adjusted_r2 = 1.0 - (ssw / df2) / (sst / static_cast<double>(n - 1));
  if (ssw <= 0) {
    c.adjusted_r2 = 1.0;
    c.f_statistic = std::numeric_limits<double>::infinity();
    c.p_value = 0.0;
    return c;
  }
  c.f_statistic = std::max(0.0, ssb / df1) / (ssw / df2);
  c.p_value = boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), c.f_statistic));
  return c;
}

}  // namespace gamlss
