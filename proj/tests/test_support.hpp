#pragma once

// Independent numerical oracles shared by the unit and acceptance suites.
// Nothing here calls into the library's own quadrature or solvers.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gamlss/rng.hpp"

namespace oracle {

/// Composite Simpson rule with `n` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// First derivative by Richardson-extrapolated central differences.
inline double d1(const std::function<double(double)>& f, double x, double h = 1e-3) {
  auto c = [&](double hh) { return (f(x + hh) - f(x - hh)) / (2 * hh); };
  return (4.0 * c(h / 2) - c(h)) / 3.0;
}

/// Second derivative by Richardson-extrapolated central differences.
inline double d2(const std::function<double(double)>& f, double x, double h = 1e-2) {
  auto c = [&](double hh) { return (f(x + hh) - 2.0 * f(x) + f(x - hh)) / (hh * hh); };
  return (4.0 * c(h / 2) - c(h)) / 3.0;
}

/// Bisection for an increasing function.
inline double bisect(const std::function<double(double)>& f, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Ordinary least squares by normal equations.
inline Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Kolmogorov-Smirnov distance of a sample to N(0,1).
inline double ks_normal(std::vector<double> r) {
  std::sort(r.begin(), r.end());
  const double n = static_cast<double>(r.size());
  double d = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double F = 0.5 * std::erfc(-r[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
  }
  return d;
}

}  // namespace oracle
