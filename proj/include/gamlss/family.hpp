#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gamlss/error.hpp"
#include "gamlss/link.hpp"
#include "gamlss/rng.hpp"

namespace gamlss {

inline constexpr std::size_t kMaxParams = 4;

enum class Domain { real, positive, unit_interval };
enum class Support { real, positive_real, nonnegative_with_zero_mass, count, unit_interval };
enum class Kind { continuous, discrete, mixed };

struct ParamDescriptor {
  std::string_view symbol;  // "mu", "sigma", "tau", "nu"
  Domain domain;
  Link default_link;
};

inline bool in_domain(Domain d, double v) noexcept {
  if (!std::isfinite(v)) return false;
  switch (d) {
    case Domain::real: return true;
    case Domain::positive: return v > 0;
    case Domain::unit_interval: return v > 0 && v < 1;
  }
  return false;
}

class Family;

/// Values of the K distribution parameters for one observation.
class ParamVector {
 public:
  ParamVector() = default;

  /// Checked construction: every value must lie in its declared domain.
  ParamVector(const Family& family, std::initializer_list<double> values);
  ParamVector(const Family& family, std::span<const double> values);

  /// No domain check. Used on hot paths where values come from inverse links.
  static ParamVector unchecked(std::span<const double> values) {
    ParamVector p;
    p.size_ = values.size();
    for (std::size_t k = 0; k < values.size(); ++k) p.values_[k] = values[k];
    return p;
  }

  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  double& operator[](std::size_t k) noexcept { return values_[k]; }
  [[nodiscard]] std::span<const double> values() const noexcept { return {values_.data(), size_}; }

 private:
  std::array<double, kMaxParams> values_{};
  std::size_t size_ = 0;
};

/// Score and observed information of log p with respect to each linked
/// predictor eta_k.
struct LoglikDerivs {
  std::array<double, kMaxParams> u{};         // d log p / d eta_k
  std::array<double, kMaxParams> w{};         // -d2 log p / d eta_k^2, floored
  std::array<double, kMaxParams> hessian{};   // d2 log p / d eta_k^2, raw
  bool finite = true;
};

inline constexpr double kWeightFloor = 1e-10;

/// A K-parameter response distribution. Implementations are immutable and
/// safe to share between threads.
class Family {
 public:
  virtual ~Family() = default;

  [[nodiscard]] virtual std::string_view name() const = 0;
  [[nodiscard]] virtual std::span<const ParamDescriptor> parameters() const = 0;
  [[nodiscard]] virtual Support support() const = 0;

  [[nodiscard]] std::size_t size() const { return parameters().size(); }

  [[nodiscard]] Kind kind() const {
    switch (support()) {
      case Support::count: return Kind::discrete;
      case Support::nonnegative_with_zero_mass: return Kind::mixed;
      default: return Kind::continuous;
    }
  }

  [[nodiscard]] std::vector<Link> default_links() const {
    std::vector<Link> links;
    for (const auto& p : parameters()) links.push_back(p.default_link);
    return links;
  }

  /// Rejects observations whose type does not match the support (e.g. a
  /// fractional count). Values merely outside a continuous support pass.
  void check_type(double y) const {
    if (!std::isfinite(y)) throw InvalidInput(std::string(name()) + ": non-finite observation");
    if (support() == Support::count && (y != std::floor(y)))
      throw InvalidInput(std::string(name()) + ": count family requires integer y, got " +
                         std::to_string(y));
  }

  [[nodiscard]] bool in_support(double y) const {
    switch (support()) {
      case Support::real: return std::isfinite(y);
      case Support::positive_real: return y > 0 && std::isfinite(y);
      case Support::nonnegative_with_zero_mass: return y >= 0 && std::isfinite(y);
      case Support::count: return y >= 0 && y == std::floor(y);
      case Support::unit_interval: return y > 0 && y < 1;
    }
    return false;
  }

  /// Log density (continuous part) or log probability mass (atoms).
  [[nodiscard]] virtual double log_pdf(double y, const ParamVector& theta) const = 0;

  [[nodiscard]] double pdf(double y, const ParamVector& theta) const {
    check_type(y);
    const double lp = log_pdf(y, theta);
    return lp == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(lp);
  }

  /// Right-continuous distribution function F(y) = P(Y <= y).
  [[nodiscard]] virtual double cdf(double y, const ParamVector& theta) const = 0;

  /// Survival function 1 - F(y), accurate in the upper tail where overridden.
  [[nodiscard]] virtual double sf(double y, const ParamVector& theta) const { return 1.0 - cdf(y, theta); }

  /// Left limit F(y-) = P(Y < y). Equals cdf for continuous families.
  [[nodiscard]] virtual double cdf_left(double y, const ParamVector& theta) const {
    return cdf(y, theta);
  }

  /// Generalized inverse: smallest y with F(y) >= p.
  [[nodiscard]] double quantile(double p, const ParamVector& theta) const {
    if (!(p > 0 && p < 1)) throw InvalidInput("quantile: probability must lie in (0,1)");
    return quantile_impl(p, theta);
  }

  /// Inversion sampling.
  [[nodiscard]] double sample(const ParamVector& theta, RngStream& rng) const {
    return quantile_impl(rng.uniform(), theta);
  }

  /// First and second derivatives of log p with respect to each parameter on
  /// its natural scale. Zero mass or out-of-support points give non-finite
  /// values.
  virtual void theta_derivs(double y, const ParamVector& theta, std::span<double> d1,
                            std::span<double> d2) const = 0;

  /// Crude global estimates of the parameters; always inside the domain.
  [[nodiscard]] virtual ParamVector initial_params(std::span<const double> y) const = 0;

 protected:
  [[nodiscard]] virtual double quantile_impl(double p, const ParamVector& theta) const = 0;
};

inline ParamVector::ParamVector(const Family& family, std::span<const double> values) {
  const auto desc = family.parameters();
  if (values.size() != desc.size())
    throw InvalidInput(std::string(family.name()) + ": expected " + std::to_string(desc.size()) +
                       " parameters, got " + std::to_string(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!in_domain(desc[k].domain, values[k]))
      throw InvalidInput(std::string(family.name()) + ": parameter " + std::string(desc[k].symbol) +
                         " = " + std::to_string(values[k]) + " outside its domain");
    values_[k] = values[k];
  }
  size_ = values.size();
}

inline ParamVector::ParamVector(const Family& family, std::initializer_list<double> values)
    : ParamVector(family, std::span<const double>(values.begin(), values.size())) {}

/// Chain-rules theta-scale derivatives through the links to the predictor
/// scale.
inline LoglikDerivs loglik_derivs(const Family& family, double y, const ParamVector& theta,
                                  std::span<const Link> links) {
  const std::size_t k_count = family.size();
  std::array<double, kMaxParams> d1{};
  std::array<double, kMaxParams> d2{};
  family.theta_derivs(y, theta, std::span<double>(d1.data(), k_count),
                      std::span<double>(d2.data(), k_count));
  LoglikDerivs out;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Link link = links[k];
    const double eta = link.apply(theta[k]);
    const double g1 = link.dtheta(eta);
    const double g2 = link.d2theta(eta);
    const double u = d1[k] * g1;
    const double h = d2[k] * g1 * g1 + d1[k] * g2;
    if (!std::isfinite(u) || !std::isfinite(h)) {
      out.finite = false;
      out.u[k] = 0.0;
      out.hessian[k] = 0.0;
      out.w[k] = kWeightFloor;
      continue;
    }
    out.u[k] = u;
    out.hessian[k] = h;
    out.w[k] = std::max(-h, kWeightFloor);
  }
  return out;
}

using FamilyPtr = std::shared_ptr<const Family>;

}  // namespace gamlss
