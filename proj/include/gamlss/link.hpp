#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "gamlss/error.hpp"
#include "gamlss/special.hpp"

namespace gamlss {

enum class LinkKind { identity, log, logit };

/// Invertible map g from a parameter's domain onto the real line. The
/// predictor lives on the link scale: eta = g(theta), theta = g^{-1}(eta).
class Link {
 public:
  constexpr Link() = default;
  constexpr explicit Link(LinkKind kind) : kind_(kind) {}

  [[nodiscard]] constexpr LinkKind kind() const noexcept { return kind_; }

  [[nodiscard]] std::string_view name() const noexcept {
    switch (kind_) {
      case LinkKind::identity: return "identity";
      case LinkKind::log: return "log";
      case LinkKind::logit: return "logit";
    }
    return "identity";
  }

  [[nodiscard]] bool in_domain(double theta) const noexcept {
    if (!std::isfinite(theta)) return false;
    switch (kind_) {
      case LinkKind::identity: return true;
      case LinkKind::log: return theta > 0;
      case LinkKind::logit: return theta > 0 && theta < 1;
    }
    return false;
  }

  [[nodiscard]] double apply(double theta) const {
    if (!in_domain(theta))
      throw InvalidInput("link '" + std::string(name()) + "': value " + std::to_string(theta) +
                         " outside link domain");
    switch (kind_) {
      case LinkKind::identity: return theta;
      case LinkKind::log: return std::log(theta);
      case LinkKind::logit: return std::log(theta) - std::log1p(-theta);
    }
    return theta;
  }

  [[nodiscard]] double invert(double eta) const noexcept {
    switch (kind_) {
      case LinkKind::identity: return eta;
      case LinkKind::log: return std::exp(eta);
      case LinkKind::logit: return logistic(eta);
    }
    return eta;
  }

  /// d theta / d eta at eta.
  [[nodiscard]] double dtheta(double eta) const noexcept {
    switch (kind_) {
      case LinkKind::identity: return 1.0;
      case LinkKind::log: return std::exp(eta);
      case LinkKind::logit: {
        const double p = logistic(eta);
        return p * (1.0 - p);
      }
    }
    return 1.0;
  }

  /// d^2 theta / d eta^2 at eta.
  [[nodiscard]] double d2theta(double eta) const noexcept {
    switch (kind_) {
      case LinkKind::identity: return 0.0;
      case LinkKind::log: return std::exp(eta);
      case LinkKind::logit: {
        const double p = logistic(eta);
        return p * (1.0 - p) * (1.0 - 2.0 * p);
      }
    }
    return 0.0;
  }

  friend constexpr bool operator==(Link, Link) = default;

 private:
  LinkKind kind_ = LinkKind::identity;
};

inline double link_apply(Link link, double theta) { return link.apply(theta); }
inline double link_invert(Link link, double eta) { return link.invert(eta); }

inline Link link_from_name(std::string_view name) {
  if (name == "identity") return Link(LinkKind::identity);
  if (name == "log") return Link(LinkKind::log);
  if (name == "logit") return Link(LinkKind::logit);
  throw ConfigError("unknown link '" + std::string(name) + "'");
}

}  // namespace gamlss
