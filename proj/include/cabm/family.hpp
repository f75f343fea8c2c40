#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "cabm/errors.hpp"
#include "cabm/normal.hpp"

namespace cabm {

/// Linear predictors are clamped to [-kPiClamp, kPiClamp] before any mean or
/// derivative evaluation. The same clamp is applied everywhere so that the
/// mean function stays monotone and finite.
inline constexpr double kPiClamp = 35.0;

enum class FamilyKind { logistic, poisson, probit };

/// Edge distribution of a_ij given its linear predictor.
struct EdgeFamily {
  FamilyKind kind = FamilyKind::poisson;

  constexpr std::string_view name() const noexcept {
    switch (kind) {
      case FamilyKind::logistic: return "logistic";
      case FamilyKind::poisson: return "poisson";
      case FamilyKind::probit: return "probit";
    }
    return "unknown";
  }

  /// Logistic and Poisson are exponential families, for which the variance
  /// function equals the first derivative of the mean.
  constexpr bool exponential_family() const noexcept { return kind != FamilyKind::probit; }

  /// Support is {0,1}.
  constexpr bool binary() const noexcept { return kind != FamilyKind::poisson; }

  friend constexpr bool operator==(EdgeFamily, EdgeFamily) = default;

  static constexpr EdgeFamily logistic() { return {FamilyKind::logistic}; }
  static constexpr EdgeFamily poisson() { return {FamilyKind::poisson}; }
  static constexpr EdgeFamily probit() { return {FamilyKind::probit}; }
};

inline EdgeFamily family_from_string(std::string_view name) {
  if (name == "logistic") return EdgeFamily::logistic();
  if (name == "poisson") return EdgeFamily::poisson();
  if (name == "probit") return EdgeFamily::probit();
  throw Error(ErrorCode::config, "unknown family '" + std::string(name) +
                                     "' (expected logistic, poisson or probit)");
}

namespace detail {

inline double clamp_predictor(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::domain, "non-finite linear predictor");
  return std::clamp(x, -kPiClamp, kPiClamp);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// Mean of a_ij as a function of the linear predictor.
inline double mu(EdgeFamily fam, double x) {
  x = detail::clamp_predictor(x);
  switch (fam.kind) {
    case FamilyKind::logistic: return detail::sigmoid(x);
    case FamilyKind::poisson: return std::exp(x);
    case FamilyKind::probit: return normal::cdf(x);
  }
  return 0.0;
}

/// Derivative of order 1, 2 or 3 of the mean function.
inline double mu_derivative(EdgeFamily fam, double x, int order) {
  if (order < 1 || order > 3) {
    throw Error(ErrorCode::domain, "derivative order must be 1, 2 or 3");
  }
  x = detail::clamp_predictor(x);
  switch (fam.kind) {
    case FamilyKind::logistic: {
      const double p = detail::sigmoid(x);
      const double q = detail::sigmoid(-x);
      const double d1 = p * q;
      if (order == 1) return d1;
      if (order == 2) return d1 * (q - p);
      return d1 * (1.0 - 6.0 * d1);
    }
    case FamilyKind::poisson:
      return std::exp(x);
    case FamilyKind::probit: {
      const double phi = normal::pdf(x);
      if (order == 1) return phi;
      if (order == 2) return -x * phi;
      return (x * x - 1.0) * phi;
    }
  }
  return 0.0;
}

/// Var(a_ij) at linear predictor x.
inline double edge_variance(EdgeFamily fam, double x) {
  x = detail::clamp_predictor(x);
  switch (fam.kind) {
    case FamilyKind::logistic: return detail::sigmoid(x) * detail::sigmoid(-x);
    case FamilyKind::poisson: return std::exp(x);
    case FamilyKind::probit: return normal::cdf(x) * normal::survival(x);
  }
  return 0.0;
}

/// One draw of a_ij with mean mu(fam, x).
template <class Rng>
double sample_edge(EdgeFamily fam, double x, Rng& rng) {
  const double m = mu(fam, x);
  if (fam.binary()) {
    std::bernoulli_distribution draw(m);
    return draw(rng) ? 1.0 : 0.0;
  }
  std::poisson_distribution<std::int64_t> draw(m);
  return static_cast<double>(draw(rng));
}

}  // namespace cabm
