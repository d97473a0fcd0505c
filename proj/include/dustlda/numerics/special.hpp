// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_NUMERICS_SPECIAL_HPP
#define DUSTLDA_NUMERICS_SPECIAL_HPP

#include <cmath>
#include <numbers>
#include <string>

#include "dustlda/error.hpp"

namespace dustlda::numerics {

namespace detail {

// Below this the argument is shifted upward by the recurrence before the
// asymptotic series is applied; at 10 both series are below 1e-16.
inline constexpr double kAsymptoticThreshold = 10.0;

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

/// Remainder of Stirling's series, lnΓ(x) − [(x − ½) ln x − x + ½ ln 2π], for x ≥ 10.
inline double stirling_remainder(double x) noexcept {
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r * (1.0 / 12.0 +
              r2 * (-1.0 / 360.0 +
                    r2 * (1.0 / 1260.0 +
                          r2 * (-1.0 / 1680.0 +
                                r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360360.0 + r2 / 156.0))))));
}

inline double log_gamma_asymptotic(double x) noexcept {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + stirling_remainder(x);
}

inline double digamma_asymptotic(double x) noexcept {
  const double r2 = 1.0 / (x * x);
  const double tail =
      r2 * (1.0 / 12.0 -
            r2 * (1.0 / 120.0 -
                  r2 * (1.0 / 252.0 -
                        r2 * (1.0 / 240.0 -
                              r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))));
  return std::log(x) - 0.5 / x - tail;
}

}  // namespace detail

/// Natural log of the Gamma function for x > 0.
///
/// Small arguments are lifted into the asymptotic region with
/// lnΓ(x) = lnΓ(x + k) − ln(x (x+1) ... (x+k−1)).
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  if (x >= detail::kAsymptoticThreshold) return detail::log_gamma_asymptotic(x);
  double product = 1.0;
  double z = x;
  while (z < detail::kAsymptoticThreshold) {
    product *= z;
    z += 1.0;
  }
  return detail::log_gamma_asymptotic(z) - std::log(product);
}

/// Digamma Ψ(x) = d lnΓ(x)/dx for x > 0, via Ψ(x) = Ψ(x + 1) − 1/x and the
/// asymptotic expansion.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  while (x < detail::kAsymptoticThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  return shift + detail::digamma_asymptotic(x);
}

}  // namespace dustlda::numerics

#endif  // DUSTLDA_NUMERICS_SPECIAL_HPP
