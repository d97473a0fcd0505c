// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_NUMERICS_BETA_HPP
#define DUSTLDA_NUMERICS_BETA_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "dustlda/error.hpp"
#include "dustlda/numerics/special.hpp"

namespace dustlda::numerics {

/// Shape pair of a Beta distribution. Both parameters positive and finite.
struct BetaShape {
  double a = 1.0;
  double b = 1.0;

  static BetaShape make(double a, double b) {
    BetaShape s{a, b};
    s.validate();
    return s;
  }

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw DomainError("BetaShape: parameters must be positive and finite (a=" +
                        std::to_string(a) + ", b=" + std::to_string(b) + ")");
    }
  }

  friend bool operator==(const BetaShape&, const BetaShape&) = default;
};

struct CredibleInterval {
  double lo = 0.0;
  double hi = 1.0;
  double mass = 0.95;
  /// Set when the shape is not unimodal on (0,1) and the equal-tailed
  /// interval was returned instead of the highest-density one.
  bool equal_tailed_fallback = false;
};

struct BetaSummary {
  double mean = 0.5;
  /// Interior mode; absent when a ≤ 1 or b ≤ 1 (mode on the boundary or
  /// not unique).
  std::optional<double> mode;
};

inline BetaSummary beta_summary(const BetaShape& shape) {
  shape.validate();
  BetaSummary out;
  out.mean = shape.a / (shape.a + shape.b);
  if (shape.a > 1.0 && shape.b > 1.0) out.mode = (shape.a - 1.0) / (shape.a + shape.b - 2.0);
  return out;
}

inline double beta_variance(const BetaShape& shape) {
  const double s = shape.a + shape.b;
  return shape.a * shape.b / (s * s * (s + 1.0));
}

inline double log_beta_function(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

namespace detail {

inline constexpr double kLargeShape = 10.0;

/// lnΓ(big + small) − lnΓ(big) for big ≥ kLargeShape, without forming the
/// two large terms.
inline double log_gamma_ratio(double big, double small) {
  const double s = big + small;
  return (big - 0.5) * std::log1p(small / big) + small * std::log(s) - small +
         stirling_remainder(s) - stirling_remainder(big);
}

/// ln[x^a (1−x)^b / B(a,b)] for 0 < x < 1.
///
/// For large shapes the Gamma functions nearly cancel; the difference is then
/// taken analytically through Stirling's formula so that only the small
/// remainders are subtracted.
inline double log_beta_prefactor(double a, double b, double x) {
  if (a >= kLargeShape && b >= kLargeShape) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    const double s = a + b;
    const double d = x * b - (1.0 - x) * a;  // x(a+b) − a
    return a * std::log1p(d / a) + b * std::log1p(-d / b) + 0.5 * std::log(a * b / s) -
           kHalfLog2Pi + stirling_remainder(s) - stirling_remainder(a) - stirling_remainder(b);
  }
  if (a >= kLargeShape || b >= kLargeShape) {
    const double big = std::max(a, b);
    const double small = std::min(a, b);
    return a * std::log(x) + b * std::log1p(-x) - log_gamma(small) + log_gamma_ratio(big, small);
  }
  return a * std::log(x) + b * std::log1p(-x) - log_beta_function(a, b);
}

/// Continued fraction for I_x(a,b) (modified Lentz), valid for
/// x < (a+1)/(a+b+2).
inline double incomplete_beta_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const int max_iter = 1000 + static_cast<int>(20.0 * std::sqrt(std::max(a, b)));
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double dm = m;
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericalFailure("incomplete beta continued fraction did not converge",
                         static_cast<std::size_t>(max_iter), "beta_cdf");
}

}  // namespace detail

/// Regularised incomplete beta I_x(a, b), the Beta CDF.
inline double beta_cdf(const BetaShape& shape, double x) {
  shape.validate();
  if (std::isnan(x)) throw DomainError("beta_cdf: x is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = shape.a;
  const double b = shape.b;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(detail::log_beta_prefactor(a, b, x)) *
           detail::incomplete_beta_fraction(a, b, x) / a;
  }
  const double y = 1.0 - x;
  return 1.0 - std::exp(detail::log_beta_prefactor(b, a, y)) *
                   detail::incomplete_beta_fraction(b, a, y) / b;
}

inline double beta_log_pdf(const BetaShape& shape, double x) {
  shape.validate();
  if (x <= 0.0 || x >= 1.0) {
    const double edge = x <= 0.0 ? shape.a : shape.b;
    const double other = x <= 0.0 ? shape.b : shape.a;
    if (x < 0.0 || x > 1.0) return -std::numeric_limits<double>::infinity();
    if (edge < 1.0) return std::numeric_limits<double>::infinity();
    if (edge > 1.0) return -std::numeric_limits<double>::infinity();
    return std::log(other);  // Beta(1, b) at 0 has density b
  }
  return detail::log_beta_prefactor(shape.a, shape.b, x) - std::log(x) - std::log1p(-x);
}

inline double beta_pdf(const BetaShape& shape, double x) { return std::exp(beta_log_pdf(shape, x)); }

/// Inverse of beta_cdf: the x with I_x(a,b) = p. Safeguarded Newton on a
/// shrinking bracket.
inline double beta_quantile(const BetaShape& shape, double p) {
  shape.validate();
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("beta_quantile: p must lie in [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const double a = shape.a;
  const double b = shape.b;

  // Starting point: tail approximations I_x ≈ x^a/(a B) and
  // 1 − I_x ≈ (1−x)^b/(b B), falling back to the mean.
  const double mean = a / (a + b);
  const double log_beta = log_beta_function(a, b);
  double x = mean;
  const double lower_guess = std::exp((std::log(p) + std::log(a) + log_beta) / a);
  const double upper_guess = 1.0 - std::exp((std::log1p(-p) + std::log(b) + log_beta) / b);
  if (lower_guess < mean) x = lower_guess;
  if (upper_guess > mean) x = upper_guess;
  if (!(x > 0.0 && x < 1.0)) x = mean;

  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 2000; ++iter) {
    const double f = beta_cdf(shape, x) - p;
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double density = beta_pdf(shape, x);
    double next = x - f / density;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = (lo > 0.0 && hi / lo > 1e3) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
      if (lo == 0.0 && hi < 1e-3) next = hi * 0.0625;
    }
    if (std::fabs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(next) ||
        next == 0.0) {
      return next;
    }
    x = next;
  }
  return x;
}

/// Shortest interval with Beta probability `mass`, found by golden-section
/// minimisation of Q(p + mass) − Q(p) over the lower tail mass p.
///
/// Shapes with a ≤ 1 or b ≤ 1 are not unimodal on the open interval; they get
/// the equal-tailed interval with the fallback flag set.
inline CredibleInterval beta_hpdi(const BetaShape& shape, double mass) {
  shape.validate();
  if (!(mass > 0.0 && mass < 1.0)) throw DomainError("beta_hpdi: mass must lie in (0,1)");
  CredibleInterval out;
  out.mass = mass;
  if (shape.a <= 1.0 || shape.b <= 1.0) {
    out.lo = beta_quantile(shape, 0.5 * (1.0 - mass));
    out.hi = beta_quantile(shape, 0.5 * (1.0 + mass));
    out.equal_tailed_fallback = true;
    return out;
  }
  const auto width = [&](double p) {
    return beta_quantile(shape, p + mass) - beta_quantile(shape, p);
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double left = 0.0;
  double right = 1.0 - mass;
  double x1 = right - inv_phi * (right - left);
  double x2 = left + inv_phi * (right - left);
  double f1 = width(x1);
  double f2 = width(x2);
  while (right - left > 1e-13) {
    if (f1 <= f2) {
      right = x2;
      x2 = x1;
      f2 = f1;
      x1 = right - inv_phi * (right - left);
      f1 = width(x1);
    } else {
      left = x1;
      x1 = x2;
      f1 = f2;
      x2 = left + inv_phi * (right - left);
      f2 = width(x2);
    }
  }
  const double p = 0.5 * (left + right);
  out.lo = beta_quantile(shape, p);
  out.hi = beta_quantile(shape, p + mass);
  return out;
}

}  // namespace dustlda::numerics

#endif  // DUSTLDA_NUMERICS_BETA_HPP
