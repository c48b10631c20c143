#pragma once

// Scalar special functions shared by the sensor models: standard-normal cdf
// and quantile, the principal Lambert-W branch, and the two-sided inverse of
// x -> x / sqrt(exp(x)/w - 1) needed by the dynamic-range formulas.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qistk::specfun {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;
inline constexpr double kInvE = 0.36787944117144232160;

// Thrown when an SNR curve never reaches the level whose crossing was
// requested (peak below 1), so the equation has no real root.
struct no_crossing_error : std::domain_error {
  using std::domain_error::domain_error;
};

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / kSqrt2Pi;
}

// erfc-based, absolute error < 1e-15 over the whole real line; accurate
// relative error in both tails, no table lookup.
inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

// Inverse of normal_cdf. Acklam's rational estimate refined with one Halley
// step; round-trips normal_cdf(normal_quantile(p)) to ~1e-15.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0,1)");
  }
  static constexpr std::array<double, 6> a = {
      -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {
      -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {
      -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {
      7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double z;
  if (p < p_low) {
    const double u = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double u = p - 0.5;
    const double r = u * u;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double u = std::sqrt(-2.0 * std::log1p(-p));
    z = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u +
          c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  }
  // Halley step on f(z) = Phi(z) - p.
  const double err = normal_cdf(z) - p;
  const double u = err * kSqrt2Pi * std::exp(0.5 * z * z);
  z -= u / (1.0 + 0.5 * z * u);
  return z;
}

namespace detail {

// Series for W0 about the branch point c = -1/e, in p = sqrt(2(1 + e c)).
// Returns 1 + W0 (the well-conditioned quantity); relative error ~p^6.
inline double lambert_branch_series_one_plus(double p) {
  return p * (1.0 +
              p * (-1.0 / 3.0 +
                   p * (11.0 / 72.0 +
                        p * (-43.0 / 540.0 +
                             p * (769.0 / 17280.0 + p * (-221.0 / 8505.0))))));
}

}  // namespace detail

// 1 + W0(-(1 - delta)/e) computed directly from delta = 1 + e*c, avoiding the
// cancellation that computing c first would cost when delta is tiny.
inline double lambert_w0_one_plus_near_branch(double delta) {
  if (!(delta >= 0.0)) {
    throw std::domain_error("lambert_w0_one_plus_near_branch: delta < 0");
  }
  const double p = std::sqrt(2.0 * delta);
  if (delta < 1e-4) {
    return detail::lambert_branch_series_one_plus(p);
  }
  // Halley on f(w) = w e^w - c with the series as the start.
  double w = detail::lambert_branch_series_one_plus(p) - 1.0;
  const double c = (delta - 1.0) * kInvE;
  for (int i = 0; i < 12; ++i) {
    const double e = std::exp(w);
    const double f = w * e - c;
    const double denom = e * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
    const double step = f / denom;
    w -= step;
    if (std::abs(step) <= 1e-16 * std::max(std::abs(w), 1e-300)) break;
  }
  return 1.0 + w;
}

// Principal branch of w e^w = c for c >= -1/e. Halley iteration from a
// branch-aware initial guess; converges to |w e^w - c| <= 1e-13 relative.
inline double lambert_w0(double c) {
  if (std::isnan(c)) return c;
  if (c == 0.0) return 0.0;
  const double r = 1.0 + c / kInvE;  // distance above the branch point
  if (r < -1e-12) {
    throw std::domain_error("lambert_w0: argument below -1/e");
  }
  if (r < 1e-4) {
    return detail::lambert_branch_series_one_plus(std::sqrt(2.0 * std::max(r, 0.0))) - 1.0;
  }

  double w;
  if (c < -0.2) {
    w = detail::lambert_branch_series_one_plus(std::sqrt(2.0 * r)) - 1.0;
  } else if (c < 3.0) {
    // Pade-flavoured start, good to a few percent on (-0.2, 3).
    w = c * (1.0 + 1.5 * c) / (1.0 + c * (2.25 + 0.75 * c));
  } else {
    const double l1 = std::log(c);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  for (int i = 0; i < 20; ++i) {
    const double e = std::exp(w);
    const double f = w * e - c;
    const double denom = e * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
    const double step = f / denom;
    w -= step;
    if (std::abs(f) <= 1e-14 * std::max(std::abs(c), 1e-300) ||
        std::abs(step) <= 4e-16 * std::max(std::abs(w), 1e-300)) {
      break;
    }
  }
  return w;
}

struct ModifiedLambertPair {
  double v_minus;  // lower root, in (0, x_peak)
  double v_plus;   // upper root, in (x_peak, inf)
};

// Abscissa of the peak of f(x) = x / sqrt(exp(x)/omega - 1) for x > 0.
inline double modified_lambert_peak(double omega) {
  return 2.0 + lambert_w0(-2.0 * omega * std::exp(-2.0));
}

// Peak value f(x_peak); the pair solver requires c strictly below this.
inline double modified_lambert_peak_value(double omega) {
  const double xp = modified_lambert_peak(omega);
  return xp / std::sqrt(std::expm1(xp) / omega + (1.0 / omega - 1.0));
}

namespace detail {

// Residual of the defining equation omega ((x/c)^2 + 1) e^-x = 1.
inline double mlv_residual(double x, double c, double omega) {
  const double s = x / c;
  return omega * (s * s + 1.0) * std::exp(-x) - 1.0;
}

// Safeguarded Newton on a bracket [lo, hi] with r(lo) and r(hi) of opposite
// sign; drives |r| below 1e-13.
inline double mlv_refine(double lo, double hi, double rlo, double c,
                         double omega) {
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    const double r = mlv_residual(x, c, omega);
    if (std::abs(r) <= 1e-13) return x;
    if ((r > 0.0) == (rlo > 0.0)) {
      lo = x;
    } else {
      hi = x;
    }
    const double s = x / c;
    const double dr =
        omega * std::exp(-x) * (2.0 * s / c - (s * s + 1.0));
    double next = x - r / dr;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) return x;
    x = next;
  }
  return x;
}

}  // namespace detail

// Both positive roots of omega ((x/c)^2 + 1) e^-x = 1, i.e. the two exposures
// per frame where x / sqrt(exp(x)/omega - 1) crosses c. The spurious x = 0
// root at omega = 1 is excluded by construction.
inline ModifiedLambertPair modified_lambert_v(double c, double omega) {
  if (!(c > 0.0)) {
    throw std::domain_error("modified_lambert_v: c must be positive");
  }
  if (!(omega > 0.0 && omega <= 1.0)) {
    throw std::domain_error("modified_lambert_v: omega must lie in (0,1]");
  }
  const double xp = modified_lambert_peak(omega);
  const double r_peak = detail::mlv_residual(xp, c, omega);
  if (r_peak == 0.0) return {xp, xp};  // c grazes the peak: double root
  if (r_peak < 0.0) {
    throw no_crossing_error(
        "modified_lambert_v: c is above the curve peak, no real roots");
  }

  double lo = std::min(1e-9, 0.25 * c * c);
  while (detail::mlv_residual(lo, c, omega) >= 0.0 && lo > 1e-300) {
    lo *= 0.25;
  }
  const double v_minus =
      detail::mlv_refine(lo, xp, detail::mlv_residual(lo, c, omega), c, omega);

  double hi = xp + 1.0;
  while (detail::mlv_residual(hi, c, omega) >= 0.0) {
    hi *= 2.0;
  }
  const double v_plus =
      detail::mlv_refine(xp, hi, detail::mlv_residual(xp, c, omega), c, omega);

  return {v_minus, v_plus};
}

}  // namespace qistk::specfun
