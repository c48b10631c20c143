#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qistk/specfun.hpp"

using namespace qistk::specfun;

namespace {

// Brute-force trapezoid integration of the normal density over [0, |z|].
// Step 5e-6 keeps the quadrature error below ~5e-13.
double cdf_oracle(double z) {
  const double b = std::abs(z);
  const long n = std::lround(std::ceil(b / 5e-6));
  if (n == 0) return 0.5;
  const double h = b / static_cast<double>(n);
  double acc = 0.5 * (normal_pdf(0.0) + normal_pdf(b));
  for (long i = 1; i < n; ++i) {
    acc += normal_pdf(h * static_cast<double>(i));
  }
  const double integral = acc * h;
  return z >= 0.0 ? 0.5 + integral : 0.5 - integral;
}

// Bisection inverse of normal_cdf, independent of the quantile code path.
double quantile_oracle(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Bisection solve of w e^w = c on the increasing branch w >= -1.
double lambert_oracle(double c) {
  double lo = -1.0, hi = 2.0;
  while (hi * std::exp(hi) < c) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid) < c ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double pair_residual(double x, double c, double omega) {
  const double s = x / c;
  return omega * (s * s + 1.0) * std::exp(-x) - 1.0;
}

// Exhaustive bisection for one root of the pair equation on [lo, hi].
double pair_oracle(double lo, double hi, double c, double omega) {
  const bool lo_neg = pair_residual(lo, c, omega) < 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((pair_residual(mid, c, omega) < 0.0) == lo_neg) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("normal_cdf matches trapezoid integration to 1e-12") {
  for (double z = -8.0; z <= 8.01; z += 0.5) {
    REQUIRE(std::abs(normal_cdf(z) - cdf_oracle(z)) < 1e-12);
  }
}

TEST_CASE("normal_cdf reference points and symmetry") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(std::abs(normal_cdf(1.0) - 0.84134474606854294859) < 1e-15);
  CHECK(std::abs(normal_cdf(-2.5) - 0.006209665325776135) < 1e-15);
  CHECK(std::abs(normal_cdf(2.5) - 0.99379033467422386) < 1e-15);
  for (double z = 0.0; z <= 9.0; z += 0.37) {
    CHECK(std::abs(normal_cdf(z) + normal_cdf(-z) - 1.0) < 1e-15);
  }
  // Strictly increasing until the upper tail saturates to 1.0 in double
  // (around z = 8.3); never decreasing anywhere.
  double prev = 0.0;
  for (double z = -10.0; z <= 8.0; z += 0.1) {
    const double v = normal_cdf(z);
    CHECK(v > prev);
    prev = v;
  }
  for (double z = 8.0; z <= 40.0; z += 0.5) {
    const double v = normal_cdf(z);
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
  }
}

TEST_CASE("normal_quantile inverts normal_cdf") {
  CHECK(std::abs(normal_quantile(0.5)) < 1e-15);
  // 0.9938 is the bit-density ceiling at sigma = 0.2; frozen via bisection.
  CHECK(std::abs(normal_quantile(0.9938) - 2.5005517930490497) < 1e-10);
  for (double p : {1e-9, 1e-6, 1e-3, 0.02, 0.3, 0.5, 0.77, 0.9938, 1 - 1e-6,
                   1 - 1e-10}) {
    const double z = normal_quantile(p);
    // The bisection oracle inverts the double-rounded cdf, so its own
    // resolution degrades to eps / pdf(z) in the upper tail.
    const double tol =
        1e-10 * std::max(1.0, std::abs(z)) + 4e-16 / normal_pdf(z);
    CHECK(std::abs(z - quantile_oracle(p)) < tol);
    CHECK(std::abs(normal_cdf(z) - p) < 1e-10 * p);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(-0.5), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.5), std::domain_error);
}

TEST_CASE("lambert_w0 spot values") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(std::abs(lambert_w0(1.0) - 0.567143290409783873) < 1e-14);
  CHECK(std::abs(lambert_w0(10.0) - 1.7455280027406993831) < 1e-14);
  CHECK(std::abs(lambert_w0(1e6) - 11.383358086140052622) < 1e-13);
  CHECK(std::abs(lambert_w0(-0.3) - -0.48940222718021496904) < 1e-14);
  CHECK(std::abs(lambert_w0(std::exp(1.0)) - 1.0) < 1e-14);
  // Argument used by the exposure optimum: -2 e^-2.
  CHECK(std::abs(lambert_w0(-2.0 * std::exp(-2.0)) -
                 -0.40637573995995994868) < 1e-13);
  CHECK(std::abs(lambert_w0(-kInvE) - -1.0) < 2e-6);
  CHECK(std::abs(lambert_w0(-kInvE + 1e-8) - -0.99976685372178274818) < 1e-9);
  CHECK_THROWS_AS(lambert_w0(-0.5), std::domain_error);
}

TEST_CASE("lambert_w0 agrees with bisection and keeps residuals tiny") {
  std::vector<double> args;
  for (double e = -6.0; e <= 6.0; e += 0.25) {
    args.push_back(std::pow(10.0, e));
  }
  for (double e = -9.0; e <= -0.5; e += 0.25) {
    args.push_back(-std::pow(10.0, e));
  }
  args.push_back(-kInvE + 1e-12);
  args.push_back(-kInvE + 1e-9);
  args.push_back(-kInvE + 1e-5);
  args.push_back(-0.36787);
  for (double c : args) {
    if (c < -kInvE) continue;
    const double w = lambert_w0(c);
    CHECK(std::abs(w * std::exp(w) - c) <= 1e-12 * std::max(std::abs(c), 1.0));
    CHECK(std::abs(w - lambert_oracle(c)) <
          1e-9 * std::max(1.0, std::abs(w)));
  }
}

TEST_CASE("lambert_w0_one_plus_near_branch is exact where it matters") {
  // 1/(1 + W0(-(1-delta)/e)) for delta = Phi(-5); frozen via 40-digit
  // arithmetic: 1321.0444335774555.
  const double delta = normal_cdf(-5.0);
  CHECK(std::abs(1.0 / lambert_w0_one_plus_near_branch(delta) -
                 1321.0444335774555) < 1e-6);
  // Smooth join with the generic evaluator above the series cutoff.
  for (double d : {1e-10, 1e-7, 5e-5, 9.9e-5, 1.01e-4, 1e-3, 1e-2, 0.04}) {
    const double one_plus_w = lambert_w0_one_plus_near_branch(d);
    const double w = one_plus_w - 1.0;
    const double c = (d - 1.0) * kInvE;
    CHECK(std::abs(w * std::exp(w) - c) <= 1e-13);
  }
}

TEST_CASE("modified_lambert_v brackets the peak and matches bisection") {
  struct Case {
    double c, omega, v_minus, v_plus;
  };
  // Frozen from an independent Brent solve of the defining equation.
  const Case cases[] = {
      {0.1, 0.9937903346742238, 0.014457523573534022, 8.991659743911805},
      {0.5, 1.0, 0.29002794448133756, 4.33124105960881},
      {0.1, 1.0, 0.010050420879851875, 8.999669311138506},
  };
  for (const auto& k : cases) {
    const auto pair = modified_lambert_v(k.c, k.omega);
    CHECK(std::abs(pair.v_minus - k.v_minus) < 1e-9 * k.v_minus);
    CHECK(std::abs(pair.v_plus - k.v_plus) < 1e-9 * k.v_plus);
    const double xp = modified_lambert_peak(k.omega);
    CHECK(pair.v_minus < xp);
    CHECK(pair.v_plus > xp);
  }
}

TEST_CASE("modified_lambert_v residual and oracle agreement across a grid") {
  for (double omega : {1.0, 0.9957505440653989, 0.98, 0.9522096477271853}) {
    const double peak = modified_lambert_peak_value(omega);
    const double xp = modified_lambert_peak(omega);
    for (double frac : {1e-4, 1e-3, 0.01, 0.1, 0.4, 0.8, 0.99}) {
      const double c = frac * peak;
      const auto pair = modified_lambert_v(c, omega);
      CHECK(std::abs(pair_residual(pair.v_minus, c, omega)) < 1e-12);
      CHECK(std::abs(pair_residual(pair.v_plus, c, omega)) < 1e-12);
      double lo = std::min(1e-12, 0.1 * c * c);
      const double om = pair_oracle(lo, xp, c, omega);
      const double op = pair_oracle(
          [&] {
            double hi = xp + 1.0;
            while (pair_residual(hi, c, omega) >= 0.0) hi *= 2.0;
            return hi;
          }(),
          xp, c, omega);
      // Roots can be as small as ~c^2; the solver targets residual 1e-13,
      // which caps the attainable absolute accuracy there.
      CHECK(std::abs(pair.v_minus - om) < 1e-9 * om + 1e-12);
      CHECK(std::abs(pair.v_plus - op) < 1e-9 * op);
    }
  }
}

TEST_CASE("modified_lambert_v converges to the peak monotonically") {
  const double omega = 1.0;
  const double peak = modified_lambert_peak_value(omega);
  const double xp = modified_lambert_peak(omega);
  double last_minus = 0.0;
  double last_plus = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= 7; ++j) {
    const double c = peak * (1.0 - std::pow(10.0, -j));
    const auto pair = modified_lambert_v(c, omega);
    CHECK(pair.v_minus > last_minus);
    CHECK(pair.v_plus < last_plus);
    last_minus = pair.v_minus;
    last_plus = pair.v_plus;
  }
  CHECK(std::abs(last_minus - xp) < 2e-3);
  CHECK(std::abs(last_plus - xp) < 2e-3);
}

TEST_CASE("modified_lambert_v rejects an unreachable level") {
  CHECK(std::abs(modified_lambert_peak_value(1.0) - 0.8047423425494118) <
        1e-12);
  CHECK_THROWS_AS(modified_lambert_v(1.0, 1.0), no_crossing_error);
  // Exactly at the peak the rounded residual may land on either side of 0:
  // a graze returns the double root, anything above must throw.
  try {
    const auto grazed = modified_lambert_v(modified_lambert_peak_value(1.0), 1.0);
    CHECK(grazed.v_minus == grazed.v_plus);
    CHECK(std::abs(grazed.v_minus - modified_lambert_peak(1.0)) < 1e-12);
  } catch (const no_crossing_error&) {
  }
  CHECK_THROWS_AS(
      modified_lambert_v(modified_lambert_peak_value(1.0) * (1.0 + 1e-9), 1.0),
      no_crossing_error);
  CHECK_THROWS_AS(modified_lambert_v(0.9, 0.95), no_crossing_error);
  CHECK_THROWS_AS(modified_lambert_v(-0.1, 1.0), std::domain_error);
  CHECK_THROWS_AS(modified_lambert_v(0.1, 0.0), std::domain_error);
  CHECK_THROWS_AS(modified_lambert_v(0.1, 1.1), std::domain_error);
}
