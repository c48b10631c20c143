#pragma once

// End-to-end validation suite: every analytic result the library exposes,
// checked against independent evaluation paths (closed forms, quad-precision
// discrete search, Monte Carlo) at pinned tolerances. The CLI `validate`
// subcommand and the acceptance test binary both run this table.
//
// The only header that uses libquadmath; link consumers with -lquadmath.

#include <quadmath.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qistk/design.hpp"
#include "qistk/model.hpp"
#include "qistk/sim.hpp"

namespace qistk::validate {

struct Options {
  bool quick = false;          // reduced Monte Carlo budgets for smoke runs
  double omega_perturb = 0.0;  // deliberate fault injection; nonzero must fail
  std::uint64_t seed = 42;
  int n_threads = 0;  // 0 = hardware concurrency
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline bool within_abs(double measured, double expected, double tol) {
  return std::abs(measured - expected) <= tol;
}

inline bool within_rel(double measured, double expected, double tol) {
  return std::abs(measured - expected) <= tol * std::abs(expected);
}

// Forward difference of the frame-count objective g(N) = N(e^{theta/N}-1+delta)
// in quad precision: U(N) = g(N+1) - g(N). g is strictly convex, so U is
// increasing and the integer maximizer of the approximate SNR is the smallest
// N with U(N) >= 0. Double precision dies here: at the crossover the two
// exponential terms cancel to ~delta, as small as 1e-23 at sigma = 0.05.
inline __float128 frame_gap(__float128 theta, __float128 n, __float128 delta) {
  const __float128 x = theta / n;
  const __float128 step = theta / (n * (n + 1));
  return expm1q(x) + (n + 1) * expq(x) * expm1q(-step) + delta;
}

inline std::int64_t brute_force_optimal_frames(double theta, double sigma) {
  const __float128 delta =
      erfcq((__float128)0.5 / ((__float128)sigma * sqrtq((__float128)2.0))) /
      (__float128)2.0;
  const __float128 th = theta;
  if (frame_gap(th, 1, delta) >= 0) return 1;
  std::int64_t hi = 2;
  while (frame_gap(th, hi, delta) < 0) {
    hi *= 2;
    if (hi > (std::int64_t{1} << 60)) {
      throw std::runtime_error("brute_force_optimal_frames: no crossover");
    }
  }
  std::int64_t lo = hi / 2;  // U(lo) < 0 <= U(hi)
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (frame_gap(th, mid, delta) < 0 ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace detail

inline CriterionResult check_peak_constant(const Options& opt) {
  CriterionResult r{1, "per-frame peak exposure constant", false, ""};
  const double omega = 1.0 * (1.0 + opt.omega_perturb);
  const double measured = specfun::modified_lambert_peak(omega);
  r.passed = detail::within_abs(measured, 1.5936, 1e-4);
  r.detail = "measured=" + detail::fmt(measured) + " expected=1.5936 tol=1e-4";
  return r;
}

inline CriterionResult check_frame_constant_table(const Options&) {
  CriterionResult r{2, "frame-constant table", true, ""};
  const std::pair<double, double> rows[] = {
      {0.1, 1321.0}, {0.15, 34.5}, {0.2, 9.30}, {0.25, 5.01}, {0.3, 3.56}};
  std::ostringstream out;
  for (const auto& [sigma, expected] : rows) {
    const auto c = design::frame_constant(sigma);
    const bool ok = !c.unbounded && detail::within_rel(c.value, expected, 0.01);
    r.passed = r.passed && ok;
    out << "sigma=" << detail::fmt(sigma) << "->" << detail::fmt(c.value, "%.6g")
        << (ok ? "" : "(MISMATCH)") << " ";
  }
  const bool sentinel = design::frame_constant(0.0).unbounded;
  r.passed = r.passed && sentinel;
  out << "sigma=0->" << (sentinel ? "unbounded" : "BOUNDED") << " tol=1%";
  r.detail = out.str();
  return r;
}

inline CriterionResult check_worked_frame_count(const Options&) {
  CriterionResult r{3, "worked example frame count", false, ""};
  const auto n = design::optimal_frames(20.0, 0.2);
  const auto rounded = std::llround(n.value);
  r.passed = !n.unbounded && rounded == 186;
  r.detail = "measured=" + detail::fmt(n.value) + " rounds_to=" +
             std::to_string(rounded) + " expected=186";
  return r;
}

inline CriterionResult check_dynamic_range_quartet(const Options&) {
  CriterionResult r{4, "dynamic range quartet", true, ""};
  const double sigma_qis = 0.19;
  const auto qis_1k = design::dynamic_range_qis(1000, sigma_qis);
  const design::BracketSchedule schedule({4.0, 1.0, 0.25, 0.0625, 0.015625},
                                         1000);
  const auto bracketed = design::dynamic_range_bracket(schedule, sigma_qis);
  const auto qis_5k = design::dynamic_range_qis(5000, sigma_qis);
  const auto cis = design::dynamic_range_cis({2.0, 5000.0, std::nullopt});
  const double gain =
      std::pow(10.0, (bracketed.dr_db - cis.dr_db) / 20.0);

  const std::pair<double, double> checks[] = {{qis_1k.dr_db, 73.07},
                                              {bracketed.bracket_term_db, 48.16},
                                              {bracketed.dr_db, 121.24},
                                              {qis_5k.dr_db, 82.51},
                                              {cis.dr_db, 67.96}};
  std::ostringstream out;
  for (const auto& [measured, expected] : checks) {
    const bool ok = detail::within_abs(measured, expected, 0.05);
    r.passed = r.passed && ok;
    out << detail::fmt(measured, "%.4f") << "/" << detail::fmt(expected, "%.2f")
        << (ok ? " " : "(MISMATCH) ");
  }
  const bool gain_ok = detail::within_rel(gain, 461.32, 0.01);
  r.passed = r.passed && gain_ok;
  out << "gain=" << detail::fmt(gain, "%.2f") << "/461.32"
      << (gain_ok ? "" : "(MISMATCH)") << " tol=0.05dB,1%";
  r.detail = out.str();
  return r;
}

inline CriterionResult check_noise_constants(const Options& opt) {
  CriterionResult r{5, "read-noise bit-flip constants", true, ""};
  const double factor = 1.0 + opt.omega_perturb;
  const double delta_02 = specfun::normal_cdf(-0.5 / 0.2);
  const double omega_02 = (1.0 - delta_02) * factor;
  const double omega_019 = (1.0 - specfun::normal_cdf(-0.5 / 0.19)) * factor;

  const std::tuple<double, double, const char*> checks[] = {
      {delta_02, 0.0062, "delta(0.2)"},
      {omega_02, 0.9938, "omega(0.2)"},
      {omega_019, 0.9958, "omega(0.19)"}};
  std::ostringstream out;
  for (const auto& [measured, expected, label] : checks) {
    const bool ok = detail::within_abs(measured, expected, 1e-4);
    r.passed = r.passed && ok;
    out << label << "=" << detail::fmt(measured, "%.6f") << "/"
        << detail::fmt(expected, "%.4f") << (ok ? " " : "(MISMATCH) ");
  }
  out << "tol=1e-4";
  r.detail = out.str();
  return r;
}

inline CriterionResult check_series_vs_approximation(const Options& opt) {
  CriterionResult r{6, "series vs approximation gap", false, ""};
  const std::int64_t points = opt.quick ? 80 : 240;
  const std::int64_t n = 1000;
  double worst = 0.0, worst_x = 0.0, worst_sigma = 0.0;
  const auto grid = model::ExposureGrid::log_spaced(1e-3, 5.0, points);
  for (const double sigma : {0.1, 0.15, 0.2}) {
    const model::QisConfig config{{sigma, 0.5}, n};
    for (const double x : grid.thetas) {
      const double theta = x * static_cast<double>(n);
      const double exact = model::snr_qis(theta, config);
      const double approx = model::snr_qis_approx(theta, config);
      const double gap = std::abs(exact - approx) / approx;
      if (gap > worst) {
        worst = gap;
        worst_x = x;
        worst_sigma = sigma;
      }
    }
  }
  r.passed = worst < 0.01;
  r.detail = "worst_rel_gap=" + detail::fmt(worst, "%.3e") + " at theta/N=" +
             detail::fmt(worst_x, "%.3g") + " sigma=" +
             detail::fmt(worst_sigma, "%.2f") + " limit=1e-2";
  return r;
}

inline CriterionResult check_monte_carlo_bit_density(const Options& opt) {
  CriterionResult r{7, "monte carlo bit density grid", true, ""};
  const std::int64_t trials = opt.quick ? 100'000 : 1'000'000;
  double worst_z = 0.0;
  int idx = 0;
  for (const double theta : {0.1, 1.0, 5.0}) {
    for (const double sigma : {0.0, 0.1, 0.2, 0.3}) {
      const model::SensorParams params{sigma, 0.5};
      const double mu = model::bit_density(theta, params);
      const double freq = sim::empirical_bit_density(
          theta, params, trials, opt.seed + 700 + idx++, opt.n_threads);
      const double se = std::sqrt(mu * (1.0 - mu) / static_cast<double>(trials));
      const double z = std::abs(freq - mu) / se;
      worst_z = std::max(worst_z, z);
      if (z > 3.0) r.passed = false;
    }
  }
  r.detail = "12 points, trials=" + std::to_string(trials) +
             ", worst |freq-mu|/se=" + detail::fmt(worst_z, "%.2f") +
             " limit=3 (99.7% CI)";
  return r;
}

inline CriterionResult check_estimator_efficiency(const Options& opt) {
  CriterionResult r{8, "estimator efficiency", false, ""};
  const std::int64_t trials = opt.quick ? 10'000 : 100'000;
  const model::QisConfig config{{0.19, 0.5}, 256};
  const double predicted = model::snr_qis(8.0, config);
  const double measured =
      sim::empirical_snr(8.0, config, trials, opt.seed + 8, opt.n_threads);
  r.passed = detail::within_rel(measured, predicted, 0.10);
  r.detail = "empirical=" + detail::fmt(measured, "%.5f") + " analytic=" +
             detail::fmt(predicted, "%.5f") + " trials=" +
             std::to_string(trials) + " tol=10%";
  return r;
}

inline CriterionResult check_brute_force_optimum(const Options& opt) {
  CriterionResult r{9, "brute force optimum agreement", true, ""};
  std::mt19937_64 gen(opt.seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> sigma_dist(0.05, 0.3);
  std::uniform_real_distribution<double> theta_dist(1.0, 100.0);
  std::int64_t worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double sigma = sigma_dist(gen);
    const double theta = theta_dist(gen);
    const auto predicted = design::optimal_frames(theta, sigma);
    const std::int64_t brute =
        detail::brute_force_optimal_frames(theta, sigma);
    const std::int64_t gap = std::llabs(brute - std::llround(predicted.value));
    worst = std::max(worst, gap);
    if (gap > 1) r.passed = false;
  }
  r.detail = "20 random (sigma, theta) pairs, worst |N_brute - round(N*)|=" +
             std::to_string(worst) + " limit=1";
  return r;
}

inline CriterionResult check_crossings_and_decomposition(const Options& opt) {
  CriterionResult r{10, "unity crossings and dB decomposition", true, ""};
  std::ostringstream out;

  // Crossings returned by the design module really sit on SNR = 1.
  double worst_unity = 0.0;
  for (const auto& [n, sigma] : std::vector<std::pair<std::int64_t, double>>{
           {1000, 0.19}, {256, 0.1}, {4096, 0.25}}) {
    const auto [lo, hi] = design::snr_unity_crossings(n, sigma);
    const model::QisConfig config{{sigma, 0.5}, n};
    worst_unity = std::max(
        worst_unity, std::abs(model::snr_qis_approx(lo, config) - 1.0));
    worst_unity = std::max(
        worst_unity, std::abs(model::snr_qis_approx(hi, config) - 1.0));
  }
  if (worst_unity > 1e-6) r.passed = false;
  out << "unity_gap=" << detail::fmt(worst_unity, "%.2e") << "/1e-6 ";

  // Exact additivity of the bracketed report on random schedules.
  std::mt19937_64 gen(opt.seed ^ 0xD1B54A32D192ED03ull);
  std::uniform_int_distribution<int> k_dist(1, 8);
  std::uniform_real_distribution<double> log_tau(std::log(1e-3), std::log(10.0));
  std::uniform_int_distribution<std::int64_t> n_dist(50, 5000);
  std::uniform_real_distribution<double> sigma_dist(0.05, 0.3);
  double worst_split = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> taus;
    for (int k = k_dist(gen); k > 0; --k) taus.push_back(std::exp(log_tau(gen)));
    const design::BracketSchedule schedule(taus, n_dist(gen));
    const auto report = design::dynamic_range_bracket(schedule, sigma_dist(gen));
    worst_split = std::max(
        worst_split, std::abs(report.dr_db - (report.sensor_term_db +
                                              report.bracket_term_db)));
  }
  if (worst_split > 1e-9) r.passed = false;
  out << "split_gap=" << detail::fmt(worst_split, "%.2e") << "/1e-9 ";

  // Zero-dB endpoints of the five-bracket envelope vs the closed form.
  const design::BracketSchedule bracket5({4.0, 1.0, 0.25, 0.0625, 0.015625},
                                         1000);
  const double sigma5 = 0.19;
  const auto predicted = design::dynamic_range_bracket(bracket5, sigma5);
  const auto solve_crossing = [&](double lo, double hi) {
    // Envelope rises through 1 once on the left flank and falls through 1
    // once on the right; bisect on log(theta).
    double a = std::log(lo), b = std::log(hi);
    const bool rising =
        design::bracket_envelope_snr(std::exp(a), bracket5, sigma5) < 1.0;
    for (int i = 0; i < 200; ++i) {
      const double m = 0.5 * (a + b);
      const bool below =
          design::bracket_envelope_snr(std::exp(m), bracket5, sigma5) < 1.0;
      (below == rising ? a : b) = m;
    }
    return std::exp(0.5 * (a + b));
  };
  const double found_minus =
      solve_crossing(predicted.theta_minus / 8.0, predicted.theta_minus * 8.0);
  const double found_plus =
      solve_crossing(predicted.theta_plus / 8.0, predicted.theta_plus * 8.0);
  const double db_gap = std::max(
      std::abs(20.0 * std::log10(found_minus / predicted.theta_minus)),
      std::abs(20.0 * std::log10(found_plus / predicted.theta_plus)));
  if (db_gap > 0.05) r.passed = false;
  out << "envelope_endpoint_gap_db=" << detail::fmt(db_gap, "%.2e") << "/0.05";
  r.detail = out.str();
  return r;
}

inline CriterionResult check_psnr_interior_maximum(const Options& opt) {
  CriterionResult r{11, "psnr is maximized at an interior frame count", false,
                    ""};
  const std::int64_t side = opt.quick ? 64 : 128;
  const auto scene = sim::synthetic_scene(side, side, 16.0);
  const std::vector<std::int64_t> frame_counts{4, 8, 256, 512, 1024, 4096};
  std::vector<double> psnr;
  std::ostringstream out;
  for (std::size_t i = 0; i < frame_counts.size(); ++i) {
    const model::QisConfig config{{0.2, 0.5}, frame_counts[i]};
    const auto stack = sim::capture_qis(
        scene, config, opt.seed + 1100 + static_cast<std::uint64_t>(i),
        opt.n_threads);
    const auto est = sim::reconstruct_mle(stack);
    psnr.push_back(sim::image_metrics(scene, est).psnr_db);
    out << "N=" << frame_counts[i] << ":" << detail::fmt(psnr.back(), "%.2f")
        << "dB ";
  }
  const auto best =
      std::max_element(psnr.begin(), psnr.end()) - psnr.begin();
  const bool interior =
      best != 0 && best != static_cast<std::ptrdiff_t>(psnr.size()) - 1;
  const bool degrades = psnr.back() < psnr[static_cast<std::size_t>(best)];
  r.passed = interior && degrades;
  out << "best=N" << frame_counts[static_cast<std::size_t>(best)]
      << (interior ? " interior" : " AT-EDGE")
      << (degrades ? ", degrades at N=4096" : ", NO-DEGRADE");
  r.detail = out.str();
  return r;
}

inline std::vector<CriterionResult> run_all(const Options& opt) {
  using Check = CriterionResult (*)(const Options&);
  const Check checks[] = {
      check_peak_constant,        check_frame_constant_table,
      check_worked_frame_count,   check_dynamic_range_quartet,
      check_noise_constants,      check_series_vs_approximation,
      check_monte_carlo_bit_density, check_estimator_efficiency,
      check_brute_force_optimum,  check_crossings_and_decomposition,
      check_psnr_interior_maximum};
  std::vector<CriterionResult> results;
  int id = 1;
  for (const auto& check : checks) {
    try {
      results.push_back(check(opt));
    } catch (const std::exception& e) {
      results.push_back({id, "criterion threw", false, e.what()});
    }
    results.back().id = id++;
  }
  return results;
}

inline bool all_passed(const std::vector<CriterionResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

inline void print_report(const std::vector<CriterionResult>& results,
                         std::ostream& out) {
  for (const auto& r : results) {
    out << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << ": "
        << r.detail << "\n";
  }
}

}  // namespace qistk::validate
