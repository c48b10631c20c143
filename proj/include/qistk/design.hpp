#pragma once

// Sensor-design optimization for the one-bit sensor: the exposure and frame
// counts that maximize SNR, the proportionality constant linking the two,
// dynamic range of both sensor families, and exposure-bracketed dynamic range
// with its exact sensor/bracket decomposition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qistk/model.hpp"
#include "qistk/specfun.hpp"

namespace qistk::design {

// Real-valued frame count. At sigma = 0 the maximizing N grows without bound;
// that case is a flag, not a number, so callers must branch on it.
struct FrameCount {
  double value = 0.0;
  bool unbounded = false;
};

struct DynamicRangeReport {
  double theta_minus = 0.0;
  double theta_plus = 0.0;
  double dr_db = 0.0;
  double sensor_term_db = 0.0;
  double bracket_term_db = 0.0;
  // Headline numbers may use an approximate lower endpoint (the linear
  // sensor's theta_minus ~ sigma); the exact root is kept alongside.
  double theta_minus_exact = 0.0;
};

class BracketSchedule {
 public:
  BracketSchedule(std::vector<double> taus, std::int64_t frames_per_bracket)
      : taus_(std::move(taus)), frames_per_bracket_(frames_per_bracket) {
    if (taus_.empty()) {
      throw std::invalid_argument("BracketSchedule: need at least one tau");
    }
    for (double t : taus_) {
      if (!(t > 0.0)) {
        throw std::invalid_argument("BracketSchedule: taus must be positive");
      }
    }
    if (frames_per_bracket_ < 1) {
      throw std::invalid_argument(
          "BracketSchedule: frames_per_bracket must be >= 1");
    }
    std::sort(taus_.begin(), taus_.end(), std::greater<double>());
  }

  const std::vector<double>& taus() const { return taus_; }
  std::int64_t frames_per_bracket() const { return frames_per_bracket_; }
  double tau_max() const { return taus_.front(); }
  double tau_min() const { return taus_.back(); }

 private:
  std::vector<double> taus_;
  std::int64_t frames_per_bracket_;
};

// Exposure maximizing the N-frame SNR: theta* = N (2 + W0(-2 omega e^-2)).
// At sigma = 0 this is the fixed constant 1.5936... per frame.
inline double optimal_exposure(std::int64_t n_frames, double sigma) {
  if (n_frames < 1) {
    throw std::domain_error("optimal_exposure: n_frames must be >= 1");
  }
  const double omega = model::omega_of_sigma(sigma);
  return static_cast<double>(n_frames) * specfun::modified_lambert_peak(omega);
}

// Proportionality constant N*/theta = 1/(1 + W0(-omega e^-1)). The argument
// sits a hair above the branch point -1/e (distance delta/e), so the value is
// computed through the cancellation-free branch expansion.
inline FrameCount frame_constant(double sigma) {
  if (!(sigma >= 0.0)) {
    throw std::domain_error("frame_constant: sigma must be >= 0");
  }
  // delta must come straight from the tail integral: forming it as
  // 1 - omega would round to zero already at sigma ~ 0.06.
  const double delta =
      sigma == 0.0 ? 0.0 : specfun::normal_cdf(-0.5 / sigma);
  if (delta == 0.0) return {0.0, true};
  return {1.0 / specfun::lambert_w0_one_plus_near_branch(delta), false};
}

// Frame count maximizing SNR at a fixed total exposure: N* = theta * c(sigma).
// Real-valued; callers round. Unbounded when the read noise is zero.
inline FrameCount optimal_frames(double theta, double sigma) {
  if (!(theta > 0.0)) {
    throw std::domain_error("optimal_frames: theta must be > 0");
  }
  const FrameCount c = frame_constant(sigma);
  if (c.unbounded) return c;
  return {theta * c.value, false};
}

// Exposures where the N-frame SNR crosses 1: theta± = N V±(1/sqrt(N)).
// Throws specfun::no_crossing_error when the peak SNR never reaches 1.
inline std::pair<double, double> snr_unity_crossings(std::int64_t n_frames,
                                                     double sigma) {
  if (n_frames < 1) {
    throw std::domain_error("snr_unity_crossings: n_frames must be >= 1");
  }
  const double omega = model::omega_of_sigma(sigma);
  const double n = static_cast<double>(n_frames);
  const auto pair = specfun::modified_lambert_v(1.0 / std::sqrt(n), omega);
  return {n * pair.v_minus, n * pair.v_plus};
}

// Dynamic range of the N-frame one-bit sensor: 20 log10(V+/V-). A function
// of N and sigma only; the report's bracket term is zero.
inline DynamicRangeReport dynamic_range_qis(std::int64_t n_frames,
                                            double sigma) {
  const auto [lo, hi] = snr_unity_crossings(n_frames, sigma);
  const double dr = 20.0 * std::log10(hi / lo);
  return {lo, hi, dr, dr, 0.0, lo};
}

// Dynamic range of the linear sensor. Headline number uses the conventional
// theta_minus ~ sigma, giving 20 log10(fwc/sigma); the exact unity-crossing
// root 1/2 + sqrt(1 + 4 sigma^2)/2 rides along in theta_minus_exact.
inline DynamicRangeReport dynamic_range_cis(const model::CisConfig& config) {
  model::detail::check_cis(config);
  if (!(config.fwc > config.sigma) || !(config.sigma > 0.0)) {
    throw std::domain_error("dynamic_range_cis: need 0 < sigma < fwc");
  }
  const double exact =
      0.5 + 0.5 * std::sqrt(1.0 + 4.0 * config.sigma * config.sigma);
  const double dr = 20.0 * std::log10(config.fwc / config.sigma);
  return {config.sigma, config.fwc, dr, dr, 0.0, exact};
}

// Bracketed dynamic range: the sensor term and the schedule term add in dB,
// exactly. theta- = (N/tau_max) V-, theta+ = (N/tau_min) V+.
inline DynamicRangeReport dynamic_range_bracket(const BracketSchedule& schedule,
                                                double sigma) {
  const auto base = dynamic_range_qis(schedule.frames_per_bracket(), sigma);
  const double bracket_db =
      20.0 * std::log10(schedule.tau_max() / schedule.tau_min());
  DynamicRangeReport out;
  out.theta_minus = base.theta_minus / schedule.tau_max();
  out.theta_plus = base.theta_plus / schedule.tau_min();
  out.sensor_term_db = base.dr_db;
  out.bracket_term_db = bracket_db;
  out.dr_db = base.dr_db + bracket_db;
  out.theta_minus_exact = out.theta_minus;
  return out;
}

// SNR of one bracket: the base curve evaluated at the scaled exposure, i.e. a
// pure horizontal shift on a log-theta axis.
inline double bracket_snr(double theta, double tau,
                          const model::QisConfig& config) {
  if (!(tau > 0.0)) {
    throw std::domain_error("bracket_snr: tau must be > 0");
  }
  return model::snr_qis_approx(tau * theta, config);
}

// Largest per-bracket SNR at a given exposure; the combined curve plotted for
// bracketed systems.
inline double bracket_envelope_snr(double theta, const BracketSchedule& schedule,
                                   double sigma) {
  const model::QisConfig config{{sigma, 0.5}, schedule.frames_per_bracket()};
  double best = 0.0;
  for (double tau : schedule.taus()) {
    best = std::max(best, bracket_snr(theta, tau, config));
  }
  return best;
}

struct SnrPeak {
  double theta = 0.0;
  double value = 0.0;
};

// Golden-section maximization of the closed-form SNR over [theta_lo,
// theta_hi]. Used as a brute-force cross-check of the analytic optima. A
// maximizer at the range edge means the range did not contain the peak.
inline SnrPeak numeric_snr_peak(const model::QisConfig& config,
                                double theta_lo, double theta_hi) {
  if (!(theta_lo > 0.0) || !(theta_hi >= theta_lo)) {
    throw std::invalid_argument("numeric_snr_peak: bad range");
  }
  if (theta_lo == theta_hi) {
    return {theta_lo, model::snr_qis_approx(theta_lo, config)};
  }
  const auto f = [&](double t) { return model::snr_qis_approx(t, config); };
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = theta_lo, b = theta_hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 400 && (b - a) > 1e-11 * b; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  const double peak = 0.5 * (a + b);
  const double span = theta_hi - theta_lo;
  if (peak - theta_lo < 1e-6 * span || theta_hi - peak < 1e-6 * span) {
    throw std::domain_error(
        "numeric_snr_peak: maximizer at range boundary; widen the range");
  }
  return {peak, f(peak)};
}

struct FramePeak {
  std::int64_t n_frames = 0;
  double value = 0.0;
};

// Exhaustive integer sweep of the closed-form SNR over N in [n_lo, n_hi] at a
// fixed total exposure. Linear in the range width; meant for the moderate
// ranges where the analytic N* lands.
inline FramePeak numeric_snr_peak_over_frames(double theta, double sigma,
                                              std::int64_t n_lo,
                                              std::int64_t n_hi) {
  if (n_lo < 1 || n_hi < n_lo) {
    throw std::invalid_argument("numeric_snr_peak_over_frames: bad range");
  }
  FramePeak best{n_lo, -1.0};
  for (std::int64_t n = n_lo; n <= n_hi; ++n) {
    const double v = model::snr_qis_approx(theta, {{sigma, 0.5}, n});
    if (v > best.value) best = {n, v};
  }
  if (n_lo != n_hi && (best.n_frames == n_lo || best.n_frames == n_hi)) {
    throw std::domain_error(
        "numeric_snr_peak_over_frames: maximizer at range boundary");
  }
  return best;
}

}  // namespace qistk::design
