#pragma once

// Probabilistic channel of a one-bit quanta sensor: Poisson photon arrivals
// plus Gaussian read noise, thresholded at q. Exposure-referred SNR for the
// binary sensor (exact series and a closed-form approximation), the linear
// full-well sensor for comparison, ADC quantization, and the read-noise
// tolerance bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qistk/specfun.hpp"

namespace qistk::model {

struct SensorParams {
  double sigma = 0.0;  // read noise, e- rms
  double q = 0.5;      // comparator threshold, e-
};

struct QisConfig {
  SensorParams params{};
  std::int64_t n_frames = 1;
};

struct CisConfig {
  double sigma = 2.0;   // read noise, e- rms
  double fwc = 5000.0;  // full-well capacity, e-
  std::optional<int> adc_bits{};
};

struct ExposureGrid {
  std::vector<double> thetas;

  // Invariants: strictly increasing, all positive.
  void validate() const {
    double prev = 0.0;
    for (double t : thetas) {
      if (!(t > prev)) {
        throw std::invalid_argument(
            "ExposureGrid: thetas must be positive and strictly increasing");
      }
      prev = t;
    }
  }

  static ExposureGrid log_spaced(double lo, double hi, int n) {
    if (!(lo > 0.0) || n < 1 || (n > 1 && !(hi > lo))) {
      throw std::invalid_argument("ExposureGrid::log_spaced: bad range");
    }
    ExposureGrid g;
    g.thetas.resize(static_cast<std::size_t>(n));
    if (n == 1) {
      g.thetas[0] = lo;
      return g;
    }
    const double la = std::log(lo), lb = std::log(hi);
    for (int i = 0; i < n; ++i) {
      g.thetas[static_cast<std::size_t>(i)] =
          std::exp(la + (lb - la) * i / (n - 1));
    }
    g.thetas.front() = lo;
    g.thetas.back() = hi;
    return g;
  }

  static ExposureGrid linear_spaced(double lo, double hi, int n) {
    if (!(lo > 0.0) || n < 1 || (n > 1 && !(hi > lo))) {
      throw std::invalid_argument("ExposureGrid::linear_spaced: bad range");
    }
    ExposureGrid g;
    g.thetas.resize(static_cast<std::size_t>(n));
    if (n == 1) {
      g.thetas[0] = lo;
      return g;
    }
    for (int i = 0; i < n; ++i) {
      g.thetas[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    }
    g.thetas.back() = hi;
    return g;
  }
};

struct SnrCurve {
  ExposureGrid grid;
  std::vector<double> snr_values;  // ratios; convert to dB downstream
};

namespace detail {

inline void check_sensor(const SensorParams& p) {
  if (!(p.sigma >= 0.0)) {
    throw std::domain_error("SensorParams: sigma must be >= 0");
  }
  if (!(p.q > 0.0)) {
    throw std::domain_error("SensorParams: q must be > 0");
  }
}

inline void check_qis(const QisConfig& c) {
  check_sensor(c.params);
  if (c.n_frames < 1) {
    throw std::domain_error("QisConfig: n_frames must be >= 1");
  }
}

inline void check_cis(const CisConfig& c) {
  if (!(c.sigma >= 0.0)) {
    throw std::domain_error("CisConfig: sigma must be >= 0");
  }
  if (!(c.fwc > 0.0)) {
    throw std::domain_error("CisConfig: fwc must be > 0");
  }
  if (c.adc_bits && *c.adc_bits < 1) {
    throw std::domain_error("CisConfig: adc_bits must be >= 1");
  }
}

// Zero-noise bit density: P(Poisson(theta) >= q). The comparator fires on
// counts at or above the threshold, so the relevant index is ceil(q).
inline double bit_density_noiseless(double theta, double q) {
  const double m = std::ceil(q);
  if (m <= 1.0) return -std::expm1(-theta);
  // Small integer thresholds only in practice; sum the lower tail directly.
  const long mi = static_cast<long>(m);
  double pmf = std::exp(-theta);
  double tail = pmf;
  for (long k = 1; k < mi; ++k) {
    pmf *= theta / static_cast<double>(k);
    tail += pmf;
  }
  return std::max(0.0, 1.0 - tail);
}

// Poisson-weighted normal-cdf series with an explicit truncation index.
// k_max < 0 selects the production rule max(30, ceil(theta + 12 sqrt(theta)));
// the omitted upper tail is bounded by P(K > theta + 12 sqrt(theta)) < 1e-13
// and the window start theta - 12 sqrt(theta) drops the same mass on the left.
inline double bit_density_series(double theta, double sigma, double q,
                                 long k_max = -1) {
  const double root = std::sqrt(theta);
  if (k_max < 0) {
    k_max = std::max<long>(30, static_cast<long>(std::ceil(theta + 12.0 * root)));
  }
  const long k0 =
      static_cast<long>(std::floor(std::max(0.0, theta - 12.0 * root)));
  double pmf =
      k0 == 0 ? std::exp(-theta)
              : std::exp(static_cast<double>(k0) * std::log(theta) - theta -
                         std::lgamma(static_cast<double>(k0) + 1.0));
  double acc = 0.0;
  for (long k = k0; k <= k_max; ++k) {
    acc += pmf * specfun::normal_cdf((static_cast<double>(k) - q) / sigma);
    pmf *= theta / static_cast<double>(k + 1);
  }
  return acc;
}

}  // namespace detail

// Probability that one binary observation reads 1 at exposure theta:
// sum_k e^-theta theta^k / k! Phi((k - q) / sigma). Clamped into the open
// interval (0,1) so downstream variance terms mu(1-mu) stay positive.
inline double bit_density(double theta, const SensorParams& params) {
  detail::check_sensor(params);
  if (!(theta > 0.0)) {
    throw std::domain_error("bit_density: theta must be > 0");
  }
  double mu = params.sigma == 0.0
                  ? detail::bit_density_noiseless(theta, params.q)
                  : detail::bit_density_series(theta, params.sigma, params.q);
  mu = std::min(mu, std::nextafter(1.0, 0.0));
  mu = std::max(mu, std::numeric_limits<double>::denorm_min());
  return mu;
}

// Per-bit density when a total exposure is split evenly across N frames.
inline double bit_density_per_frame(double theta_total, const QisConfig& config) {
  detail::check_qis(config);
  return bit_density(theta_total / static_cast<double>(config.n_frames),
                     config.params);
}

// Fraction of the unit Gaussian above the threshold gap: omega = 1 - delta
// with delta = Phi(-0.5/sigma). Exactly 1 at sigma = 0.
inline double omega_of_sigma(double sigma) {
  if (!(sigma >= 0.0)) {
    throw std::domain_error("omega_of_sigma: sigma must be >= 0");
  }
  if (sigma == 0.0) return 1.0;
  return 1.0 - specfun::normal_cdf(-0.5 / sigma);
}

// Exposure-referred SNR of the N-frame one-bit sensor:
// sqrt(N) * theta * mu_N'(theta) / sqrt(mu_N (1 - mu_N)), with the derivative
// taken by central difference. Saturated bit densities read as SNR 0.
inline double snr_qis(double theta, const QisConfig& config) {
  detail::check_qis(config);
  if (!(theta > 0.0)) {
    throw std::domain_error("snr_qis: theta must be > 0");
  }
  const double n = static_cast<double>(config.n_frames);
  const double mu = bit_density(theta / n, config.params);
  if (mu < 1e-12 || mu > 1.0 - 1e-12) return 0.0;
  const double h = std::min(std::max(theta * 1e-5, 1e-12), 0.5 * theta);
  const double up = bit_density((theta + h) / n, config.params);
  const double dn = bit_density((theta - h) / n, config.params);
  const double dmu = (up - dn) / (2.0 * h);
  return std::sqrt(n) * theta / std::sqrt(mu * (1.0 - mu)) * dmu;
}

inline double snr_qis(double theta, std::int64_t n_frames,
                      const SensorParams& params) {
  return snr_qis(theta, QisConfig{params, n_frames});
}

// Closed-form SNR approximation theta/sqrt(N) * sqrt(1/((1/w)e^(theta/N) - 1))
// evaluated in the cancellation-free form theta * sqrt(w / (N*(expm1(x) +
// (1-w)))). Valid for q = 0.5 only (the omega constant hardcodes that
// threshold); accuracy degrades beyond sigma = 0.3.
inline double snr_qis_approx(double theta, const QisConfig& config) {
  detail::check_qis(config);
  if (config.params.q != 0.5) {
    throw std::invalid_argument("snr_qis_approx: defined for q = 0.5 only");
  }
  if (!(theta > 0.0)) {
    throw std::domain_error("snr_qis_approx: theta must be > 0");
  }
  const double n = static_cast<double>(config.n_frames);
  const double x = theta / n;
  if (x > 700.0) return 0.0;  // exp would overflow; sensor is saturated anyway
  const double omega = omega_of_sigma(config.params.sigma);
  const double denom = std::expm1(x) + (1.0 - omega);
  return theta * std::sqrt(omega / (n * denom));
}

inline double snr_qis_approx(double theta, std::int64_t n_frames,
                             const SensorParams& params) {
  return snr_qis_approx(theta, QisConfig{params, n_frames});
}

// Linear sensor SNR theta/sqrt(theta + sigma^2) below full well, 0 at and
// above it (hard saturation cutoff).
inline double snr_cis(double theta, const CisConfig& config) {
  detail::check_cis(config);
  if (!(theta > 0.0)) {
    throw std::domain_error("snr_cis: theta must be > 0");
  }
  if (theta >= config.fwc) return 0.0;
  return theta / std::sqrt(theta + config.sigma * config.sigma);
}

// Largest read noise for which the miscount probability stays at or below
// delta: sigma_max = 0.5 / Phi^-1(1 - delta).
inline double read_noise_bound(double delta) {
  if (!(delta > 0.0) || !(delta < 0.5)) {
    throw std::domain_error("read_noise_bound: delta must be in (0, 0.5)");
  }
  return 0.5 / specfun::normal_quantile(1.0 - delta);
}

// L-bit uniform quantizer over [0, fwc]: round(x / step) * step with
// step = fwc / 2^L. Inputs clamp into range first; anything below step/2
// truncates to 0.
inline double adc_quantize(double x, const CisConfig& config) {
  detail::check_cis(config);
  if (!config.adc_bits) {
    throw std::invalid_argument("adc_quantize: config has no adc_bits");
  }
  const double step = config.fwc / std::ldexp(1.0, *config.adc_bits);
  const double clamped = std::clamp(x, 0.0, config.fwc);
  return std::round(clamped / step) * step;
}

inline SnrCurve snr_curve(const ExposureGrid& grid, const QisConfig& config) {
  grid.validate();
  SnrCurve out{grid, {}};
  out.snr_values.reserve(grid.thetas.size());
  for (double t : grid.thetas) {
    out.snr_values.push_back(std::max(0.0, snr_qis(t, config)));
  }
  return out;
}

inline SnrCurve snr_curve(const ExposureGrid& grid, const CisConfig& config) {
  grid.validate();
  SnrCurve out{grid, {}};
  out.snr_values.reserve(grid.thetas.size());
  for (double t : grid.thetas) {
    out.snr_values.push_back(snr_cis(t, config));
  }
  return out;
}

}  // namespace qistk::model
