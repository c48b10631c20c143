#pragma once

// Monte Carlo ground truth for the analytic models: sample the
// Poisson-Gaussian channel, capture bit-packed binary frame stacks from
// exposure maps, push linear-sensor captures through the ADC, invert the
// bit density by maximum likelihood, and measure empirical SNR, bit density
// and image quality.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qistk/model.hpp"
#include "qistk/rng.hpp"

namespace qistk::sim {

struct saturation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExposureMap {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<double> thetas;  // row-major

  void validate() const {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("ExposureMap: dimensions must be positive");
    }
    if (thetas.size() != static_cast<std::size_t>(width * height)) {
      throw std::invalid_argument("ExposureMap: theta count != width*height");
    }
    for (double t : thetas) {
      if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("ExposureMap: thetas must be finite, >= 0");
      }
    }
  }
};

struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<double> values;  // row-major
};

struct EstimateMap {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<double> theta_hats;       // row-major
  std::vector<std::uint8_t> saturated_mask;  // 1 where every bit came up 1
};

// Binary frames, bit-packed frame-major then row-major, LSB-first within a
// byte. Each frame is padded to a whole byte so frames occupy disjoint byte
// ranges (what makes parallel capture race-free).
struct FrameStack {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t n_frames = 0;
  model::QisConfig capture_params{};
  bool total_exposure_note = true;  // frames saw theta/N, not theta
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> bits;

  std::int64_t pixels() const { return width * height; }
  std::int64_t bytes_per_frame() const { return (pixels() + 7) / 8; }

  bool bit(std::int64_t pixel, std::int64_t frame) const {
    const auto& byte = bits[static_cast<std::size_t>(
        frame * bytes_per_frame() + (pixel >> 3))];
    return (byte >> (pixel & 7)) & 1u;
  }

  void set_bit(std::int64_t pixel, std::int64_t frame, bool value) {
    auto& byte = bits[static_cast<std::size_t>(frame * bytes_per_frame() +
                                               (pixel >> 3))];
    const auto mask = static_cast<std::uint8_t>(1u << (pixel & 7));
    if (value) {
      byte |= mask;
    } else {
      byte &= static_cast<std::uint8_t>(~mask);
    }
  }

  std::int64_t count_ones(std::int64_t pixel) const {
    std::int64_t ones = 0;
    for (std::int64_t f = 0; f < n_frames; ++f) {
      ones += bit(pixel, f);
    }
    return ones;
  }

  double mean_bits(std::int64_t pixel) const {
    return static_cast<double>(count_ones(pixel)) /
           static_cast<double>(n_frames);
  }
};

namespace detail {

template <typename Body>
void parallel_chunks(std::int64_t n, int n_threads, Body&& body) {
  if (n_threads <= 0) {
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads <= 0) n_threads = 1;
  }
  n_threads = static_cast<int>(
      std::min<std::int64_t>(n_threads, std::max<std::int64_t>(n, 1)));
  if (n_threads == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
  const std::int64_t chunk = (n + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace detail

// One analog readout: Poisson(theta) photoelectrons plus Gaussian read noise.
// sigma = 0 draws nothing from the Gaussian leg, keeping streams comparable
// between noiseless and noisy runs.
inline double sample_voltage(double theta, double sigma, rng::CellRng& gen) {
  const double electrons =
      static_cast<double>(rng::poisson_sample(theta, gen));
  if (sigma == 0.0) return electrons;
  return electrons + rng::gaussian_sample(sigma, gen);
}

// Capture N one-bit frames of the scene, each at exposure theta_p / N.
// Every (pixel, frame) cell draws from its own keyed stream, so the result
// is a pure function of (map, config, seed) no matter the thread count.
inline FrameStack capture_qis(const ExposureMap& map,
                              const model::QisConfig& config,
                              std::uint64_t seed, int n_threads = 0) {
  map.validate();
  model::detail::check_qis(config);
  FrameStack stack;
  stack.width = map.width;
  stack.height = map.height;
  stack.n_frames = config.n_frames;
  stack.capture_params = config;
  stack.total_exposure_note = true;
  stack.seed = seed;
  stack.bits.assign(
      static_cast<std::size_t>(stack.bytes_per_frame() * stack.n_frames), 0);

  const double n = static_cast<double>(config.n_frames);
  const double sigma = config.params.sigma;
  const double q = config.params.q;
  const std::int64_t bpf = stack.bytes_per_frame();
  const std::int64_t n_pixels = stack.pixels();
  const std::int64_t total_bytes = bpf * stack.n_frames;

  // Work is split at byte granularity: a byte holds bits of one frame only,
  // so chunks touch disjoint memory.
  detail::parallel_chunks(
      total_bytes, n_threads, [&](std::int64_t b_lo, std::int64_t b_hi) {
        for (std::int64_t b = b_lo; b < b_hi; ++b) {
          const std::int64_t frame = b / bpf;
          const std::int64_t first_pixel = (b % bpf) * 8;
          std::uint8_t byte = 0;
          const std::int64_t last =
              std::min<std::int64_t>(first_pixel + 8, n_pixels);
          for (std::int64_t p = first_pixel; p < last; ++p) {
            rng::CellRng gen(seed, static_cast<std::uint64_t>(p),
                             static_cast<std::uint32_t>(frame));
            const double v = sample_voltage(
                map.thetas[static_cast<std::size_t>(p)] / n, sigma, gen);
            if (v >= q) {
              byte |= static_cast<std::uint8_t>(1u << (p - first_pixel));
            }
          }
          stack.bits[static_cast<std::size_t>(b)] = byte;
        }
      });
  return stack;
}

// One full-exposure analog capture per pixel, clamped to the well and run
// through the ADC when one is configured.
inline Image capture_cis(const ExposureMap& map, const model::CisConfig& config,
                         std::uint64_t seed, int n_threads = 0) {
  map.validate();
  model::detail::check_cis(config);
  Image img{map.width, map.height,
            std::vector<double>(map.thetas.size(), 0.0)};
  const std::int64_t n_pixels = map.width * map.height;
  detail::parallel_chunks(
      n_pixels, n_threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
          rng::CellRng gen(seed, static_cast<std::uint64_t>(p), 0);
          const double v = sample_voltage(
              map.thetas[static_cast<std::size_t>(p)], config.sigma, gen);
          const double clamped = std::clamp(v, 0.0, config.fwc);
          img.values[static_cast<std::size_t>(p)] =
              config.adc_bits ? model::adc_quantize(clamped, config) : clamped;
        }
      });
  return img;
}

namespace detail {

// Inverts bit_density(x) = ybar for the per-frame exposure x by bisection.
// Assumes ybar above the noise floor and below 1.
inline double invert_bit_density(double ybar, const model::SensorParams& params) {
  double hi = 1.0;
  while (model::bit_density(hi, params) < ybar && hi < 1e12) {
    hi *= 2.0;
  }
  double lo = 0.0;  // bit_density(0+) tends to the noise floor < ybar
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double mu = model::bit_density(mid, params);
    if (std::abs(mu - ybar) <= 1e-13) return mid;
    (mu < ybar ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Maximum-likelihood exposure from the mean bit value of each pixel. The
// noiseless half-threshold case inverts in closed form; otherwise the series
// is inverted numerically. All-ones pixels are flagged and read as
// ybar = 1 - 1/(2N) (pseudo-count clamp); means at or below the read-noise
// false-positive floor read as zero exposure.
inline EstimateMap reconstruct_mle(const FrameStack& stack) {
  if (stack.n_frames < 1) {
    throw std::invalid_argument("reconstruct_mle: empty stack");
  }
  const auto& params = stack.capture_params.params;
  const auto n = static_cast<double>(stack.n_frames);
  const double scale = stack.total_exposure_note ? n : 1.0;
  const double floor =
      params.sigma == 0.0
          ? 0.0
          : specfun::normal_cdf(-params.q / params.sigma);

  // theta-hat depends on the bit count alone; solve each observed count once.
  std::vector<double> by_count(static_cast<std::size_t>(stack.n_frames) + 1,
                               -1.0);
  const auto solve = [&](std::int64_t count) {
    const bool saturated = count == stack.n_frames;
    double ybar = saturated ? 1.0 - 1.0 / (2.0 * n)
                            : static_cast<double>(count) / n;
    if (ybar <= floor) return 0.0;
    if (params.sigma == 0.0 && params.q < 1.0) {
      return scale * -std::log1p(-ybar);
    }
    return scale * detail::invert_bit_density(ybar, params);
  };

  EstimateMap est;
  est.width = stack.width;
  est.height = stack.height;
  const std::int64_t n_pixels = stack.pixels();
  est.theta_hats.assign(static_cast<std::size_t>(n_pixels), 0.0);
  est.saturated_mask.assign(static_cast<std::size_t>(n_pixels), 0);
  for (std::int64_t p = 0; p < n_pixels; ++p) {
    const std::int64_t count = stack.count_ones(p);
    auto& cached = by_count[static_cast<std::size_t>(count)];
    if (cached < 0.0) cached = solve(count);
    est.theta_hats[static_cast<std::size_t>(p)] = cached;
    est.saturated_mask[static_cast<std::size_t>(p)] =
        count == stack.n_frames ? 1 : 0;
  }
  return est;
}

// theta / RMSE over repeated capture-and-reconstruct trials at one exposure.
// Trials are laid out as independent pixels of a synthetic row.
inline double empirical_snr(double theta, const model::QisConfig& config,
                            std::int64_t trials, std::uint64_t seed,
                            int n_threads = 0) {
  if (trials < 1000) {
    throw std::invalid_argument("empirical_snr: need at least 1000 trials");
  }
  if (!(theta > 0.0)) {
    throw std::domain_error("empirical_snr: theta must be > 0");
  }
  ExposureMap map{trials, 1, std::vector<double>(
                                 static_cast<std::size_t>(trials), theta)};
  const FrameStack stack = capture_qis(map, config, seed, n_threads);
  const EstimateMap est = reconstruct_mle(stack);
  double sq = 0.0;
  std::int64_t used = 0;
  bool any_unsaturated = false;
  for (std::int64_t t = 0; t < trials; ++t) {
    const double err = est.theta_hats[static_cast<std::size_t>(t)] - theta;
    sq += err * err;
    ++used;
    if (!est.saturated_mask[static_cast<std::size_t>(t)]) any_unsaturated = true;
  }
  if (!any_unsaturated) {
    throw saturation_error("empirical_snr: every trial saturated");
  }
  const double rmse = std::sqrt(sq / static_cast<double>(used));
  if (rmse == 0.0) return std::numeric_limits<double>::infinity();
  return theta / rmse;
}

// Relative frequency of ones over independent thresholded readouts at full
// exposure theta.
inline double empirical_bit_density(double theta,
                                    const model::SensorParams& params,
                                    std::int64_t trials, std::uint64_t seed,
                                    int n_threads = 0) {
  if (trials < 1000) {
    throw std::invalid_argument(
        "empirical_bit_density: need at least 1000 trials");
  }
  model::detail::check_sensor(params);
  if (!(theta >= 0.0)) {
    throw std::domain_error("empirical_bit_density: theta must be >= 0");
  }
  // Integer reduction, so the total is the same for any chunk order.
  std::atomic<std::int64_t> ones{0};
  detail::parallel_chunks(
      trials, n_threads, [&](std::int64_t lo, std::int64_t hi) {
        std::int64_t local = 0;
        for (std::int64_t t = lo; t < hi; ++t) {
          rng::CellRng gen(seed, static_cast<std::uint64_t>(t), 0);
          if (sample_voltage(theta, params.sigma, gen) >= params.q) ++local;
        }
        ones.fetch_add(local, std::memory_order_relaxed);
      });
  return static_cast<double>(ones.load()) / static_cast<double>(trials);
}

struct ImageMetrics {
  double mse = 0.0;
  double psnr_db = 0.0;
  std::int64_t pixels_used = 0;
};

// MSE over unsaturated pixels; PSNR against the true map's peak exposure.
inline ImageMetrics image_metrics(const ExposureMap& truth,
                                  const EstimateMap& estimate) {
  truth.validate();
  if (truth.width != estimate.width || truth.height != estimate.height) {
    throw std::invalid_argument("image_metrics: dimension mismatch");
  }
  double sq = 0.0;
  std::int64_t used = 0;
  double peak = 0.0;
  const std::size_t n = truth.thetas.size();
  for (std::size_t p = 0; p < n; ++p) {
    peak = std::max(peak, truth.thetas[p]);
    if (estimate.saturated_mask[p]) continue;
    const double err = estimate.theta_hats[p] - truth.thetas[p];
    sq += err * err;
    ++used;
  }
  if (used == 0) {
    throw saturation_error("image_metrics: every pixel saturated");
  }
  ImageMetrics out;
  out.mse = sq / static_cast<double>(used);
  out.pixels_used = used;
  out.psnr_db = out.mse == 0.0
                    ? std::numeric_limits<double>::infinity()
                    : 10.0 * std::log10(peak * peak / out.mse);
  return out;
}

// Deterministic test scene: a gentle diagonal ramp with five Gaussian bumps,
// normalized to [0,1], brightened with a square-root tone curve, and scaled
// to the requested peak exposure. Exercises dark-to-saturated content in one
// frame without any RNG.
inline ExposureMap synthetic_scene(std::int64_t width, std::int64_t height,
                                   double theta_max) {
  if (width < 1 || height < 1 || !(theta_max >= 0.0)) {
    throw std::invalid_argument("synthetic_scene: bad arguments");
  }
  struct Bump {
    double cx, cy, amp, w;
  };
  const Bump bumps[] = {
      {0.30, 0.25, 0.30, 0.16}, {0.68, 0.20, 0.45, 0.12},
      {0.75, 0.70, 0.28, 0.20}, {0.20, 0.75, 0.60, 0.10},
      {0.50, 0.55, -0.12, 0.25},
  };
  ExposureMap map{width, height,
                  std::vector<double>(static_cast<std::size_t>(width * height))};
  const double dx = width > 1 ? 1.0 / static_cast<double>(width - 1) : 0.0;
  const double dy = height > 1 ? 1.0 / static_cast<double>(height - 1) : 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::int64_t r = 0; r < height; ++r) {
    for (std::int64_t c = 0; c < width; ++c) {
      const double x = static_cast<double>(c) * dx;
      const double y = static_cast<double>(r) * dy;
      double f = 0.18 + 0.30 * x + 0.10 * y;
      for (const auto& b : bumps) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        f += b.amp * std::exp(-d2 / (2.0 * b.w * b.w));
      }
      map.thetas[static_cast<std::size_t>(r * width + c)] = f;
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& t : map.thetas) {
    t = theta_max * std::sqrt((t - lo) / span);
  }
  return map;
}

}  // namespace qistk::sim
