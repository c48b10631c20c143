#pragma once

// Counter-based random numbers for reproducible parallel simulation. Each
// (seed, cell, frame) triple owns an independent stream, so captures are
// bit-identical no matter how work is scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qistk/specfun.hpp"

namespace qistk::rng {

// Philox 4x32 with 10 rounds. Constants and structure follow the published
// generator; the unit tests pin known-answer vectors for it.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 =
          static_cast<std::uint64_t>(kMul0) * static_cast<std::uint64_t>(ctr[0]);
      const std::uint64_t p1 =
          static_cast<std::uint64_t>(kMul1) * static_cast<std::uint64_t>(ctr[2]);
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Stream of randomness for one simulation cell. The counter encodes
// (cell, frame, block); the key carries the user seed. 2^32 blocks of four
// words are available per cell-frame, far beyond any draw sequence here.
class CellRng {
 public:
  CellRng(std::uint64_t seed, std::uint64_t cell, std::uint32_t frame)
      : ctr_{static_cast<std::uint32_t>(cell),
             static_cast<std::uint32_t>(cell >> 32), frame, 0u},
        key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = Philox4x32::block(ctr_, key_);
      ++ctr_[3];
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const auto hi = static_cast<std::uint64_t>(next_u32());
    return (hi << 32) | next_u32();
  }

  // Strictly inside (0,1): 53 uniform bits centered on half-steps, so the
  // endpoints are unreachable and quantile transforms never see 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

 private:
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

// Poisson draw. Sequential-search inversion below 30 (per-frame exposures
// live there, and inversion is exact-to-the-uniform); transformed rejection
// with squeeze above.
inline std::int64_t poisson_sample(double theta, CellRng& gen) {
  if (!(theta >= 0.0)) {
    throw std::domain_error("poisson_sample: theta must be >= 0");
  }
  if (theta == 0.0) return 0;
  if (theta < 30.0) {
    const double u = gen.uniform();
    double pmf = std::exp(-theta);
    double cum = pmf;
    std::int64_t k = 0;
    while (u > cum && k < 3000) {
      ++k;
      pmf *= theta / static_cast<double>(k);
      cum += pmf;
    }
    return k;
  }
  const double b = 0.931 + 2.53 * std::sqrt(theta);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_theta = std::log(theta);
  for (;;) {
    const double u = gen.uniform() - 0.5;
    double v = gen.uniform();
    const double us = 0.5 - std::abs(u);
    const double kf =
        std::floor((2.0 * a / us + b) * u + theta + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * log_theta - theta - std::lgamma(kf + 1.0)) {
      return static_cast<std::int64_t>(kf);
    }
  }
}

// Centered Gaussian via the quantile transform; one uniform per draw keeps
// the stream accounting trivial.
inline double gaussian_sample(double sigma, CellRng& gen) {
  return sigma * specfun::normal_quantile(gen.uniform());
}

}  // namespace qistk::rng
