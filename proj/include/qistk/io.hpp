#pragma once

// File formats: ".qbf" bit-packed binary frame stacks, "QMAP" raw f64
// exposure rasters, and binary PGM (P5) images at 8 or 16 bits. All
// multi-byte integers and doubles are little-endian except PGM samples,
// which are big-endian per the format.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qistk/sim.hpp"

namespace qistk::io {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  const std::uint8_t* raw(std::size_t n) {
    need(n);
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) {
    if (size_ - pos_ < n) {
      throw io_error(what_ + ": truncated file");
    }
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void spill(const std::filesystem::path& path,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw io_error("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw io_error("short write to " + path.string());
  }
}

inline std::uint32_t checked_u32(std::int64_t v, const char* what) {
  if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
    throw io_error(std::string(what) + " out of range for the file format");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

// --- .qbf frame stacks ------------------------------------------------------
// "QBF1", u32 width, u32 height, u32 n_frames, f64 sigma, f64 q, u64 seed,
// u8 per-frame-exposure flag, then the bit-packed payload.

inline void write_qbf(const std::filesystem::path& path,
                      const sim::FrameStack& stack) {
  const auto payload =
      static_cast<std::size_t>(stack.bytes_per_frame() * stack.n_frames);
  if (stack.bits.size() != payload) {
    throw io_error("write_qbf: bit buffer does not match dimensions");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(33 + payload);
  bytes.insert(bytes.end(), {'Q', 'B', 'F', '1'});
  detail::put_u32(bytes, detail::checked_u32(stack.width, "width"));
  detail::put_u32(bytes, detail::checked_u32(stack.height, "height"));
  detail::put_u32(bytes, detail::checked_u32(stack.n_frames, "n_frames"));
  detail::put_f64(bytes, stack.capture_params.params.sigma);
  detail::put_f64(bytes, stack.capture_params.params.q);
  detail::put_u64(bytes, stack.seed);
  bytes.push_back(stack.total_exposure_note ? 1 : 0);
  bytes.insert(bytes.end(), stack.bits.begin(), stack.bits.end());
  detail::spill(path, bytes);
}

inline sim::FrameStack read_qbf(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  detail::Reader r(bytes.data(), bytes.size(), "read_qbf");
  const std::uint8_t* magic = r.raw(4);
  if (std::memcmp(magic, "QBF1", 4) != 0) {
    throw io_error("read_qbf: bad magic");
  }
  sim::FrameStack stack;
  stack.width = r.u32();
  stack.height = r.u32();
  stack.n_frames = r.u32();
  stack.capture_params.params.sigma = r.f64();
  stack.capture_params.params.q = r.f64();
  stack.capture_params.n_frames = stack.n_frames;
  stack.seed = r.u64();
  stack.total_exposure_note = r.u8() != 0;
  if (stack.width < 1 || stack.height < 1 || stack.n_frames < 1) {
    throw io_error("read_qbf: bad dimensions");
  }
  const auto payload =
      static_cast<std::size_t>(stack.bytes_per_frame() * stack.n_frames);
  if (r.remaining() != payload) {
    throw io_error("read_qbf: payload size does not match dimensions");
  }
  const std::uint8_t* data = r.raw(payload);
  stack.bits.assign(data, data + payload);
  // Bits past the last pixel of each frame must be zero.
  const std::int64_t tail = stack.pixels() % 8;
  if (tail != 0) {
    const auto mask = static_cast<std::uint8_t>(0xFFu << tail);
    for (std::int64_t f = 0; f < stack.n_frames; ++f) {
      const auto last = static_cast<std::size_t>(
          (f + 1) * stack.bytes_per_frame() - 1);
      if (stack.bits[last] & mask) {
        throw io_error("read_qbf: nonzero padding bits");
      }
    }
  }
  return stack;
}

// --- QMAP f64 rasters -------------------------------------------------------
// 16-byte header: "QMAP", u32 width, u32 height, 4 reserved zero bytes; then
// width*height little-endian doubles, row-major.

inline void write_qmap(const std::filesystem::path& path, std::int64_t width,
                       std::int64_t height, const std::vector<double>& values) {
  if (width < 1 || height < 1 ||
      values.size() != static_cast<std::size_t>(width * height)) {
    throw io_error("write_qmap: dimensions do not match value count");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + 8 * values.size());
  bytes.insert(bytes.end(), {'Q', 'M', 'A', 'P'});
  detail::put_u32(bytes, detail::checked_u32(width, "width"));
  detail::put_u32(bytes, detail::checked_u32(height, "height"));
  detail::put_u32(bytes, 0);
  for (double v : values) {
    detail::put_f64(bytes, v);
  }
  detail::spill(path, bytes);
}

inline void write_qmap(const std::filesystem::path& path,
                       const sim::ExposureMap& map) {
  write_qmap(path, map.width, map.height, map.thetas);
}

inline sim::ExposureMap read_qmap(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  detail::Reader r(bytes.data(), bytes.size(), "read_qmap");
  const std::uint8_t* magic = r.raw(4);
  if (std::memcmp(magic, "QMAP", 4) != 0) {
    throw io_error("read_qmap: bad magic");
  }
  sim::ExposureMap map;
  map.width = r.u32();
  map.height = r.u32();
  r.u32();  // reserved
  if (map.width < 1 || map.height < 1) {
    throw io_error("read_qmap: bad dimensions");
  }
  const auto count = static_cast<std::size_t>(map.width * map.height);
  if (r.remaining() != 8 * count) {
    throw io_error("read_qmap: payload size does not match dimensions");
  }
  map.thetas.resize(count);
  for (auto& v : map.thetas) {
    v = r.f64();
  }
  return map;
}

// --- PGM (P5) ---------------------------------------------------------------

struct PgmImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major
};

// Linear map of [0, peak] onto [0, maxval], rounded and clamped. maxval 255
// writes one byte per sample, anything larger two bytes big-endian.
inline void write_pgm(const std::filesystem::path& path, std::int64_t width,
                      std::int64_t height, const std::vector<double>& values,
                      double peak, int maxval = 255) {
  if (width < 1 || height < 1 ||
      values.size() != static_cast<std::size_t>(width * height)) {
    throw io_error("write_pgm: dimensions do not match value count");
  }
  if (maxval < 1 || maxval > 65535) {
    throw io_error("write_pgm: maxval must be in [1, 65535]");
  }
  if (!(peak > 0.0)) {
    throw io_error("write_pgm: peak must be positive");
  }
  std::string header = "P5\n" + std::to_string(width) + " " +
                       std::to_string(height) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const double scale = static_cast<double>(maxval) / peak;
  for (double v : values) {
    const double mapped =
        std::clamp(std::round(v * scale), 0.0, static_cast<double>(maxval));
    const auto s = static_cast<std::uint16_t>(mapped);
    if (maxval > 255) {
      bytes.push_back(static_cast<std::uint8_t>(s >> 8));
    }
    bytes.push_back(static_cast<std::uint8_t>(s & 0xFF));
  }
  detail::spill(path, bytes);
}

inline PgmImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  std::size_t pos = 0;
  const auto peek = [&]() -> int {
    return pos < bytes.size() ? bytes[pos] : -1;
  };
  const auto skip_space = [&]() {
    while (pos < bytes.size()) {
      const int c = peek();
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto number = [&]() -> std::int64_t {
    skip_space();
    if (!std::isdigit(peek())) {
      throw io_error("read_pgm: malformed header");
    }
    std::int64_t v = 0;
    while (std::isdigit(peek())) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000'000) {
        throw io_error("read_pgm: header value out of range");
      }
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw io_error("read_pgm: not a binary PGM (P5)");
  }
  pos = 2;
  PgmImage img;
  img.width = number();
  img.height = number();
  const std::int64_t maxval = number();
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 65535) {
    throw io_error("read_pgm: bad dimensions or maxval");
  }
  img.maxval = static_cast<int>(maxval);
  ++pos;  // single whitespace byte after maxval
  const auto count = static_cast<std::size_t>(img.width * img.height);
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos != count * sample_bytes) {
    throw io_error("read_pgm: payload size does not match header");
  }
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (sample_bytes == 2) {
      img.samples[i] = static_cast<std::uint16_t>(
          (static_cast<std::uint16_t>(bytes[pos]) << 8) | bytes[pos + 1]);
      pos += 2;
    } else {
      img.samples[i] = bytes[pos++];
    }
  }
  return img;
}

// Grayscale images are treated as linear radiance: sample/maxval scaled to
// [0, theta_max]. No gamma handling.
inline sim::ExposureMap exposure_from_pgm(const std::filesystem::path& path,
                                          double theta_max) {
  if (!(theta_max >= 0.0)) {
    throw io_error("exposure_from_pgm: theta_max must be >= 0");
  }
  const PgmImage img = read_pgm(path);
  sim::ExposureMap map;
  map.width = img.width;
  map.height = img.height;
  map.thetas.resize(img.samples.size());
  const double scale = theta_max / static_cast<double>(img.maxval);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    map.thetas[i] = static_cast<double>(img.samples[i]) * scale;
  }
  return map;
}

}  // namespace qistk::io
