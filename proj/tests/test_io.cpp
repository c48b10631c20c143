#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "qistk/io.hpp"
#include "qistk/sim.hpp"

namespace fs = std::filesystem;
namespace io = qistk::io;
namespace sim = qistk::sim;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("qistk_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const char* name) const { return path / name; }
};

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("qbf round trip is bit-exact including metadata") {
  TempDir dir;
  const auto scene = sim::synthetic_scene(19, 7, 4.0);
  const qistk::model::QisConfig config{{0.19, 0.5}, 5};
  auto stack = sim::capture_qis(scene, config, 777);

  const auto path = dir / "stack.qbf";
  io::write_qbf(path, stack);
  const auto back = io::read_qbf(path);

  CHECK(back.width == stack.width);
  CHECK(back.height == stack.height);
  CHECK(back.n_frames == stack.n_frames);
  CHECK(back.capture_params.params.sigma == 0.19);
  CHECK(back.capture_params.params.q == 0.5);
  CHECK(back.capture_params.n_frames == 5);
  CHECK(back.seed == 777);
  CHECK(back.total_exposure_note);
  CHECK(back.bits == stack.bits);

  // Writing the reread stack reproduces the file byte for byte.
  const auto again = dir / "stack2.qbf";
  io::write_qbf(again, back);
  CHECK(file_bytes(path) == file_bytes(again));

  stack.total_exposure_note = false;
  stack.seed = 0xFFFF'FFFF'FFFF'FFFFull;
  io::write_qbf(path, stack);
  const auto flagged = io::read_qbf(path);
  CHECK_FALSE(flagged.total_exposure_note);
  CHECK(flagged.seed == 0xFFFF'FFFF'FFFF'FFFFull);
}

TEST_CASE("qbf rejects malformed files") {
  TempDir dir;
  const auto path = dir / "stack.qbf";
  const auto scene = sim::synthetic_scene(9, 5, 2.0);
  const auto stack = sim::capture_qis(scene, {{0.0, 0.5}, 3}, 1);
  io::write_qbf(path, stack);
  auto good = file_bytes(path);

  const auto rewrite = [&](std::vector<std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  };

  auto bad_magic = good;
  bad_magic[3] = '2';
  rewrite(bad_magic);
  CHECK_THROWS_AS(io::read_qbf(path), io::io_error);

  auto truncated = good;
  truncated.resize(20);
  rewrite(truncated);
  CHECK_THROWS_AS(io::read_qbf(path), io::io_error);

  auto oversized = good;
  oversized.push_back(0);
  rewrite(oversized);
  CHECK_THROWS_AS(io::read_qbf(path), io::io_error);

  // 9*5 = 45 pixels: the last 3 bits of each frame's final byte are padding.
  auto dirty_padding = good;
  dirty_padding.back() |= 0x80;
  rewrite(dirty_padding);
  CHECK_THROWS_AS(io::read_qbf(path), io::io_error);

  CHECK_THROWS_AS(io::read_qbf(dir / "missing.qbf"), io::io_error);
}

TEST_CASE("qmap stores a 16-byte header and raw doubles") {
  TempDir dir;
  const auto path = dir / "map.qmap";
  const auto scene = sim::synthetic_scene(23, 11, 16.0);
  io::write_qmap(path, scene);

  const auto bytes = file_bytes(path);
  REQUIRE(bytes.size() == 16 + 8 * 23 * 11);
  CHECK(bytes[0] == 'Q');
  CHECK(bytes[1] == 'M');
  CHECK(bytes[2] == 'A');
  CHECK(bytes[3] == 'P');
  CHECK(bytes[4] == 23);  // little-endian width
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 11);  // little-endian height
  for (int i = 12; i < 16; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == 0);

  const auto back = io::read_qmap(path);
  CHECK(back.width == 23);
  CHECK(back.height == 11);
  CHECK(back.thetas == scene.thetas);  // exact, doubles pass through raw

  auto bad = bytes;
  bad[2] = 'X';
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(bad.data()),
             static_cast<std::streamsize>(bad.size()));
  CHECK_THROWS_AS(io::read_qmap(path), io::io_error);

  CHECK_THROWS_AS(io::write_qmap(path, 4, 4, std::vector<double>(3)),
                  io::io_error);
}

TEST_CASE("pgm writes follow the p5 format at both depths") {
  TempDir dir;
  const auto path = dir / "img.pgm";

  io::write_pgm(path, 2, 2, {0.0, 4.0, 8.0, 16.0}, 16.0, 255);
  const auto bytes = file_bytes(path);
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 4);
  CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
  CHECK(bytes[header.size() + 0] == 0);
  CHECK(bytes[header.size() + 1] == 64);   // 4/16 * 255 = 63.75 -> 64
  CHECK(bytes[header.size() + 2] == 128);  // 8/16 * 255 = 127.5 -> 128
  CHECK(bytes[header.size() + 3] == 255);

  // Out-of-range values clamp instead of wrapping.
  io::write_pgm(path, 1, 2, {-3.0, 99.0}, 16.0, 255);
  const auto clamped = io::read_pgm(path);
  CHECK(clamped.samples == std::vector<std::uint16_t>{0, 255});

  io::write_pgm(path, 2, 1, {1.0, 0.00002}, 1.0, 65535);
  const auto wide = file_bytes(path);
  const std::string header16 = "P5\n2 1\n65535\n";
  REQUIRE(wide.size() == header16.size() + 4);
  CHECK(wide[header16.size() + 0] == 0xFF);  // big-endian 65535
  CHECK(wide[header16.size() + 1] == 0xFF);
  CHECK(wide[header16.size() + 2] == 0x00);  // 0.00002 * 65535 -> 1
  CHECK(wide[header16.size() + 3] == 0x01);

  const auto img = io::read_pgm(path);
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.maxval == 65535);
  CHECK(img.samples == std::vector<std::uint16_t>{65535, 1});

  CHECK_THROWS_AS(io::write_pgm(path, 2, 2, {1.0, 2.0}, 16.0, 255),
                  io::io_error);
  CHECK_THROWS_AS(io::write_pgm(path, 1, 1, {1.0}, 0.0, 255), io::io_error);
  CHECK_THROWS_AS(io::write_pgm(path, 1, 1, {1.0}, 1.0, 70000), io::io_error);
}

TEST_CASE("pgm reader handles comments and rejects malformed input") {
  TempDir dir;
  const auto path = dir / "img.pgm";

  const std::string with_comments =
      "P5 # binary pgm\n# full line comment\n 3\n# width done\n1 255\n\x05\x80\xFF";
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(with_comments.data(),
             static_cast<std::streamsize>(with_comments.size()));
  const auto img = io::read_pgm(path);
  CHECK(img.width == 3);
  CHECK(img.height == 1);
  CHECK(img.samples == std::vector<std::uint16_t>{5, 128, 255});

  const auto reject = [&](const std::string& content) {
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(content.data(), static_cast<std::streamsize>(content.size()));
    CHECK_THROWS_AS(io::read_pgm(path), io::io_error);
  };
  reject("P6\n1 1\n255\nX");         // wrong magic
  reject("P5\n1 1\n255\n");          // missing payload
  reject("P5\n1 1\n255\nXY");        // oversized payload
  reject("P5\n1 1\n0\nX");           // maxval out of range
  reject("P5\nx 1\n255\nX");         // non-numeric dimension
}

TEST_CASE("pgm ingestion maps samples linearly onto exposures") {
  TempDir dir;
  const auto path = dir / "scene.pgm";
  io::write_pgm(path, 2, 2, {0.0, 85.0, 170.0, 255.0}, 255.0, 255);

  const auto map = io::exposure_from_pgm(path, 16.0);
  map.validate();
  CHECK(map.width == 2);
  CHECK(map.height == 2);
  CHECK(map.thetas[0] == 0.0);
  CHECK_THAT(map.thetas[1], Catch::Matchers::WithinRel(85.0 / 255.0 * 16.0, 1e-15));
  CHECK_THAT(map.thetas[2], Catch::Matchers::WithinRel(170.0 / 255.0 * 16.0, 1e-15));
  CHECK(map.thetas[3] == 16.0);

  // 16-bit sources use the wider maxval as the white point.
  io::write_pgm(path, 1, 2, {0.25, 1.0}, 1.0, 65535);
  const auto wide = io::exposure_from_pgm(path, 8.0);
  CHECK_THAT(wide.thetas[0],
             Catch::Matchers::WithinRel(16384.0 / 65535.0 * 8.0, 1e-15));
  CHECK(wide.thetas[1] == 8.0);

  CHECK_THROWS_AS(io::exposure_from_pgm(path, -1.0), io::io_error);
}

TEST_CASE("pgm survives a 16-bit round trip unchanged") {
  TempDir dir;
  const auto path = dir / "rt.pgm";
  std::vector<double> values;
  std::vector<std::uint16_t> expected;
  for (int i = 0; i < 64 * 3; ++i) {
    const auto s = static_cast<std::uint16_t>((i * 2654435761u) % 65536);
    expected.push_back(s);
    values.push_back(static_cast<double>(s));
  }
  io::write_pgm(path, 64, 3, values, 65535.0, 65535);
  const auto img = io::read_pgm(path);
  CHECK(img.samples == expected);
}
