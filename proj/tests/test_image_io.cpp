#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "selfseg/image_io.hpp"
#include "selfseg/rng.hpp"

using namespace selfseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("selfseg_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_raw(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_image: all-zero and all-255 files map to 0.0 and 1.0") {
  TempDir dir;
  write_raw(dir.file("zero.pgm"), std::string("P5\n2 2\n255\n") + std::string(4, '\0'));
  GrayImage zero = load_image(dir.file("zero.pgm"));
  REQUIRE(zero.height == 2);
  REQUIRE(zero.width == 2);
  for (double v : zero.data) REQUIRE(v == 0.0);

  write_raw(dir.file("full.pgm"), std::string("P5\n2 2\n255\n") + std::string(4, '\xff'));
  GrayImage full = load_image(dir.file("full.pgm"));
  for (double v : full.data) REQUIRE(v == 1.0);
}

TEST_CASE("load_image: byte 128 maps to 128/255") {
  TempDir dir;
  write_raw(dir.file("mid.pgm"), std::string("P5\n1 1\n255\n") + std::string(1, '\x80'));
  GrayImage img = load_image(dir.file("mid.pgm"));
  REQUIRE(img.data[0] == Catch::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("load_image: header comments are accepted") {
  TempDir dir;
  write_raw(dir.file("c.pgm"), std::string("P5\n# comment\n2 1 # inline\n255\n") + "ab");
  GrayImage img = load_image(dir.file("c.pgm"));
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 1);
}

TEST_CASE("load_image: error cases are reported distinctly") {
  TempDir dir;
  using Catch::Matchers::ContainsSubstring;

  REQUIRE_THROWS_WITH(load_image(dir.file("missing.pgm")), ContainsSubstring("no such file"));

  write_raw(dir.file("color.ppm"), "P6\n1 1\n255\nabc");
  REQUIRE_THROWS_WITH(load_image(dir.file("color.ppm")), ContainsSubstring("non-grayscale"));

  write_raw(dir.file("weird.bin"), "XYZW");
  REQUIRE_THROWS_WITH(load_image(dir.file("weird.bin")), ContainsSubstring("unsupported format"));

  write_raw(dir.file("img.png"), std::string("\x89PNG\r\n", 6));
  REQUIRE_THROWS_WITH(load_image(dir.file("img.png")), ContainsSubstring("PNG"));

  write_raw(dir.file("wide.pgm"), std::string("P5\n1 1\n65535\n") + "ab");
  REQUIRE_THROWS_WITH(load_image(dir.file("wide.pgm")), ContainsSubstring("maxval"));

  write_raw(dir.file("short.pgm"), "P5\n4 4\n255\nab");
  REQUIRE_THROWS_WITH(load_image(dir.file("short.pgm")), ContainsSubstring("truncated"));
}

TEST_CASE("save_mask/load round trip reproduces the mask") {
  TempDir dir;
  BinaryMask mask(2, 2);
  mask.data = {0, 1, 1, 0};
  save_mask(mask, dir.file("m.pgm"));
  REQUIRE(load_mask(dir.file("m.pgm")).data == mask.data);

  GrayImage raw = load_image(dir.file("m.pgm"));
  REQUIRE(raw.data[0] == 0.0);
  REQUIRE(raw.data[1] == 1.0);
}

TEST_CASE("save_mask: all-zeros and all-ones bytes") {
  TempDir dir;
  BinaryMask zeros(2, 3, 0), ones(2, 3, 1);
  save_mask(zeros, dir.file("z.pgm"));
  save_mask(ones, dir.file("o.pgm"));
  for (double v : load_image(dir.file("z.pgm")).data) REQUIRE(v == 0.0);
  for (double v : load_image(dir.file("o.pgm")).data) REQUIRE(v == 1.0);
}

TEST_CASE("save_mask/load property: random masks survive the round trip") {
  TempDir dir;
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(12));
    const int w = 1 + static_cast<int>(rng.below(12));
    BinaryMask mask(h, w);
    for (auto& v : mask.data) v = rng.below(2) ? 1 : 0;
    save_mask(mask, dir.file("rt.pgm"));
    REQUIRE(load_mask(dir.file("rt.pgm")).data == mask.data);
  }
}

TEST_CASE("save_image/load round trip quantizes to byte precision") {
  TempDir dir;
  GrayImage img(3, 3);
  Rng rng(5);
  for (double& v : img.data) v = rng.uniform01();
  save_image(img, dir.file("q.pgm"));
  GrayImage back = load_image(dir.file("q.pgm"));
  for (int i = 0; i < img.pixels(); ++i)
    REQUIRE(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("save_image: unwritable destination fails") {
  GrayImage img(1, 1, 0.5);
  REQUIRE_THROWS_AS(save_image(img, "/nonexistent_dir_xyz/out.pgm"), std::runtime_error);
}
