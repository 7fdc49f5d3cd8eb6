#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

#include "selfseg/manifest.hpp"
#include "selfseg/phantom.hpp"

using namespace selfseg;
namespace fs = std::filesystem;

namespace {

int connected_components(const BinaryMask& mask) {
  std::vector<char> seen(mask.data.size(), 0);
  int components = 0;
  for (int start = 0; start < mask.pixels(); ++start) {
    if (!mask.data[start] || seen[start]) continue;
    ++components;
    std::queue<int> frontier;
    frontier.push(start);
    seen[start] = 1;
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop();
      const int r = i / mask.width, c = i % mask.width;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= mask.height || cc < 0 || cc >= mask.width) continue;
          const int j = rr * mask.width + cc;
          if (mask.data[j] && !seen[j]) {
            seen[j] = 1;
            frontier.push(j);
          }
        }
      }
    }
  }
  return components;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() / (std::string("selfseg_ph_") + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generate_sample: bit-identical per seed") {
  PhantomConfig cfg;
  for (std::uint64_t seed : {0ull, 7ull, 123456ull}) {
    auto [img_a, mask_a] = generate_sample(cfg, seed);
    auto [img_b, mask_b] = generate_sample(cfg, seed);
    REQUIRE(img_a.data == img_b.data);
    REQUIRE(mask_a.data == mask_b.data);
  }
}

TEST_CASE("generate_sample: noiseless artifact-free output is piecewise constant bone/tissue/background") {
  PhantomConfig cfg;
  cfg.noise_std = 0.0;
  cfg.artifact_prob = 0.0;
  auto [img, mask] = generate_sample(cfg, 3);
  std::set<double> levels(img.data.begin(), img.data.end());
  REQUIRE(levels.size() <= 2 + 12);  // background, tissue, per-phalanx bone levels
  for (int i = 0; i < mask.pixels(); ++i) {
    if (mask.data[i]) {
      REQUIRE(img.data[i] >= cfg.bone_lo);
      REQUIRE(img.data[i] <= cfg.bone_hi);
    }
  }
}

TEST_CASE("generate_sample: mask pixels lie in the bone intensity interval even with artifacts") {
  PhantomConfig cfg;
  cfg.noise_std = 0.0;
  cfg.artifact_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto [img, mask] = generate_sample(cfg, seed);
    for (int i = 0; i < mask.pixels(); ++i) {
      if (mask.data[i]) {
        REQUIRE(img.data[i] >= cfg.bone_lo);
        REQUIRE(img.data[i] <= cfg.bone_hi);
      }
    }
  }
}

TEST_CASE("generate_sample: foreground fraction within (0.02, 0.40) over 100 seeds") {
  PhantomConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [img, mask] = generate_sample(cfg, seed);
    std::size_t fg = 0;
    for (auto v : mask.data) fg += v;
    const double frac = static_cast<double>(fg) / mask.pixels();
    INFO("seed " << seed << " fraction " << frac);
    REQUIRE(frac > 0.02);
    REQUIRE(frac < 0.40);
    REQUIRE(fg > 0);
  }
}

TEST_CASE("generate_sample: phalanges stay separate components at size 96") {
  PhantomConfig cfg;
  cfg.image_size = 96;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto [img, mask] = generate_sample(cfg, seed);
    REQUIRE(connected_components(mask) >= cfg.fingers * cfg.phalanges_per_finger);
  }
}

TEST_CASE("generate_sample: intensities clamped to [0,1] under noise") {
  PhantomConfig cfg;
  cfg.noise_std = 0.5;
  auto [img, mask] = generate_sample(cfg, 11);
  for (double v : img.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("generate_sample: invalid configs are rejected") {
  PhantomConfig cfg;
  cfg.tissue_hi = 0.9;  // overlaps the bone interval
  REQUIRE_THROWS_AS(generate_sample(cfg, 0), std::invalid_argument);
  PhantomConfig cfg2;
  cfg2.artifact_prob = 1.5;
  REQUIRE_THROWS_AS(generate_sample(cfg2, 0), std::invalid_argument);
}

TEST_CASE("generate_dataset: counts (1,1,1,1) produce 4 samples and a 4-row manifest") {
  TempDir dir("counts");
  PhantomConfig cfg;
  cfg.image_size = 32;
  const fs::path manifest_path = generate_dataset(cfg, 0, {1, 1, 1, 1}, dir.path);
  REQUIRE(fs::exists(manifest_path));
  const Manifest manifest = load_manifest(manifest_path);
  REQUIRE(manifest.rows.size() == 4);
  std::set<std::string> splits;
  for (const auto& row : manifest.rows) {
    splits.insert(row.split);
    REQUIRE(fs::exists(dir.path / row.image_path));
    REQUIRE(fs::exists(dir.path / row.mask_path));
  }
  REQUIRE(splits == std::set<std::string>{"train", "val", "test", "pool"});
}

TEST_CASE("generate_dataset: identical seed gives a byte-identical tree") {
  TempDir a("tree_a"), b("tree_b");
  PhantomConfig cfg;
  cfg.image_size = 24;
  generate_dataset(cfg, 9, {3, 1, 2, 2}, a.path);
  generate_dataset(cfg, 9, {3, 1, 2, 2}, b.path);

  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(a.path))
    if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a.path));
  REQUIRE(rel.size() == 2 * (3 + 1 + 2 + 2) + 1);
  for (const auto& r : rel) REQUIRE(slurp(a.path / r) == slurp(b.path / r));
}

TEST_CASE("generate_dataset: default counts produce the 209-sample split") {
  TempDir dir("default");
  PhantomConfig cfg;
  cfg.image_size = 16;  // small images keep this cheap
  const fs::path manifest_path = generate_dataset(cfg, 1, {}, dir.path);
  const Manifest manifest = load_manifest(manifest_path);
  REQUIRE(manifest.rows.size() == 209);  // 89 + 20 + 50 + 50
  int train = 0, val = 0, test = 0, pool = 0;
  for (const auto& row : manifest.rows) {
    if (row.split == "train") ++train;
    if (row.split == "val") ++val;
    if (row.split == "test") ++test;
    if (row.split == "pool") ++pool;
  }
  REQUIRE(train == 89);
  REQUIRE(val == 20);
  REQUIRE(test == 50);
  REQUIRE(pool == 50);
}
