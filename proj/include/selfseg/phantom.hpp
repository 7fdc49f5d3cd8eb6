#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfseg/image.hpp"
#include "selfseg/image_io.hpp"
#include "selfseg/manifest.hpp"
#include "selfseg/rng.hpp"

namespace selfseg {

// Synthetic "phantom hand": capsule-chain phalanges over a soft-tissue halo
// and dark background, with optional bright ring/bar artifacts standing in
// for watches and casts. Ground truth is exact by construction.
struct PhantomConfig {
  int image_size = 64;
  int fingers = 4;
  int phalanges_per_finger = 3;  // distal, middle, proximal
  double noise_std = 0.05;
  double artifact_prob = 0.1;
  double bone_lo = 0.70, bone_hi = 0.95;
  double tissue_lo = 0.35, tissue_hi = 0.55;
  double background_lo = 0.02, background_hi = 0.15;

  void validate() const {
    if (image_size < 16) throw std::invalid_argument("image_size must be >= 16");
    if (fingers < 1 || phalanges_per_finger < 1)
      throw std::invalid_argument("fingers/phalanges must be positive");
    if (noise_std < 0) throw std::invalid_argument("noise_std must be >= 0");
    if (artifact_prob < 0 || artifact_prob > 1)
      throw std::invalid_argument("artifact_prob must be in [0,1]");
    auto interval = [](double lo, double hi) {
      return 0.0 <= lo && lo <= hi && hi <= 1.0;
    };
    if (!interval(bone_lo, bone_hi) || !interval(tissue_lo, tissue_hi) ||
        !interval(background_lo, background_hi))
      throw std::invalid_argument("intensity intervals must satisfy 0 <= lo <= hi <= 1");
    if (!(bone_lo > tissue_hi && tissue_lo > background_hi))
      throw std::invalid_argument("intensity intervals must be ordered bone > tissue > background");
  }
};

namespace detail {

struct Capsule {
  double x0, y0, x1, y1;  // segment endpoints
  double radius;
  double intensity;
};

inline double dist_to_segment(double px, double py, const Capsule& c) {
  const double vx = c.x1 - c.x0, vy = c.y1 - c.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - c.x0) * vx + (py - c.y0) * vy) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double dx = px - (c.x0 + t * vx), dy = py - (c.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

// Renders one phantom. Deterministic per (cfg, seed); the draw order is
// fixed, so configs only change what they parameterize.
inline std::pair<GrayImage, BinaryMask> generate_sample(const PhantomConfig& cfg,
                                                        std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double s = static_cast<double>(cfg.image_size);

  const double hand_angle = rng.uniform(-0.24, 0.24);
  const double bone_base = rng.uniform(cfg.bone_lo, cfg.bone_hi);
  const double tissue_level = rng.uniform(cfg.tissue_lo, cfg.tissue_hi);
  const double background_level = rng.uniform(cfg.background_lo, cfg.background_hi);
  const double root_x = s * (0.5 + rng.uniform(-0.04, 0.04));
  const double root_y = s * (0.74 + rng.uniform(-0.04, 0.04));
  const double spacing = s * (0.17 + rng.uniform(-0.012, 0.012));
  const double joint_gap = std::max(1.5, s * 0.022);

  std::vector<detail::Capsule> capsules;
  capsules.reserve(static_cast<std::size_t>(cfg.fingers) * cfg.phalanges_per_finger);
  const double mid = (cfg.fingers - 1) / 2.0;
  for (int f = 0; f < cfg.fingers; ++f) {
    const double theta = hand_angle + 0.085 * (f - mid) + rng.uniform(-0.035, 0.035);
    const double dx = std::sin(theta), dy = -std::cos(theta);
    const double base_len = s * (0.17 + rng.uniform(-0.015, 0.015));
    const double base_rad = s * (0.045 + rng.uniform(-0.007, 0.007));
    // finger roots fan out perpendicular to the hand axis
    const double px0 = root_x + (f - mid) * spacing * std::cos(hand_angle);
    const double py0 = root_y + (f - mid) * spacing * std::sin(hand_angle);

    double cx = px0, cy = py0;
    for (int k = 0; k < cfg.phalanges_per_finger; ++k) {
      // proximal -> distal: shorter and thinner toward the tip
      const double len = base_len * (1.0 - 0.22 * k) * (1.0 + rng.uniform(-0.05, 0.05));
      const double rad = std::max(1.0, base_rad * (1.0 - 0.12 * k));
      double level = bone_base + rng.uniform(-0.03, 0.03);
      level = std::min(cfg.bone_hi, std::max(cfg.bone_lo, level));
      detail::Capsule cap{cx, cy, cx + dx * len, cy + dy * len, rad, level};
      capsules.push_back(cap);
      const double next_rad = std::max(1.0, base_rad * (1.0 - 0.12 * (k + 1)));
      cx = cap.x1 + dx * (rad + joint_gap + next_rad);
      cy = cap.y1 + dy * (rad + joint_gap + next_rad);
    }
  }

  // optional bright artifact, intensity inside the bone interval
  bool has_artifact = rng.bernoulli(cfg.artifact_prob);
  bool ring = false;
  double art_x = 0, art_y = 0, art_r = 0, art_half = 0, art_nx = 0, art_ny = 0, art_level = 0;
  if (has_artifact) {
    ring = rng.bernoulli(0.5);
    art_x = s * (0.5 + rng.uniform(-0.2, 0.2));
    art_y = s * (0.5 + rng.uniform(-0.2, 0.2));
    art_level = rng.uniform(cfg.bone_lo, cfg.bone_hi);
    if (ring) {
      art_r = s * rng.uniform(0.16, 0.3);
      art_half = std::max(0.8, s * 0.012);
    } else {
      const double ang = rng.uniform(0.0, M_PI);
      art_nx = std::cos(ang);
      art_ny = std::sin(ang);
      art_half = std::max(1.0, s * 0.018);
    }
  }

  GrayImage img(cfg.image_size, cfg.image_size, background_level);
  BinaryMask mask(cfg.image_size, cfg.image_size, 0);
  const double halo_scale = 2.1, halo_pad = std::max(1.5, s * 0.02);
  for (int r = 0; r < cfg.image_size; ++r) {
    for (int c = 0; c < cfg.image_size; ++c) {
      const double px = c, py = r;
      double best = 1e30;
      const detail::Capsule* nearest = nullptr;
      bool tissue = false;
      for (const auto& cap : capsules) {
        const double d = detail::dist_to_segment(px, py, cap);
        if (d - cap.radius < best) {
          best = d - cap.radius;
          nearest = &cap;
        }
        if (d <= cap.radius * halo_scale + halo_pad) tissue = true;
      }
      if (nearest && best <= 0.0) {
        mask.at(r, c) = 1;
        img.at(r, c) = nearest->intensity;
      } else if (tissue) {
        img.at(r, c) = tissue_level;
      }
      if (has_artifact) {
        bool inside;
        if (ring) {
          const double d = std::hypot(px - art_x, py - art_y);
          inside = std::abs(d - art_r) <= art_half;
        } else {
          inside = std::abs((px - art_x) * art_nx + (py - art_y) * art_ny) <= art_half;
        }
        // artifacts overwrite tissue/background but never carve the mask
        if (inside && !mask.at(r, c)) img.at(r, c) = art_level;
      }
    }
  }

  if (cfg.noise_std > 0) {
    for (double& v : img.data) v += rng.normal() * cfg.noise_std;
  }
  for (double& v : img.data) v = std::min(1.0, std::max(0.0, v));
  return {std::move(img), std::move(mask)};
}

struct DatasetCounts {
  int labeled = 89;
  int validation = 20;
  int test = 50;
  int pool = 50;
};

// Writes images/, masks/ and the manifest under out_dir. Pool samples get
// their masks written too (the fully supervised baseline needs them) but are
// tagged `pool`, so loaders must not treat them as labels. Per-sample seeds
// are seed + global sample index; the directory tree is byte-identical for
// a given (cfg, seed, counts).
inline std::filesystem::path generate_dataset(const PhantomConfig& cfg, std::uint64_t seed,
                                              const DatasetCounts& counts,
                                              const std::filesystem::path& out_dir) {
  cfg.validate();
  if (counts.labeled < 1 || counts.validation < 0 || counts.test < 1 || counts.pool < 0)
    throw std::invalid_argument("dataset counts out of range");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");

  std::vector<ManifestRow> rows;
  std::uint64_t index = 0;
  const std::pair<const char*, int> splits[] = {{"train", counts.labeled},
                                                {"val", counts.validation},
                                                {"test", counts.test},
                                                {"pool", counts.pool}};
  for (const auto& [split, count] : splits) {
    for (int k = 0; k < count; ++k, ++index) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s_%03d", split, k);
      const std::string id = buf;
      auto [img, mask] = generate_sample(cfg, seed + index);
      const std::string image_rel = "images/" + id + ".pgm";
      const std::string mask_rel = "masks/" + id + ".pgm";
      save_image(img, (out_dir / image_rel).string());
      save_mask(mask, (out_dir / mask_rel).string());
      rows.push_back({id, image_rel, mask_rel, split});
    }
  }
  const fs::path manifest_path = out_dir / "manifest.tsv";
  write_manifest(rows, manifest_path);
  return manifest_path;
}

}  // namespace selfseg
