#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfseg/curriculum.hpp"
#include "selfseg/image_io.hpp"
#include "selfseg/sample.hpp"

namespace selfseg {

// One dataset sample: id, image path, mask path or "-", split tag.
// Paths are relative to the manifest's directory.
struct ManifestRow {
  std::string id;
  std::string image_path;
  std::string mask_path;  // "-" when absent
  std::string split;      // train | val | test | pool
};

struct Manifest {
  std::filesystem::path dir;
  std::vector<ManifestRow> rows;
};

inline void write_manifest(const std::vector<ManifestRow>& rows,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  for (const auto& r : rows)
    out << r.id << '\t' << r.image_path << '\t' << r.mask_path << '\t' << r.split << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

// Parses and validates a manifest: unique ids, known splits, masks present
// for train/val/test, and all referenced files existing on disk.
inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": no such file or cannot be opened");
  Manifest manifest;
  manifest.dir = path.parent_path();

  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow row;
    if (!std::getline(ss, row.id, '\t') || !std::getline(ss, row.image_path, '\t') ||
        !std::getline(ss, row.mask_path, '\t') || !std::getline(ss, row.split))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 4 tab-separated fields");
    if (!ids.insert(row.id).second)
      throw std::runtime_error(path.string() + ": duplicate id " + row.id);
    if (row.split != "train" && row.split != "val" && row.split != "test" &&
        row.split != "pool")
      throw std::runtime_error(path.string() + ": unknown split '" + row.split + "' for " +
                               row.id);
    if (row.mask_path == "-" && row.split != "pool")
      throw std::runtime_error(path.string() + ": " + row.id + ": split '" + row.split +
                               "' requires a mask path");
    if (!std::filesystem::exists(manifest.dir / row.image_path))
      throw std::runtime_error(path.string() + ": missing image file for " + row.id);
    if (row.mask_path != "-" && !std::filesystem::exists(manifest.dir / row.mask_path))
      throw std::runtime_error(path.string() + ": missing mask file for " + row.id);
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

// Loads every referenced file into a SamplePool. Pool-split masks are only
// read when with_pool_truth is set (the fully supervised baseline); the
// self-taught loop must not see them.
inline SamplePool load_pool(const Manifest& manifest, bool with_pool_truth = false) {
  SamplePool pool;
  for (const auto& row : manifest.rows) {
    const std::string image_path = (manifest.dir / row.image_path).string();
    if (row.split == "pool") {
      if (with_pool_truth) {
        if (row.mask_path == "-")
          throw std::runtime_error("pool sample " + row.id + " has no ground-truth mask");
        pool.pool_truth.emplace(row.id, load_mask((manifest.dir / row.mask_path).string()));
      }
      pool.unlabeled.push_back({row.id, load_image(image_path)});
      continue;
    }
    LabeledSample sample{row.id, load_image(image_path),
                         load_mask((manifest.dir / row.mask_path).string())};
    require_same_shape(sample.image, sample.mask);
    if (row.split == "train")
      pool.labeled.push_back(std::move(sample));
    else if (row.split == "val")
      pool.validation.push_back(std::move(sample));
    else
      pool.test.push_back(std::move(sample));
  }
  pool.validate();
  return pool;
}

}  // namespace selfseg
