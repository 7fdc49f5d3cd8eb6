#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfseg/image.hpp"

namespace selfseg {

namespace detail {

// Next header token of a PNM file; '#' starts a comment running to end of line.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed PGM header (" + std::string(what) + ")");
  }
}

}  // namespace detail

// Reads an 8-bit grayscale image (binary PGM, P5/maxval 255) into [0, 1].
// Missing files, non-grayscale PNM variants and unsupported formats are
// reported as distinct errors.
inline GrayImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": no such file or cannot be opened");

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in) throw std::runtime_error(path + ": unsupported format (empty or truncated file)");

  if (m0 == 'P' && (m1 == '3' || m1 == '6'))
    throw std::runtime_error(path + ": non-grayscale input (color PPM)");
  if (static_cast<unsigned char>(m0) == 0x89 && m1 == 'P')
    throw std::runtime_error(path + ": unsupported format (PNG support not built; use PGM)");
  if (m0 != 'P' || m1 != '5')
    throw std::runtime_error(path + ": unsupported format (expected binary PGM 'P5')");

  const int width = detail::pnm_int(in, path, "width");
  const int height = detail::pnm_int(in, path, "height");
  const int maxval = detail::pnm_int(in, path, "maxval");
  if (width < 1 || height < 1)
    throw std::runtime_error(path + ": malformed PGM header (non-positive dimensions)");
  if (maxval != 255)
    throw std::runtime_error(path + ": unsupported format (PGM maxval must be 255)");

  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw std::runtime_error(path + ": truncated PGM pixel data");

  GrayImage img(height, width);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

// Writes intensities in [0, 1] as binary PGM; values are clamped and rounded.
inline void save_image(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::min(std::max(img.data[i], 0.0), 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

// Label 1 -> byte 255, label 0 -> byte 0.
inline void save_mask(const BinaryMask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

// Loads a mask image and thresholds at 0.5.
inline BinaryMask load_mask(const std::string& path) {
  const GrayImage img = load_image(path);
  BinaryMask mask(img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) mask.data[i] = img.data[i] >= 0.5 ? 1 : 0;
  return mask;
}

}  // namespace selfseg
