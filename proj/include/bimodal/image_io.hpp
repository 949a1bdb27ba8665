#pragma once

// Lossless grayscale image files: 16-bit PNG for intensity stacks and
// single-channel PFM for real-valued result images.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/grid.hpp"

namespace bimodal::io {

inline constexpr double kMax16 = 65535.0;

inline std::uint16_t quantize16(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(clamped * kMax16));
}

// Writes intensities in [0,1] as a 16-bit grayscale PNG (values outside are clamped).
inline void write_png16(const std::filesystem::path& path, const Grid<double>& image) {
  if (image.empty()) throw DataError("cannot write empty image " + path.string());
  std::vector<std::uint16_t> buffer(image.size());
  std::transform(image.values().begin(), image.values().end(), buffer.begin(), quantize16);

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.cols());
  png.height = static_cast<png_uint_32>(image.rows());
  png.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string message = png.message;
    png_image_free(&png);
    throw DataError("failed to write " + path.string() + ": " + message);
  }
}

// Reads an 8- or 16-bit grayscale PNG and rescales to [0,1] by its bit depth.
inline Grid<double> read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("missing file " + path.string());
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError("failed to read " + path.string() + ": " + png.message);
  }
  const bool sixteen = (png.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  png.format = sixteen ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  Grid<double> out(static_cast<int>(png.height), static_cast<int>(png.width));

  bool ok = false;
  if (sixteen) {
    std::vector<std::uint16_t> buffer(PNG_IMAGE_SIZE(png) / sizeof(std::uint16_t));
    ok = png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) != 0;
    if (ok) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / kMax16;
    }
  } else {
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    ok = png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) != 0;
    if (ok) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
    }
  }
  if (!ok) {
    std::string message = png.message;
    png_image_free(&png);
    throw DataError("failed to decode " + path.string() + ": " + message);
  }
  return out;
}

static_assert(std::endian::native == std::endian::little, "PFM I/O assumes a little-endian host");

// PFM ("Pf"), little-endian, rows stored bottom-to-top as the format requires.
inline void write_pfm(const std::filesystem::path& path, const Grid<double>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "Pf\n" << image.cols() << ' ' << image.rows() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.cols()));
  for (int r = image.rows() - 1; r >= 0; --r) {
    for (int c = 0; c < image.cols(); ++c) row[c] = static_cast<float>(image(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

inline Grid<double> read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file " + path.string());
  std::string magic;
  int cols = 0;
  int rows = 0;
  double scale = 0.0;
  in >> magic >> cols >> rows >> scale;
  in.get();
  if (magic != "Pf" || cols <= 0 || rows <= 0 || scale >= 0.0) {
    throw DataError("unsupported PFM header in " + path.string());
  }
  Grid<double> image(rows, cols);
  std::vector<float> row(static_cast<std::size_t>(cols));
  for (int r = rows - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw DataError("truncated PFM " + path.string());
    for (int c = 0; c < cols; ++c) image(r, c) = row[c];
  }
  return image;
}

}  // namespace bimodal::io
