#pragma once

// Scan data model: manifests, captured/projected image stacks, per-pixel
// phasor fields and frequency sweeps, plus their on-disk layout
// (`manifest.json` + `pat_K{K}_n{n}.png`).

#include <fmt/format.h>

#include <algorithm>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/grid.hpp"
#include "bimodal/image_io.hpp"
#include "json.hpp"

namespace bimodal {

struct ProjectorGeometry {
  int rows = 480;
  int cols = 640;
  friend bool operator==(const ProjectorGeometry&, const ProjectorGeometry&) = default;
};

enum class Normalization { raw, mtf_normalized };

inline std::string to_string(Normalization n) {
  return n == Normalization::raw ? "raw" : "mtf_normalized";
}

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "raw") return Normalization::raw;
  if (s == "mtf_normalized") return Normalization::mtf_normalized;
  throw DataError("unknown normalization '" + s + "'");
}

struct ScanManifest {
  ProjectorGeometry geometry;
  int shifts = 8;
  std::vector<int> frequencies;  // ascending; K=0 first when present
  bool includes_zero_frequency = false;
  Normalization normalization = Normalization::raw;

  bool has_frequency(int k) const {
    return std::find(frequencies.begin(), frequencies.end(), k) != frequencies.end();
  }

  std::size_t index_of(int k) const {
    auto it = std::find(frequencies.begin(), frequencies.end(), k);
    if (it == frequencies.end()) throw DataError(fmt::format("frequency K={} not in scan", k));
    return static_cast<std::size_t>(it - frequencies.begin());
  }

  std::vector<int> nonzero_frequencies() const {
    std::vector<int> out;
    std::copy_if(frequencies.begin(), frequencies.end(), std::back_inserter(out), [](int k) { return k > 0; });
    return out;
  }

  friend bool operator==(const ScanManifest&, const ScanManifest&) = default;
};

// Throws DataError describing the first violated manifest invariant.
inline void validate(const ScanManifest& m) {
  if (m.geometry.rows < 8) throw DataError("projector rows must be >= 8");
  if (m.geometry.cols < 1) throw DataError("projector cols must be >= 1");
  if (m.shifts < 3) throw DataError("shifts must be ≥ 3");
  if (m.frequencies.empty()) throw DataError("manifest lists no frequencies");
  std::set<int> seen;
  for (int k : m.frequencies) {
    if (k < 0) throw DataError(fmt::format("negative frequency K={}", k));
    if (!seen.insert(k).second) throw DataError(fmt::format("duplicate frequency K={}", k));
    if (static_cast<long>(k) * m.shifts > m.geometry.rows) {
      throw DataError(fmt::format("frequency K={} has wavelength {:.3g} px, shorter than N={} shifts", k,
                                  static_cast<double>(m.geometry.rows) / k, m.shifts));
    }
  }
  if (!std::is_sorted(m.frequencies.begin(), m.frequencies.end())) {
    throw DataError("frequencies must be listed in ascending order");
  }
  if (m.includes_zero_frequency != (m.frequencies.front() == 0)) {
    throw DataError("includes_zero_frequency disagrees with the frequency list");
  }
}

struct ImageStack {
  ScanManifest manifest;
  int rows = 0;  // image (camera or projector) dimensions
  int cols = 0;
  std::vector<std::vector<Grid<double>>> images;  // [frequency index][shift]

  const Grid<double>& image(std::size_t k_index, int n) const { return images.at(k_index).at(n); }
  Grid<double>& image(std::size_t k_index, int n) { return images.at(k_index).at(n); }

  std::size_t image_count() const {
    std::size_t total = 0;
    for (const auto& f : images) total += f.size();
    return total;
  }
};

inline ImageStack make_empty_stack(const ScanManifest& manifest, int rows, int cols) {
  ImageStack stack{manifest, rows, cols, {}};
  stack.images.assign(manifest.frequencies.size(),
                      std::vector<Grid<double>>(static_cast<std::size_t>(manifest.shifts), Grid<double>(rows, cols)));
  return stack;
}

inline void check_consistent(const ImageStack& s) {
  validate(s.manifest);
  if (s.rows <= 0 || s.cols <= 0) throw DataError("stack has empty image dimensions");
  if (s.images.size() != s.manifest.frequencies.size()) throw DataError("stack frequency count mismatch");
  for (const auto& per_k : s.images) {
    if (per_k.size() != static_cast<std::size_t>(s.manifest.shifts)) throw DataError("stack shift count mismatch");
    for (const auto& img : per_k) {
      if (img.rows() != s.rows || img.cols() != s.cols) throw DataError("stack image dimensions mismatch");
    }
  }
}

struct PixelPhasor {
  double mean = 0.0;                   // A: average intensity over the shifts
  std::complex<double> modulation{};   // B_real + j B_imag
  int K = 0;

  double magnitude() const { return std::abs(modulation); }
};

struct PhasorField {
  ScanManifest manifest;
  int rows = 0;
  int cols = 0;
  std::vector<Grid<double>> mean;                       // per frequency index
  std::vector<Grid<std::complex<double>>> modulation;   // per frequency index

  PixelPhasor at(std::size_t k_index, int r, int c) const {
    return {mean.at(k_index)(r, c), modulation.at(k_index)(r, c), manifest.frequencies.at(k_index)};
  }
};

// Per-pixel |AB|(K) over the nonzero frequencies plus the K=0 magnitude.
struct FrequencySweep {
  ScanManifest manifest;
  int rows = 0;
  int cols = 0;
  std::vector<int> frequencies;             // nonzero K, aligned with magnitudes
  std::vector<Grid<double>> magnitudes;
  Grid<double> ab0;

  std::vector<double> at(int r, int c) const {
    std::vector<double> out(magnitudes.size());
    for (std::size_t i = 0; i < magnitudes.size(); ++i) out[i] = magnitudes[i](r, c);
    return out;
  }
};

inline std::string pattern_filename(int k, int n) { return fmt::format("pat_K{}_n{}.png", k, n); }

inline nlohmann::json manifest_to_json(const ScanManifest& m, int rows, int cols) {
  return {
      {"format", "bimodal-scan"},
      {"version", 1},
      {"projector", {{"rows", m.geometry.rows}, {"cols", m.geometry.cols}}},
      {"image", {{"rows", rows}, {"cols", cols}}},
      {"shifts", m.shifts},
      {"frequencies", m.frequencies},
      {"includes_zero_frequency", m.includes_zero_frequency},
      {"normalization", to_string(m.normalization)},
  };
}

struct ManifestFile {
  ScanManifest manifest;
  int rows = 0;
  int cols = 0;
};

inline ManifestFile manifest_from_json(const nlohmann::json& j) {
  try {
    ManifestFile f;
    f.manifest.geometry.rows = j.at("projector").at("rows").get<int>();
    f.manifest.geometry.cols = j.at("projector").at("cols").get<int>();
    f.rows = j.at("image").at("rows").get<int>();
    f.cols = j.at("image").at("cols").get<int>();
    f.manifest.shifts = j.at("shifts").get<int>();
    f.manifest.frequencies = j.at("frequencies").get<std::vector<int>>();
    f.manifest.includes_zero_frequency = j.at("includes_zero_frequency").get<bool>();
    f.manifest.normalization = normalization_from_string(j.value("normalization", std::string("raw")));
    validate(f.manifest);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

// Streams a stack to disk one image at a time so large pattern sets never
// need to be resident all at once.
class StackWriter {
 public:
  StackWriter(std::filesystem::path dir, const ScanManifest& manifest, int rows, int cols)
      : dir_(std::move(dir)), manifest_(manifest) {
    validate(manifest_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create " + dir_.string() + ": " + ec.message());
    write_json(dir_ / "manifest.json", manifest_to_json(manifest_, rows, cols));
  }

  void write(std::size_t k_index, int n, const Grid<double>& image) const {
    io::write_png16(dir_ / pattern_filename(manifest_.frequencies.at(k_index), n), image);
  }

 private:
  std::filesystem::path dir_;
  ScanManifest manifest_;
};

inline void save_stack(const ImageStack& stack, const std::filesystem::path& dir) {
  check_consistent(stack);
  StackWriter writer(dir, stack.manifest, stack.rows, stack.cols);
  for (std::size_t k = 0; k < stack.images.size(); ++k) {
    for (int n = 0; n < stack.manifest.shifts; ++n) writer.write(k, n, stack.image(k, n));
  }
}

inline ImageStack load_stack(const std::filesystem::path& dir) {
  const ManifestFile mf = manifest_from_json(read_json(dir / "manifest.json"));
  ImageStack stack = make_empty_stack(mf.manifest, mf.rows, mf.cols);
  for (std::size_t k = 0; k < mf.manifest.frequencies.size(); ++k) {
    for (int n = 0; n < mf.manifest.shifts; ++n) {
      Grid<double> img = io::read_png(dir / pattern_filename(mf.manifest.frequencies[k], n));
      if (img.rows() != mf.rows || img.cols() != mf.cols) {
        throw DataError(fmt::format("dimension mismatch in {}: {}x{} vs manifest {}x{}",
                                    pattern_filename(mf.manifest.frequencies[k], n), img.rows(), img.cols(),
                                    mf.rows, mf.cols));
      }
      stack.image(k, n) = std::move(img);
    }
  }
  return stack;
}

inline std::string pixel_label(PixelIndex p) { return fmt::format("{}:{}", p.row, p.col); }

inline void export_sweep_csv(const FrequencySweep& sweep, std::span<const PixelIndex> pixels,
                             const std::filesystem::path& path) {
  for (const auto& p : pixels) {
    if (p.row < 0 || p.col < 0 || p.row >= sweep.rows || p.col >= sweep.cols) {
      throw DataError(fmt::format("pixel [{},{}] outside {}x{} sweep", p.row, p.col, sweep.rows, sweep.cols));
    }
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "pixel,K,magnitude\n";
  for (const auto& p : pixels) {
    for (std::size_t i = 0; i < sweep.frequencies.size(); ++i) {
      out << fmt::format("{},{},{:.9g}\n", pixel_label(p), sweep.frequencies[i], sweep.magnitudes[i](p.row, p.col));
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace bimodal
