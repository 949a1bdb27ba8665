#pragma once

// System modulation-transfer envelope, measured from a flat single-path
// target, and normalization of sweeps and phasors by it. Gains are
// relative to the zero-frequency magnitude, which the optics never
// attenuate.

#include <fmt/format.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/scanset.hpp"

namespace bimodal {

struct MtfEnvelope {
  std::vector<int> frequencies;  // same list as the calibration manifest
  std::vector<double> gain;      // aligned with frequencies
  double reference_ab0 = 1.0;
  std::size_t pixels_used = 0;

  static MtfEnvelope identity(std::vector<int> ks) {
    MtfEnvelope e;
    e.gain.assign(ks.size(), 1.0);
    e.frequencies = std::move(ks);
    return e;
  }

  double gain_at(int K) const {
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
      if (frequencies[i] == K) return gain[i];
    }
    throw DataError(fmt::format("envelope has no gain for K={}", K));
  }
};

namespace mtf {

inline MtfEnvelope estimate_envelope(const PhasorField& flat, const Mask& mask) {
  const auto& m = flat.manifest;
  if (!m.includes_zero_frequency) throw DataError("envelope calibration needs a K=0 scan");
  if (mask.rows() != flat.rows || mask.cols() != flat.cols) throw DataError("mask size does not match scan");

  std::vector<double> sums(m.frequencies.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) continue;
    ++used;
    for (std::size_t k = 0; k < sums.size(); ++k) sums[k] += std::abs(flat.modulation[k][i]);
  }
  if (used == 0) throw DataError("envelope calibration: every pixel is masked");

  MtfEnvelope env;
  env.frequencies = m.frequencies;
  env.pixels_used = used;
  env.reference_ab0 = sums[0] / static_cast<double>(used);
  if (!(env.reference_ab0 > 0.0)) throw DataError("envelope calibration: zero mean |AB0|");
  env.gain.resize(sums.size());
  for (std::size_t k = 0; k < sums.size(); ++k) {
    const double mean = sums[k] / static_cast<double>(used);
    if (!(mean > 0.0)) throw DataError(fmt::format("envelope calibration: zero mean |AB| at K={}", m.frequencies[k]));
    env.gain[k] = mean / env.reference_ab0;
  }
  return env;
}

inline void check_frequencies(const ScanManifest& m, const MtfEnvelope& env) {
  if (env.frequencies != m.frequencies) {
    throw DataError("envelope frequencies do not match the scan's frequency list");
  }
}

// Divides each |AB|(K) by gain(K), then rescales every pixel so |AB0| = 1.
// Masked pixels with |AB0| = 0 are left at zero; unmasked ones are an error.
inline FrequencySweep normalize(const FrequencySweep& sweep, const MtfEnvelope& env, const Mask* mask = nullptr) {
  check_frequencies(sweep.manifest, env);
  if (!sweep.manifest.includes_zero_frequency) throw DataError("normalization needs K=0 data");
  FrequencySweep out = sweep;
  out.manifest.normalization = Normalization::mtf_normalized;
  for (std::size_t i = 0; i < sweep.ab0.size(); ++i) {
    const double ab0 = sweep.ab0[i];
    if (!(ab0 > 0.0)) {
      if (mask == nullptr || !(*mask)[i]) {
        throw DataError(fmt::format("|AB0| = 0 at unmasked pixel [{},{}]", i / sweep.cols, i % sweep.cols));
      }
      out.ab0[i] = 0.0;
      for (auto& mag : out.magnitudes) mag[i] = 0.0;
      continue;
    }
    out.ab0[i] = 1.0;
    for (std::size_t k = 0; k < sweep.frequencies.size(); ++k) {
      out.magnitudes[k][i] = sweep.magnitudes[k][i] / (env.gain_at(sweep.frequencies[k]) * ab0);
    }
  }
  return out;
}

// Complex phasors at the nonzero frequencies of one pixel, on the same
// scale as normalize(): MTF divided out and |AB0| = 1.
inline std::vector<std::complex<double>> normalized_phasors(const PhasorField& field, const MtfEnvelope& env, int r,
                                                            int c) {
  check_frequencies(field.manifest, env);
  if (!field.manifest.includes_zero_frequency) throw DataError("normalization needs K=0 data");
  const double ab0 = std::abs(field.modulation[0](r, c));
  if (!(ab0 > 0.0)) throw DataError(fmt::format("|AB0| = 0 at pixel [{},{}]", r, c));
  std::vector<std::complex<double>> out;
  out.reserve(field.manifest.frequencies.size() - 1);
  for (std::size_t k = 1; k < field.manifest.frequencies.size(); ++k) {
    out.push_back(field.modulation[k](r, c) / (env.gain[k] * ab0));
  }
  return out;
}

// envelope.csv (`K,gain`) plus envelope.json metadata in `dir`.
inline void save_envelope(const MtfEnvelope& env, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream csv(dir / "envelope.csv");
  if (!csv) throw DataError("cannot write " + (dir / "envelope.csv").string());
  csv << "K,gain\n";
  for (std::size_t k = 0; k < env.frequencies.size(); ++k) csv << fmt::format("{},{:.17g}\n", env.frequencies[k], env.gain[k]);
  write_json(dir / "envelope.json", {{"format", "bimodal-envelope"},
                                     {"version", 1},
                                     {"frequencies", env.frequencies},
                                     {"reference_ab0", env.reference_ab0},
                                     {"pixels_used", env.pixels_used}});
}

// Accepts the directory written by save_envelope or the CSV path itself.
inline MtfEnvelope load_envelope(const std::filesystem::path& path) {
  const std::filesystem::path dir = std::filesystem::is_directory(path) ? path : path.parent_path();
  const std::filesystem::path csv_path = std::filesystem::is_directory(path) ? path / "envelope.csv" : path;
  std::ifstream csv(csv_path);
  if (!csv) throw DataError("missing file " + csv_path.string());
  MtfEnvelope env;
  std::string line;
  std::getline(csv, line);
  if (line.rfind("K,gain", 0) != 0) throw DataError("envelope CSV must start with header K,gain");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed envelope line: " + line);
    try {
      env.frequencies.push_back(std::stoi(line.substr(0, comma)));
      env.gain.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError("malformed envelope line: " + line);
    }
    if (!(env.gain.back() > 0.0)) throw DataError("envelope gains must be positive");
  }
  if (env.frequencies.empty()) throw DataError("envelope CSV has no rows");
  const auto meta_path = dir / "envelope.json";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = read_json(meta_path);
    env.reference_ab0 = meta.value("reference_ab0", 1.0);
    env.pixels_used = meta.value("pixels_used", std::size_t{0});
  }
  return env;
}

}  // namespace mtf
}  // namespace bimodal
