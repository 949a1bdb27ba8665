#pragma once

// Temporal multi-frequency phase unwrapping: each absolute low-frequency
// phase picks the fringe order of the next wrapped higher-frequency phase.

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/grid.hpp"
#include "bimodal/phasor.hpp"
#include "bimodal/scanset.hpp"

namespace bimodal {

struct PhaseImage {
  int K = 1;
  Grid<double> phase;  // radians
  bool wrapped = true;
};

namespace unwrap {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

inline double unwrap_value(double low_abs, int k_low, double high_wrapped, int k_high) {
  const double ratio = static_cast<double>(k_high) / k_low;
  const double order = std::round(ratio * low_abs / kTwoPi - high_wrapped / kTwoPi);
  const double range = kTwoPi * k_high;
  double abs = kTwoPi * order + high_wrapped;
  // Fold orders that fall off either end of the projected range back in.
  abs = std::fmod(abs, range);
  if (abs < 0.0) abs += range;
  if (abs >= range) abs = 0.0;
  return abs;
}

inline PhaseImage unwrap_pair(const PhaseImage& low, const PhaseImage& high,
                              const WarningSink& warn = default_warning) {
  if (low.K < 1 || high.K < 1) throw DataError("unwrap frequencies must be >= 1");
  if (high.K < low.K) throw DataError(fmt::format("unwrap ratio {}/{} below 1", high.K, low.K));
  if (low.wrapped && low.K != 1) throw DataError("low-frequency phase must already be absolute");
  if (low.phase.rows() != high.phase.rows() || low.phase.cols() != high.phase.cols()) {
    throw DataError("phase image sizes differ");
  }
  if (high.K % low.K != 0 && warn) {
    warn(fmt::format("non-integer unwrap ratio {}/{}", high.K, low.K));
  }
  PhaseImage out{high.K, Grid<double>(high.phase.rows(), high.phase.cols()), false};
  for (std::size_t i = 0; i < out.phase.size(); ++i) {
    out.phase[i] = unwrap_value(low.phase[i], low.K, high.phase[i], high.K);
  }
  return out;
}

// Left fold of unwrap_pair over ascending frequencies starting at K=1.
inline PhaseImage unwrap_chain(std::span<const PhaseImage> images, const WarningSink& warn = default_warning) {
  if (images.empty()) throw DataError("unwrap chain is empty");
  if (images.front().K != 1) throw DataError("unwrap chain must start at K=1");
  PhaseImage current = images.front();
  current.wrapped = false;
  for (std::size_t i = 1; i < images.size(); ++i) current = unwrap_pair(current, images[i], warn);
  return current;
}

// Wrapped phase images for the chain frequencies, read from a phasor field.
inline std::vector<PhaseImage> chain_from_field(const PhasorField& field, std::span<const int> chain) {
  std::vector<PhaseImage> images;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i > 0 && chain[i] <= chain[i - 1]) throw DataError("unwrap chain frequencies must ascend");
    images.push_back({chain[i], phasor::wrapped_phase_image(field, chain[i]), true});
  }
  return images;
}

// Absolute phase to projector row fraction in [0,1).
inline Grid<double> to_row_fraction(const PhaseImage& img) {
  if (img.wrapped && img.K != 1) throw DataError("row fraction needs an absolute phase image");
  Grid<double> out(img.phase.rows(), img.phase.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phasor::phase_to_row(img.phase[i], img.K);
  return out;
}

}  // namespace unwrap
}  // namespace bimodal
