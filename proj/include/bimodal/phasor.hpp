#pragma once

// Per-pixel phasor extraction from an N-step phase-shifted stack.

#include <fmt/format.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/parallel.hpp"
#include "bimodal/scanset.hpp"

namespace bimodal::phasor {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Maps any angle into [0, 2*pi).
inline double wrap_phase(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

// cos/sin(2*pi*n/N) for n in [0, N).
struct ShiftBasis {
  std::vector<double> cosines;
  std::vector<double> sines;

  explicit ShiftBasis(int N) : cosines(N), sines(N) {
    for (int n = 0; n < N; ++n) {
      cosines[n] = std::cos(kTwoPi * n / N);
      sines[n] = std::sin(kTwoPi * n / N);
    }
  }
};

inline PixelPhasor extract(std::span<const double> samples, const ShiftBasis& basis, int K = 0) {
  const std::size_t N = samples.size();
  if (N < 3) throw DataError(fmt::format("need at least 3 phase shifts, got {}", N));
  if (basis.cosines.size() != N) throw DataError("shift basis size does not match sample count");
  double sum = 0.0;
  double re = 0.0;
  double im = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    sum += samples[n];
    re += samples[n] * basis.cosines[n];
    im += samples[n] * basis.sines[n];
  }
  return {sum / static_cast<double>(N), {re, im}, K};
}

inline PixelPhasor extract(std::span<const double> samples, int K = 0) {
  if (samples.size() < 3) throw DataError(fmt::format("need at least 3 phase shifts, got {}", samples.size()));
  return extract(samples, ShiftBasis(static_cast<int>(samples.size())), K);
}

// Wrapped phase in [0, 2*pi); rows grow with phase.
inline double phase(const PixelPhasor& p) {
  if (p.magnitude() == 0.0) throw DataError("phase undefined for a zero-magnitude phasor");
  return wrap_phase(std::atan2(p.modulation.imag(), p.modulation.real()));
}

// Absolute phase in [0, 2*pi*K) to projector row fraction.
inline double phase_to_row(double theta_abs, int K) {
  if (K < 1) throw DataError("phase_to_row needs K >= 1");
  return theta_abs / (kTwoPi * K);
}

inline PhasorField extract_field(const ImageStack& stack, unsigned threads = 0) {
  check_consistent(stack);
  const auto& m = stack.manifest;
  PhasorField field;
  field.manifest = m;
  field.rows = stack.rows;
  field.cols = stack.cols;
  field.mean.assign(m.frequencies.size(), Grid<double>(stack.rows, stack.cols));
  field.modulation.assign(m.frequencies.size(), Grid<std::complex<double>>(stack.rows, stack.cols));

  const ShiftBasis basis(m.shifts);
  const std::size_t pixels = static_cast<std::size_t>(stack.rows) * stack.cols;
  parallel_for(
      pixels,
      [&](std::size_t i) {
        std::vector<double> samples(static_cast<std::size_t>(m.shifts));
        for (std::size_t k = 0; k < m.frequencies.size(); ++k) {
          for (int n = 0; n < m.shifts; ++n) samples[n] = stack.image(k, n)[i];
          const PixelPhasor p = extract(samples, basis, m.frequencies[k]);
          field.mean[k][i] = p.mean;
          field.modulation[k][i] = p.modulation;
        }
      },
      threads);
  return field;
}

// 2% of the full-contrast magnitude N/4.
inline double default_shadow_threshold(int shifts) { return 0.02 * shifts / 4.0; }

inline Mask shadow_mask(const PhasorField& field, double threshold) {
  if (!(threshold >= 0.0)) throw UsageError("shadow threshold must be >= 0");
  // Frequencies are ascending with K=0 first, so index 0 is K=0 or else the lowest K.
  const std::size_t ref = 0;
  Mask mask(field.rows, field.cols, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = std::abs(field.modulation[ref][i]) < threshold ? 1 : 0;
  return mask;
}

// Pixels whose modulation exceeds the bound A*N/2 + eps possible for a [0,1] source.
inline std::size_t count_modulation_bound_violations(const PhasorField& field, double eps) {
  std::size_t count = 0;
  const double half_n = field.manifest.shifts / 2.0;
  for (std::size_t k = 0; k < field.modulation.size(); ++k) {
    for (std::size_t i = 0; i < field.modulation[k].size(); ++i) {
      if (std::abs(field.modulation[k][i]) > field.mean[k][i] * half_n + eps) ++count;
    }
  }
  return count;
}

inline FrequencySweep sweep_from(const PhasorField& field) {
  FrequencySweep sweep;
  sweep.manifest = field.manifest;
  sweep.rows = field.rows;
  sweep.cols = field.cols;
  sweep.ab0 = Grid<double>(field.rows, field.cols, 0.0);
  for (std::size_t k = 0; k < field.manifest.frequencies.size(); ++k) {
    const int K = field.manifest.frequencies[k];
    Grid<double> mag(field.rows, field.cols);
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(field.modulation[k][i]);
    if (K == 0) {
      sweep.ab0 = std::move(mag);
    } else {
      sweep.frequencies.push_back(K);
      sweep.magnitudes.push_back(std::move(mag));
    }
  }
  return sweep;
}

// Wrapped phase image at frequency K; zero-magnitude pixels read as 0.
inline Grid<double> wrapped_phase_image(const PhasorField& field, int K) {
  const std::size_t k = field.manifest.index_of(K);
  Grid<double> out(field.rows, field.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto z = field.modulation[k][i];
    out[i] = wrap_phase(std::atan2(z.imag(), z.real()));
  }
  return out;
}

}  // namespace bimodal::phasor
