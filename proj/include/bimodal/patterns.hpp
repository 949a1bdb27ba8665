#pragma once

// Phase-shifted sinusoidal projector patterns across a sweep of spatial
// frequencies, including the spatially constant K=0 pattern.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/scanset.hpp"

namespace bimodal {

struct SweepPlan {
  ProjectorGeometry geometry;
  int shifts = 8;
  std::vector<int> frequencies;  // positive K values
  bool include_zero = true;
  bool strict_quantization = true;
};

namespace patterns {

// 1/2 + 1/2 cos(2*pi*(n/N - K*y)), y the projector row fraction.
inline double pattern_value(int K, int n, int N, double y_frac) {
  const double arg = static_cast<double>(n) / N - K * y_frac;
  return 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * arg);
}

// Wavelength rows/K is a whole multiple of N projector pixels.
inline bool is_quantized(int rows, int K, int N) {
  return K > 0 && rows % K == 0 && (rows / K) % N == 0;
}

inline ScanManifest manifest_for(const SweepPlan& plan) {
  if (plan.shifts < 3) throw UsageError("shifts must be ≥ 3");
  std::vector<int> ks = plan.frequencies;
  std::sort(ks.begin(), ks.end());
  if (std::adjacent_find(ks.begin(), ks.end()) != ks.end()) throw UsageError("duplicate frequency in sweep plan");
  if (!ks.empty() && ks.front() <= 0) throw UsageError("sweep frequencies must be positive; use include_zero for K=0");
  if (plan.strict_quantization) {
    for (int k : ks) {
      if (!is_quantized(plan.geometry.rows, k, plan.shifts)) {
        throw UsageError(fmt::format("K={} gives a wavelength that is not a multiple of N={} pixels on {} rows",
                                     k, plan.shifts, plan.geometry.rows));
      }
    }
  }
  if (plan.include_zero) ks.insert(ks.begin(), 0);

  ScanManifest m;
  m.geometry = plan.geometry;
  m.shifts = plan.shifts;
  m.frequencies = std::move(ks);
  m.includes_zero_frequency = plan.include_zero;
  try {
    validate(m);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return m;
}

// One projector frame; constant across columns.
inline Grid<double> pattern_image(const ProjectorGeometry& g, int K, int n, int N) {
  Grid<double> img(g.rows, g.cols);
  for (int r = 0; r < g.rows; ++r) {
    const double v = pattern_value(K, n, N, static_cast<double>(r) / g.rows);
    for (int c = 0; c < g.cols; ++c) img(r, c) = v;
  }
  return img;
}

inline ImageStack generate_stack(const SweepPlan& plan) {
  const ScanManifest m = manifest_for(plan);
  ImageStack stack = make_empty_stack(m, plan.geometry.rows, plan.geometry.cols);
  for (std::size_t k = 0; k < m.frequencies.size(); ++k) {
    for (int n = 0; n < m.shifts; ++n) stack.image(k, n) = pattern_image(plan.geometry, m.frequencies[k], n, m.shifts);
  }
  return stack;
}

// Same content as save_stack(generate_stack(plan), dir) without holding the whole stack.
inline ScanManifest write_pattern_stack(const SweepPlan& plan, const std::filesystem::path& dir) {
  const ScanManifest m = manifest_for(plan);
  StackWriter writer(dir, m, plan.geometry.rows, plan.geometry.cols);
  for (std::size_t k = 0; k < m.frequencies.size(); ++k) {
    for (int n = 0; n < m.shifts; ++n) writer.write(k, n, pattern_image(plan.geometry, m.frequencies[k], n, m.shifts));
  }
  return m;
}

// K=0 plus every K whose wavelength is a whole multiple of N rows.
inline SweepPlan default_sweep(ProjectorGeometry geometry, int N) {
  if (N < 3) throw UsageError("shifts must be ≥ 3");
  if (geometry.rows % N != 0) {
    throw UsageError(fmt::format("projector rows {} not divisible by N={}", geometry.rows, N));
  }
  SweepPlan plan;
  plan.geometry = geometry;
  plan.shifts = N;
  for (int k = 1; k <= geometry.rows / N; ++k) {
    if (is_quantized(geometry.rows, k, N)) plan.frequencies.push_back(k);
  }
  plan.include_zero = true;
  return plan;
}

inline SweepPlan default_sweep(int rows, int N) { return default_sweep(ProjectorGeometry{rows, 640}, N); }

}  // namespace patterns
}  // namespace bimodal
