#pragma once

// Two-path separation of a pixel's frequency response.
//
// Two paths with normalized magnitudes a, b at projector rows y_a, y_b sum
// to a phasor whose magnitude at frequency K is
//
//   |AB|(K)^2 = a^2 + b^2 + 2ab cos(2 pi K (y_a - y_b)).
//
// At K=0 the paths cannot cancel, so |AB0| = a + b; after dividing the
// sweep by |AB0| the search runs along b = 1 - a.
//
// Stage 1 searches (a, |dy|) on a grid against the sweep magnitudes.
// Stage 2 fixes (a, b, |dy|), then searches y_a and the sign of dy against
// the complex phasors, which breaks the cos(.) symmetry.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/grid.hpp"
#include "bimodal/mtf.hpp"
#include "bimodal/parallel.hpp"
#include "bimodal/phasor.hpp"
#include "bimodal/scanset.hpp"

namespace bimodal {

struct SolverOptions {
  double mag_step = 0.002;         // grid step on the dominant magnitude
  double dy_step = 1.0 / 960.0;    // grid step on row fractions (half a pixel on 480 rows)
  double multipath_threshold = 0.05;
  double reject_residual = 0.01;   // stage-1 mean squared error above which stage 2 refuses
  bool refine = true;              // parabolic refinement around the best grid cell
  std::size_t min_frequencies = 4;
  // Paths no further apart than this are reported as one path. Below about
  // a projector row the sweep only constrains magB*dy^2, so noise at high K
  // otherwise turns into a strong secondary hugging the primary. 0 disables.
  double merge_separation = 1.0 / 480.0;

  static SolverOptions for_projector_rows(int rows) {
    SolverOptions o;
    o.dy_step = 1.0 / (2.0 * rows);
    o.merge_separation = 1.0 / rows;
    return o;
  }
};

struct MagnitudeFit {
  double magA = 0.0;
  double magB = 0.0;
  double dy = 0.0;  // |y_a - y_b| in [0, 0.5]
  double residual = 0.0;
  std::size_t mag_index = 0;  // selected grid cell before refinement
  std::size_t dy_index = 0;
};

struct PhaseFit {
  double y_a = 0.0;
  double y_b = 0.0;
  double dy = 0.0;  // signed y_a - y_b in (-0.5, 0.5]
  double residual = 0.0;
};

struct BimodalEstimate {
  double magA = 0.0;  // dominant path, magA >= magB
  double magB = 0.0;
  double dy = 0.0;
  double y_a = 0.0;
  double y_b = 0.0;
  double stage1_residual = 0.0;
  double stage2_residual = 0.0;
  bool is_multipath = false;
};

namespace separator {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double predicted_magnitude(double magA, double magB, double dy, int K) {
  const double sq = magA * magA + magB * magB + 2.0 * magA * magB * std::cos(kTwoPi * K * dy);
  return std::sqrt(std::max(sq, 0.0));
}

inline double wrap_unit(double y) {
  double w = y - std::floor(y);
  if (w >= 1.0) w = 0.0;
  return w;
}

// Vertex offset, in steps, of the parabola through (-1,fm), (0,f0), (1,fp).
inline std::optional<double> parabola_vertex(double fm, double f0, double fp) {
  const double curvature = fm - 2.0 * f0 + fp;
  if (!(curvature > 0.0)) return std::nullopt;
  return std::clamp(0.5 * (fm - fp) / curvature, -0.5, 0.5);
}

// Strict improvement with a tolerance so round-off never overrides the
// tie-breaking order of the scan.
inline bool improves(double candidate, double best) {
  if (!std::isfinite(best)) return candidate < best;
  return candidate < best - (1e-12 * best + 1e-30);
}

// Per-frequency-set tables shared by every pixel of a field.
class SeparatorPlan {
 public:
  SeparatorPlan(std::vector<int> frequencies, SolverOptions options)
      : frequencies_(std::move(frequencies)), options_(options) {
    if (!(options_.mag_step > 0.0 && options_.mag_step <= 0.5)) throw UsageError("mag_step must lie in (0, 0.5]");
    if (!(options_.dy_step > 0.0 && options_.dy_step <= 0.5)) throw UsageError("dy_step must lie in (0, 0.5]");
    if (!(options_.multipath_threshold >= 0.0)) throw UsageError("multipath threshold must be >= 0");
    for (int k : frequencies_) {
      if (k <= 0) throw UsageError("separator frequencies must be positive");
    }
    if (frequencies_.size() < std::max<std::size_t>(options_.min_frequencies, 1)) {
      throw DataError(fmt::format("separation needs at least {} nonzero frequencies, got {}",
                                  options_.min_frequencies, frequencies_.size()));
    }

    const std::size_t mag_cells = static_cast<std::size_t>(std::floor(0.5 / options_.mag_step + 1e-9)) + 1;
    mags_.resize(mag_cells);
    for (std::size_t i = 0; i < mag_cells; ++i) mags_[i] = 1.0 - i * options_.mag_step;  // descending

    const std::size_t dy_cells = static_cast<std::size_t>(std::floor(0.5 / options_.dy_step + 1e-9)) + 1;
    dys_.resize(dy_cells);
    for (std::size_t j = 0; j < dy_cells; ++j) dys_[j] = j * options_.dy_step;

    const std::size_t nk = frequencies_.size();
    cos_table_.resize(dy_cells * nk);
    for (std::size_t j = 0; j < dy_cells; ++j) {
      for (std::size_t k = 0; k < nk; ++k) cos_table_[j * nk + k] = std::cos(kTwoPi * frequencies_[k] * dys_[j]);
    }

    const std::size_t ya_cells = static_cast<std::size_t>(std::llround(1.0 / options_.dy_step));
    rotor_table_.resize(ya_cells * nk);
    for (std::size_t i = 0; i < ya_cells; ++i) {
      for (std::size_t k = 0; k < nk; ++k) {
        rotor_table_[i * nk + k] = std::polar(1.0, kTwoPi * frequencies_[k] * (i * options_.dy_step));
      }
    }
    ya_cells_ = ya_cells;
  }

  const std::vector<int>& frequencies() const { return frequencies_; }
  const SolverOptions& options() const { return options_; }
  // Grid values of the dominant magnitude, from 1 down to 0.5.
  std::span<const double> magnitude_grid() const { return mags_; }
  std::span<const double> dy_grid() const { return dys_; }

  // Mean squared magnitude error at (magA, 1 - magA, dy).
  double magnitude_objective(std::span<const double> sweep, double magA, double dy) const {
    const double magB = 1.0 - magA;
    double sum = 0.0;
    for (std::size_t k = 0; k < frequencies_.size(); ++k) {
      const double e = sweep[k] - predicted_magnitude(magA, magB, dy, frequencies_[k]);
      sum += e * e;
    }
    return sum / static_cast<double>(frequencies_.size());
  }

  // Mean squared complex error of the two-path model.
  double phase_objective(std::span<const std::complex<double>> phasors, double magA, double magB, double y_a,
                         double y_b) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < frequencies_.size(); ++k) {
      const auto model = magA * std::polar(1.0, kTwoPi * frequencies_[k] * y_a) +
                         magB * std::polar(1.0, kTwoPi * frequencies_[k] * y_b);
      sum += std::norm(phasors[k] - model);
    }
    return sum / static_cast<double>(frequencies_.size());
  }

  MagnitudeFit fit_magnitudes(std::span<const double> sweep) const {
    const std::size_t nk = frequencies_.size();
    if (sweep.size() != nk) throw DataError("sweep length does not match frequency list");
    if (std::all_of(sweep.begin(), sweep.end(), [](double v) { return v == 0.0; })) {
      throw DataError("all-zero sweep");
    }
    for (double v : sweep) {
      if (!std::isfinite(v)) throw DataError("non-finite sweep value");
    }

    const std::size_t nm = mags_.size();
    std::vector<double> square_sum(nm);
    std::vector<double> cross(nm);
    for (std::size_t i = 0; i < nm; ++i) {
      const double a = mags_[i];
      const double b = 1.0 - a;
      square_sum[i] = a * a + b * b;
      cross[i] = 2.0 * a * b;
    }

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    std::size_t best_j = 0;
    std::vector<double> objective(nm);
    // dy ascending, magA descending: the first of equal minima has the
    // smallest dy and then the largest magA.
    for (std::size_t j = 0; j < dys_.size(); ++j) {
      const double* cosines = &cos_table_[j * nk];
      std::fill(objective.begin(), objective.end(), 0.0);
      for (std::size_t k = 0; k < nk; ++k) {
        const double c = cosines[k];
        const double s = sweep[k];
        for (std::size_t i = 0; i < nm; ++i) {
          const double e = s - std::sqrt(std::max(square_sum[i] + cross[i] * c, 0.0));
          objective[i] += e * e;
        }
      }
      for (std::size_t i = 0; i < nm; ++i) {
        if (improves(objective[i], best)) {
          best = objective[i];
          best_i = i;
          best_j = j;
        }
      }
    }

    MagnitudeFit fit;
    fit.mag_index = best_i;
    fit.dy_index = best_j;
    fit.magA = mags_[best_i];
    fit.dy = dys_[best_j];
    fit.residual = best / static_cast<double>(nk);

    if (options_.refine) {
      double magA = fit.magA;
      double dy = fit.dy;
      if (best_i > 0 && best_i + 1 < nm) {
        // mags_ is descending: index i-1 is one step larger.
        const auto off = parabola_vertex(magnitude_objective(sweep, mags_[best_i + 1], fit.dy), fit.residual,
                                         magnitude_objective(sweep, mags_[best_i - 1], fit.dy));
        if (off) magA = std::clamp(fit.magA + *off * options_.mag_step, 0.5, 1.0);
      }
      if (best_j > 0 && best_j + 1 < dys_.size()) {
        const auto off = parabola_vertex(magnitude_objective(sweep, fit.magA, dys_[best_j - 1]), fit.residual,
                                         magnitude_objective(sweep, fit.magA, dys_[best_j + 1]));
        if (off) dy = std::clamp(fit.dy + *off * options_.dy_step, 0.0, 0.5);
      }
      const double refined = magnitude_objective(sweep, magA, dy);
      if (refined < fit.residual) {
        fit.magA = magA;
        fit.dy = dy;
        fit.residual = refined;
      }
      // magA and dy trade off along a tilted valley; a few joint Newton
      // steps on a quarter-cell stencil follow it where the axis fits cannot.
      if (best_i > 0 && best_i + 1 < nm && best_j > 0 && best_j + 1 < dys_.size()) {
        const double hm = 0.25 * options_.mag_step;
        const double hd = 0.25 * options_.dy_step;
        for (int iter = 0; iter < 6; ++iter) {
          const auto f = [&](int di, int dj) {
            return magnitude_objective(sweep, std::clamp(fit.magA + di * hm, 0.5, 1.0),
                                       std::clamp(fit.dy + dj * hd, 0.0, 0.5));
          };
          const double f0 = fit.residual;
          const double gx = 0.5 * (f(1, 0) - f(-1, 0));
          const double gy = 0.5 * (f(0, 1) - f(0, -1));
          const double hxx = f(1, 0) - 2.0 * f0 + f(-1, 0);
          const double hyy = f(0, 1) - 2.0 * f0 + f(0, -1);
          const double hxy = 0.25 * (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1));
          const double det = hxx * hyy - hxy * hxy;
          if (!(hxx > 0.0 && det > 0.0)) break;
          const double sx = std::clamp(-(hyy * gx - hxy * gy) / det, -4.0, 4.0);
          const double sy = std::clamp(-(hxx * gy - hxy * gx) / det, -4.0, 4.0);
          const double a = std::clamp(fit.magA + sx * hm, 0.5, 1.0);
          const double d = std::clamp(fit.dy + sy * hd, 0.0, 0.5);
          const double joint = magnitude_objective(sweep, a, d);
          if (!(joint < fit.residual)) break;
          fit.magA = a;
          fit.dy = d;
          fit.residual = joint;
        }
      }
    }
    fit.magB = 1.0 - fit.magA;
    return fit;
  }

  PhaseFit fit_phases(std::span<const std::complex<double>> phasors, const MagnitudeFit& stage1) const {
    const std::size_t nk = frequencies_.size();
    if (phasors.size() != nk) throw DataError("phasor count does not match frequency list");
    if (stage1.residual > options_.reject_residual) {
      throw DataError(fmt::format("stage-1 residual {:.3g} above reject threshold {:.3g}", stage1.residual,
                                  options_.reject_residual));
    }
    const double magA = stage1.magA;
    const double magB = stage1.magB;

    // For sign s the model is rotor(y_a) * (magA + magB e^{-j 2 pi K s dy}).
    std::vector<std::complex<double>> combined[2];
    const double signs[2] = {1.0, -1.0};
    for (int s = 0; s < 2; ++s) {
      combined[s].resize(nk);
      for (std::size_t k = 0; k < nk; ++k) {
        combined[s][k] = magA + magB * std::polar(1.0, -kTwoPi * frequencies_[k] * signs[s] * stage1.dy);
      }
    }
    const int sign_count = (stage1.dy == 0.0 || magB == 0.0 || stage1.dy == 0.5) ? 1 : 2;

    double energy = 0.0;
    for (const auto& p : phasors) energy += std::norm(p);

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    int best_s = 0;
    for (int s = 0; s < sign_count; ++s) {
      double model_energy = 0.0;
      for (const auto& c : combined[s]) model_energy += std::norm(c);
      for (std::size_t i = 0; i < ya_cells_; ++i) {
        const std::complex<double>* rotors = &rotor_table_[i * nk];
        double correlation = 0.0;
        for (std::size_t k = 0; k < nk; ++k) correlation += std::real(std::conj(phasors[k]) * rotors[k] * combined[s][k]);
        const double objective = energy + model_energy - 2.0 * correlation;
        if (improves(objective, best)) {
          best = objective;
          best_i = i;
          best_s = s;
        }
      }
    }

    const double signed_dy = signs[best_s] * stage1.dy;
    const auto evaluate = [&](double y_a) {
      return phase_objective(phasors, magA, magB, y_a, wrap_unit(y_a - signed_dy));
    };
    double y_a = best_i * options_.dy_step;
    double residual = evaluate(y_a);
    if (options_.refine) {
      const auto off = parabola_vertex(evaluate(y_a - options_.dy_step), residual, evaluate(y_a + options_.dy_step));
      if (off) {
        const double candidate = wrap_unit(y_a + *off * options_.dy_step);
        const double refined = evaluate(candidate);
        if (refined < residual) {
          y_a = candidate;
          residual = refined;
        }
      }
    }

    PhaseFit fit;
    fit.y_a = wrap_unit(y_a);
    fit.dy = signed_dy <= -0.5 ? 0.5 : signed_dy;
    fit.y_b = wrap_unit(fit.y_a - fit.dy);
    fit.residual = residual;
    return fit;
  }

  BimodalEstimate separate_pixel(std::span<const double> sweep, std::span<const std::complex<double>> phasors) const {
    MagnitudeFit m = fit_magnitudes(sweep);
    if (m.magB > 0.0 && m.dy <= options_.merge_separation + 1e-12) {
      m.magA = 1.0;
      m.magB = 0.0;
      m.dy = 0.0;
      m.residual = magnitude_objective(sweep, 1.0, 0.0);
    }
    const PhaseFit p = fit_phases(phasors, m);
    BimodalEstimate e;
    e.magA = m.magA;
    e.magB = m.magB;
    e.dy = p.dy;
    e.y_a = p.y_a;
    e.y_b = p.y_b;
    e.stage1_residual = m.residual;
    e.stage2_residual = p.residual;
    // dy = 0 leaves the split between the paths unidentifiable.
    e.is_multipath = m.magB >= options_.multipath_threshold && m.dy > 0.0;
    return e;
  }

 private:
  std::vector<int> frequencies_;
  SolverOptions options_;
  std::vector<double> mags_;
  std::vector<double> dys_;
  std::vector<double> cos_table_;                   // [dy cell][K]
  std::vector<std::complex<double>> rotor_table_;   // [y_a cell][K]
  std::size_t ya_cells_ = 0;
};

inline MagnitudeFit fit_magnitudes(std::span<const double> sweep, const std::vector<int>& frequencies,
                                   const SolverOptions& options = {}) {
  return SeparatorPlan(frequencies, options).fit_magnitudes(sweep);
}

inline PhaseFit fit_phases(std::span<const std::complex<double>> phasors, const std::vector<int>& frequencies,
                           const MagnitudeFit& stage1, const SolverOptions& options = {}) {
  return SeparatorPlan(frequencies, options).fit_phases(phasors, stage1);
}

inline BimodalEstimate separate_pixel(std::span<const double> sweep, std::span<const std::complex<double>> phasors,
                                      const std::vector<int>& frequencies, const SolverOptions& options = {}) {
  return SeparatorPlan(frequencies, options).separate_pixel(sweep, phasors);
}

struct SeparationResult {
  Grid<std::optional<BimodalEstimate>> estimates;
  // Phases are projector row fractions in [0,1); NaN where no estimate exists.
  Grid<double> primary_phase;
  Grid<double> secondary_phase;
  Grid<double> primary_magnitude;
  Grid<double> secondary_magnitude;
  std::size_t separated = 0;
  std::size_t masked = 0;
  std::size_t failed = 0;
};

inline constexpr double kMinAb0 = 1e-9;

// Independent per-pixel separation over every unmasked pixel.
inline SeparationResult separate_field(const PhasorField& field, const MtfEnvelope& env, const Mask& mask,
                                       const SolverOptions& options = {}, unsigned threads = 0) {
  mtf::check_frequencies(field.manifest, env);
  if (!field.manifest.includes_zero_frequency) throw DataError("separation needs a K=0 scan");
  if (mask.rows() != field.rows || mask.cols() != field.cols) throw DataError("mask size does not match scan");

  const SeparatorPlan plan(field.manifest.nonzero_frequencies(), options);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SeparationResult out;
  out.estimates = Grid<std::optional<BimodalEstimate>>(field.rows, field.cols);
  out.primary_phase = Grid<double>(field.rows, field.cols, nan);
  out.secondary_phase = Grid<double>(field.rows, field.cols, nan);
  out.primary_magnitude = Grid<double>(field.rows, field.cols, nan);
  out.secondary_magnitude = Grid<double>(field.rows, field.cols, nan);

  const std::size_t nk = plan.frequencies().size();
  parallel_for(
      mask.size(),
      [&](std::size_t i) {
        if (mask[i]) return;
        const int r = static_cast<int>(i / field.cols);
        const int c = static_cast<int>(i % field.cols);
        const double ab0 = std::abs(field.modulation[0][i]);
        // Constant samples leave round-off (~1e-17) in the modulation; that is no signal.
        if (!(ab0 > kMinAb0)) return;
        std::vector<std::complex<double>> phasors(nk);
        std::vector<double> sweep(nk);
        for (std::size_t k = 0; k < nk; ++k) {
          phasors[k] = field.modulation[k + 1][i] / (env.gain[k + 1] * ab0);
          sweep[k] = std::abs(phasors[k]);
        }
        try {
          out.estimates(r, c) = plan.separate_pixel(sweep, phasors);
        } catch (const DataError&) {
          // Pixel skipped; counted below.
        }
      },
      threads);

  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      ++out.masked;
      continue;
    }
    const auto& e = out.estimates[i];
    if (!e) {
      ++out.failed;
      continue;
    }
    ++out.separated;
    out.primary_phase[i] = e->y_a;
    out.secondary_phase[i] = e->y_b;
    out.primary_magnitude[i] = e->magA;
    out.secondary_magnitude[i] = e->magB;
  }
  return out;
}

}  // namespace separator
}  // namespace bimodal
