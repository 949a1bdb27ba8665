#pragma once

// Synthetic captures under the two-path pixel model: each camera pixel sees
// a foreground surface over a fraction alpha of its footprint and a
// background surface over the rest, so its samples are the alpha-weighted
// mixture of two projector rows. Optical blur enters as a per-frequency
// attenuation of the projected sinusoid.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/parallel.hpp"
#include "bimodal/patterns.hpp"
#include "bimodal/scanset.hpp"
#include "json.hpp"

namespace bimodal {

struct ImageSize {
  int rows = 0;
  int cols = 0;
};

// Gain of the projected sinusoid's AC term as a function of K.
struct EnvelopeModel {
  enum class Kind { identity, gaussian, table };

  Kind kind = Kind::identity;
  double k0 = 0.0;              // gaussian: exp(-(K/k0)^2)
  std::map<int, double> gains;  // table: explicit per-K gains, K=0 implied 1

  static EnvelopeModel identity() { return {}; }

  static EnvelopeModel gaussian(double k0) {
    if (!(k0 > 0.0)) throw UsageError("gaussian envelope width must be positive");
    return {Kind::gaussian, k0, {}};
  }

  // Gaussian falling to `gain` at frequency K.
  static EnvelopeModel gaussian_through(int K, double gain) {
    return gaussian(K / std::sqrt(-std::log(gain)));
  }

  // Default optical model: half gain at K=60.
  static EnvelopeModel default_optics() { return gaussian_through(60, 0.5); }

  static EnvelopeModel table(std::map<int, double> g) { return {Kind::table, 0.0, std::move(g)}; }

  double operator()(int K) const {
    switch (kind) {
      case Kind::identity:
        return 1.0;
      case Kind::gaussian:
        return std::exp(-(K / k0) * (K / k0));
      case Kind::table: {
        if (K == 0) return 1.0;
        auto it = gains.find(K);
        if (it == gains.end()) throw DataError(fmt::format("envelope table has no gain for K={}", K));
        return it->second;
      }
    }
    return 1.0;
  }
};

// envelope(0) = 1, gains in (0,1], non-increasing over the given frequencies.
inline void validate_envelope(const EnvelopeModel& env, std::vector<int> ks) {
  std::sort(ks.begin(), ks.end());
  if (std::abs(env(0) - 1.0) > 1e-12) throw UsageError("envelope must equal 1 at K=0");
  double previous = 1.0;
  for (int k : ks) {
    const double g = env(k);
    if (!(g > 0.0 && g <= 1.0)) throw UsageError(fmt::format("envelope gain {} at K={} outside (0,1]", g, k));
    if (g > previous + 1e-12) throw UsageError(fmt::format("envelope increases at K={}", k));
    previous = g;
  }
}

struct ScenePixel {
  double alpha = 1.0;      // footprint fraction on the foreground surface
  double y_fg = 0.0;       // projector row fraction seen on the foreground
  double y_bg = 0.0;       // projector row fraction seen on the background
  double albedo_fg = 0.8;
  double albedo_bg = 0.8;
  double ambient = 0.0;

  double weight_fg() const { return alpha * albedo_fg; }
  double weight_bg() const { return (1.0 - alpha) * albedo_bg; }
  bool is_single_path() const { return weight_fg() == 0.0 || weight_bg() == 0.0; }
  bool foreground_dominant() const { return weight_fg() >= weight_bg(); }
  double dominant_y() const { return foreground_dominant() ? y_fg : y_bg; }
  double secondary_y() const { return foreground_dominant() ? y_bg : y_fg; }
  // Path magnitudes relative to the zero-frequency magnitude.
  double dominant_fraction() const {
    const double total = weight_fg() + weight_bg();
    return total > 0.0 ? std::max(weight_fg(), weight_bg()) / total : 0.0;
  }
};

inline void validate(const ScenePixel& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw UsageError("scene alpha outside [0,1]");
  if (!(p.y_fg >= 0.0 && p.y_fg < 1.0 && p.y_bg >= 0.0 && p.y_bg < 1.0)) {
    throw UsageError("scene row fractions must lie in [0,1)");
  }
  if (p.albedo_fg < 0.0 || p.albedo_bg < 0.0 || p.ambient < 0.0) throw UsageError("negative albedo or ambient");
  if (p.weight_fg() + p.weight_bg() + p.ambient > 1.0 + 1e-12) {
    throw UsageError("scene pixel would clip: alpha*albedo_fg + (1-alpha)*albedo_bg + ambient > 1");
  }
}

struct SceneModel {
  Grid<ScenePixel> pixels;
  double noise_sigma = 0.0;
  EnvelopeModel envelope = EnvelopeModel::default_optics();
};

struct RenderedScan {
  ImageStack stack;
  SceneModel truth;
};

namespace sim {

inline double blurred_pattern(int K, int n, int N, double y, double gain) {
  return 0.5 + 0.5 * gain * std::cos(2.0 * std::numbers::pi * (static_cast<double>(n) / N - K * y));
}

inline double render_sample(const ScenePixel& p, int K, int n, int N, const EnvelopeModel& envelope) {
  const double gain = envelope(K);
  return p.ambient + p.weight_fg() * blurred_pattern(K, n, N, p.y_fg, gain) +
         p.weight_bg() * blurred_pattern(K, n, N, p.y_bg, gain);
}

// SplitMix64 finalizer, used to derive independent per-pixel noise streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::mt19937_64 pixel_stream(std::uint64_t seed, std::uint64_t pixel) {
  return std::mt19937_64(mix64(mix64(seed) ^ pixel));
}

inline RenderedScan render_scene(const SceneModel& scene, const SweepPlan& plan, std::uint64_t seed,
                                 unsigned threads = 0) {
  const ScanManifest m = patterns::manifest_for(plan);
  if (scene.pixels.empty()) throw UsageError("scene has no pixels");
  if (scene.noise_sigma < 0.0) throw UsageError("noise_sigma must be >= 0");
  validate_envelope(scene.envelope, m.frequencies);
  for (const auto& p : scene.pixels.values()) validate(p);

  RenderedScan out{make_empty_stack(m, scene.pixels.rows(), scene.pixels.cols()), scene};
  const std::size_t count = scene.pixels.size();
  parallel_for(
      count,
      [&](std::size_t i) {
        const ScenePixel& p = scene.pixels[i];
        auto rng = pixel_stream(seed, i);
        std::normal_distribution<double> noise(0.0, 1.0);
        for (std::size_t k = 0; k < m.frequencies.size(); ++k) {
          for (int n = 0; n < m.shifts; ++n) {
            double v = render_sample(p, m.frequencies[k], n, m.shifts, scene.envelope);
            if (scene.noise_sigma > 0.0) v += scene.noise_sigma * noise(rng);
            out.stack.image(k, n)[i] = std::clamp(v, 0.0, 1.0);
          }
        }
      },
      threads);
  return out;
}

struct StepEdgeOptions {
  int ramp_width = 1;  // edge band in pixels, 1..3
  double albedo_fg = 0.8;
  double albedo_bg = 0.7;
  double ambient = 0.05;
  double noise_sigma = 0.0;
  EnvelopeModel envelope = EnvelopeModel::default_optics();
};

// Background left of edge_col, foreground right of the band starting at
// edge_col; alpha ramps linearly across the band at pixel centres.
inline SceneModel make_step_edge_scene(ImageSize size, double y_fg, double y_bg, int edge_col,
                                       const StepEdgeOptions& opt = {}) {
  if (y_fg == y_bg) throw UsageError("step edge needs distinct foreground and background rows");
  if (opt.ramp_width < 1 || opt.ramp_width > 3) throw UsageError("edge ramp width must be 1..3 pixels");
  if (size.rows <= 0 || size.cols <= 0) throw UsageError("scene size must be positive");
  SceneModel scene{Grid<ScenePixel>(size.rows, size.cols), opt.noise_sigma, opt.envelope};
  for (int r = 0; r < size.rows; ++r) {
    for (int c = 0; c < size.cols; ++c) {
      double alpha = 1.0;
      if (c < edge_col) {
        alpha = 0.0;
      } else if (c < edge_col + opt.ramp_width) {
        alpha = (c - edge_col + 0.5) / opt.ramp_width;
      }
      scene.pixels(r, c) = ScenePixel{alpha, y_fg, y_bg, opt.albedo_fg, opt.albedo_bg, opt.ambient};
    }
  }
  return scene;
}

// Fraction of the unit interval [p, p+1] covered by strips of `width`
// repeating every `period`, the first strip starting at `offset`.
inline double strip_coverage(double p, double period, double width, double offset) {
  if (width <= 0.0) return 0.0;
  if (width >= period) return 1.0;
  double covered = 0.0;
  const long first = static_cast<long>(std::floor((p - offset - width) / period));
  for (long k = first;; ++k) {
    const double a = k * period + offset;
    if (a >= p + 1.0) break;
    covered += std::max(0.0, std::min(a + width, p + 1.0) - std::max(a, p));
  }
  return std::min(covered, 1.0);
}

struct ScreenOptions {
  double albedo_screen = 0.7;
  double albedo_object = 0.9;
  double ambient = 0.05;
  double offset_col = 0.0;   // mesh phase along columns, pixels
  double offset_row = 0.37;  // mesh phase along rows, pixels
  double noise_sigma = 0.0;
  EnvelopeModel envelope = EnvelopeModel::default_optics();
};

// A woven mesh (foreground) in front of an object (background). Threads
// of width duty*period run along both axes; a pixel's alpha is the area it
// sees covered by thread.
inline SceneModel make_screen_scene(ImageSize size, double mesh_period, double mesh_duty, double y_screen,
                                    const Grid<double>& y_object_map, const ScreenOptions& opt = {}) {
  if (!(mesh_duty > 0.0 && mesh_duty < 1.0)) throw UsageError("mesh duty must lie in (0,1)");
  if (!(mesh_period > 0.0)) throw UsageError("mesh period must be positive");
  if (y_object_map.rows() != size.rows || y_object_map.cols() != size.cols) {
    throw UsageError("object row map does not match scene size");
  }
  const double width = mesh_duty * mesh_period;
  SceneModel scene{Grid<ScenePixel>(size.rows, size.cols), opt.noise_sigma, opt.envelope};
  for (int r = 0; r < size.rows; ++r) {
    const double cy = strip_coverage(r, mesh_period, width, opt.offset_row);
    for (int c = 0; c < size.cols; ++c) {
      const double cx = strip_coverage(c, mesh_period, width, opt.offset_col);
      const double alpha = 1.0 - (1.0 - cx) * (1.0 - cy);
      scene.pixels(r, c) =
          ScenePixel{alpha, y_screen, y_object_map(r, c), opt.albedo_screen, opt.albedo_object, opt.ambient};
    }
  }
  return scene;
}

// Dome-shaped object surface behind the screen: row fractions from `low`
// at the corners to `high` at the centre.
inline Grid<double> dome_object_map(ImageSize size, double low = 0.38, double high = 0.44) {
  Grid<double> map(size.rows, size.cols);
  for (int r = 0; r < size.rows; ++r) {
    for (int c = 0; c < size.cols; ++c) {
      const double u = size.cols > 1 ? static_cast<double>(c) / (size.cols - 1) - 0.5 : 0.0;
      const double v = size.rows > 1 ? static_cast<double>(r) / (size.rows - 1) - 0.5 : 0.0;
      map(r, c) = low + (high - low) * (1.0 - 2.0 * (u * u + v * v));
    }
  }
  return map;
}

inline constexpr double kDefaultMeshPeriod = 3.3;
inline constexpr double kDefaultMeshDuty = 0.2;
inline constexpr double kDefaultScreenRow = 16.0 / 60.0;

inline SceneModel make_default_screen_scene(ImageSize size, const ScreenOptions& opt = {}) {
  return make_screen_scene(size, kDefaultMeshPeriod, kDefaultMeshDuty, kDefaultScreenRow, dome_object_map(size),
                           opt);
}

// Single-path planar target at one projector row.
inline SceneModel make_flat_scene(ImageSize size, double y, double albedo = 0.8, double ambient = 0.05,
                                  double noise_sigma = 0.0, EnvelopeModel envelope = EnvelopeModel::default_optics()) {
  SceneModel scene{Grid<ScenePixel>(size.rows, size.cols, ScenePixel{1.0, y, y, albedo, albedo, ambient}),
                   noise_sigma, std::move(envelope)};
  return scene;
}

inline std::size_t count_alpha_in(const SceneModel& scene, double lo, double hi) {
  return static_cast<std::size_t>(std::count_if(scene.pixels.values().begin(), scene.pixels.values().end(),
                                                [&](const ScenePixel& p) { return p.alpha > lo && p.alpha < hi; }));
}

inline double mixed_fraction(const SceneModel& scene, double lo = 0.2, double hi = 0.8) {
  return static_cast<double>(count_alpha_in(scene, lo, hi)) / static_cast<double>(scene.pixels.size());
}

// ---- JSON scene files ----
// {"rows", "cols", "noise_sigma", "envelope": {"kind": ...},
//  "pixels": {"alpha": x | [..], "y_fg": ..., ...}} with arrays row-major.

inline nlohmann::json envelope_to_json(const EnvelopeModel& e) {
  switch (e.kind) {
    case EnvelopeModel::Kind::identity:
      return {{"kind", "identity"}};
    case EnvelopeModel::Kind::gaussian:
      return {{"kind", "gaussian"}, {"k0", e.k0}};
    case EnvelopeModel::Kind::table: {
      nlohmann::json g = nlohmann::json::object();
      for (const auto& [k, v] : e.gains) g[std::to_string(k)] = v;
      return {{"kind", "table"}, {"gains", g}};
    }
  }
  return {};
}

inline EnvelopeModel envelope_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", std::string("identity"));
  if (kind == "identity") return EnvelopeModel::identity();
  if (kind == "gaussian") return EnvelopeModel::gaussian(j.at("k0").get<double>());
  if (kind == "table") {
    std::map<int, double> g;
    for (const auto& [k, v] : j.at("gains").items()) g[std::stoi(k)] = v.get<double>();
    return EnvelopeModel::table(std::move(g));
  }
  throw DataError("unknown envelope kind '" + kind + "'");
}

inline nlohmann::json scene_to_json(const SceneModel& scene) {
  const auto column = [&](auto member) {
    std::vector<double> v;
    v.reserve(scene.pixels.size());
    for (const auto& p : scene.pixels.values()) v.push_back(p.*member);
    return v;
  };
  return {
      {"rows", scene.pixels.rows()},
      {"cols", scene.pixels.cols()},
      {"noise_sigma", scene.noise_sigma},
      {"envelope", envelope_to_json(scene.envelope)},
      {"pixels",
       {{"alpha", column(&ScenePixel::alpha)},
        {"y_fg", column(&ScenePixel::y_fg)},
        {"y_bg", column(&ScenePixel::y_bg)},
        {"albedo_fg", column(&ScenePixel::albedo_fg)},
        {"albedo_bg", column(&ScenePixel::albedo_bg)},
        {"ambient", column(&ScenePixel::ambient)}}},
  };
}

inline SceneModel scene_from_json(const nlohmann::json& j) {
  try {
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    if (rows <= 0 || cols <= 0) throw DataError("scene size must be positive");
    SceneModel scene{Grid<ScenePixel>(rows, cols), j.value("noise_sigma", 0.0),
                     j.contains("envelope") ? envelope_from_json(j.at("envelope")) : EnvelopeModel::default_optics()};
    const auto& px = j.at("pixels");
    const auto assign = [&](const char* name, double ScenePixel::*member) {
      if (!px.contains(name)) return;
      const auto& field = px.at(name);
      if (field.is_number()) {
        const double v = field.get<double>();
        for (auto& p : scene.pixels.values()) p.*member = v;
        return;
      }
      const auto values = field.get<std::vector<double>>();
      if (values.size() != scene.pixels.size()) {
        throw DataError(fmt::format("scene field '{}' has {} values, expected {}", name, values.size(),
                                    scene.pixels.size()));
      }
      for (std::size_t i = 0; i < values.size(); ++i) scene.pixels[i].*member = values[i];
    };
    assign("alpha", &ScenePixel::alpha);
    assign("y_fg", &ScenePixel::y_fg);
    assign("y_bg", &ScenePixel::y_bg);
    assign("albedo_fg", &ScenePixel::albedo_fg);
    assign("albedo_bg", &ScenePixel::albedo_bg);
    assign("ambient", &ScenePixel::ambient);
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scene description: ") + e.what());
  }
}

}  // namespace sim
}  // namespace bimodal
