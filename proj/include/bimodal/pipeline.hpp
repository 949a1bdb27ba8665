#pragma once

// End-to-end commands behind the `bimodal` CLI. Each takes a flat
// PipelineConfig, reads and writes files, and is deterministic given the
// config and seed.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bimodal/error.hpp"
#include "bimodal/image_io.hpp"
#include "bimodal/mtf.hpp"
#include "bimodal/patterns.hpp"
#include "bimodal/phasor.hpp"
#include "bimodal/scanset.hpp"
#include "bimodal/separator.hpp"
#include "bimodal/simulator.hpp"
#include "bimodal/unwrap.hpp"

namespace bimodal {

struct PipelineConfig {
  // Paths.
  std::string scan_dir;
  std::string envelope_path;
  std::string output_dir;
  std::string truth_path;  // default: <scan>/truth.json when present
  std::string input_dir;   // export-points: a `run` output directory
  bool use_truth = true;

  // Sweep plan.
  int projector_rows = 480;
  int projector_cols = 640;
  int shifts = 8;
  std::vector<int> frequencies;  // empty: default sweep
  bool zero = false;             // add K=0 to an explicit frequency list
  bool strict_quantization = true;

  // Simulation.
  std::string scene = "step-edge";
  int camera_rows = 32;
  int camera_cols = 48;
  std::optional<double> noise_sigma;
  std::uint64_t seed = 1;

  // Solver.
  double mag_step = 0.002;
  double dy_step = 0.0;  // 0: half a projector pixel
  double multipath_threshold = 0.05;
  double merge_separation = -1.0;  // < 0: one projector row
  double reject_residual = 0.01;
  double shadow_threshold = -1.0;  // < 0: 2% of full contrast
  std::vector<int> chain = {1, 12, 60};
  unsigned threads = 0;

  // Exports.
  std::string pixels;  // "r,c;r,c"
  double pixel_pitch = 1.0;
  double depth_scale = 100.0;
  double baseline = 1.0;
  bool traditional_points = false;
};

namespace pipeline {

inline void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

inline void require(const std::string& value, const char* what) {
  if (value.empty()) throw UsageError(std::string("missing required ") + what);
}

inline SweepPlan plan_from(const PipelineConfig& cfg) {
  if (cfg.shifts < 3) throw UsageError("shifts must be ≥ 3");
  const ProjectorGeometry geometry{cfg.projector_rows, cfg.projector_cols};
  if (cfg.frequencies.empty()) return patterns::default_sweep(geometry, cfg.shifts);
  SweepPlan plan;
  plan.geometry = geometry;
  plan.shifts = cfg.shifts;
  plan.include_zero = cfg.zero;
  plan.strict_quantization = cfg.strict_quantization;
  for (int k : cfg.frequencies) {
    if (k == 0) {
      plan.include_zero = true;
    } else {
      plan.frequencies.push_back(k);
    }
  }
  return plan;
}

inline SolverOptions solver_from(const PipelineConfig& cfg, int projector_rows) {
  SolverOptions o = SolverOptions::for_projector_rows(projector_rows);
  o.mag_step = cfg.mag_step;
  if (cfg.dy_step > 0.0) o.dy_step = cfg.dy_step;
  o.multipath_threshold = cfg.multipath_threshold;
  if (cfg.merge_separation >= 0.0) o.merge_separation = cfg.merge_separation;
  o.reject_residual = cfg.reject_residual;
  return o;
}

inline double shadow_threshold_for(const PipelineConfig& cfg, int shifts) {
  return cfg.shadow_threshold < 0.0 ? phasor::default_shadow_threshold(shifts) : cfg.shadow_threshold;
}

inline ScanManifest cmd_gen_patterns(const PipelineConfig& cfg) {
  require(cfg.output_dir, "--out directory");
  return patterns::write_pattern_stack(plan_from(cfg), cfg.output_dir);
}

// Built-in scenes reproduce the step-edge board, the mesh screen and the
// flat calibration target; anything else is read as a JSON scene file.
inline SceneModel scene_for(const PipelineConfig& cfg) {
  const ImageSize size{cfg.camera_rows, cfg.camera_cols};
  SceneModel scene;
  if (cfg.scene == "step-edge") {
    sim::StepEdgeOptions opt;
    opt.ramp_width = 3;
    scene = sim::make_step_edge_scene(size, 0.3647, 0.3917, cfg.camera_cols / 2, opt);
  } else if (cfg.scene == "screen") {
    scene = sim::make_default_screen_scene(size);
  } else if (cfg.scene == "flat") {
    scene = sim::make_flat_scene(size, 0.5);
  } else {
    scene = sim::scene_from_json(read_json(cfg.scene));
  }
  if (cfg.noise_sigma) scene.noise_sigma = *cfg.noise_sigma;
  return scene;
}

inline RenderedScan cmd_simulate(const PipelineConfig& cfg) {
  require(cfg.output_dir, "--out directory");
  const SceneModel scene = scene_for(cfg);
  RenderedScan scan = sim::render_scene(scene, plan_from(cfg), cfg.seed, cfg.threads);
  save_stack(scan.stack, cfg.output_dir);
  write_json(std::filesystem::path(cfg.output_dir) / "truth.json", sim::scene_to_json(scene));
  return scan;
}

inline MtfEnvelope cmd_calibrate(const PipelineConfig& cfg) {
  require(cfg.scan_dir, "--scan directory");
  require(cfg.output_dir, "--out directory");
  const ImageStack stack = load_stack(cfg.scan_dir);
  const PhasorField field = phasor::extract_field(stack, cfg.threads);
  const Mask mask = phasor::shadow_mask(field, shadow_threshold_for(cfg, field.manifest.shifts));
  const MtfEnvelope env = mtf::estimate_envelope(field, mask);
  mtf::save_envelope(env, cfg.output_dir);
  return env;
}

inline double row_error(double a, double b) {
  double d = std::fmod(a - b, 1.0);
  if (d < 0.0) d += 1.0;
  return std::min(d, 1.0 - d);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  return 0.5 * (upper + *std::max_element(v.begin(), mid));
}

inline double fraction_where(const std::vector<double>& v, auto predicate) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(std::count_if(v.begin(), v.end(), predicate)) / static_cast<double>(v.size());
}

using Metrics = std::vector<std::pair<std::string, double>>;

struct RunSummary {
  PhasorField field;
  Mask mask;
  FrequencySweep raw_sweep;
  FrequencySweep normalized_sweep;
  separator::SeparationResult separation;
  std::optional<Grid<double>> traditional;  // row fractions
  Metrics metrics;
  bool has_truth = false;
};

// Errors against simulator ground truth; the dominant truth path is the one
// with the larger weight.
inline void add_truth_metrics(RunSummary& s, const SceneModel& truth) {
  const auto& px = truth.pixels;
  if (px.rows() != s.field.rows || px.cols() != s.field.cols) throw DataError("truth scene size does not match scan");
  const double pixel = 1.0 / s.field.manifest.geometry.rows;

  std::vector<double> single_sep, single_trad, single_secondary;
  std::vector<double> mixed_dom, mixed_pair, mixed_mag, mixed_trad;
  std::vector<double> band_dom, band_trad;
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (s.mask[i]) continue;
    const ScenePixel& t = px[i];
    const auto& e = s.separation.estimates[i];
    const double trad = s.traditional ? row_error((*s.traditional)[i], t.dominant_y()) : std::nan("");
    if (t.is_single_path()) {
      if (e) {
        single_sep.push_back(row_error(e->y_a, t.dominant_y()));
        single_secondary.push_back(e->magB);
      }
      if (s.traditional) single_trad.push_back(trad);
      continue;
    }
    if (s.traditional) mixed_trad.push_back(trad);
    const bool in_band = t.alpha >= 0.35 && t.alpha <= 0.65;
    if (in_band && s.traditional) band_trad.push_back(trad);
    if (!e) {
      // A failed mixed pixel counts as a full miss.
      mixed_dom.push_back(0.5);
      if (in_band) band_dom.push_back(0.5);
      continue;
    }
    const double dom = row_error(e->y_a, t.dominant_y());
    const double straight = std::max(dom, row_error(e->y_b, t.secondary_y()));
    const double swapped = std::max(row_error(e->y_a, t.secondary_y()), row_error(e->y_b, t.dominant_y()));
    mixed_dom.push_back(dom);
    mixed_pair.push_back(std::min(straight, swapped));
    mixed_mag.push_back(std::abs(e->magA - t.dominant_fraction()));
    if (in_band) band_dom.push_back(dom);
  }

  auto& m = s.metrics;
  const auto lt = [](double bound) { return [bound](double v) { return v < bound; }; };
  const auto ge = [](double bound) { return [bound](double v) { return v >= bound; }; };
  const auto gt = [](double bound) { return [bound](double v) { return v > bound; }; };
  m.emplace_back("truth_single_path_pixels", static_cast<double>(single_sep.size()));
  m.emplace_back("truth_single_separator_median_row_error", median(single_sep));
  m.emplace_back("truth_single_separator_max_row_error",
                 single_sep.empty() ? std::nan("") : *std::max_element(single_sep.begin(), single_sep.end()));
  m.emplace_back("truth_single_secondary_below_threshold", fraction_where(single_secondary, lt(0.05)));
  m.emplace_back("truth_single_traditional_median_row_error", median(single_trad));
  m.emplace_back("truth_mixed_pixels", static_cast<double>(mixed_dom.size()));
  m.emplace_back("truth_mixed_separator_median_row_error", median(mixed_dom));
  m.emplace_back("truth_mixed_separator_max_row_error",
                 mixed_dom.empty() ? std::nan("") : *std::max_element(mixed_dom.begin(), mixed_dom.end()));
  m.emplace_back("truth_mixed_separator_within_pixel", fraction_where(mixed_dom, lt(pixel)));
  m.emplace_back("truth_mixed_separator_pair_median_row_error", median(mixed_pair));
  m.emplace_back("truth_mixed_separator_median_magnitude_error", median(mixed_mag));
  m.emplace_back("truth_mixed_traditional_median_row_error", median(mixed_trad));
  m.emplace_back("truth_mixed_traditional_max_row_error",
                 mixed_trad.empty() ? std::nan("") : *std::max_element(mixed_trad.begin(), mixed_trad.end()));
  m.emplace_back("truth_mixed_traditional_beyond_pixel", fraction_where(mixed_trad, gt(pixel)));
  m.emplace_back("truth_band_pixels", static_cast<double>(band_dom.size()));
  m.emplace_back("truth_band_traditional_error_ge_0.06", fraction_where(band_trad, ge(0.06)));
  m.emplace_back("truth_band_separator_error_lt_0.005", fraction_where(band_dom, lt(0.005)));
}

inline void write_estimates_csv(const separator::SeparationResult& sep, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "row,col,magA,magB,y_a,y_b,dy,residual1,residual2,is_multipath\n";
  for (int r = 0; r < sep.estimates.rows(); ++r) {
    for (int c = 0; c < sep.estimates.cols(); ++c) {
      const auto& e = sep.estimates(r, c);
      if (!e) continue;
      out << fmt::format("{},{},{:.9f},{:.9f},{:.9f},{:.9f},{:.9f},{:.9e},{:.9e},{}\n", r, c, e->magA, e->magB, e->y_a,
                         e->y_b, e->dy, e->stage1_residual, e->stage2_residual, e->is_multipath ? 1 : 0);
    }
  }
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.9g}", v);
}

inline void write_report(const RunSummary& s, const std::filesystem::path& dir) {
  nlohmann::ordered_json j;
  j["ground_truth"] = s.has_truth;
  for (const auto& [name, value] : s.metrics) {
    if (std::isnan(value)) {
      j["metrics"][name] = nullptr;
    } else {
      j["metrics"][name] = value;
    }
  }
  std::ofstream json_out(dir / "report.json");
  json_out << j.dump(2) << '\n';

  std::ofstream csv(dir / "report.csv");
  csv << "metric,value\n";
  for (const auto& [name, value] : s.metrics) csv << name << ',' << format_metric(value) << '\n';
  if (!json_out || !csv) throw DataError("failed writing report in " + dir.string());
}

inline void save_phasor_field(const PhasorField& field, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_json(dir / "manifest.json", manifest_to_json(field.manifest, field.rows, field.cols));
  for (std::size_t k = 0; k < field.manifest.frequencies.size(); ++k) {
    const int K = field.manifest.frequencies[k];
    Grid<double> re(field.rows, field.cols);
    Grid<double> im(field.rows, field.cols);
    for (std::size_t i = 0; i < re.size(); ++i) {
      re[i] = field.modulation[k][i].real();
      im[i] = field.modulation[k][i].imag();
    }
    io::write_pfm(dir / fmt::format("A_K{}.pfm", K), field.mean[k]);
    io::write_pfm(dir / fmt::format("Br_K{}.pfm", K), re);
    io::write_pfm(dir / fmt::format("Bi_K{}.pfm", K), im);
  }
}

inline void save_sweep(const FrequencySweep& sweep, const std::filesystem::path& dir, const std::string& prefix) {
  ensure_dir(dir);
  io::write_pfm(dir / (prefix + "_ab0.pfm"), sweep.ab0);
  for (std::size_t k = 0; k < sweep.frequencies.size(); ++k) {
    io::write_pfm(dir / fmt::format("{}_K{}.pfm", prefix, sweep.frequencies[k]), sweep.magnitudes[k]);
  }
}

inline std::optional<SceneModel> load_truth(const PipelineConfig& cfg) {
  if (!cfg.use_truth) return std::nullopt;
  std::filesystem::path path = cfg.truth_path;
  if (path.empty()) {
    path = std::filesystem::path(cfg.scan_dir) / "truth.json";
    if (!std::filesystem::exists(path)) return std::nullopt;
  }
  return sim::scene_from_json(read_json(path));
}

inline RunSummary cmd_run(const PipelineConfig& cfg) {
  require(cfg.scan_dir, "--scan directory");
  require(cfg.output_dir, "--out directory");
  const ImageStack stack = load_stack(cfg.scan_dir);

  RunSummary s;
  s.field = phasor::extract_field(stack, cfg.threads);
  const auto& manifest = s.field.manifest;

  MtfEnvelope env;
  if (cfg.envelope_path.empty()) {
    warn("no envelope given; using the identity envelope");
    env = MtfEnvelope::identity(manifest.frequencies);
  } else {
    env = mtf::load_envelope(cfg.envelope_path);
  }

  s.mask = phasor::shadow_mask(s.field, shadow_threshold_for(cfg, manifest.shifts));
  s.raw_sweep = phasor::sweep_from(s.field);
  s.normalized_sweep = mtf::normalize(s.raw_sweep, env, &s.mask);
  s.separation = separator::separate_field(s.field, env, s.mask, solver_from(cfg, manifest.geometry.rows), cfg.threads);

  const bool chain_available = std::all_of(cfg.chain.begin(), cfg.chain.end(),
                                           [&](int k) { return manifest.has_frequency(k); });
  if (!cfg.chain.empty() && chain_available) {
    const auto images = unwrap::chain_from_field(s.field, cfg.chain);
    s.traditional = unwrap::to_row_fraction(unwrap::unwrap_chain(images));
  } else {
    warn("scan lacks the unwrap chain frequencies; skipping the traditional phase");
  }

  auto& m = s.metrics;
  const std::size_t multipath = static_cast<std::size_t>(
      std::count_if(s.separation.estimates.values().begin(), s.separation.estimates.values().end(),
                    [](const auto& e) { return e && e->is_multipath; }));
  m.emplace_back("pixels", static_cast<double>(s.mask.size()));
  m.emplace_back("masked", static_cast<double>(s.separation.masked));
  m.emplace_back("separated", static_cast<double>(s.separation.separated));
  m.emplace_back("failed", static_cast<double>(s.separation.failed));
  m.emplace_back("multipath", static_cast<double>(multipath));
  m.emplace_back("modulation_bound_violations",
                 static_cast<double>(phasor::count_modulation_bound_violations(s.field, 0.05 * manifest.shifts / 4.0)));

  if (const auto truth = load_truth(cfg)) {
    s.has_truth = true;
    add_truth_metrics(s, *truth);
  }

  const std::filesystem::path out(cfg.output_dir);
  ensure_dir(out);
  save_phasor_field(s.field, out / "phasors");
  save_sweep(s.raw_sweep, out / "sweeps", "raw");
  save_sweep(s.normalized_sweep, out / "sweeps", "normalized");
  io::write_pfm(out / "primary_phase.pfm", s.separation.primary_phase);
  io::write_pfm(out / "secondary_phase.pfm", s.separation.secondary_phase);
  io::write_pfm(out / "primary_magnitude.pfm", s.separation.primary_magnitude);
  io::write_pfm(out / "secondary_magnitude.pfm", s.separation.secondary_magnitude);
  Grid<double> mask_image(s.mask.rows(), s.mask.cols());
  for (std::size_t i = 0; i < mask_image.size(); ++i) mask_image[i] = s.mask[i] ? 1.0 : 0.0;
  io::write_pfm(out / "mask.pfm", mask_image);
  if (s.traditional) io::write_pfm(out / "traditional_phase.pfm", *s.traditional);
  write_estimates_csv(s.separation, out / "estimates.csv");
  write_report(s, out);
  return s;
}

struct EstimateRow {
  int row = 0;
  int col = 0;
  double y_a = 0.0;
  double y_b = 0.0;
  bool is_multipath = false;
};

inline std::vector<EstimateRow> read_estimates_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EstimateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 10) throw DataError("malformed estimates line: " + line);
    try {
      rows.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stod(cells[4]), std::stod(cells[5]),
                      cells[9] == "1"});
    } catch (const std::exception&) {
      throw DataError("malformed estimates line: " + line);
    }
  }
  return rows;
}

// Non-metric points: x = col*pitch, y = row*pitch, z = depth_scale*y_frac/baseline.
inline std::size_t cmd_export_points(const PipelineConfig& cfg) {
  require(cfg.input_dir, "--input run directory");
  require(cfg.output_dir, "--out file");
  if (!(cfg.baseline > 0.0)) throw UsageError("baseline must be positive");
  const std::filesystem::path in(cfg.input_dir);
  const auto rows = read_estimates_csv(in / "estimates.csv");
  const auto z_of = [&](double y) { return cfg.depth_scale * y / cfg.baseline; };

  std::ofstream out(cfg.output_dir);
  if (!out) throw DataError("cannot write " + cfg.output_dir);
  out << "# NON-METRIC synthetic geometry, for visual comparison only\n";
  out << fmt::format("# x = col*{}, y = row*{}, z = {}*y_frac/{}\n", cfg.pixel_pitch, cfg.pixel_pitch,
                     cfg.depth_scale, cfg.baseline);
  out << "# x y z\n";
  std::size_t count = 0;
  const auto emit = [&](int r, int c, double y) {
    out << fmt::format("{:.6f} {:.6f} {:.6f}\n", c * cfg.pixel_pitch, r * cfg.pixel_pitch, z_of(y));
    ++count;
  };
  if (cfg.traditional_points) {
    const Grid<double> trad = io::read_pfm(in / "traditional_phase.pfm");
    for (int r = 0; r < trad.rows(); ++r) {
      for (int c = 0; c < trad.cols(); ++c) {
        if (std::isfinite(trad(r, c))) emit(r, c, trad(r, c));
      }
    }
  } else {
    for (const auto& e : rows) {
      emit(e.row, e.col, e.y_a);
      if (e.is_multipath) emit(e.row, e.col, e.y_b);
    }
  }
  if (!out) throw DataError("failed writing " + cfg.output_dir);
  return count;
}

inline std::vector<PixelIndex> parse_pixels(const std::string& text) {
  std::vector<PixelIndex> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ';');) {
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw UsageError("pixel list entries must look like row,col");
    try {
      out.push_back({std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1))});
    } catch (const std::exception&) {
      throw UsageError("bad pixel entry '" + item + "'");
    }
  }
  return out;
}

// Writes the CSV behind the |AB|-versus-K stem plots; normalized when an
// envelope is supplied.
inline FrequencySweep cmd_export_sweep(const PipelineConfig& cfg) {
  require(cfg.scan_dir, "--scan directory");
  require(cfg.output_dir, "--out file");
  const ImageStack stack = load_stack(cfg.scan_dir);
  const PhasorField field = phasor::extract_field(stack, cfg.threads);
  FrequencySweep sweep = phasor::sweep_from(field);
  if (!cfg.envelope_path.empty()) {
    const Mask mask = phasor::shadow_mask(field, shadow_threshold_for(cfg, field.manifest.shifts));
    sweep = mtf::normalize(sweep, mtf::load_envelope(cfg.envelope_path), &mask);
  }
  const auto pixels = parse_pixels(cfg.pixels);
  export_sweep_csv(sweep, pixels, cfg.output_dir);
  return sweep;
}

}  // namespace pipeline
}  // namespace bimodal
