// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here, not tuned per run.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bimodal.hpp"
#include "cli_runner.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bimodal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPixel = 1.0 / 480.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

double fraction(const std::vector<double>& v, const std::function<bool(double)>& pred) {
  if (v.empty()) return 0.0;
  return static_cast<double>(std::count_if(v.begin(), v.end(), pred)) / static_cast<double>(v.size());
}

const SweepPlan& sweep480() {
  static const SweepPlan plan = patterns::default_sweep(480, 8);
  return plan;
}

PhasorField render(const SceneModel& scene, std::uint64_t seed) {
  return phasor::extract_field(sim::render_scene(scene, sweep480(), seed).stack);
}

MtfEnvelope calibrate(const EnvelopeModel& optics, double noise, std::uint64_t seed) {
  const PhasorField flat = render(sim::make_flat_scene({32, 32}, 0.5, 0.8, 0.05, noise, optics), seed);
  return mtf::estimate_envelope(flat, phasor::shadow_mask(flat, phasor::default_shadow_threshold(8)));
}

double interference(double a, double b, double dy, int K) {
  return std::sqrt(a * a + b * b + 2.0 * a * b * std::cos(kTwoPi * K * dy));
}

// 55% / 45% mixture of two rows 12 projector pixels apart.
constexpr double kFig5Fg = 0.3;
constexpr double kFig5Bg = 0.3 - 12.0 / 480.0;

SceneModel fig5_scene() {
  return SceneModel{Grid<ScenePixel>(1, 1, ScenePixel{0.55, kFig5Fg, kFig5Bg, 0.8, 0.8, 0.05}), 0.0,
                    EnvelopeModel::default_optics()};
}

Verdict criterion1() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> pick_n(0, 2);
  std::uniform_real_distribution<double> y(0.0, 1.0);
  const int shifts[3] = {4, 8, 16};
  double worst_phase = 0.0;
  double worst_mag = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    const int N = shifts[pick_n(rng)];
    std::uniform_int_distribution<int> pick_k(1, 480 / N);
    const int K = pick_k(rng);
    const double yf = y(rng);
    std::vector<double> samples(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) samples[n] = patterns::pattern_value(K, n, N, yf);
    const PixelPhasor p = phasor::extract(samples, K);
    worst_phase = std::max(worst_phase, std::abs(std::remainder(phasor::phase(p) - kTwoPi * K * yf, kTwoPi)));
    worst_mag = std::max(worst_mag, std::abs(p.magnitude() - N / 4.0));
  }
  const double elapsed = seconds_since(t0);
  return {worst_phase < 1e-9 && worst_mag < 1e-9 && elapsed < 1.0,
          fmt::format("max phase err {:.2e} rad, max magnitude err {:.2e}, {:.3f} s", worst_phase, worst_mag, elapsed)};
}

Verdict criterion2() {
  const MtfEnvelope env = calibrate(EnvelopeModel::default_optics(), 0.0, 2);
  const PhasorField f = render(fig5_scene(), 2);
  const FrequencySweep n = mtf::normalize(phasor::sweep_from(f), env);
  double worst = 0.0;
  double at20 = std::nan("");
  for (std::size_t k = 0; k < n.frequencies.size(); ++k) {
    const double v = n.magnitudes[k](0, 0);
    worst = std::max(worst, std::abs(v - interference(0.55, 0.45, 12.0 / 480.0, n.frequencies[k])));
    if (n.frequencies[k] == 20) at20 = v;
  }
  return {worst < 1e-9 && std::abs(at20 - 0.1) < 1e-9,
          fmt::format("max |sweep - law| {:.2e}, |AB|(20) = {:.12f}", worst, at20)};
}

Verdict criterion3() {
  const MtfEnvelope env = calibrate(EnvelopeModel::default_optics(), 0.0, 3);
  const PhasorField f = render(fig5_scene(), 3);
  const auto phasors = mtf::normalized_phasors(f, env, 0, 0);
  std::vector<double> sweep;
  for (const auto& p : phasors) sweep.push_back(std::abs(p));
  const std::vector<int> ks = f.manifest.nonzero_frequencies();
  const SolverOptions opt = SolverOptions::for_projector_rows(480);

  const int repeats = 10;
  const auto t0 = std::chrono::steady_clock::now();
  BimodalEstimate e;
  for (int i = 0; i < repeats; ++i) e = separator::separate_pixel(sweep, phasors, ks, opt);  // includes table setup
  const double per_pixel_ms = 1e3 * seconds_since(t0) / repeats;

  const MagnitudeFit m = separator::fit_magnitudes(sweep, ks, opt);
  const double mag_err = std::max(std::abs(m.magA - 0.55), std::abs(m.magB - 0.45));
  const double dy_err = std::abs(m.dy - 0.025);
  const double row_err = std::max(oracle::row_distance(e.y_a, kFig5Fg), oracle::row_distance(e.y_b, kFig5Bg));
  const bool pass = mag_err <= opt.mag_step && dy_err <= opt.dy_step && row_err < kPixel && per_pixel_ms < 50.0;
  return {pass, fmt::format("magA {:.4f} magB {:.4f} |dy| {:.5f}; row err {:.2e} (< {:.2e}); {:.2f} ms/pixel", m.magA,
                            m.magB, m.dy, row_err, kPixel, per_pixel_ms)};
}

Verdict criterion4() {
  const EnvelopeModel optics = EnvelopeModel::default_optics();
  const double sigma = 0.005;
  const MtfEnvelope env = calibrate(optics, sigma, 40);
  sim::StepEdgeOptions opt;
  opt.ramp_width = 2;  // edge band alphas 0.25 and 0.75
  opt.noise_sigma = sigma;
  opt.envelope = optics;
  const SceneModel scene = sim::make_step_edge_scene({100, 8}, 0.3647, 0.3917, 3, opt);
  const PhasorField f = render(scene, 41);
  const Mask mask = phasor::shadow_mask(f, phasor::default_shadow_threshold(8));
  const auto sep = separator::separate_field(f, env, mask, SolverOptions::for_projector_rows(480));

  std::vector<double> mag_err, row_err, secondary;
  std::size_t missing_edge = 0;
  for (std::size_t i = 0; i < scene.pixels.size(); ++i) {
    const ScenePixel& t = scene.pixels[i];
    const auto& e = sep.estimates[i];
    if (t.is_single_path()) {
      if (e) secondary.push_back(e->magB);
      else secondary.push_back(1.0);  // a failed pixel counts against the criterion
      continue;
    }
    if (!e) {
      ++missing_edge;
      mag_err.push_back(1.0);
      row_err.push_back(0.5);
      continue;
    }
    mag_err.push_back(std::abs(e->magA - t.dominant_fraction()));
    row_err.push_back(std::max(oracle::row_distance(e->y_a, t.dominant_y()), oracle::row_distance(e->y_b, t.secondary_y())));
  }
  const double med_mag = median(mag_err);
  const double med_row = median(row_err);
  const double quiet = fraction(secondary, [](double b) { return b < 0.05; });
  const bool pass = mag_err.size() == 200 && med_mag < 0.01 && med_row < kPixel && quiet >= 0.95;
  return {pass, fmt::format("{} edge pixels ({} failed): median |dmag| {:.4f}, median row err {:.2e}; "
                            "single-path secondary < 0.05 in {:.1f}% of {}",
                            mag_err.size(), missing_edge, med_mag, med_row, 100.0 * quiet, secondary.size())};
}

Verdict criterion5() {
  const EnvelopeModel optics = EnvelopeModel::default_optics();
  const double sigma = 0.002;
  const MtfEnvelope env = calibrate(optics, sigma, 50);
  sim::ScreenOptions opt;
  opt.noise_sigma = sigma;
  opt.envelope = optics;
  const SceneModel scene = sim::make_default_screen_scene({64, 64}, opt);

  SweepPlan plan = sweep480();
  const ImageStack stack = sim::render_scene(scene, plan, 51).stack;
  const PhasorField f = phasor::extract_field(stack);
  const Mask mask = phasor::shadow_mask(f, phasor::default_shadow_threshold(8));
  const std::vector<int> chain{1, 12, 60};
  const Grid<double> traditional = unwrap::to_row_fraction(unwrap::unwrap_chain(unwrap::chain_from_field(f, chain)));
  const auto sep = separator::separate_field(f, env, mask, SolverOptions::for_projector_rows(480));

  std::vector<double> trad_err, sep_err;
  std::vector<double> trad_wrong;
  for (std::size_t i = 0; i < scene.pixels.size(); ++i) {
    const ScenePixel& t = scene.pixels[i];
    if (t.alpha < 0.35 || t.alpha > 0.65) continue;
    const double te = oracle::row_distance(traditional[i], t.dominant_y());
    trad_err.push_back(te);
    if (te >= 0.06) trad_wrong.push_back(te);
    const auto& e = sep.estimates[i];
    sep_err.push_back(e ? oracle::row_distance(e->y_a, t.dominant_y()) : 0.5);
  }
  const double trad_frac = fraction(trad_err, [](double v) { return v >= 0.06; });
  const double sep_frac = fraction(sep_err, [](double v) { return v < 0.005; });
  const bool pass = !trad_err.empty() && trad_frac >= 0.5 && sep_frac >= 0.95;
  return {pass, fmt::format("{} band pixels: traditional err >= 0.06 in {:.1f}% (median of those {:.4f}, 1/12 = {:.4f}); "
                            "separator err < 0.005 in {:.1f}%",
                            trad_err.size(), 100.0 * trad_frac, median(trad_wrong), 1.0 / 12.0, 100.0 * sep_frac)};
}

Verdict criterion6() {
  const EnvelopeModel optics = EnvelopeModel::default_optics();
  const double sigma = 0.005;
  const MtfEnvelope env = calibrate(optics, sigma, 60);
  double gain_err = 0.0;
  for (std::size_t k = 0; k < env.frequencies.size(); ++k) {
    gain_err = std::max(gain_err, std::abs(env.gain[k] - optics(env.frequencies[k])));
  }
  // An independent single-path scan at another depth and albedo.
  const PhasorField board = render(sim::make_flat_scene({32, 32}, 0.2131, 0.7, 0.05, sigma, optics), 61);
  const FrequencySweep n = mtf::normalize(phasor::sweep_from(board), env);
  double worst_mean = 0.0;
  double worst_pixel = 0.0;
  for (const auto& mag : n.magnitudes) {
    double sum = 0.0;
    for (double v : mag.values()) {
      sum += v;
      worst_pixel = std::max(worst_pixel, std::abs(v - 1.0));
    }
    worst_mean = std::max(worst_mean, std::abs(sum / mag.size() - 1.0));
  }
  return {gain_err < 1e-3 && worst_mean < 0.02,
          fmt::format("max gain err {:.2e}; normalized single-path sweep max |mean - 1| {:.4f} over K "
                      "(largest single-pixel deviation {:.4f})",
                      gain_err, worst_mean, worst_pixel)};
}

Verdict criterion7() {
  const std::vector<int> ks = sweep480().frequencies;
  SolverOptions coarse;
  coarse.mag_step = 1.0 / 168.0;  // about 3x the default 0.002; 1/168 keeps a + b = 1 on the oracle's lattice
  coarse.dy_step = 3.0 / 960.0;
  coarse.refine = false;
  const separator::SeparatorPlan plan(ks, coarse);
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int agree = 0;
  for (int i = 0; i < 100; ++i) {
    const double a = 0.5 + 0.5 * u(rng);
    const double dy = 0.02 + 0.48 * u(rng);
    const double y_a = u(rng);
    const double y_b = separator::wrap_unit(y_a - (u(rng) < 0.5 ? dy : -dy));
    const auto data = oracle::two_path(ks, a, 1.0 - a, y_a, y_b);
    const MagnitudeFit fit = plan.fit_magnitudes(data.sweep);
    const oracle::Cell cell = oracle::brute_force(ks, data.sweep, 168, 320);
    if (std::abs(fit.magA - cell.magA) < 1e-9 && std::abs(fit.dy - cell.dy) < 1e-9) ++agree;
  }
  return {agree == 100, fmt::format("{}/100 pixels select the brute-force grid cell", agree)};
}

Verdict criterion8() {
  testutil::TempDir dir("acceptance8");
  const auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
  auto r = testutil::run_cli("simulate --scene step-edge --camera-rows 6 --camera-cols 12 --noise 0.005 --seed 11 --out " +
                                 q(dir / "scan"),
                             dir.path());
  if (r.exit_code != 0) return {false, "simulate failed: " + r.err};
  for (const char* out : {"run1", "run2"}) {
    r = testutil::run_cli("run --scan " + q(dir / "scan") + " --out " + q(dir / out), dir.path());
    if (r.exit_code != 0) return {false, std::string("run failed: ") + r.err};
  }
  bool same = true;
  std::string detail;
  for (const char* f : {"estimates.csv", "report.csv"}) {
    const std::string a = testutil::slurp(dir / "run1" / f);
    const std::string b = testutil::slurp(dir / "run2" / f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += fmt::format("{} {} ({} bytes); ", f, eq ? "identical" : "DIFFERS", a.size());
  }
  return {same, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"extraction exactness", criterion1},
      {"interference-law identity", criterion2},
      {"separation accuracy, noiseless", criterion3},
      {"separation accuracy, noisy", criterion4},
      {"unwrap-failure reproduction", criterion5},
      {"MTF normalization", criterion6},
      {"oracle equivalence", criterion7},
      {"determinism", criterion8},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << fmt::format("criterion {}: {} {}: {}\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail)
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
