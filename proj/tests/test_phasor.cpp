#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "bimodal/patterns.hpp"
#include "bimodal/phasor.hpp"

using namespace bimodal;

namespace {

constexpr double kPi = std::numbers::pi;

double angle_diff(double a, double b) { return std::remainder(a - b, 2.0 * kPi); }

PhasorField field_from_constant(int rows, int cols, double value) {
  SweepPlan plan;
  plan.geometry = {480, 640};
  plan.frequencies = {1, 12};
  ImageStack s = make_empty_stack(patterns::manifest_for(plan), rows, cols);
  for (auto& per_k : s.images) {
    for (auto& img : per_k) img = Grid<double>(rows, cols, value);
  }
  return phasor::extract_field(s, 1);
}

}  // namespace

TEST(Phasor, ConstantSamplesHaveNoModulation) {
  const std::vector<double> samples(8, 0.37);
  const auto p = phasor::extract(samples);
  EXPECT_NEAR(p.mean, 0.37, 1e-15);
  EXPECT_NEAR(p.modulation.real(), 0.0, 1e-15);
  EXPECT_NEAR(p.modulation.imag(), 0.0, 1e-15);
}

TEST(Phasor, ShiftedCosineOracle) {
  const int N = 8;
  const double theta0 = kPi / 3.0;
  std::vector<double> samples(N);
  for (int n = 0; n < N; ++n) samples[n] = 0.5 + 0.5 * std::cos(2.0 * kPi * n / N - theta0);
  // Direct summation, written out independently of extract().
  double re = 0.0;
  double im = 0.0;
  for (int n = 0; n < N; ++n) {
    re += samples[n] * std::cos(2.0 * kPi * n / N);
    im += samples[n] * std::sin(2.0 * kPi * n / N);
  }
  const auto p = phasor::extract(samples);
  EXPECT_NEAR(p.magnitude(), 2.0, 1e-12);
  EXPECT_NEAR(std::hypot(re, im), 2.0, 1e-12);
  EXPECT_NEAR(phasor::phase(p), theta0, 1e-12);
  EXPECT_NEAR(p.modulation.real(), re, 1e-12);
  EXPECT_NEAR(p.modulation.imag(), im, 1e-12);
}

TEST(Phasor, PhaseExamples) {
  EXPECT_DOUBLE_EQ(phasor::phase({0.0, {1.0, 0.0}, 1}), 0.0);
  EXPECT_DOUBLE_EQ(phasor::phase({0.0, {0.0, 1.0}, 1}), kPi / 2.0);
  EXPECT_NEAR(phasor::phase({0.0, {0.0, -1.0}, 1}), 1.5 * kPi, 1e-15);
  EXPECT_THROW(phasor::phase({0.5, {0.0, 0.0}, 1}), DataError);

  std::vector<double> samples(8);
  for (int n = 0; n < 8; ++n) samples[n] = patterns::pattern_value(1, n, 8, 0.25);
  EXPECT_NEAR(phasor::phase(phasor::extract(samples, 1)), kPi / 2.0, 1e-12);
}

TEST(Phasor, TooFewShiftsIsAnError) {
  const std::vector<double> two{0.1, 0.2};
  EXPECT_THROW(phasor::extract(two), DataError);
}

TEST(Phasor, PhaseToRowExamples) {
  EXPECT_DOUBLE_EQ(phasor::phase_to_row(kPi, 1), 0.5);
  // Absolute fraction 16/60 of the range at K=60.
  EXPECT_NEAR(phasor::phase_to_row(2.0 * kPi * 60 * (16.0 / 60.0), 60), 0.26667, 5e-6);
  const int K = 60;
  const double y = phasor::phase_to_row(2.0 * kPi * K * 0.3917, K);
  EXPECT_NEAR(y, 0.3917, 1e-12);
  EXPECT_EQ(std::lround(y * 480), 188);
  EXPECT_THROW(phasor::phase_to_row(1.0, 0), DataError);
}

TEST(Phasor, ExtractOfGenerateIsIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> y(0.0, 1.0);
  std::uniform_int_distribution<int> k(0, 60);
  std::uniform_int_distribution<int> n(3, 32);
  for (int trial = 0; trial < 500; ++trial) {
    const int K = k(rng);
    const int N = n(rng);
    const double yf = y(rng);
    std::vector<double> samples(N);
    for (int i = 0; i < N; ++i) samples[i] = patterns::pattern_value(K, i, N, yf);
    const auto p = phasor::extract(samples, K);
    ASSERT_NEAR(p.magnitude(), N / 4.0, 1e-9);
    ASSERT_NEAR(angle_diff(phasor::phase(p), 2.0 * kPi * K * yf), 0.0, 1e-9);
  }
}

TEST(Phasor, ExtractionIsLinear) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 3 + trial % 10;
    std::vector<double> s1(N), s2(N), mix(N);
    const double a = 2.0 * u(rng) - 1.0;
    const double b = 2.0 * u(rng) - 1.0;
    for (int i = 0; i < N; ++i) {
      s1[i] = u(rng);
      s2[i] = u(rng);
      mix[i] = a * s1[i] + b * s2[i];
    }
    const auto p1 = phasor::extract(s1);
    const auto p2 = phasor::extract(s2);
    const auto pm = phasor::extract(mix);
    EXPECT_NEAR(pm.mean, a * p1.mean + b * p2.mean, 1e-12);
    EXPECT_NEAR(std::abs(pm.modulation - (a * p1.modulation + b * p2.modulation)), 0.0, 1e-12);
  }
}

TEST(Phasor, PhaseInvariantToPositiveScaling) {
  std::vector<double> s(8);
  for (int n = 0; n < 8; ++n) s[n] = 0.1 + 0.3 * patterns::pattern_value(5, n, 8, 0.61);
  const auto p = phasor::extract(s);
  for (double scale : {0.01, 0.5, 3.0, 1e4}) {
    std::vector<double> scaled(s);
    for (double& v : scaled) v *= scale;
    const auto q = phasor::extract(scaled);
    EXPECT_NEAR(angle_diff(phasor::phase(q), phasor::phase(p)), 0.0, 1e-12);
    EXPECT_NEAR(q.mean, scale * p.mean, 1e-12 * scale);
  }
}

TEST(Phasor, ShadowMaskCases) {
  const PhasorField dark = field_from_constant(3, 4, 0.0);
  const Mask all = phasor::shadow_mask(dark, phasor::default_shadow_threshold(8));
  for (auto v : all.values()) EXPECT_EQ(v, 1);
  const Mask none = phasor::shadow_mask(dark, 0.0);
  for (auto v : none.values()) EXPECT_EQ(v, 0);

  SweepPlan plan = patterns::default_sweep(ProjectorGeometry{48, 4}, 8);
  const PhasorField full = phasor::extract_field(patterns::generate_stack(plan), 1);
  const Mask bright = phasor::shadow_mask(full, 8 / 8.0);
  for (auto v : bright.values()) EXPECT_EQ(v, 0);
  EXPECT_THROW(phasor::shadow_mask(full, -1.0), UsageError);
}

TEST(Phasor, GeneratedStackRespectsModulationBound) {
  const SweepPlan plan = patterns::default_sweep(ProjectorGeometry{48, 2}, 8);
  const PhasorField field = phasor::extract_field(patterns::generate_stack(plan), 1);
  EXPECT_EQ(phasor::count_modulation_bound_violations(field, 1e-9), 0u);
}

TEST(Phasor, WrappedPhaseImageMatchesRows) {
  const SweepPlan plan = patterns::default_sweep(ProjectorGeometry{480, 1}, 8);
  const PhasorField field = phasor::extract_field(patterns::generate_stack(plan), 1);
  const Grid<double> img = phasor::wrapped_phase_image(field, 1);
  for (int r = 0; r < 480; r += 37) {
    EXPECT_NEAR(angle_diff(img(r, 0), 2.0 * kPi * r / 480.0), 0.0, 1e-9);
    EXPECT_GE(img(r, 0), 0.0);
    EXPECT_LT(img(r, 0), 2.0 * kPi);
  }
  EXPECT_THROW(phasor::wrapped_phase_image(field, 7), DataError);
}
