#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bimodal/patterns.hpp"
#include "bimodal/phasor.hpp"
#include "bimodal/simulator.hpp"
#include "bimodal/unwrap.hpp"
#include "oracles.hpp"

using namespace bimodal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

PhaseImage wrapped_image(int K, const std::vector<double>& ys) {
  PhaseImage img{K, Grid<double>(1, static_cast<int>(ys.size())), true};
  for (std::size_t i = 0; i < ys.size(); ++i) img.phase[i] = phasor::wrap_phase(kTwoPi * K * ys[i]);
  return img;
}

const std::vector<int> kChain{1, 12, 60};

PhasorField chain_field(const SceneModel& scene) {
  SweepPlan plan;
  plan.frequencies = kChain;
  return phasor::extract_field(sim::render_scene(scene, plan, 1, 1).stack, 1);
}

}  // namespace

TEST(Unwrap, NoiselessSinglePathChainIsExact) {
  SceneModel scene{Grid<ScenePixel>(1, 200), 0.0, EnvelopeModel::default_optics()};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& p : scene.pixels.values()) {
    const double y = u(rng);
    p = ScenePixel{1.0, y, y, 0.8, 0.8, 0.05};
  }
  const PhasorField f = chain_field(scene);
  const PhaseImage abs = unwrap::unwrap_chain(unwrap::chain_from_field(f, kChain));
  EXPECT_FALSE(abs.wrapped);
  EXPECT_EQ(abs.K, 60);
  const Grid<double> rows = unwrap::to_row_fraction(abs);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_LT(oracle::row_distance(rows[i], scene.pixels[i].y_fg), 1e-9) << i;
  }
}

TEST(Unwrap, EqualFrequenciesAreIdentity) {
  const std::vector<double> ys{0.0, 0.1, 0.5, 0.77, 0.999};
  PhaseImage low = wrapped_image(1, ys);
  low.wrapped = false;
  const PhaseImage out = unwrap::unwrap_pair(low, wrapped_image(1, ys));
  for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_NEAR(out.phase[i], low.phase[i], 1e-12);
}

TEST(Unwrap, SingleElementChain) {
  const std::vector<double> ys{0.2, 0.9};
  const PhaseImage in = wrapped_image(1, ys);
  const PhaseImage out = unwrap::unwrap_chain(std::vector<PhaseImage>{in});
  EXPECT_FALSE(out.wrapped);
  EXPECT_EQ(out.phase, in.phase);
}

TEST(Unwrap, NoiseBelowMarginNeverChangesOrder) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& [k_low, k_high] : {std::pair{1, 12}, std::pair{12, 60}, std::pair{1, 60}}) {
    const double margin = std::numbers::pi * k_low / k_high;
    std::vector<double> ys(500);
    for (double& y : ys) y = u(rng);
    PhaseImage low{k_low, Grid<double>(1, 500), false};
    for (int i = 0; i < 500; ++i) {
      const double noise = (2.0 * u(rng) - 1.0) * 0.999 * margin;
      low.phase[i] = kTwoPi * k_low * ys[i] + noise;
    }
    const PhaseImage out = unwrap::unwrap_pair(low, wrapped_image(k_high, ys));
    for (int i = 0; i < 500; ++i) {
      const double truth = kTwoPi * k_high * ys[i];
      EXPECT_NEAR(std::remainder(out.phase[i] - truth, kTwoPi * k_high), 0.0, 1e-9);
    }
  }
}

TEST(Unwrap, OrderErrorsAreWholeWavelengths) {
  // One-wavelength error at the middle frequency shifts the result by 1/12 of the range.
  const double y = 16.0 / 60.0;
  PhaseImage low{1, Grid<double>(1, 1, kTwoPi * (y - 1.0 / 12.0)), false};
  const PhaseImage mid = unwrap::unwrap_pair(low, wrapped_image(12, {y}));
  const PhaseImage high = unwrap::unwrap_pair(mid, wrapped_image(60, {y}));
  const double fraction = phasor::phase_to_row(high.phase[0], 60);
  EXPECT_NEAR(y - fraction, 1.0 / 12.0, 1e-9);
}

TEST(Unwrap, RatioChecksAndWarnings) {
  const std::vector<double> ys{0.3};
  PhaseImage low = wrapped_image(12, ys);
  low.wrapped = false;
  EXPECT_THROW(unwrap::unwrap_pair(low, wrapped_image(5, ys)), DataError);

  std::vector<std::string> warnings;
  const auto sink = [&](const std::string& w) { warnings.push_back(w); };
  PhaseImage one = wrapped_image(1, ys);
  one.wrapped = false;
  const PhaseImage seven = unwrap::unwrap_pair(unwrap::unwrap_pair(one, wrapped_image(5, ys), sink), wrapped_image(7, ys), sink);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NEAR(phasor::phase_to_row(seven.phase[0], 7), 0.3, 1e-9);

  EXPECT_THROW(unwrap::unwrap_chain(std::vector<PhaseImage>{wrapped_image(12, ys), wrapped_image(60, ys)}), DataError);
  EXPECT_THROW(unwrap::unwrap_chain(std::vector<PhaseImage>{}), DataError);
}

TEST(Unwrap, StepEdgeMixedPixelsLandBetweenSurfaces) {
  sim::StepEdgeOptions opt;
  opt.ramp_width = 3;
  const SceneModel scene = sim::make_step_edge_scene({1, 12}, 0.3647, 0.3917, 5, opt);
  const PhasorField f = chain_field(scene);
  const Grid<double> rows = unwrap::to_row_fraction(unwrap::unwrap_chain(unwrap::chain_from_field(f, kChain)));
  int off_surface = 0;
  for (int c = 0; c < 12; ++c) {
    const double err = oracle::row_distance(rows(0, c), scene.pixels(0, c).dominant_y());
    if (scene.pixels(0, c).is_single_path()) {
      EXPECT_LT(err, 1e-9);
    } else if (err > 1.0 / 480.0) {
      ++off_surface;
    }
  }
  EXPECT_GE(off_surface, 1);
}
