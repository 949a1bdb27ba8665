// Renders one mixed pixel at a depth edge, prints its frequency response
// and what the separator makes of it.
//
//   sweep_demo [alpha] [y_fg] [y_bg]

#include <fmt/format.h>

#include <cstdlib>
#include <iostream>

#include "bimodal.hpp"

int main(int argc, char** argv) {
  using namespace bimodal;
  const double alpha = argc > 1 ? std::atof(argv[1]) : 0.6;
  const double y_fg = argc > 2 ? std::atof(argv[2]) : 0.3647;
  const double y_bg = argc > 3 ? std::atof(argv[3]) : 0.3917;

  const SweepPlan plan = patterns::default_sweep(480, 8);
  SceneModel scene{Grid<ScenePixel>(1, 1, ScenePixel{alpha, y_fg, y_bg, 0.8, 0.8, 0.05}), 0.0,
                   EnvelopeModel::identity()};
  const auto field = phasor::extract_field(sim::render_scene(scene, plan, 1).stack, 1);
  const auto sweep = phasor::sweep_from(field);
  const auto env = MtfEnvelope::identity(field.manifest.frequencies);
  const auto normalized = mtf::normalize(sweep, env);

  std::cout << fmt::format("{:>4}  {:>10}  {:>10}\n", "K", "|AB|/|AB0|", "phase/2pi");
  for (std::size_t k = 0; k < normalized.frequencies.size(); ++k) {
    const auto p = field.modulation[k + 1](0, 0);
    std::cout << fmt::format("{:>4}  {:>10.4f}  {:>10.4f}\n", normalized.frequencies[k], normalized.magnitudes[k](0, 0),
                             phasor::wrap_phase(std::arg(p)) / phasor::kTwoPi);
  }

  const auto phasors = mtf::normalized_phasors(field, env, 0, 0);
  const auto e = separator::separate_pixel(normalized.at(0, 0), phasors, normalized.frequencies,
                                           SolverOptions::for_projector_rows(480));
  std::cout << fmt::format("\nmagA {:.4f}  magB {:.4f}\ny_a {:.5f}  y_b {:.5f}  (truth {:.5f} / {:.5f})\n", e.magA,
                           e.magB, e.y_a, e.y_b, scene.pixels(0, 0).dominant_y(), scene.pixels(0, 0).secondary_y());
  std::cout << fmt::format("multipath: {}\n", e.is_multipath ? "yes" : "no");
}
