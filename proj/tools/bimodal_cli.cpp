// bimodal: pattern generation, simulation, calibration, two-path separation
// and exports for multi-frequency phase-shift structured light scans.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <fmt/format.h>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bimodal.hpp"

namespace {

using bimodal::PipelineConfig;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw bimodal::UsageError("bad integer '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

std::string json_scalar_to_arg(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& item : v) joined += (joined.empty() ? "" : ",") + json_scalar_to_arg(item);
    return joined;
  }
  return v.dump();
}

// Turns a flat JSON config into `--key value` tokens for the options the
// chosen subcommand understands. They are placed before the user's own
// arguments so that explicit flags win (options take the last value).
std::vector<std::string> config_tokens(const std::string& path, CLI::App* sub) {
  std::vector<std::string> tokens;
  const auto config = bimodal::read_json(path);
  if (!config.is_object()) throw bimodal::UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : config.items()) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back("--" + key);
      continue;
    }
    tokens.push_back("--" + key);
    tokens.push_back(json_scalar_to_arg(value));
  }
  return tokens;
}

struct ListArgs {
  std::string frequencies;
  std::string chain = "1,12,60";
  double noise = -1.0;
};

void add_sweep_options(CLI::App* sub, PipelineConfig& cfg, ListArgs& lists) {
  sub->add_option("--rows", cfg.projector_rows, "Projector rows")->capture_default_str();
  sub->add_option("--cols", cfg.projector_cols, "Projector columns")->capture_default_str();
  sub->add_option("--shifts", cfg.shifts, "Phase shifts N per frequency")->capture_default_str();
  sub->add_option("--frequencies", lists.frequencies, "Comma-separated K list (default: full divisor sweep)");
  sub->add_flag("--zero", cfg.zero, "Add the K=0 pattern to an explicit frequency list");
  sub->add_flag("--no-strict{false}", cfg.strict_quantization, "Allow wavelengths that are not multiples of N");
}

void add_threads(CLI::App* sub, PipelineConfig& cfg) {
  sub->add_option("--threads", cfg.threads, "Worker threads (0: all cores)");
}

int run_cli(int argc, char** argv) {
  PipelineConfig cfg;
  ListArgs lists;
  std::string config_path;

  CLI::App app{"Two-path separation for multi-frequency phase-shift structured light", "bimodal"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* gen = app.add_subcommand("gen-patterns", "Write a projector pattern stack");
  add_sweep_options(gen, cfg, lists);
  gen->add_option("--out", cfg.output_dir, "Output directory")->required();

  auto* simulate = app.add_subcommand("simulate", "Render a synthetic capture stack with ground truth");
  add_sweep_options(simulate, cfg, lists);
  simulate->add_option("--scene", cfg.scene, "step-edge | screen | flat | path to a JSON scene")->capture_default_str();
  simulate->add_option("--camera-rows", cfg.camera_rows, "Camera rows")->capture_default_str();
  simulate->add_option("--camera-cols", cfg.camera_cols, "Camera columns")->capture_default_str();
  simulate->add_option("--noise", lists.noise, "Additive Gaussian noise sigma (overrides the scene)");
  simulate->add_option("--seed", cfg.seed, "Noise seed")->capture_default_str();
  simulate->add_option("--out", cfg.output_dir, "Output directory")->required();
  add_threads(simulate, cfg);

  auto* calibrate = app.add_subcommand("calibrate", "Estimate the MTF envelope from a flat-target scan");
  calibrate->add_option("--scan", cfg.scan_dir, "Scan directory")->required();
  calibrate->add_option("--out", cfg.output_dir, "Envelope output directory")->required();
  calibrate->add_option("--shadow-threshold", cfg.shadow_threshold, "Shadow mask threshold (default 0.02*N/4)");
  add_threads(calibrate, cfg);

  auto* run = app.add_subcommand("run", "Extract, normalize, separate and unwrap a scan");
  run->add_option("--scan", cfg.scan_dir, "Scan directory")->required();
  run->add_option("--envelope", cfg.envelope_path, "Envelope directory or CSV (default: identity)");
  run->add_option("--out", cfg.output_dir, "Output directory")->required();
  run->add_option("--truth", cfg.truth_path, "Ground-truth scene JSON (default: <scan>/truth.json)");
  run->add_flag("--no-truth{false}", cfg.use_truth, "Ignore ground truth");
  run->add_option("--mag-step", cfg.mag_step, "Magnitude grid step")->capture_default_str();
  run->add_option("--dy-step", cfg.dy_step, "Row-fraction grid step (default: half a projector pixel)");
  run->add_option("--multipath-threshold", cfg.multipath_threshold, "Secondary magnitude marking multipath")
      ->capture_default_str();
  run->add_option("--merge-separation", cfg.merge_separation,
                  "Report paths this close (row fraction) as one path; 0 disables (default: one projector row)");
  run->add_option("--reject-residual", cfg.reject_residual, "Stage-1 residual rejection threshold")
      ->capture_default_str();
  run->add_option("--shadow-threshold", cfg.shadow_threshold, "Shadow mask threshold (default 0.02*N/4)");
  run->add_option("--chain", lists.chain, "Traditional unwrap chain")->capture_default_str();
  add_threads(run, cfg);

  auto* points = app.add_subcommand("export-points", "Write separated phases as non-metric x y z points");
  points->add_option("--input", cfg.input_dir, "Directory written by `run`")->required();
  points->add_option("--out", cfg.output_dir, "Output point file")->required();
  points->add_option("--pitch", cfg.pixel_pitch, "x/y spacing per camera pixel")->capture_default_str();
  points->add_option("--depth-scale", cfg.depth_scale, "z scale applied to the row fraction")->capture_default_str();
  points->add_option("--baseline", cfg.baseline, "Synthetic triangulation baseline")->capture_default_str();
  points->add_flag("--traditional", cfg.traditional_points, "Export the traditional unwrapped phase instead");

  auto* sweep = app.add_subcommand("export-sweep", "Write |AB| versus K for selected pixels as CSV");
  sweep->add_option("--scan", cfg.scan_dir, "Scan directory")->required();
  sweep->add_option("--envelope", cfg.envelope_path, "Envelope for normalized output");
  sweep->add_option("--pixels", cfg.pixels, "Pixels as 'row,col;row,col'");
  sweep->add_option("--out", cfg.output_dir, "Output CSV")->required();
  sweep->add_option("--shadow-threshold", cfg.shadow_threshold, "Shadow mask threshold (default 0.02*N/4)");

  // --config is pulled out by hand so its values can be fed through the
  // normal parser ahead of the explicit flags.
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    } else {
      args.push_back(a);
    }
  }
  if (!config_path.empty() && !args.empty()) {
    if (CLI::App* sub = app.get_subcommand_no_throw(args.front())) {
      const auto tokens = config_tokens(config_path, sub);
      args.insert(args.begin() + 1, tokens.begin(), tokens.end());
    }
  }
  std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (!lists.frequencies.empty()) cfg.frequencies = parse_int_list(lists.frequencies);
  cfg.chain = parse_int_list(lists.chain);
  if (lists.noise >= 0.0) cfg.noise_sigma = lists.noise;

  namespace pl = bimodal::pipeline;
  if (gen->parsed()) {
    const auto m = pl::cmd_gen_patterns(cfg);
    std::cout << fmt::format("wrote {} patterns ({} frequencies x {} shifts) to {}\n",
                             m.frequencies.size() * m.shifts, m.frequencies.size(), m.shifts, cfg.output_dir);
  } else if (simulate->parsed()) {
    const auto scan = pl::cmd_simulate(cfg);
    std::cout << fmt::format("rendered {} images of {}x{} to {}\n", scan.stack.image_count(), scan.stack.rows,
                             scan.stack.cols, cfg.output_dir);
  } else if (calibrate->parsed()) {
    const auto env = pl::cmd_calibrate(cfg);
    std::cout << fmt::format("envelope from {} pixels written to {}\n", env.pixels_used, cfg.output_dir);
    for (std::size_t k = 0; k < env.frequencies.size(); ++k) {
      std::cout << fmt::format("  K={:<3} gain={:.4f}\n", env.frequencies[k], env.gain[k]);
    }
  } else if (run->parsed()) {
    const auto summary = pl::cmd_run(cfg);
    for (const auto& [name, value] : summary.metrics) std::cout << fmt::format("{:<48} {}\n", name, pl::format_metric(value));
  } else if (points->parsed()) {
    const auto n = pl::cmd_export_points(cfg);
    std::cout << fmt::format("wrote {} points to {}\n", n, cfg.output_dir);
  } else if (sweep->parsed()) {
    pl::cmd_export_sweep(cfg);
    std::cout << fmt::format("wrote sweep CSV to {}\n", cfg.output_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const bimodal::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
