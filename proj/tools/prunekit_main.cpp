#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "prunekit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Data-pruning toolkit: teacher-student pruning simulation, "
               "self-consistent theory curves, V-information estimates, and "
               "patch-mosaic dataset distillation"};
  app.require_subcommand(1);

  std::string config_path, sim_csv, theory_csv, scores_path, manifest_path;
  double threshold = 0.08;
  prunekit::cli::CommonOverrides overrides;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { overrides.seed = s; },
        "override base seed");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& d) { overrides.out_dir = d; },
        "override output directory");
    cmd->add_option_function<int>(
        "--threads", [&](int t) { overrides.threads = t; },
        "worker threads (0 = hardware)");
    cmd->add_flag("--gnuplot", overrides.gnuplot, "emit a gnuplot script per CSV");
  };

  CLI::App* sim = app.add_subcommand("sim", "Monte Carlo pruning sweep");
  add_common(sim);
  CLI::App* theory = app.add_subcommand("theory", "self-consistent theory curves");
  add_common(theory);

  CLI::App* compare = app.add_subcommand("compare", "theory vs simulation check");
  compare->add_option("--sim", sim_csv, "sim_sweep.csv path")->required();
  compare->add_option("--theory", theory_csv, "theory_curve.csv path")->required();
  compare->add_option("--threshold", threshold, "max |R_theory - mean_R_sim|");
  add_common(compare);

  CLI::App* vinfo = app.add_subcommand("vinfo", "V-information report / subset ranking");
  vinfo->add_option("--scores", scores_path, "per-example scores file");
  vinfo->add_option("--manifest", manifest_path, "candidate-subset manifest");
  add_common(vinfo);

  CLI::App* distill = app.add_subcommand("distill", "patch-mosaic dataset distillation");
  add_common(distill);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = [&]() -> nlohmann::json {
      if (config_path.empty()) return nlohmann::json::object();
      return prunekit::cli::load_config(config_path);
    };
    if (sim->parsed()) return prunekit::cli::cmd_sim(config(), overrides);
    if (theory->parsed()) return prunekit::cli::cmd_theory(config(), overrides);
    if (compare->parsed())
      return prunekit::cli::cmd_compare(sim_csv, theory_csv, threshold, overrides);
    if (vinfo->parsed()) {
      if (scores_path.empty() == manifest_path.empty()) {
        std::cerr << "error: pass exactly one of --scores / --manifest\n";
        return 2;
      }
      return prunekit::cli::cmd_vinfo(
          manifest_path.empty() ? scores_path : manifest_path,
          !manifest_path.empty(), overrides);
    }
    if (distill->parsed()) return prunekit::cli::cmd_distill(config(), overrides);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 2;
}
