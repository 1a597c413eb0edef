#include "prunekit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "prunekit/optidel.hpp"
#include "prunekit/perceptron.hpp"
#include "prunekit/replica.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/vinfo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace prunekit::cli {
namespace {

constexpr double kPi = 3.141592653589793238462643383279;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void reject_unknown_keys(const json& config, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : config.items())
    if (!allowed.count(key))
      throw UsageError("unknown config key '" + key + "' in " + where);
}

template <typename T>
T get_or(const json& config, const std::string& key, T fallback) {
  if (!config.contains(key)) return fallback;
  return config.at(key).get<T>();
}

std::vector<double> number_list(const json& value, const std::string& key) {
  if (!value.is_array() || value.empty())
    throw UsageError("config key '" + key + "' must be a non-empty array");
  std::vector<double> out;
  for (const json& item : value) out.push_back(item.get<double>());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void echo_resolved_config(const fs::path& out_dir, const json& resolved) {
  write_text(out_dir / "resolved_config.json", resolved.dump(2) + "\n");
}

fs::path resolve_out_dir(const json& config, const CommonOverrides& overrides) {
  std::string dir = get_or<std::string>(config, "output_dir", "out");
  if (overrides.out_dir) dir = *overrides.out_dir;
  return fs::path(dir);
}

// Minimal CSV reader: header line + numeric-or-string fields.
std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) header.push_back(field);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::map<std::string, std::string> record;
    std::string field;
    for (const std::string& key : header) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error(path + ": short row '" + line + "'");
      record[key] = field;
    }
    rows.push_back(std::move(record));
  }
  return rows;
}

std::string sim_gnuplot_script(const std::string& csv_name) {
  return "set datafile separator ','\n"
         "set logscale x\n"
         "set xlabel 'retention fraction f'\n"
         "set ylabel 'fitting error e'\n"
         "set key outside\n"
         "plot '" + csv_name + "' using 5:9 every ::1 with linespoints title 'mean e'\n";
}

std::string theory_gnuplot_script(const std::string& csv_name) {
  return "set datafile separator ','\n"
         "set logscale x\n"
         "set xlabel 'retention fraction f'\n"
         "set ylabel 'fitting error e'\n"
         "set key outside\n"
         "plot '" + csv_name + "' using 3:7 every ::1 with linespoints title 'theory e'\n";
}

}  // namespace

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json config;
  try {
    in >> config;
  } catch (const json::parse_error& err) {
    throw UsageError(path + ": " + err.what());
  }
  if (!config.is_object()) throw UsageError(path + ": config must be an object");
  return config;
}

int cmd_sim(const json& config, const CommonOverrides& overrides) {
  try {
    reject_unknown_keys(config,
                        {"base_seed", "output_dir", "threads", "n", "trials",
                         "probe_mode", "strategies", "theta_deg", "alpha_t",
                         "redundancy", "f", "raw_dump"},
                        "sim config");

    SweepGrid grid;
    grid.n = get_or<int>(config, "n", 30);
    const std::string mode = get_or<std::string>(config, "probe_mode", "fixed_angle");
    if (mode == "fixed_angle") grid.probe_mode = ProbeMode::FixedAngle;
    else if (mode == "trained_on_full") grid.probe_mode = ProbeMode::TrainedOnFull;
    else throw UsageError("probe_mode must be 'fixed_angle' or 'trained_on_full'");

    for (const std::string& name : get_or<std::vector<std::string>>(
             config, "strategies", {"hard"})) {
      try {
        grid.strategies.push_back(strategy_from_name(name));
      } catch (const std::invalid_argument& err) {
        throw UsageError(err.what());
      }
    }
    grid.theta_degs = config.contains("theta_deg")
                          ? number_list(config.at("theta_deg"), "theta_deg")
                          : std::vector<double>{0.0};
    grid.alpha_ts = config.contains("alpha_t")
                        ? number_list(config.at("alpha_t"), "alpha_t")
                        : std::vector<double>{10.0};
    grid.redundancies =
        get_or<std::vector<int>>(config, "redundancy", {1});
    if (config.contains("f") && config.at("f").is_array())
      grid.fs = number_list(config.at("f"), "f");
    else
      grid.fs = default_f_grid();

    const int trials = get_or<int>(config, "trials", 50);
    std::uint64_t seed = get_or<std::uint64_t>(config, "base_seed", 1);
    if (overrides.seed) seed = *overrides.seed;
    int threads = get_or<int>(config, "threads", 0);
    if (overrides.threads) threads = *overrides.threads;
    const fs::path out_dir = resolve_out_dir(config, overrides);
    const bool raw_dump = get_or<bool>(config, "raw_dump", false);

    std::vector<TrialResult> raw;
    const std::vector<AggregatedPoint> agg =
        run_sweep(grid, trials, seed, threads, raw_dump ? &raw : nullptr);

    fs::create_directories(out_dir);
    write_text(out_dir / "sim_sweep.csv", sweep_csv(agg));
    if (raw_dump) {
      std::vector<SweepPoint> per_trial;
      for (const AggregatedPoint& a : agg)
        per_trial.insert(per_trial.end(), trials, a.point);
      write_text(out_dir / "sim_trials.csv", raw_trials_csv(raw, per_trial));
    }
    if (overrides.gnuplot)
      write_text(out_dir / "sim_sweep.gp", sim_gnuplot_script("sim_sweep.csv"));

    json resolved = config;
    resolved["base_seed"] = seed;
    resolved["threads"] = threads;
    resolved["output_dir"] = out_dir.string();
    resolved["n"] = grid.n;
    resolved["trials"] = trials;
    resolved["probe_mode"] = mode;
    json fs_json = json::array();
    for (double f : grid.fs) fs_json.push_back(f);
    resolved["f"] = fs_json;
    echo_resolved_config(out_dir, resolved);

    std::cout << "wrote " << (out_dir / "sim_sweep.csv").string() << " ("
              << agg.size() << " points x " << trials << " trials)\n";
    return 0;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}

int cmd_theory(const json& config, const CommonOverrides& overrides) {
  try {
    reject_unknown_keys(
        config, {"base_seed", "output_dir", "threads", "theta_deg", "c", "f"},
        "theory config");

    std::vector<double> thetas = config.contains("theta_deg")
                                     ? number_list(config.at("theta_deg"), "theta_deg")
                                     : std::vector<double>{0.5, 20.0};
    std::vector<double> cs = config.contains("c")
                                 ? number_list(config.at("c"), "c")
                                 : std::vector<double>{10.0};
    std::vector<double> fgrid;
    if (config.contains("f")) {
      fgrid = number_list(config.at("f"), "f");
    } else {
      fgrid = default_f_grid();
      std::reverse(fgrid.begin(), fgrid.end());
    }

    const fs::path out_dir = resolve_out_dir(config, overrides);
    fs::create_directories(out_dir);

    std::string csv;
    int converged_points = 0, total_points = 0;
    for (double theta_deg : thetas)
      for (double c : cs) {
        const double theta = theta_deg * kPi / 180.0;
        const std::vector<TheoryPoint> curve = theory_curve(fgrid, c, theta);
        const std::string block = theory_csv(curve, c, theta);
        csv += csv.empty() ? block : block.substr(block.find('\n') + 1);
        for (const TheoryPoint& pt : curve) {
          ++total_points;
          if (pt.solution.converged) ++converged_points;
        }
      }

    write_text(out_dir / "theory_curve.csv", csv);
    if (overrides.gnuplot)
      write_text(out_dir / "theory_curve.gp",
                 theory_gnuplot_script("theory_curve.csv"));

    json resolved = config;
    resolved["output_dir"] = out_dir.string();
    json arr = json::array();
    for (double f : fgrid) arr.push_back(f);
    resolved["f"] = arr;
    echo_resolved_config(out_dir, resolved);

    std::cout << "wrote " << (out_dir / "theory_curve.csv").string() << " ("
              << converged_points << '/' << total_points
              << " points converged)\n";
    return converged_points == 0 ? 1 : 0;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}

int cmd_compare(const std::string& sim_csv, const std::string& theory_csv,
                double threshold, const CommonOverrides& overrides) {
  try {
    const auto sim_rows = read_csv(sim_csv);
    const auto theory_rows = read_csv(theory_csv);
    if (sim_rows.empty() || theory_rows.empty())
      throw std::runtime_error("empty input CSV");

    struct Delta {
      double theta, c, f, r_sim, r_theory;
      bool pass;
    };
    std::vector<Delta> deltas;
    for (const auto& sim : sim_rows) {
      const double theta = std::stod(sim.at("theta_deg"));
      const double alpha = std::stod(sim.at("alpha_t"));
      const double f = std::stod(sim.at("f"));
      const double r_sim = std::stod(sim.at("mean_R"));

      double best_dist = std::numeric_limits<double>::infinity();
      const std::map<std::string, std::string>* best = nullptr;
      for (const auto& th : theory_rows) {
        const double dist =
            std::abs(std::stod(th.at("theta_deg")) - theta) / 90.0 +
            std::abs(std::stod(th.at("c")) - alpha) / std::max(1.0, alpha) +
            std::abs(std::stod(th.at("f")) - f) / std::max(0.01, f);
        if (dist < best_dist) {
          best_dist = dist;
          best = &th;
        }
      }
      // Only pair up rows that actually share a grid point (nearest-key join).
      if (!best || best_dist > 0.25) continue;
      if (best->at("converged") != "true") continue;
      deltas.push_back({theta, std::stod(best->at("c")), f, r_sim,
                        std::stod(best->at("R")), false});
    }
    if (deltas.empty())
      throw std::runtime_error("no overlapping grid keys between the two CSVs");

    bool all_pass = true;
    std::ostringstream report;
    report << "theta_deg,c,f,R_sim,R_theory,delta,verdict\n";
    for (Delta& d : deltas) {
      const double delta = std::abs(d.r_theory - d.r_sim);
      d.pass = delta <= threshold;
      all_pass = all_pass && d.pass;
      report << fmt17(d.theta) << ',' << fmt17(d.c) << ',' << fmt17(d.f) << ','
             << fmt17(d.r_sim) << ',' << fmt17(d.r_theory) << ','
             << fmt17(delta) << ',' << (d.pass ? "pass" : "FAIL") << '\n';
    }
    report << "# threshold " << fmt17(threshold) << ", "
           << (all_pass ? "PASS" : "FAIL") << '\n';

    std::cout << report.str();
    if (overrides.out_dir) {
      write_text(fs::path(*overrides.out_dir) / "compare_report.csv",
                 report.str());
    }
    return all_pass ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}

int cmd_vinfo(const std::string& path, bool is_manifest,
              const CommonOverrides& overrides) {
  try {
    std::string text;
    if (!is_manifest) {
      text = report_text(v_information(parse_scores_file(path)));
    } else {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open manifest: " + path);
      std::string line;
      if (!std::getline(in, line) || line != "subset_id,path")
        throw std::runtime_error(path + ": expected header 'subset_id,path'");
      std::vector<std::pair<std::string, PredictiveScores>> candidates;
      const fs::path base = fs::path(path).parent_path();
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
          throw std::runtime_error(path + ": malformed row '" + line + "'");
        const std::string id = line.substr(0, comma);
        fs::path scores = line.substr(comma + 1);
        if (scores.is_relative()) scores = base / scores;
        candidates.emplace_back(id, parse_scores_file(scores.string()));
      }
      std::ostringstream out;
      out << "subset_id,score,n\n";
      for (const SubsetScore& s : rank_subsets(candidates))
        out << s.subset_id << ',' << fmt17(s.score) << ',' << s.n << '\n';
      text = out.str();
    }
    std::cout << text;
    if (overrides.out_dir)
      write_text(fs::path(*overrides.out_dir) /
                     (is_manifest ? "vinfo_ranking.csv" : "vinfo_report.txt"),
                 text);
    return 0;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}

int cmd_distill(const json& config, const CommonOverrides& overrides) {
  try {
    reject_unknown_keys(config,
                        {"base_seed", "output_dir", "threads", "input_dir",
                         "segmenter", "scorer", "k", "m", "out_side"},
                        "distill config");
    if (!config.contains("input_dir"))
      throw UsageError("distill config requires 'input_dir'");

    Segmenter segmenter = Segmenter::grid(2, 2);
    if (config.contains("segmenter")) {
      const json& seg = config.at("segmenter");
      reject_unknown_keys(seg, {"kind", "rows", "cols", "mask_dir"}, "segmenter");
      const std::string kind = seg.at("kind").get<std::string>();
      if (kind == "grid")
        segmenter = Segmenter::grid(get_or<int>(seg, "rows", 2),
                                    get_or<int>(seg, "cols", 2));
      else if (kind == "masks")
        segmenter = Segmenter::external_masks(seg.at("mask_dir").get<std::string>());
      else
        throw UsageError("segmenter kind must be 'grid' or 'masks'");
    }

    ScorerSpec scorer;
    if (config.contains("scorer")) {
      const json& sc = config.at("scorer");
      reject_unknown_keys(sc, {"kind", "rank", "side", "path"}, "scorer");
      const std::string kind = sc.at("kind").get<std::string>();
      if (kind == "pca") {
        scorer.kind = ScorerSpec::Kind::PcaRecon;
        scorer.rank = get_or<int>(sc, "rank", 8);
        scorer.side = get_or<int>(sc, "side", 16);
      } else if (kind == "injected") {
        scorer.kind = ScorerSpec::Kind::InjectedScores;
        scorer.scores_path = sc.at("path").get<std::string>();
      } else {
        throw UsageError("scorer kind must be 'pca' or 'injected'");
      }
    }

    SynthesisConfig synth;
    synth.k = get_or<int>(config, "k", 20);
    synth.m = get_or<int>(config, "m", 4);
    synth.out_side = get_or<int>(config, "out_side", 64);
    synth.seed = get_or<std::uint64_t>(config, "base_seed", 1);
    if (overrides.seed) synth.seed = *overrides.seed;
    try {
      synth.validate();
    } catch (const std::invalid_argument& err) {
      throw UsageError(err.what());
    }

    const fs::path out_dir = resolve_out_dir(config, overrides);
    const PipelineResult result =
        run_pipeline(config.at("input_dir").get<std::string>(), segmenter,
                     scorer, synth, out_dir.string());

    json resolved = config;
    resolved["output_dir"] = out_dir.string();
    resolved["base_seed"] = synth.seed;
    resolved["k"] = synth.k;
    resolved["m"] = synth.m;
    resolved["out_side"] = synth.out_side;
    echo_resolved_config(out_dir, resolved);

    for (const std::string& warning : result.warnings)
      std::cerr << "warning: " << warning << '\n';
    std::cout << "distilled " << result.output_ids.size() << " images to "
              << out_dir.string() << "\nstorage_ratio "
              << fmt17(result.storage_ratio) << "\ndiversity "
              << fmt17(result.diversity) << '\n';
    return 0;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}

}  // namespace prunekit::cli
