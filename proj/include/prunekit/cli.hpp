#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

namespace prunekit::cli {

// Flag values that override config keys.
struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool gnuplot = false;
};

// Exit codes: 0 success, 1 analysis failure, 2 usage/config error.
int cmd_sim(const nlohmann::json& config, const CommonOverrides& overrides);
int cmd_theory(const nlohmann::json& config, const CommonOverrides& overrides);
int cmd_compare(const std::string& sim_csv, const std::string& theory_csv,
                double threshold, const CommonOverrides& overrides);
int cmd_vinfo(const std::string& scores_path, bool is_manifest,
              const CommonOverrides& overrides);
int cmd_distill(const nlohmann::json& config, const CommonOverrides& overrides);

nlohmann::json load_config(const std::string& path);

}  // namespace prunekit::cli
