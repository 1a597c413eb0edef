#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

const std::string kCli = PRUNEKIT_CLI_PATH;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

}  // namespace

TEST_CASE("sim subcommand writes the sweep CSV and a resolved config") {
  const fs::path dir = scratch("prunekit_cli_sim");
  const fs::path cfg = dir / "sim.json";
  std::ofstream(cfg) << R"({"n": 20, "trials": 3, "alpha_t": [5.0],
                            "strategies": ["random"], "f": [1.0, 0.5],
                            "base_seed": 11})";

  const int rc = run("sim --config " + cfg.string() + " --out " +
                         (dir / "a").string() + " --threads 1",
                     dir / "log_a.txt");
  CHECK(rc == 0);
  const std::string csv = slurp(dir / "a" / "sim_sweep.csv");
  CHECK(first_line(csv) ==
        "strategy,theta_deg,alpha_t,redundancy,f,trials,mean_R,std_R,mean_e,std_e");
  int data_rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++data_rows;
  CHECK(data_rows == 3);  // header + 2 grid points
  CHECK(fs::exists(dir / "a" / "resolved_config.json"));

  // worker-thread count must not change any output byte
  CHECK(run("sim --config " + cfg.string() + " --out " + (dir / "b").string() +
                " --threads 2",
            dir / "log_b.txt") == 0);
  CHECK(slurp(dir / "b" / "sim_sweep.csv") == csv);

  // the echoed config reproduces the run exactly
  CHECK(run("sim --config " + (dir / "a" / "resolved_config.json").string() +
                " --out " + (dir / "c").string(),
            dir / "log_c.txt") == 0);
  CHECK(slurp(dir / "c" / "sim_sweep.csv") == csv);
  fs::remove_all(dir);
}

TEST_CASE("config errors exit with the usage code") {
  const fs::path dir = scratch("prunekit_cli_badcfg");
  const fs::path cfg = dir / "bad.json";
  std::ofstream(cfg) << R"({"n": 20, "banana": 1})";
  CHECK(run("sim --config " + cfg.string() + " --out " + (dir / "o").string(),
            dir / "log.txt") == 2);
  CHECK(slurp(dir / "log.txt").find("banana") != std::string::npos);

  std::ofstream(cfg) << "{ not json";
  CHECK(run("sim --config " + cfg.string(), dir / "log2.txt") == 2);

  std::ofstream(cfg) << R"({"m": 3, "k": 3, "input_dir": "nowhere"})";
  CHECK(run("distill --config " + cfg.string(), dir / "log3.txt") == 2);
  fs::remove_all(dir);
}

TEST_CASE("theory subcommand solves a single point") {
  const fs::path dir = scratch("prunekit_cli_theory");
  const fs::path cfg = dir / "theory.json";
  std::ofstream(cfg) << R"({"theta_deg": [20.0], "c": [10.0], "f": [1.0]})";
  CHECK(run("theory --config " + cfg.string() + " --out " + dir.string(),
            dir / "log.txt") == 0);
  const std::string csv = slurp(dir / "theory_curve.csv");
  CHECK(first_line(csv) == "theta_deg,c,f,R,rho,m,e,converged,residual_norm");
  std::istringstream rows(csv.substr(csv.find('\n') + 1));
  std::string theta, c, f, r;
  std::getline(rows, theta, ',');
  std::getline(rows, c, ',');
  std::getline(rows, f, ',');
  std::getline(rows, r, ',');
  CHECK(std::stod(f) == 1.0);
  CHECK(std::stod(r) == doctest::Approx(0.988).epsilon(0.01));
  fs::remove_all(dir);
}

TEST_CASE("compare subcommand joins on grid keys and applies the threshold") {
  const fs::path dir = scratch("prunekit_cli_compare");
  const fs::path sim = dir / "sim_sweep.csv";
  const fs::path theory = dir / "theory_curve.csv";
  std::ofstream(sim)
      << "strategy,theta_deg,alpha_t,redundancy,f,trials,mean_R,std_R,mean_e,std_e\n"
         "hard,20,10,1,0.5,50,0.47,0.01,0.33,0.01\n";
  std::ofstream(theory)
      << "theta_deg,c,f,R,rho,m,e,converged,residual_norm\n"
         "20,10,0.5,0.47,0.5,0.3,0.34,true,1e-09\n";
  CHECK(run("compare --sim " + sim.string() + " --theory " + theory.string(),
            dir / "log_pass.txt") == 0);
  CHECK(slurp(dir / "log_pass.txt").find("pass") != std::string::npos);

  std::ofstream(theory)
      << "theta_deg,c,f,R,rho,m,e,converged,residual_norm\n"
         "20,10,0.5,0.60,0.5,0.3,0.30,true,1e-09\n";
  CHECK(run("compare --sim " + sim.string() + " --theory " + theory.string() +
                " --out " + dir.string(),
            dir / "log_fail.txt") == 1);
  CHECK(slurp(dir / "compare_report.csv").find("FAIL") != std::string::npos);

  // unconverged theory rows never pair, and no pairs is an input error
  std::ofstream(theory)
      << "theta_deg,c,f,R,rho,m,e,converged,residual_norm\n"
         "20,10,0.5,0.47,0.5,0.3,0.34,false,1\n";
  CHECK(run("compare --sim " + sim.string() + " --theory " + theory.string(),
            dir / "log_skip.txt") == 2);
  fs::remove_all(dir);
}

TEST_CASE("vinfo subcommand reports scores and ranks manifests") {
  const fs::path dir = scratch("prunekit_cli_vinfo");
  const fs::path scores = dir / "scores.csv";
  std::ofstream(scores) << "example_id,label_id,logp\n"
                           "e0,0,-0.6931471805599453\n"
                           "e1,1,-0.6931471805599453\n";
  CHECK(run("vinfo --scores " + scores.string() + " --out " + dir.string(),
            dir / "log.txt") == 0);
  const std::string report = slurp(dir / "vinfo_report.txt");
  CHECK(report.find("i_v") != std::string::npos);

  const fs::path better = dir / "better.csv";
  std::ofstream(better) << "example_id,label_id,logp\n"
                           "e0,0,-0.1\n"
                           "e1,1,-0.1\n";
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream(manifest) << "subset_id,path\n"
                             "uniform,scores.csv\n"
                             "better,better.csv\n";
  CHECK(run("vinfo --manifest " + manifest.string() + " --out " + dir.string(),
            dir / "log_rank.txt") == 0);
  const std::string ranking = slurp(dir / "vinfo_ranking.csv");
  CHECK(first_line(ranking) == "subset_id,score,n");
  CHECK(ranking.find("better") < ranking.find("uniform"));

  // exactly one input selector
  CHECK(run("vinfo", dir / "log_none.txt") == 2);
  CHECK(run("vinfo --scores " + scores.string() + " --manifest " +
                manifest.string(),
            dir / "log_both.txt") == 2);
  fs::remove_all(dir);
}
