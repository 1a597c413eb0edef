#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace prunekit {

// Vector on the sphere of radius sqrt(n); plays the teacher / probe /
// student roles.
struct WeightVector {
  Eigen::VectorXd v;
  int n() const { return static_cast<int>(v.size()); }
};

// Row-per-sample dataset. Labels are +-1 and always teacher-consistent.
struct PerceptronDataset {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x;
  Eigen::VectorXd y;
  int redundancy = 1;
  std::uint64_t base_seed = 0;

  int p() const { return static_cast<int>(x.rows()); }
  int n() const { return static_cast<int>(x.cols()); }
};

using MarginTable = Eigen::VectorXd;

enum class PruneStrategy { Hard, Easy, Moderate, Random };
enum class ProbeMode { FixedAngle, TrainedOnFull };

std::string strategy_name(PruneStrategy s);
PruneStrategy strategy_from_name(const std::string& name);

struct TrialResult {
  double r;       // student-teacher overlap R
  double rho;     // student-probe overlap
  double e;       // arccos(R)/pi
  double f;
  double alpha_t;
  double theta_deg;
  std::uint64_t trial_seed;
};

WeightVector sample_teacher(int n, std::uint64_t seed);

// Probe at a fixed angle to the teacher: cos(theta)*teacher + sin(theta)*
// sqrt(n)*u with u a random unit vector orthogonal to the teacher.
WeightVector rotate_probe(const WeightVector& teacher, double theta_deg,
                          std::uint64_t seed);

PerceptronDataset generate_dataset(const WeightVector& teacher, int p,
                                   std::uint64_t seed);

// Keep p/k distinct samples (uniform without replacement), duplicate each k
// times, shuffle deterministically.
PerceptronDataset apply_redundancy(const PerceptronDataset& dataset, int k,
                                   std::uint64_t seed);

// Hard-margin separator: minimize ||w||^2 s.t. y (w.x) >= 1, solved by dual
// coordinate ascent with shrinking; result rescaled to norm sqrt(n).
WeightVector max_margin_train(const PerceptronDataset& dataset);

MarginTable compute_margins(const WeightVector& probe,
                            const PerceptronDataset& dataset);

// Retain round(f*p) samples (>= 1). Hard keeps the samples closest to the
// probe's decision boundary (smallest |margin|), Easy the farthest, Moderate
// a rank window centered at the median, Random a uniform subset. Ties break
// by original index; output preserves original order.
PerceptronDataset prune(const PerceptronDataset& dataset,
                        const MarginTable& margins, PruneStrategy strategy,
                        double f, std::uint64_t seed);

TrialResult run_trial(int n, double alpha_t, double f, double theta_deg,
                      PruneStrategy strategy, ProbeMode probe_mode,
                      int redundancy_k, std::uint64_t trial_seed);

struct SweepPoint {
  PruneStrategy strategy;
  double theta_deg;
  double alpha_t;
  int redundancy;
  double f;
};

struct SweepGrid {
  int n = 30;
  ProbeMode probe_mode = ProbeMode::FixedAngle;
  std::vector<PruneStrategy> strategies;
  std::vector<double> theta_degs;
  std::vector<double> alpha_ts;
  std::vector<int> redundancies;
  std::vector<double> fs;

  std::vector<SweepPoint> points() const;
};

// 20 log-spaced retention fractions in [0.01, 1], both endpoints included.
std::vector<double> default_f_grid();

struct AggregatedPoint {
  SweepPoint point;
  int trials;
  double mean_r, std_r, mean_e, std_e;
};

// Canonical per-trial seed: base_seed XOR stable hash of the point
// parameters and trial index.
std::uint64_t derive_trial_seed(std::uint64_t base_seed,
                                const SweepPoint& point, int trial);

std::vector<AggregatedPoint> run_sweep(const SweepGrid& grid,
                                       int trials_per_point,
                                       std::uint64_t base_seed,
                                       int threads = 0,
                                       std::vector<TrialResult>* raw = nullptr);

std::string sweep_csv(const std::vector<AggregatedPoint>& points);
std::string raw_trials_csv(const std::vector<TrialResult>& trials,
                           const std::vector<SweepPoint>& point_of_trial);

}  // namespace prunekit
