#include "prunekit/perceptron.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "prunekit/errors.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {
namespace {

constexpr double kPi = 3.141592653589793238462643383279;

// Derive independent per-stage seeds from one trial seed.
std::uint64_t stage_seed(std::uint64_t trial_seed, std::uint64_t stage) {
  std::uint64_t s = trial_seed + 0x632be59bd9b4e019ULL * (stage + 1);
  return splitmix64(s);
}

Eigen::VectorXd gaussian_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Exact active-set refinement for the hard-margin dual. Starting from the
// rows the coordinate-ascent pass left active, repeatedly solve the
// equality-constrained system Z_S w = 1 on the support S (minimum-norm via
// complete orthogonal decomposition, which tolerates duplicated rows),
// dropping negative multipliers and adding the worst violated constraint.
// Returns true once every multiplier is nonnegative and no constraint is
// violated beyond tol; ill-conditioned corner cases return false and leave
// alpha/w untouched so coordinate ascent can continue.
bool refine_support(const RowMatrix& z, Eigen::VectorXd& alpha,
                    Eigen::VectorXd& w, double tol) {
  const int p = static_cast<int>(z.rows());
  std::vector<int> support;
  for (int i = 0; i < p; ++i)
    if (alpha[i] > 0.0) support.push_back(i);
  if (support.empty()) return false;

  for (int round = 0; round < 60; ++round) {
    const int s = static_cast<int>(support.size());
    Eigen::MatrixXd zs(s, z.cols());
    for (int k = 0; k < s; ++k) zs.row(k) = z.row(support[k]);

    // Minimum-norm primal solve of Z_S w = 1 (better conditioned than the
    // Gram system), polished by iterative refinement, then the matching
    // least-squares multipliers for the sign checks.
    const auto cod = zs.completeOrthogonalDecomposition();
    Eigen::VectorXd w_new = cod.solve(Eigen::VectorXd::Ones(s));
    for (int polish = 0; polish < 3; ++polish) {
      const Eigen::VectorXd residual = Eigen::VectorXd::Ones(s) - zs * w_new;
      if (residual.cwiseAbs().maxCoeff() < 1e-13) break;
      w_new += cod.solve(residual);
    }
    const Eigen::VectorXd a =
        zs.transpose().completeOrthogonalDecomposition().solve(w_new);

    int drop = -1;
    double most_negative = -1e-12;
    for (int k = 0; k < s; ++k)
      if (a[k] < most_negative) {
        most_negative = a[k];
        drop = k;
      }
    if (drop >= 0) {
      support.erase(support.begin() + drop);
      if (support.empty()) return false;
      continue;
    }

    const Eigen::VectorXd margins = z * w_new;
    int add = -1;
    double worst = tol;
    for (int i = 0; i < p; ++i) {
      const double viol = 1.0 - margins[i];
      if (viol > worst) {
        worst = viol;
        add = i;
      }
    }
    if (add < 0) {
      alpha.setZero();
      for (int k = 0; k < s; ++k) alpha[support[k]] = a[k];
      w = w_new;
      return true;
    }
    const auto present = std::find(support.begin(), support.end(), add);
    if (present != support.end()) {
      // The equality system is inconsistent (support larger than the true
      // vertex): evict the weakest support row and re-solve.
      int weakest = -1;
      double smallest = std::numeric_limits<double>::infinity();
      for (int k = 0; k < s; ++k) {
        if (support[k] == add) continue;
        if (a[k] < smallest) {
          smallest = a[k];
          weakest = k;
        }
      }
      if (weakest < 0) return false;
      support.erase(support.begin() + weakest);
      continue;
    }
    support.push_back(add);
  }
  return false;
}

}  // namespace

std::string strategy_name(PruneStrategy s) {
  switch (s) {
    case PruneStrategy::Hard: return "hard";
    case PruneStrategy::Easy: return "easy";
    case PruneStrategy::Moderate: return "moderate";
    case PruneStrategy::Random: return "random";
  }
  throw std::logic_error("unknown strategy");
}

PruneStrategy strategy_from_name(const std::string& name) {
  if (name == "hard") return PruneStrategy::Hard;
  if (name == "easy") return PruneStrategy::Easy;
  if (name == "moderate") return PruneStrategy::Moderate;
  if (name == "random") return PruneStrategy::Random;
  throw std::invalid_argument("unknown pruning strategy: " + name);
}

WeightVector sample_teacher(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("dimension must be >= 2");
  Rng rng(seed);
  Eigen::VectorXd v = gaussian_vector(n, rng);
  v *= std::sqrt(static_cast<double>(n)) / v.norm();
  return {std::move(v)};
}

WeightVector rotate_probe(const WeightVector& teacher, double theta_deg,
                          std::uint64_t seed) {
  if (theta_deg < 0.0 || theta_deg >= 90.0)
    throw std::invalid_argument("probe angle must lie in [0, 90) degrees");
  if (theta_deg == 0.0) return teacher;
  const int n = teacher.n();
  const double root_n = std::sqrt(static_cast<double>(n));
  Rng rng(seed);
  Eigen::VectorXd u = gaussian_vector(n, rng);
  u -= (u.dot(teacher.v) / teacher.v.squaredNorm()) * teacher.v;
  u /= u.norm();
  const double theta = theta_deg * kPi / 180.0;
  Eigen::VectorXd v = std::cos(theta) * teacher.v + std::sin(theta) * root_n * u;
  return {std::move(v)};
}

PerceptronDataset generate_dataset(const WeightVector& teacher, int p,
                                   std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("sample count must be >= 1");
  const int n = teacher.n();
  PerceptronDataset d;
  d.x.resize(p, n);
  d.y.resize(p);
  d.base_seed = seed;
  Rng rng(seed);
  Eigen::VectorXd x(n);
  for (int mu = 0; mu < p; ++mu) {
    double g;
    do {
      for (int i = 0; i < n; ++i) x[i] = rng.gaussian();
      g = teacher.v.dot(x);
    } while (std::abs(g) < 1e-12);  // sign undefined on the boundary
    d.x.row(mu) = x;
    d.y[mu] = g > 0 ? 1.0 : -1.0;
  }
  return d;
}

PerceptronDataset apply_redundancy(const PerceptronDataset& dataset, int k,
                                   std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("redundancy factor must be >= 1");
  if (k == 1) return dataset;
  const int p = dataset.p();
  if (p % k != 0)
    throw std::invalid_argument("sample count not divisible by redundancy factor");
  const int distinct = p / k;

  Rng rng(seed);
  // Uniform subset without replacement via partial Fisher-Yates.
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < distinct; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(p - i)));
    std::swap(perm[i], perm[j]);
  }

  std::vector<int> order(p);
  for (int i = 0; i < p; ++i) order[i] = perm[i % distinct];
  for (int i = p - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }

  PerceptronDataset out;
  out.x.resize(p, dataset.n());
  out.y.resize(p);
  out.redundancy = k;
  out.base_seed = dataset.base_seed;
  for (int i = 0; i < p; ++i) {
    out.x.row(i) = dataset.x.row(order[i]);
    out.y[i] = dataset.y[order[i]];
  }
  return out;
}

WeightVector max_margin_train(const PerceptronDataset& dataset) {
  const int p = dataset.p();
  const int n = dataset.n();
  const double tol = 1e-6;
  const long max_sweeps = 40000000;

  // Dual coordinate ascent on min ||w||^2 s.t. z_i . w >= 1 with
  // z_i = y_i x_i; w = sum alpha_i z_i, alpha >= 0. Most alphas end at zero,
  // so inactive rows are shrunk from the sweep and the optimality check is
  // re-run over all rows before accepting convergence.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z =
      dataset.x.array().colwise() * dataset.y.array();
  Eigen::VectorXd sq = z.rowwise().squaredNorm();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);

  std::vector<int> active(p);
  std::iota(active.begin(), active.end(), 0);

  long next_refine = 4096;
  long refine_interval = 4096;
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_viol = 0.0;
    for (int i : active) {
      const double gi = 1.0 - z.row(i).dot(w);
      const double viol = alpha[i] > 0.0 ? std::abs(gi) : std::max(gi, 0.0);
      max_viol = std::max(max_viol, viol);
      const double next = std::max(0.0, alpha[i] + gi / sq[i]);
      const double delta = next - alpha[i];
      if (delta != 0.0) {
        alpha[i] = next;
        w += delta * z.row(i).transpose();
      }
    }

    if (max_viol < tol) {
      if (static_cast<int>(active.size()) == p) break;
      // Active set optimal: verify the shrunk rows before declaring victory.
      active.clear();
      double global_viol = 0.0;
      for (int i = 0; i < p; ++i) {
        const double gi = 1.0 - z.row(i).dot(w);
        if (alpha[i] > 0.0 || gi > -0.1) active.push_back(i);
        global_viol = std::max(global_viol,
                               alpha[i] > 0.0 ? std::abs(gi) : std::max(gi, 0.0));
      }
      if (global_viol < tol) break;
    } else if (sweep % 8 == 7) {
      // Shrink rows that are far on the correct side and inactive.
      std::vector<int> next_active;
      next_active.reserve(active.size());
      for (int i : active) {
        const double gi = 1.0 - z.row(i).dot(w);
        if (alpha[i] > 0.0 || gi > -0.1) next_active.push_back(i);
      }
      active = std::move(next_active);
      if (active.empty()) {
        active.resize(p);
        std::iota(active.begin(), active.end(), 0);
      }
    }

    // Coordinate ascent converges slowly on ill-conditioned data (many
    // near-boundary samples); periodically hand the surviving support set to
    // the exact active-set solve, backing off when it cannot finish either.
    if (sweep >= next_refine) {
      if (refine_support(z, alpha, w, tol)) break;
      next_refine += refine_interval;
      refine_interval *= 2;
    }

    if (sweep == max_sweeps - 1)
      throw InfeasibleError("max-margin training did not reach KKT tolerance; "
                            "data may be non-separable");
  }

  const double min_margin = (z * w).minCoeff();
  if (!(min_margin > 0.0))
    throw InfeasibleError("max-margin training produced a non-separating vector");

  w *= std::sqrt(static_cast<double>(n)) / w.norm();
  return {std::move(w)};
}

MarginTable compute_margins(const WeightVector& probe,
                            const PerceptronDataset& dataset) {
  if (probe.n() != dataset.n())
    throw std::invalid_argument("probe dimension does not match dataset");
  return (dataset.x * probe.v).cwiseProduct(dataset.y);
}

PerceptronDataset prune(const PerceptronDataset& dataset,
                        const MarginTable& margins, PruneStrategy strategy,
                        double f, std::uint64_t seed) {
  if (!(f > 0.0) || f > 1.0)
    throw std::invalid_argument("retention fraction must lie in (0, 1]");
  const int p = dataset.p();
  if (margins.size() != p)
    throw std::invalid_argument("margin table size does not match dataset");
  const int keep = std::max(1, static_cast<int>(std::lround(f * p)));

  std::vector<int> chosen;
  if (strategy == PruneStrategy::Random) {
    Rng rng(seed);
    std::vector<int> perm(p);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < keep; ++i) {
      const int j =
          i + static_cast<int>(rng.below(static_cast<std::uint64_t>(p - i)));
      std::swap(perm[i], perm[j]);
    }
    chosen.assign(perm.begin(), perm.begin() + keep);
  } else {
    // Difficulty is distance to the probe's decision boundary, i.e. |margin|.
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(margins[a]) < std::abs(margins[b]);
    });
    int start = 0;
    switch (strategy) {
      case PruneStrategy::Hard: start = 0; break;
      case PruneStrategy::Easy: start = p - keep; break;
      case PruneStrategy::Moderate: start = (p - keep) / 2; break;
      default: break;
    }
    chosen.assign(order.begin() + start, order.begin() + start + keep);
  }

  std::sort(chosen.begin(), chosen.end());
  PerceptronDataset out;
  out.x.resize(keep, dataset.n());
  out.y.resize(keep);
  out.redundancy = dataset.redundancy;
  out.base_seed = dataset.base_seed;
  for (int i = 0; i < keep; ++i) {
    out.x.row(i) = dataset.x.row(chosen[i]);
    out.y[i] = dataset.y[chosen[i]];
  }
  return out;
}

TrialResult run_trial(int n, double alpha_t, double f, double theta_deg,
                      PruneStrategy strategy, ProbeMode probe_mode,
                      int redundancy_k, std::uint64_t trial_seed) {
  const int p = static_cast<int>(std::lround(alpha_t * n));
  const WeightVector teacher = sample_teacher(n, stage_seed(trial_seed, 0));

  PerceptronDataset data =
      generate_dataset(teacher, p, stage_seed(trial_seed, 1));
  if (redundancy_k > 1)
    data = apply_redundancy(data, redundancy_k, stage_seed(trial_seed, 2));

  WeightVector probe;
  double theta_eff = theta_deg;
  if (probe_mode == ProbeMode::FixedAngle) {
    probe = rotate_probe(teacher, theta_deg, stage_seed(trial_seed, 3));
  } else {
    probe = max_margin_train(data);
    const double ct = probe.v.dot(teacher.v) / (probe.v.norm() * teacher.v.norm());
    theta_eff = std::acos(std::clamp(ct, -1.0, 1.0)) * 180.0 / kPi;
  }

  const MarginTable margins = compute_margins(probe, data);
  const PerceptronDataset subset =
      prune(data, margins, strategy, f, stage_seed(trial_seed, 4));
  const WeightVector student = max_margin_train(subset);

  TrialResult res;
  res.r = std::clamp(
      student.v.dot(teacher.v) / (student.v.norm() * teacher.v.norm()), -1.0, 1.0);
  res.rho = std::clamp(
      student.v.dot(probe.v) / (student.v.norm() * probe.v.norm()), -1.0, 1.0);
  res.e = std::acos(res.r) / kPi;
  res.f = f;
  res.alpha_t = alpha_t;
  res.theta_deg = theta_eff;
  res.trial_seed = trial_seed;
  return res;
}

std::vector<SweepPoint> SweepGrid::points() const {
  std::vector<SweepPoint> pts;
  for (PruneStrategy s : strategies)
    for (double th : theta_degs)
      for (double a : alpha_ts)
        for (int k : redundancies)
          for (double f : fs) pts.push_back({s, th, a, k, f});
  return pts;
}

std::vector<double> default_f_grid() {
  std::vector<double> fs(20);
  for (int i = 0; i < 20; ++i)
    fs[i] = std::pow(10.0, -2.0 + 2.0 * i / 19.0);
  fs.front() = 0.01;
  fs.back() = 1.0;
  return fs;
}

std::uint64_t derive_trial_seed(std::uint64_t base_seed,
                                const SweepPoint& point, int trial) {
  std::string key = strategy_name(point.strategy);
  key += '|';
  key += fmt17(point.theta_deg);
  key += '|';
  key += fmt17(point.alpha_t);
  key += '|';
  key += std::to_string(point.redundancy);
  key += '|';
  key += fmt17(point.f);
  key += '|';
  key += std::to_string(trial);
  return base_seed ^ stable_hash(key);
}

namespace {

bool point_less(const SweepPoint& a, const SweepPoint& b) {
  const auto ka = std::make_tuple(strategy_name(a.strategy), a.theta_deg,
                                  a.alpha_t, a.redundancy, a.f);
  const auto kb = std::make_tuple(strategy_name(b.strategy), b.theta_deg,
                                  b.alpha_t, b.redundancy, b.f);
  return ka < kb;
}

}  // namespace

std::vector<AggregatedPoint> run_sweep(const SweepGrid& grid,
                                       int trials_per_point,
                                       std::uint64_t base_seed, int threads,
                                       std::vector<TrialResult>* raw) {
  if (trials_per_point < 1)
    throw std::invalid_argument("trials_per_point must be >= 1");
  std::vector<SweepPoint> pts = grid.points();
  if (pts.empty()) throw std::invalid_argument("sweep grid is empty");
  std::sort(pts.begin(), pts.end(), point_less);

  const std::size_t total = pts.size() * static_cast<std::size_t>(trials_per_point);
  std::vector<TrialResult> results(total);

  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(total)));

  // Each task index maps to a fixed (point, trial) slot, so the result array
  // is identical for any thread count or scheduling order.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const SweepPoint& pt = pts[task / trials_per_point];
      const int trial = static_cast<int>(task % trials_per_point);
      try {
        results[task] =
            run_trial(grid.n, pt.alpha_t, pt.f, pt.theta_deg, pt.strategy,
                      grid.probe_mode, pt.redundancy,
                      derive_trial_seed(base_seed, pt, trial));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(total);
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<AggregatedPoint> agg(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double sr = 0, sr2 = 0, se = 0, se2 = 0;
    for (int t = 0; t < trials_per_point; ++t) {
      const TrialResult& res = results[i * trials_per_point + t];
      sr += res.r;
      sr2 += res.r * res.r;
      se += res.e;
      se2 += res.e * res.e;
    }
    const double inv = 1.0 / trials_per_point;
    AggregatedPoint a;
    a.point = pts[i];
    a.trials = trials_per_point;
    a.mean_r = sr * inv;
    a.std_r = std::sqrt(std::max(0.0, sr2 * inv - a.mean_r * a.mean_r));
    a.mean_e = se * inv;
    a.std_e = std::sqrt(std::max(0.0, se2 * inv - a.mean_e * a.mean_e));
    agg[i] = a;
  }
  if (raw) *raw = std::move(results);
  return agg;
}

std::string sweep_csv(const std::vector<AggregatedPoint>& points) {
  std::ostringstream out;
  out << "strategy,theta_deg,alpha_t,redundancy,f,trials,mean_R,std_R,mean_e,std_e\n";
  for (const AggregatedPoint& a : points) {
    out << strategy_name(a.point.strategy) << ',' << fmt17(a.point.theta_deg)
        << ',' << fmt17(a.point.alpha_t) << ',' << a.point.redundancy << ','
        << fmt17(a.point.f) << ',' << a.trials << ',' << fmt17(a.mean_r) << ','
        << fmt17(a.std_r) << ',' << fmt17(a.mean_e) << ',' << fmt17(a.std_e)
        << '\n';
  }
  return out.str();
}

std::string raw_trials_csv(const std::vector<TrialResult>& trials,
                           const std::vector<SweepPoint>& point_of_trial) {
  std::ostringstream out;
  out << "trial_seed,strategy,theta_deg,alpha_t,redundancy,f,R,rho,e\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialResult& t = trials[i];
    const SweepPoint& pt = point_of_trial[i];
    out << t.trial_seed << ',' << strategy_name(pt.strategy) << ','
        << fmt17(pt.theta_deg) << ',' << fmt17(pt.alpha_t) << ','
        << pt.redundancy << ',' << fmt17(pt.f) << ',' << fmt17(t.r) << ','
        << fmt17(t.rho) << ',' << fmt17(t.e) << '\n';
  }
  return out.str();
}

}  // namespace prunekit
