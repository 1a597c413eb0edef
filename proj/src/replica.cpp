#include "prunekit/replica.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "prunekit/errors.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {
namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Gauss-Legendre nodes/weights on (-1, 1) by Newton iteration on the
// three-term recurrence.
void legendre_rule(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double xi = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = xi;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
      const double dx = p1 / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    x[i] = -xi;
    x[n - 1 - i] = xi;
    const double wi = 2.0 / ((1.0 - xi * xi) * dp * dp);
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
}

void append_segment(double lo, double hi, const std::vector<double>& gx,
                    const std::vector<double>& gw, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  if (!(hi > lo)) return;
  const double h = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  for (std::size_t i = 0; i < gx.size(); ++i) {
    nodes.push_back(mid + h * gx[i]);
    weights.push_back(h * gw[i]);
  }
}

// Fixed composite quadrature for the saddle-equation expectations over the
// retained margin z and the orthogonal teacher field u > 0. The z grid is
// split at +-tan(theta) and +-5 tan(theta) because the integrands develop
// structure at that scale when the probe is nearly aligned.
struct SaddleQuad {
  std::vector<double> z, wz;              // wz already carries the z density
  std::vector<std::vector<double>> u, wu; // per z node; wu carries 2 N(u; z cos, sin^2)
  double s, ct;

  SaddleQuad(double f, double theta) {
    s = std::sin(theta);
    ct = std::cos(theta);
    const double zhi = f < 1.0 ? inv_gauss_tail((1.0 - f) / 2.0) : 9.0;
    const double t = std::min(std::abs(std::tan(theta)), zhi / 4.0);

    std::vector<double> gx, gw;
    legendre_rule(32, gx, gw);
    std::set<double> cut_set{-zhi, zhi};
    for (double c : {-5.0 * t, -t, 0.0, t, 5.0 * t})
      if (c > -zhi && c < zhi) cut_set.insert(c);
    std::vector<double> cuts(cut_set.begin(), cut_set.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      append_segment(cuts[i], cuts[i + 1], gx, gw, z, wz);
    const double norm = f < 1.0 ? f : 1.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      wz[i] *= normal_pdf(z[i]) / norm;

    std::vector<double> ux, uw;
    legendre_rule(48, ux, uw);
    u.resize(z.size());
    wu.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double mu = z[i] * ct;
      const double hi = std::max(mu, 0.0) + 9.0 * s;
      if (mu > 0.0 && mu < hi) {
        append_segment(0.0, mu, ux, uw, u[i], wu[i]);
        append_segment(mu, hi, ux, uw, u[i], wu[i]);
      } else {
        append_segment(0.0, hi, ux, uw, u[i], wu[i]);
      }
      for (std::size_t j = 0; j < u[i].size(); ++j)
        wu[i][j] *= 2.0 * normal_pdf((u[i][j] - mu) / s) / s;
    }
  }

  // Residuals of the three equations in the stable parametrization
  // (a, rho, m), where R = rho cos(theta) + a sin(theta) sqrt(1 - rho^2).
  // Returns the raw (unscaled) LHS - RHS values.
  std::array<double, 3> residuals(double a, double rho, double m, double f,
                                  double c) const {
    const double q = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double sig =
        std::max(q * std::sqrt(std::max(0.0, 1.0 - a * a)), 1e-12);
    const double c1 = a * q / s;
    const double c2 = rho - a * ct * q / s;
    const double s2 = s * s;

    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double zi = z[i];
      double h1 = 0.0, h2 = 0.0, h3 = 0.0;
      const std::vector<double>& ui = u[i];
      const std::vector<double>& wi = wu[i];
      for (std::size_t j = 0; j < ui.size(); ++j) {
        const double uj = ui[j];
        const double A = m - c1 * uj - c2 * zi;
        const double b = A / sig;
        const double Pb = normal_cdf(b);
        const double pb = normal_pdf(b);
        const double J1 = A * Pb + sig * pb;
        const double J2 = (A * A + sig * sig) * Pb + A * sig * pb;
        const double w = wi[j];
        h1 += w * ((uj - zi * ct) / s2 * J1 + c1 * Pb);
        h3 += w * ((zi - uj * ct) / s2 * J1 + c2 * Pb);
        h2 += w * J2;
      }
      g1 += wz[i] * h1;
      g2 += wz[i] * h2;
      g3 += wz[i] * h3;
    }
    const double cf = c * f;
    return {c1 - cf * g1, sig * sig - cf * g2, c2 - cf * g3};
  }
};

double overlap_r(double a, double rho, double theta) {
  return rho * std::cos(theta) +
         a * std::sin(theta) * std::sqrt(std::max(0.0, 1.0 - rho * rho));
}

}  // namespace

void ReplicaParams::validate() const {
  if (!(f > 0.0) || f > 1.0)
    throw std::invalid_argument("retention fraction must lie in (0, 1]");
  if (!(c > 0.0)) throw std::invalid_argument("data ratio c must be positive");
  if (!(theta_rad > 0.0) || !(theta_rad < kPi / 2.0))
    throw std::invalid_argument(
        "probe angle must lie strictly inside (0, pi/2); use a small positive "
        "angle as the aligned-probe proxy");
}

PrunedField PrunedField::from_fraction(double f) {
  if (!(f > 0.0) || f > 1.0)
    throw std::invalid_argument("retention fraction must lie in (0, 1]");
  PrunedField field;
  field.f = f;
  field.tau =
      f < 1.0 ? inv_gauss_tail((1.0 - f) / 2.0) : std::numeric_limits<double>::infinity();
  return field;
}

double gauss_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double inv_gauss_tail(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw DomainError("inv_gauss_tail requires p in (0, 1)");
  return kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double pruned_average(const std::function<double(double)>& g,
                      const PrunedField& field) {
  using boost::math::quadrature::gauss_kronrod;
  const auto integrand = [&](double z) { return g(z) * normal_pdf(z); };
  double err = 0.0;
  double value;
  if (field.f < 1.0) {
    value = gauss_kronrod<double, 31>::integrate(integrand, -field.tau,
                                                 field.tau, 15, 1e-9, &err);
    value /= field.f;
    err /= field.f;
  } else {
    value = gauss_kronrod<double, 31>::integrate(
        integrand, -std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::infinity(), 15, 1e-9, &err);
  }
  if (err > 1e-9 * std::max(std::abs(value), 1.0))
    throw AccuracyError("pruned_average quadrature did not reach tolerance",
                        value);
  return value;
}

namespace {

// Conversion between the public unknowns (r, rho, m) and the internal
// parametrization (a, rho, m) that keeps iterates inside Psi^2 > 0.
double a_from_r(double r, double rho, double theta) {
  const double q = std::sqrt(std::max(1e-300, 1.0 - rho * rho));
  return (r - rho * std::cos(theta)) / (std::sin(theta) * q);
}

std::array<double, 3> raw_residuals(const SaddleQuad& quad, double a,
                                    double rho, double m, double f, double c) {
  return quad.residuals(a, rho, m, f, c);
}

// Residual vector scaled for conditioning: the first and third equations
// carry a 1/sin(theta) factor that would otherwise dominate the norm at
// small angles.
Eigen::Vector3d scaled_residuals(const SaddleQuad& quad, double a, double rho,
                                 double m, double f, double c, double s) {
  const std::array<double, 3> r = raw_residuals(quad, a, rho, m, f, c);
  return Eigen::Vector3d(r[0] * s, r[1], r[2] * s);
}

constexpr double kBox = 0.999999;

void project(Eigen::Vector3d& x) {
  x[0] = std::clamp(x[0], -kBox, kBox);
  x[1] = std::clamp(x[1], -kBox, kBox);
  x[2] = std::clamp(x[2], -50.0, 50.0);
}

}  // namespace

std::array<double, 3> saddle_residuals(double r, double rho, double m,
                                       const ReplicaParams& params) {
  params.validate();
  const double s = std::sin(params.theta_rad);
  const double ct = std::cos(params.theta_rad);
  const double psi2 = s * s - r * r - rho * rho + 2.0 * r * rho * ct;
  if (!(psi2 > 0.0))
    throw DomainError("(r, rho) outside the physical region Psi^2 > 0");
  const SaddleQuad quad(params.f, params.theta_rad);
  return raw_residuals(quad, a_from_r(r, rho, params.theta_rad), rho, m,
                       params.f, params.c);
}

ReplicaSolution solve(const ReplicaParams& params,
                      std::optional<std::array<double, 3>> init) {
  params.validate();
  const double theta = params.theta_rad;
  const double s = std::sin(theta);
  const SaddleQuad quad(params.f, theta);

  const auto eval = [&](const Eigen::Vector3d& x) {
    return scaled_residuals(quad, x[0], x[1], x[2], params.f, params.c, s);
  };

  // Starting points: caller-provided, a generic default (the classic
  // (0.5 cos(theta)+0.4, 0.8, 0.5) guess mapped into the internal box), and
  // perturbations thereof; later restarts draw from a coarse grid search.
  std::vector<Eigen::Vector3d> starts;
  if (init) {
    const auto& [r0, rho0, m0] = *init;
    Eigen::Vector3d x(a_from_r(r0, rho0, theta), rho0, m0);
    project(x);
    starts.push_back(x);
  }
  {
    Eigen::Vector3d x(a_from_r(0.5 * std::cos(theta) + 0.4, 0.8, theta), 0.8, 0.5);
    project(x);
    starts.push_back(x);
    starts.push_back(Eigen::Vector3d(0.05, 0.9, 0.3));
    starts.push_back(Eigen::Vector3d(0.3, 0.5, 0.8));
  }

  ReplicaSolution best;
  best.residual_norm = std::numeric_limits<double>::infinity();
  int total_iters = 0;

  const auto record = [&](const Eigen::Vector3d& x) {
    const std::array<double, 3> raw =
        raw_residuals(quad, x[0], x[1], x[2], params.f, params.c);
    const double norm = std::max({std::abs(raw[0]), std::abs(raw[1]), std::abs(raw[2])});
    if (norm < best.residual_norm) {
      best.r = overlap_r(x[0], x[1], theta);
      best.rho = x[1];
      best.m = x[2];
      best.residual_norm = norm;
      best.converged = norm <= 1e-8;
    }
  };

  for (int restart = 0; restart < 8 && !best.converged; ++restart) {
    Eigen::Vector3d x;
    if (restart < static_cast<int>(starts.size())) {
      x = starts[restart];
    } else if (restart == static_cast<int>(starts.size())) {
      // Coarse grid search over the physical box.
      double best_norm = std::numeric_limits<double>::infinity();
      for (double a = -0.95; a <= 0.96; a += 0.2375)
        for (double rho : {-0.5, 0.0, 0.3, 0.6, 0.8, 0.9, 0.97})
          for (double m : {0.05, 0.2, 0.5, 1.0, 2.0, 4.0}) {
            const double norm = eval(Eigen::Vector3d(a, rho, m)).norm();
            if (norm < best_norm) {
              best_norm = norm;
              x = Eigen::Vector3d(a, rho, m);
            }
          }
    } else {
      // Deterministic jitter around the best iterate so far.
      Rng rng(0x5eedULL + restart);
      x = Eigen::Vector3d(a_from_r(best.r, best.rho, theta), best.rho, best.m);
      for (int i = 0; i < 3; ++i) x[i] += 0.15 * rng.gaussian();
      project(x);
    }

    Eigen::Vector3d fx = eval(x);
    for (int iter = 0; iter < 200; ++iter, ++total_iters) {
      record(x);
      if (best.converged) break;

      // Forward-difference Jacobian, relative step 1e-6.
      Eigen::Matrix3d jac;
      for (int j = 0; j < 3; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        Eigen::Vector3d xh = x;
        xh[j] = std::min(x[j] + h, j < 2 ? kBox : 50.0);
        const double hh = xh[j] - x[j];
        if (hh == 0.0) {
          xh[j] = x[j] - h;
        }
        jac.col(j) = (eval(xh) - fx) / (xh[j] - x[j]);
      }

      Eigen::Vector3d step = jac.fullPivLu().solve(-fx);
      if (!step.allFinite()) break;

      // Backtracking on the residual norm.
      const double f0 = fx.norm();
      double lambda = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt, lambda *= 0.5) {
        Eigen::Vector3d xn = x + lambda * step;
        project(xn);
        const Eigen::Vector3d fn = eval(xn);
        if (fn.norm() < (1.0 - 1e-4 * lambda) * f0) {
          x = xn;
          fx = fn;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;  // stalled; try the next restart
    }
    record(x);
  }

  best.iterations = total_iters;
  return best;
}

std::vector<TheoryPoint> theory_curve(const std::vector<double>& f_grid,
                                      double c, double theta_rad) {
  if (f_grid.empty()) throw std::invalid_argument("empty f grid");
  for (std::size_t i = 0; i + 1 < f_grid.size(); ++i)
    if (!(f_grid[i] > f_grid[i + 1]))
      throw std::invalid_argument("f grid must be strictly descending");

  std::vector<TheoryPoint> out;
  std::optional<std::array<double, 3>> warm;
  double warm_f = 0.0;

  for (double f : f_grid) {
    ReplicaParams params{f, c, theta_rad};
    ReplicaSolution sol = solve(params, warm);

    if (!sol.converged && warm) {
      // The branch can move abruptly between grid points (the transition is
      // first-order-like at small f); walk down in finer continuation steps.
      std::array<double, 3> cur = *warm;
      double cur_f = warm_f;
      double step = (cur_f - f) / 4.0;
      int budget = 200;
      while (cur_f > f && budget-- > 0) {
        const double trial_f = std::max(f, cur_f - step);
        ReplicaSolution sub = solve(ReplicaParams{trial_f, c, theta_rad}, cur);
        if (sub.converged) {
          cur = {sub.r, sub.rho, sub.m};
          cur_f = trial_f;
          if (trial_f == f) {
            sol = sub;
            break;
          }
          step *= 1.5;
        } else {
          step *= 0.5;
          if (step < 1e-4 * f) break;
        }
      }
    }

    if (sol.converged) {
      warm = {sol.r, sol.rho, sol.m};
      warm_f = f;
    }
    TheoryPoint pt;
    pt.f = f;
    pt.solution = sol;
    pt.e = std::acos(std::clamp(sol.r, -1.0, 1.0)) / kPi;
    out.push_back(pt);
  }
  return out;
}

std::string theory_csv(const std::vector<TheoryPoint>& points, double c,
                       double theta_rad) {
  std::ostringstream out;
  out << "theta_deg,c,f,R,rho,m,e,converged,residual_norm\n";
  const double theta_deg = theta_rad * 180.0 / kPi;
  for (const TheoryPoint& pt : points) {
    out << fmt17(theta_deg) << ',' << fmt17(c) << ',' << fmt17(pt.f) << ','
        << fmt17(pt.solution.r) << ',' << fmt17(pt.solution.rho) << ','
        << fmt17(pt.solution.m) << ',' << fmt17(pt.e) << ','
        << (pt.solution.converged ? "true" : "false") << ','
        << fmt17(pt.solution.residual_norm) << '\n';
  }
  return out.str();
}

}  // namespace prunekit
