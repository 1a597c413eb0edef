#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prunekit {

// Parameters of the self-consistent system: retention fraction f, total
// data-to-parameter ratio c (post-pruning ratio is c*f), probe-teacher angle.
struct ReplicaParams {
  double f;
  double c;
  double theta_rad;

  void validate() const;
};

// Margin field retained by boundary-distance pruning: a standard normal
// truncated to |z| <= tau with tau chosen so the kept mass is f. f=1 maps to
// tau = +infinity (no truncation).
struct PrunedField {
  double tau;
  double f;

  static PrunedField from_fraction(double f);
};

struct ReplicaSolution {
  double r = 0.0;    // student-teacher overlap R
  double rho = 0.0;  // student-probe overlap
  double m = 0.0;    // max-margin order parameter
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Gaussian tail H(x) = integral_x^inf N(t;0,1) dt.
double gauss_tail(double x);

// Inverse of gauss_tail on (0, 1).
double inv_gauss_tail(double p);

// <g(z)> over the truncated margin density, adaptive quadrature to relative
// tolerance 1e-9. Throws AccuracyError (carrying the best estimate) if the
// error estimate exceeds the budgeted tolerance.
double pruned_average(const std::function<double(double)>& g,
                      const PrunedField& field);

// LHS - RHS of the three saddle equations at (r, rho, m). Requires the
// physical region Psi^2 = sin^2(theta) - r^2 - rho^2 + 2 r rho cos(theta) > 0.
std::array<double, 3> saddle_residuals(double r, double rho, double m,
                                       const ReplicaParams& params);

ReplicaSolution solve(const ReplicaParams& params,
                      std::optional<std::array<double, 3>> init = std::nullopt);

struct TheoryPoint {
  double f;
  ReplicaSolution solution;
  double e;  // arccos(R)/pi
};

// Continuation down a descending f grid with warm starts; points that fail
// to converge are flagged, never dropped. The solver inserts intermediate
// continuation steps when the solution branch moves abruptly between grid
// points.
std::vector<TheoryPoint> theory_curve(const std::vector<double>& f_grid,
                                      double c, double theta_rad);

std::string theory_csv(const std::vector<TheoryPoint>& points, double c,
                       double theta_rad);

}  // namespace prunekit
