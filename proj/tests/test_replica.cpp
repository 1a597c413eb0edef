#include <doctest.h>

#include <cmath>

#include "prunekit/errors.hpp"
#include "prunekit/replica.hpp"

using namespace prunekit;

namespace {
constexpr double kPi = 3.141592653589793238462643383279;
double deg(double d) { return d * kPi / 180.0; }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}
}  // namespace

TEST_CASE("gaussian tail values") {
  CHECK(gauss_tail(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gauss_tail(1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-14));
  CHECK(gauss_tail(40.0) == doctest::Approx(0.0).epsilon(1e-300));
  CHECK(gauss_tail(-40.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tail inverse round-trips") {
  CHECK(inv_gauss_tail(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(inv_gauss_tail(0.15865525393145707) == doctest::Approx(1.0).epsilon(1e-10));
  for (double x = -6.0; x <= 6.0; x += 0.5)
    CHECK(std::abs(inv_gauss_tail(gauss_tail(x)) - x) <= 1e-7);
  // monotone decreasing
  CHECK(inv_gauss_tail(0.1) > inv_gauss_tail(0.2));
  CHECK_THROWS_AS(inv_gauss_tail(0.0), DomainError);
  CHECK_THROWS_AS(inv_gauss_tail(1.0), DomainError);
}

TEST_CASE("truncation point matches the retained mass") {
  for (double f : {0.01, 0.1, 0.5, 0.9}) {
    const PrunedField field = PrunedField::from_fraction(f);
    CHECK(gauss_tail(field.tau) == doctest::Approx((1.0 - f) / 2.0).epsilon(1e-10));
  }
  CHECK(std::isinf(PrunedField::from_fraction(1.0).tau));
}

TEST_CASE("pruned averages: normalization, parity, second moment") {
  for (double f : {0.01, 0.1, 0.5, 1.0}) {
    const PrunedField field = PrunedField::from_fraction(f);
    CHECK(pruned_average([](double) { return 1.0; }, field) ==
          doctest::Approx(1.0).epsilon(1e-8));
    CHECK(pruned_average([](double z) { return z; }, field) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }

  // truncated-normal second moment: 1 - 2 tau phi(tau) / f
  const PrunedField half = PrunedField::from_fraction(0.5);
  const double expected = 1.0 - 2.0 * half.tau * normal_pdf(half.tau) / 0.5;
  const double got = pruned_average([](double z) { return z * z; }, half);
  CHECK(got == doctest::Approx(expected).epsilon(1e-9));

  // brute-force Riemann cross-check
  double riemann = 0.0;
  const int steps = 1000000;
  const double dz = 2.0 * half.tau / steps;
  for (int i = 0; i < steps; ++i) {
    const double z = -half.tau + (i + 0.5) * dz;
    riemann += z * z * normal_pdf(z) * dz;
  }
  riemann /= 0.5;
  CHECK(got == doctest::Approx(riemann).epsilon(1e-6));
}

TEST_CASE("residuals vanish at a converged solution and reject Psi^2 <= 0") {
  const ReplicaParams params{0.5, 10.0, deg(20.0)};
  const ReplicaSolution sol = solve(params);
  REQUIRE(sol.converged);
  const auto res = saddle_residuals(sol.r, sol.rho, sol.m, params);
  for (double r : res) CHECK(std::abs(r) <= 1e-8);

  // perturbing any unknown breaks the fixed point
  const auto perturbed = saddle_residuals(sol.r, sol.rho, sol.m + 0.05, params);
  CHECK(std::abs(perturbed[1]) > 1e-5);

  CHECK_THROWS_AS(saddle_residuals(0.999, 0.0, 0.5, params), DomainError);
}

TEST_CASE("full-data solution matches the simulation oracle") {
  // N=200 Monte Carlo at f=1, c=10 gives mean R ~= 0.988
  const ReplicaSolution sol = solve({1.0, 10.0, deg(20.0)});
  REQUIRE(sol.converged);
  CHECK(std::abs(sol.r - 0.988) <= 0.08);

  // more data helps
  const ReplicaSolution more = solve({1.0, 20.0, deg(20.0)});
  REQUIRE(more.converged);
  CHECK(more.r > sol.r);

  // full data erases the probe: the aligned and tilted probes agree
  const ReplicaSolution aligned = solve({1.0, 10.0, deg(1.0)});
  REQUIRE(aligned.converged);
  CHECK(aligned.r == doctest::Approx(sol.r).epsilon(1e-4));
  CHECK(aligned.r >= sol.r - 1e-6);
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(solve({0.0, 10.0, deg(20.0)}), std::invalid_argument);
  CHECK_THROWS_AS(solve({0.5, -1.0, deg(20.0)}), std::invalid_argument);
  CHECK_THROWS_AS(solve({0.5, 10.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(solve({0.5, 10.0, kPi / 2.0}), std::invalid_argument);
}

TEST_CASE("degenerate grid reduces to a single solve") {
  const std::vector<TheoryPoint> curve = theory_curve({1.0}, 10.0, deg(20.0));
  REQUIRE(curve.size() == 1);
  const ReplicaSolution direct = solve({1.0, 10.0, deg(20.0)});
  CHECK(curve[0].solution.r == doctest::Approx(direct.r).epsilon(1e-9));
  CHECK(curve[0].e == doctest::Approx(std::acos(direct.r) / kPi).epsilon(1e-12));
}

TEST_CASE("theory curve invariants and continuation stability") {
  const std::vector<double> grid{1.0, 0.7, 0.5, 0.35, 0.25};
  const std::vector<TheoryPoint> curve = theory_curve(grid, 10.0, deg(20.0));
  REQUIRE(curve.size() == grid.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].f == grid[i]);
    CHECK(curve[i].e >= 0.0);
    CHECK(curve[i].e <= 1.0);
    CHECK(curve[i].solution.r >= -1.0);
    CHECK(curve[i].solution.r <= 1.0);
    REQUIRE(curve[i].solution.converged);
  }

  // re-solving a grid point warm-started from its neighbor reproduces R
  const ReplicaSolution warm = solve(
      {0.5, 10.0, deg(20.0)},
      std::array<double, 3>{curve[1].solution.r, curve[1].solution.rho,
                            curve[1].solution.m});
  CHECK(warm.converged);
  CHECK(std::abs(warm.r - curve[2].solution.r) <= 1e-6);

  CHECK_THROWS_AS(theory_curve({0.5, 0.7}, 10.0, deg(20.0)),
                  std::invalid_argument);
}

TEST_CASE("more data lowers the theoretical error") {
  const ReplicaSolution c10 = solve({0.5, 10.0, deg(20.0)});
  const ReplicaSolution c50 = solve({0.5, 50.0, deg(20.0)});
  REQUIRE(c10.converged);
  REQUIRE(c50.converged);
  CHECK(std::acos(c50.r) < std::acos(c10.r));
}

TEST_CASE("error curve is flat near f=1 and rises toward aggressive pruning") {
  const std::vector<TheoryPoint> curve =
      theory_curve({1.0, 0.8, 0.6, 0.4, 0.2, 0.1, 0.05}, 10.0, deg(10.0));
  REQUIRE(curve.front().solution.converged);
  REQUIRE(curve.back().solution.converged);
  CHECK(std::abs(curve[1].e - curve[0].e) < 0.01);  // flat shoulder
  CHECK(curve.back().e > curve.front().e + 0.05);   // rises as f -> 0
}

TEST_CASE("theory CSV carries the contracted schema") {
  const std::vector<TheoryPoint> curve = theory_curve({1.0, 0.5}, 10.0, deg(20.0));
  const std::string csv = theory_csv(curve, 10.0, deg(20.0));
  CHECK(csv.substr(0, csv.find('\n')) ==
        "theta_deg,c,f,R,rho,m,e,converged,residual_norm");
  CHECK(csv.find("true") != std::string::npos);
}
