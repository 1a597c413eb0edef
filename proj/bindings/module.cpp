#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <optional>

#include "prunekit/optidel.hpp"
#include "prunekit/perceptron.hpp"
#include "prunekit/replica.hpp"
#include "prunekit/vinfo.hpp"

namespace py = pybind11;
using namespace prunekit;

PYBIND11_MODULE(prunekit_core, m) {
  m.doc() =
      "Data-pruning toolkit core: teacher-student pruning simulation, "
      "self-consistent theory curves, predictive-information estimates, and "
      "patch-mosaic dataset distillation";

  // ----- pruning simulation ---------------------------------------------
  py::enum_<PruneStrategy>(m, "PruneStrategy")
      .value("HARD", PruneStrategy::Hard)
      .value("EASY", PruneStrategy::Easy)
      .value("MODERATE", PruneStrategy::Moderate)
      .value("RANDOM", PruneStrategy::Random);

  py::enum_<ProbeMode>(m, "ProbeMode")
      .value("FIXED_ANGLE", ProbeMode::FixedAngle)
      .value("TRAINED_ON_FULL", ProbeMode::TrainedOnFull);

  py::class_<TrialResult>(m, "TrialResult")
      .def_readonly("r", &TrialResult::r)
      .def_readonly("rho", &TrialResult::rho)
      .def_readonly("e", &TrialResult::e)
      .def_readonly("f", &TrialResult::f)
      .def_readonly("alpha_t", &TrialResult::alpha_t)
      .def_readonly("theta_deg", &TrialResult::theta_deg)
      .def_readonly("trial_seed", &TrialResult::trial_seed);

  m.def("run_trial", &run_trial, py::arg("n"), py::arg("alpha_t"),
        py::arg("f"), py::arg("theta_deg"), py::arg("strategy"),
        py::arg("probe_mode") = ProbeMode::FixedAngle,
        py::arg("redundancy_k") = 1, py::arg("trial_seed") = 1,
        "One teacher-student trial: train on a pruned subset, return "
        "overlaps and the fitting error");

  py::class_<SweepPoint>(m, "SweepPoint")
      .def_readonly("strategy", &SweepPoint::strategy)
      .def_readonly("theta_deg", &SweepPoint::theta_deg)
      .def_readonly("alpha_t", &SweepPoint::alpha_t)
      .def_readonly("redundancy", &SweepPoint::redundancy)
      .def_readonly("f", &SweepPoint::f);

  py::class_<AggregatedPoint>(m, "AggregatedPoint")
      .def_readonly("point", &AggregatedPoint::point)
      .def_readonly("trials", &AggregatedPoint::trials)
      .def_readonly("mean_r", &AggregatedPoint::mean_r)
      .def_readonly("std_r", &AggregatedPoint::std_r)
      .def_readonly("mean_e", &AggregatedPoint::mean_e)
      .def_readonly("std_e", &AggregatedPoint::std_e);

  m.def(
      "run_sweep",
      [](int n, const std::vector<PruneStrategy>& strategies,
         const std::vector<double>& theta_degs,
         const std::vector<double>& alpha_ts,
         const std::vector<int>& redundancies, const std::vector<double>& fs,
         int trials, std::uint64_t base_seed, ProbeMode probe_mode,
         int threads) {
        SweepGrid grid;
        grid.n = n;
        grid.probe_mode = probe_mode;
        grid.strategies = strategies;
        grid.theta_degs = theta_degs;
        grid.alpha_ts = alpha_ts;
        grid.redundancies = redundancies;
        grid.fs = fs;
        return run_sweep(grid, trials, base_seed, threads);
      },
      py::arg("n"), py::arg("strategies"), py::arg("theta_degs"),
      py::arg("alpha_ts"), py::arg("redundancies"), py::arg("fs"),
      py::arg("trials"), py::arg("base_seed") = 1,
      py::arg("probe_mode") = ProbeMode::FixedAngle, py::arg("threads") = 0,
      "Deterministic Monte Carlo sweep over the parameter grid");

  m.def("default_f_grid", &default_f_grid,
        "20 log-spaced retention fractions in [0.01, 1]");

  // ----- self-consistent theory ------------------------------------------
  py::class_<ReplicaSolution>(m, "ReplicaSolution")
      .def_readonly("r", &ReplicaSolution::r)
      .def_readonly("rho", &ReplicaSolution::rho)
      .def_readonly("m", &ReplicaSolution::m)
      .def_readonly("residual_norm", &ReplicaSolution::residual_norm)
      .def_readonly("converged", &ReplicaSolution::converged)
      .def_readonly("iterations", &ReplicaSolution::iterations);

  py::class_<TheoryPoint>(m, "TheoryPoint")
      .def_readonly("f", &TheoryPoint::f)
      .def_readonly("solution", &TheoryPoint::solution)
      .def_readonly("e", &TheoryPoint::e);

  m.def(
      "solve",
      [](double f, double c, double theta_rad,
         std::optional<std::array<double, 3>> init) {
        return solve(ReplicaParams{f, c, theta_rad}, init);
      },
      py::arg("f"), py::arg("c"), py::arg("theta_rad"),
      py::arg("init") = std::nullopt,
      "Solve the three saddle equations for (R, rho, m)");

  m.def("theory_curve", &theory_curve, py::arg("f_grid"), py::arg("c"),
        py::arg("theta_rad"),
        "Continuation down a descending retention grid with warm starts");

  m.def(
      "saddle_residuals",
      [](double r, double rho, double m_param, double f, double c,
         double theta_rad) {
        return saddle_residuals(r, rho, m_param, ReplicaParams{f, c, theta_rad});
      },
      py::arg("r"), py::arg("rho"), py::arg("m"), py::arg("f"), py::arg("c"),
      py::arg("theta_rad"));

  m.def("gauss_tail", &gauss_tail, py::arg("x"));
  m.def("inv_gauss_tail", &inv_gauss_tail, py::arg("p"));
  m.def(
      "pruned_average",
      [](const std::function<double(double)>& g, double f) {
        return pruned_average(g, PrunedField::from_fraction(f));
      },
      py::arg("g"), py::arg("f"),
      "Mean of g(z) over the truncated margin density for retention f");

  // ----- predictive information -------------------------------------------
  py::class_<PredictiveScores>(m, "PredictiveScores")
      .def(py::init([](std::vector<double> logp, std::vector<int> labels,
                       int num_labels) {
             return PredictiveScores{std::move(logp), std::move(labels),
                                     num_labels};
           }),
           py::arg("conditional_logp"), py::arg("label_ids"),
           py::arg("num_labels"))
      .def_readonly("conditional_logp", &PredictiveScores::conditional_logp)
      .def_readonly("label_ids", &PredictiveScores::label_ids)
      .def_readonly("num_labels", &PredictiveScores::num_labels);

  py::class_<VInfoReport>(m, "VInfoReport")
      .def_readonly("h_cond", &VInfoReport::h_cond)
      .def_readonly("h_marg", &VInfoReport::h_marg)
      .def_readonly("i_v", &VInfoReport::i_v)
      .def_readonly("negative", &VInfoReport::negative)
      .def_readonly("n", &VInfoReport::n);

  m.def("v_information", &v_information, py::arg("scores"));
  m.def("conditional_entropy", &conditional_entropy, py::arg("scores"));
  m.def("marginal_entropy", &marginal_entropy, py::arg("label_ids"),
        py::arg("num_labels"));

  // ----- dataset distillation ---------------------------------------------
  py::class_<PipelineResult>(m, "PipelineResult")
      .def_readonly("output_ids", &PipelineResult::output_ids)
      .def_readonly("manifest_path", &PipelineResult::manifest_path)
      .def_readonly("storage_ratio", &PipelineResult::storage_ratio)
      .def_readonly("diversity", &PipelineResult::diversity)
      .def_readonly("warnings", &PipelineResult::warnings);

  m.def(
      "distill",
      [](const std::string& input_dir, const std::string& output_dir, int k,
         int m_per_image, int out_side, std::uint64_t seed, int grid_rows,
         int grid_cols, int pca_rank, int pca_side) {
        SynthesisConfig config;
        config.k = k;
        config.m = m_per_image;
        config.out_side = out_side;
        config.seed = seed;
        ScorerSpec scorer;
        scorer.rank = pca_rank;
        scorer.side = pca_side;
        return run_pipeline(input_dir, Segmenter::grid(grid_rows, grid_cols),
                            scorer, config, output_dir);
      },
      py::arg("input_dir"), py::arg("output_dir"), py::arg("k") = 20,
      py::arg("m") = 4, py::arg("out_side") = 64, py::arg("seed") = 1,
      py::arg("grid_rows") = 2, py::arg("grid_cols") = 2,
      py::arg("pca_rank") = 8, py::arg("pca_side") = 16,
      "Grid-segment a PNG corpus, keep the hardest patches by linear "
      "reconstruction difficulty, and mosaic them into condensed images");
}
