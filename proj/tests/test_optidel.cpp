#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "prunekit/image.hpp"
#include "prunekit/optidel.hpp"
#include "prunekit/rng.hpp"

using namespace prunekit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Image noisy_patch(int side, std::uint64_t seed, double base, double amp) {
  Rng rng(seed);
  Image img = make_image(side, side, 1);
  for (std::uint8_t& px : img.pixels) {
    const double v = base + amp * (rng.uniform() - 0.5);
    px = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v + 0.5));
  }
  return img;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("grid segmentation tiles exactly, remainder to the last row/col") {
  const Image even = make_image(64, 64, 3);
  const auto patches = segment(even, "even", Segmenter::grid(2, 2));
  REQUIRE(patches.size() == 4);
  CHECK(patches[0].rect == SourceRect{0, 0, 32, 32});
  CHECK(patches[1].rect == SourceRect{32, 0, 32, 32});
  CHECK(patches[2].rect == SourceRect{0, 32, 32, 32});
  CHECK(patches[3].rect == SourceRect{32, 32, 32, 32});
  for (const ScoredPatch& p : patches) CHECK(p.source_id == "even");

  const Image odd = make_image(65, 65, 1);
  const auto rem = segment(odd, "odd", Segmenter::grid(2, 2));
  REQUIRE(rem.size() == 4);
  CHECK(rem[0].rect == SourceRect{0, 0, 32, 32});
  CHECK(rem[1].rect == SourceRect{32, 0, 33, 32});
  CHECK(rem[2].rect == SourceRect{0, 32, 32, 33});
  CHECK(rem[3].rect == SourceRect{32, 32, 33, 33});

  // a grid finer than 8px tiles is rejected
  const Image tiny = make_image(32, 32, 1);
  CHECK_THROWS_AS(segment(tiny, "tiny", Segmenter::grid(5, 2)),
                  std::invalid_argument);
}

TEST_CASE("mask segmentation keeps components above the area floor") {
  Image mask = make_image(64, 64, 1);
  for (int y = 2; y < 12; ++y)
    for (int x = 2; x < 12; ++x) mask.at(y, x, 0) = 255;  // area 100
  for (int y = 30; y < 38; ++y)
    for (int x = 30; x < 40; ++x) mask.at(y, x, 0) = 255;  // area 80
  for (int y = 50; y < 52; ++y)
    for (int x = 5; x < 10; ++x) mask.at(y, x, 0) = 255;  // area 10, dropped

  const Image image = make_image(64, 64, 3, 128);
  const auto patches =
      segment(image, "masked", Segmenter::external_masks("unused"), mask);
  REQUIRE(patches.size() == 2);
  CHECK(patches[0].rect == SourceRect{2, 2, 10, 10});
  CHECK(patches[1].rect == SourceRect{30, 30, 10, 8});

  CHECK_THROWS_AS(segment(image, "masked", Segmenter::external_masks("unused")),
                  std::runtime_error);
}

TEST_CASE("identical patches reconstruct exactly: zero margin") {
  std::vector<ScoredPatch> sample(12);
  for (ScoredPatch& p : sample) p.pixels = noisy_patch(8, 7, 100.0, 60.0);
  const PcaScorer scorer = fit_pca_scorer(sample, 2, 8, 1);
  for (const ScoredPatch& p : sample)
    CHECK(scorer.margin(p.pixels) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("subspace iteration matches a dense eigendecomposition") {
  // low-rank signal with well-separated component scales so both methods
  // identify the same subspace to high accuracy
  const int side = 6, d = side * side, rank = 3, num = 60;
  Rng pattern_rng(77);
  std::vector<std::vector<double>> patterns(3, std::vector<double>(d));
  for (auto& pat : patterns)
    for (double& v : pat) v = 2.0 * pattern_rng.uniform() - 1.0;

  const auto structured = [&](std::uint64_t seed) {
    Rng rng(seed);
    const double coeff[3] = {60.0 * rng.gaussian(), 30.0 * rng.gaussian(),
                             15.0 * rng.gaussian()};
    Image img = make_image(side, side, 1);
    for (int j = 0; j < d; ++j) {
      double v = 128.0;
      for (int p = 0; p < 3; ++p) v += coeff[p] * patterns[p][j];
      img.pixels[j] = static_cast<std::uint8_t>(
          v < 0 ? 0 : (v > 255 ? 255 : v + 0.5));
    }
    return img;
  };

  std::vector<ScoredPatch> sample(num);
  for (int i = 0; i < num; ++i) sample[i].pixels = structured(1000 + i);

  const PcaScorer scorer = fit_pca_scorer(sample, rank, side, 42);

  // dense oracle on the same centered data
  Eigen::MatrixXd data(num, d);
  for (int i = 0; i < num; ++i) {
    const Image g = to_gray(sample[i].pixels);
    for (int j = 0; j < d; ++j) data(i, j) = g.pixels[j];
  }
  Eigen::VectorXd mean = data.colwise().mean();
  data.rowwise() -= mean.transpose();
  Eigen::MatrixXd cov = data.transpose() * data / num;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd top = eig.eigenvectors().rightCols(rank);

  const Image probe = noisy_patch(side, 999, 110.0, 80.0);
  Eigen::VectorXd v(d);
  {
    const Image g = to_gray(probe);
    for (int j = 0; j < d; ++j) v[j] = g.pixels[j];
  }
  v -= mean;
  const double oracle = (v - top * (top.transpose() * v)).squaredNorm() / d;
  const double got = scorer.margin(probe);
  CHECK(std::abs(got - oracle) <= 1e-6 * std::max(1.0, std::abs(oracle)));
}

TEST_CASE("scorer fit is invariant to sample order") {
  const int num = 40;
  std::vector<ScoredPatch> sample(num);
  for (int i = 0; i < num; ++i)
    sample[i].pixels = noisy_patch(8, 500 + i, 100.0, 70.0);
  std::vector<ScoredPatch> reversed(sample.rbegin(), sample.rend());

  const PcaScorer a = fit_pca_scorer(sample, 4, 8, 7);
  const PcaScorer b = fit_pca_scorer(reversed, 4, 8, 7);
  const Image probe = noisy_patch(8, 12345, 90.0, 50.0);
  CHECK(a.margin(probe) ==
        doctest::Approx(b.margin(probe)).epsilon(1e-6));
}

TEST_CASE("planted high-frequency patch gets the largest margin") {
  std::vector<ScoredPatch> sample;
  for (int i = 0; i < 30; ++i) {
    ScoredPatch p;
    p.pixels = noisy_patch(16, 100 + i, 100.0, 8.0);  // smooth-ish population
    p.source_id = "src_" + std::to_string(i);
    p.rect = {0, 0, 16, 16};
    sample.push_back(std::move(p));
  }
  DifficultyScorer scorer;
  scorer.kind = DifficultyScorer::Kind::PcaRecon;
  scorer.pca = fit_pca_scorer(sample, 4, 16, 3);  // fit on the clean population

  sample[17].pixels = noisy_patch(16, 4242, 100.0, 200.0);  // the outlier
  const auto scored = score_patches(scorer, sample);
  const auto top = select_top_k(scored, 1);
  CHECK(top[0].source_id == "src_17");
}

TEST_CASE("injected scores pass through and missing entries are fatal") {
  const fs::path dir = scratch_dir("prunekit_optidel_injected");
  const fs::path csv = dir / "scores.csv";
  std::ofstream(csv) << "source_id,rect_x,rect_y,rect_w,rect_h,margin\n"
                        "a,0,0,8,8,2.5\n"
                        "b,8,0,8,8,1.25\n";
  const DifficultyScorer scorer = load_injected_scores(csv.string());

  std::vector<ScoredPatch> patches(2);
  patches[0].source_id = "a";
  patches[0].rect = {0, 0, 8, 8};
  patches[1].source_id = "b";
  patches[1].rect = {8, 0, 8, 8};
  const auto scored = score_patches(scorer, patches);
  CHECK(scored[0].margin == 2.5);
  CHECK(scored[1].margin == 1.25);

  patches[1].source_id = "c";
  CHECK_THROWS_WITH_AS(score_patches(scorer, patches), doctest::Contains("c@(8,0,8,8)"),
                       std::runtime_error);

  std::ofstream(csv) << "source_id,rect_x,rect_y,rect_w,rect_h,margin\n"
                        "a,0,0,eight,8,2.5\n";
  CHECK_THROWS_WITH_AS(load_injected_scores(csv.string()), doctest::Contains(":2:"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("top-k selection sorts by margin with deterministic tie-breaks") {
  std::vector<ScoredPatch> scored(4);
  scored[0] = {make_image(4, 4, 1), "b", {0, 0, 4, 4}, 1.0, 0};
  scored[1] = {make_image(4, 4, 1), "a", {4, 0, 4, 4}, 1.0, 0};
  scored[2] = {make_image(4, 4, 1), "a", {0, 0, 4, 4}, 1.0, 0};
  scored[3] = {make_image(4, 4, 1), "z", {0, 0, 4, 4}, 3.0, 0};

  const auto top = select_top_k(scored, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].source_id == "z");
  CHECK(top[0].rank == 1);
  CHECK(top[1].source_id == "a");
  CHECK(top[1].rect == SourceRect{0, 0, 4, 4});
  CHECK(top[2].source_id == "a");
  CHECK(top[2].rect == SourceRect{4, 0, 4, 4});
  CHECK(top[2].rank == 3);

  CHECK_THROWS_AS(select_top_k(scored, 5), std::invalid_argument);
}

TEST_CASE("synthesis mosaics rank groups; same-size tiles copy bytes") {
  std::vector<ScoredPatch> selected(4);
  const std::uint8_t fills[4] = {10, 60, 140, 250};
  for (int i = 0; i < 4; ++i) {
    selected[i].pixels = make_image(32, 32, 1, fills[i]);
    selected[i].source_id = "src_" + std::to_string(i);
    selected[i].rect = {0, 0, 32, 32};
    selected[i].margin = 4.0 - i;
    selected[i].rank = i + 1;
  }
  SynthesisConfig config;
  config.k = 4;
  config.m = 4;
  config.out_side = 64;

  const auto [images, records] = synthesize(selected, config);
  REQUIRE(images.size() == 1);
  CHECK(images[0].id == "synth_00000");
  // rank order is row-major: 1 2 / 3 4
  CHECK(images[0].pixels.at(0, 0, 0) == 10);
  CHECK(images[0].pixels.at(0, 63, 0) == 60);
  CHECK(images[0].pixels.at(63, 0, 0) == 140);
  CHECK(images[0].pixels.at(63, 63, 0) == 250);
  // identity resize: the whole tile is a byte-exact copy
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (images[0].pixels.at(y, x, 0) != 10) FAIL("tile not copied verbatim");

  REQUIRE(records.size() == 1);
  CHECK(records[0]["tiles"].size() == 4);
  CHECK(records[0]["tiles"][0]["rank"] == 1);
  CHECK(records[0]["tiles"][3]["source_id"] == "src_3");

  SynthesisConfig bad = config;
  bad.m = 3;
  bad.k = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  selected[2].rank = 7;  // non-contiguous ranks rejected
  CHECK_THROWS_AS(synthesize(selected, config), std::invalid_argument);
}

TEST_CASE("diversity counts distinct sources per output") {
  json manifest;
  manifest["images"] = json::array();
  json same = {{"id", "synth_00000"}, {"tiles", json::array()}};
  json mixed = {{"id", "synth_00001"}, {"tiles", json::array()}};
  for (int t = 0; t < 4; ++t) {
    same["tiles"].push_back({{"source_id", "only"}});
    mixed["tiles"].push_back({{"source_id", "s" + std::to_string(t)}});
  }
  manifest["images"].push_back(same);
  manifest["images"].push_back(mixed);
  CHECK(diversity_metric(manifest) == doctest::Approx(0.625).epsilon(1e-12));

  json empty;
  empty["images"] = json::array();
  CHECK_THROWS_AS(diversity_metric(empty), std::invalid_argument);
}

TEST_CASE("pipeline on the bundled corpus: deterministic 5% condensation") {
  const std::string corpus = std::string(PRUNEKIT_DATA_DIR) + "/corpus";
  REQUIRE(fs::exists(corpus));

  SynthesisConfig config;
  config.k = 20;
  config.m = 4;
  config.out_side = 64;
  config.seed = 9;
  ScorerSpec spec;  // pca_recon(rank=8,side=16)

  const fs::path out_a = scratch_dir("prunekit_optidel_pipe_a");
  const fs::path out_b = scratch_dir("prunekit_optidel_pipe_b");
  const PipelineResult a =
      run_pipeline(corpus, Segmenter::grid(2, 2), spec, config, out_a.string());

  REQUIRE(a.output_ids.size() == 5);
  CHECK(a.output_ids.front() == "synth_00000");
  CHECK(a.output_ids.back() == "synth_00004");
  CHECK(a.warnings.empty());
  // 5 outputs of 64x64 from 100 inputs of 64x64: 5% of the pixel bytes
  CHECK(a.storage_ratio == doctest::Approx(0.05).epsilon(1e-12));
  for (const std::string& id : a.output_ids)
    CHECK(fs::exists(out_a / (id + ".png")));

  // the corpus plants one hard quadrant in each of the first 25 images, so
  // the top patches should be distinct planted quadrants
  const json manifest = json::parse(slurp(a.manifest_path));
  int planted = 0;
  std::set<std::string> sources;
  for (const json& img : manifest.at("images"))
    for (const json& tile : img.at("tiles")) {
      const std::string src = tile.at("source_id").get<std::string>();
      sources.insert(src);
      if (src >= "img_000" && src <= "img_024") ++planted;
    }
  CHECK(planted >= 18);
  CHECK(a.diversity >= 0.9);
  CHECK(static_cast<int>(sources.size()) >= 18);

  // rerun is byte-identical, manifest included
  const PipelineResult b =
      run_pipeline(corpus, Segmenter::grid(2, 2), spec, config, out_b.string());
  CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
  for (const std::string& id : a.output_ids)
    CHECK(slurp(out_a / (id + ".png")) == slurp(out_b / (id + ".png")));

  fs::remove_all(out_a);
  fs::remove_all(out_b);
}
