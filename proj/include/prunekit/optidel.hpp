#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "prunekit/image.hpp"

namespace prunekit {

struct SourceRect {
  int x, y, w, h;

  friend bool operator<(const SourceRect& a, const SourceRect& b) {
    return std::tie(a.x, a.y, a.w, a.h) < std::tie(b.x, b.y, b.w, b.h);
  }
  friend bool operator==(const SourceRect& a, const SourceRect& b) {
    return std::tie(a.x, a.y, a.w, a.h) == std::tie(b.x, b.y, b.w, b.h);
  }
};

struct ScoredPatch {
  Image pixels;
  std::string source_id;
  SourceRect rect;
  double margin = 0.0;
  int rank = 0;  // 1-based, assigned by select_top_k
};

struct Segmenter {
  enum class Kind { Grid, ExternalMasks } kind = Kind::Grid;
  int rows = 2, cols = 2;   // Grid
  std::string mask_dir;     // ExternalMasks
  int min_region_area = 64;

  static Segmenter grid(int rows, int cols);
  static Segmenter external_masks(const std::string& dir);
  std::string describe() const;
};

// Linear-reconstruction difficulty scorer: patches are resized to side x
// side grayscale, and the margin is the mean squared residual outside the
// top-r principal subspace of the fitting sample.
struct PcaScorer {
  int rank = 0;
  int side = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // d x rank, orthonormal columns

  double margin(const Image& patch) const;
};

struct DifficultyScorer {
  enum class Kind { PcaRecon, InjectedScores } kind = Kind::PcaRecon;
  PcaScorer pca;
  std::map<std::pair<std::string, SourceRect>, double> injected;
};

// How run_pipeline obtains its scorer: fit a PcaScorer on all patches, or
// load externally computed margins.
struct ScorerSpec {
  enum class Kind { PcaRecon, InjectedScores } kind = Kind::PcaRecon;
  int rank = 8;
  int side = 16;
  std::string scores_path;
  std::string describe() const;
};

struct SynthesisConfig {
  int k = 0;
  int m = 4;
  int out_side = 64;
  std::uint64_t seed = 0;

  void validate() const;  // k % m == 0, m a perfect square, tiling exact
};

std::vector<ScoredPatch> segment(const Image& image,
                                 const std::string& image_id,
                                 const Segmenter& segmenter,
                                 const std::optional<Image>& mask = std::nullopt);

PcaScorer fit_pca_scorer(const std::vector<ScoredPatch>& sample, int rank,
                         int side, std::uint64_t seed);

DifficultyScorer load_injected_scores(const std::string& path);

std::vector<ScoredPatch> score_patches(const DifficultyScorer& scorer,
                                       std::vector<ScoredPatch> patches);

std::vector<ScoredPatch> select_top_k(std::vector<ScoredPatch> scored, int k);

struct SynthesizedImage {
  std::string id;
  Image pixels;
};

// Rank-order groups of m patches mosaicked row-major into sqrt(m) x sqrt(m)
// tiles. Returns images plus their manifest records.
std::pair<std::vector<SynthesizedImage>, nlohmann::json> synthesize(
    const std::vector<ScoredPatch>& selected, const SynthesisConfig& config);

struct PipelineResult {
  std::vector<std::string> output_ids;
  std::string manifest_path;
  double storage_ratio = 0.0;
  double diversity = 0.0;
  std::vector<std::string> warnings;
};

PipelineResult run_pipeline(const std::string& input_dir,
                            const Segmenter& segmenter,
                            const ScorerSpec& scorer_spec,
                            const SynthesisConfig& config,
                            const std::string& output_dir);

double diversity_metric(const nlohmann::json& manifest);

}  // namespace prunekit
