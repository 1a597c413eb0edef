#include "prunekit/optidel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

#include "prunekit/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace prunekit {

Segmenter Segmenter::grid(int rows, int cols) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("grid segmenter needs positive rows and cols");
  Segmenter s;
  s.kind = Kind::Grid;
  s.rows = rows;
  s.cols = cols;
  return s;
}

Segmenter Segmenter::external_masks(const std::string& dir) {
  Segmenter s;
  s.kind = Kind::ExternalMasks;
  s.mask_dir = dir;
  return s;
}

std::string Segmenter::describe() const {
  if (kind == Kind::Grid)
    return "grid(" + std::to_string(rows) + "," + std::to_string(cols) + ")";
  return "external_masks(" + mask_dir + ")";
}

std::string ScorerSpec::describe() const {
  if (kind == Kind::PcaRecon)
    return "pca_recon(rank=" + std::to_string(rank) +
           ",side=" + std::to_string(side) + ")";
  return "injected(" + scores_path + ")";
}

void SynthesisConfig::validate() const {
  if (k < 1 || m < 1) throw std::invalid_argument("k and m must be positive");
  const int root = static_cast<int>(std::lround(std::sqrt(double(m))));
  if (root * root != m)
    throw std::invalid_argument("patches-per-image m must be a perfect square");
  if (k % m != 0)
    throw std::invalid_argument(
        "top-k count must be divisible by m (no silent partial groups)");
  if (out_side % root != 0)
    throw std::invalid_argument("out_side must be divisible by sqrt(m)");
}

std::vector<ScoredPatch> segment(const Image& image,
                                 const std::string& image_id,
                                 const Segmenter& segmenter,
                                 const std::optional<Image>& mask) {
  std::vector<ScoredPatch> patches;
  if (segmenter.kind == Segmenter::Kind::Grid) {
    const int rows = segmenter.rows, cols = segmenter.cols;
    if (rows > image.height / 8 || cols > image.width / 8)
      throw std::invalid_argument("grid too fine for image " + image_id);
    const int base_h = image.height / rows;
    const int base_w = image.width / cols;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const int y = r * base_h;
        const int x = c * base_w;
        const int h = (r == rows - 1) ? image.height - y : base_h;
        const int w = (c == cols - 1) ? image.width - x : base_w;
        ScoredPatch p;
        p.pixels = crop(image, x, y, w, h);
        p.source_id = image_id;
        p.rect = {x, y, w, h};
        patches.push_back(std::move(p));
      }
  } else {
    if (!mask)
      throw std::runtime_error("mask image required for " + image_id);
    for (const Region& reg :
         connected_regions(*mask, segmenter.min_region_area)) {
      ScoredPatch p;
      p.pixels = crop(image, reg.x, reg.y, reg.w, reg.h);
      p.source_id = image_id;
      p.rect = {reg.x, reg.y, reg.w, reg.h};
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

namespace {

Eigen::VectorXd patch_vector(const Image& patch, int side) {
  const Image g = to_gray(resize_bilinear(patch, side, side));
  Eigen::VectorXd v(side * side);
  for (int i = 0; i < side * side; ++i) v[i] = g.pixels[i];
  return v;
}

}  // namespace

PcaScorer fit_pca_scorer(const std::vector<ScoredPatch>& sample, int rank,
                         int side, std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("pca rank must be >= 1");
  const int d = side * side;
  if (rank >= d)
    throw std::invalid_argument("pca rank must be below the patch dimension");
  if (static_cast<int>(sample.size()) < rank + 1)
    throw std::invalid_argument("need at least rank+1 fitting samples");

  const int num = static_cast<int>(sample.size());
  Eigen::MatrixXd data(num, d);
  for (int i = 0; i < num; ++i)
    data.row(i) = patch_vector(sample[i].pixels, side).transpose();
  Eigen::VectorXd mean = data.colwise().mean();
  data.rowwise() -= mean.transpose();

  // Orthogonal (subspace) power iteration on the sample covariance,
  // applied through the data matrix; converged when every eigenvalue
  // estimate is stable to 1e-8 relative.
  Rng rng(seed);
  Eigen::MatrixXd basis(d, rank);
  for (int j = 0; j < rank; ++j)
    for (int i = 0; i < d; ++i) basis(i, j) = rng.gaussian();
  basis = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() *
          Eigen::MatrixXd::Identity(d, rank);

  Eigen::VectorXd eigs = Eigen::VectorXd::Zero(rank);
  for (int iter = 0; iter < 2000; ++iter) {
    Eigen::MatrixXd applied = data.transpose() * (data * basis) / num;
    Eigen::VectorXd new_eigs(rank);
    for (int j = 0; j < rank; ++j)
      new_eigs[j] = basis.col(j).dot(applied.col(j));
    basis = Eigen::HouseholderQR<Eigen::MatrixXd>(applied).householderQ() *
            Eigen::MatrixXd::Identity(d, rank);
    const double change = (new_eigs - eigs).cwiseAbs().maxCoeff();
    const double scale = std::max(1e-30, new_eigs.cwiseAbs().maxCoeff());
    eigs = new_eigs;
    if (change <= 1e-8 * scale) break;
  }

  PcaScorer scorer;
  scorer.rank = rank;
  scorer.side = side;
  scorer.mean = std::move(mean);
  scorer.basis = std::move(basis);
  return scorer;
}

double PcaScorer::margin(const Image& patch) const {
  Eigen::VectorXd v = patch_vector(patch, side) - mean;
  Eigen::VectorXd residual = v - basis * (basis.transpose() * v);
  return residual.squaredNorm() / static_cast<double>(side * side);
}

DifficultyScorer load_injected_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "source_id,rect_x,rect_y,rect_w,rect_h,margin"))
    throw std::runtime_error(
        path + ": expected header 'source_id,rect_x,rect_y,rect_w,rect_h,margin'");
  DifficultyScorer scorer;
  scorer.kind = DifficultyScorer::Kind::InjectedScores;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, xs, ys, ws, hs, ms;
    if (!std::getline(row, id, ',') || !std::getline(row, xs, ',') ||
        !std::getline(row, ys, ',') || !std::getline(row, ws, ',') ||
        !std::getline(row, hs, ',') || !std::getline(row, ms))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 6 fields");
    try {
      SourceRect rect{std::stoi(xs), std::stoi(ys), std::stoi(ws), std::stoi(hs)};
      scorer.injected[{id, rect}] = std::stod(ms);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed row '" + line + "'");
    }
  }
  return scorer;
}

std::vector<ScoredPatch> score_patches(const DifficultyScorer& scorer,
                                       std::vector<ScoredPatch> patches) {
  if (scorer.kind == DifficultyScorer::Kind::PcaRecon) {
    for (ScoredPatch& p : patches) p.margin = scorer.pca.margin(p.pixels);
  } else {
    std::vector<std::string> missing;
    for (ScoredPatch& p : patches) {
      const auto it = scorer.injected.find({p.source_id, p.rect});
      if (it == scorer.injected.end()) {
        std::ostringstream key;
        key << p.source_id << "@(" << p.rect.x << ',' << p.rect.y << ','
            << p.rect.w << ',' << p.rect.h << ')';
        missing.push_back(key.str());
        continue;
      }
      p.margin = it->second;
    }
    if (!missing.empty()) {
      std::string msg = "injected scores missing for patches:";
      for (const std::string& k : missing) msg += " " + k;
      throw std::runtime_error(msg);
    }
  }
  return patches;
}

std::vector<ScoredPatch> select_top_k(std::vector<ScoredPatch> scored, int k) {
  if (k > static_cast<int>(scored.size()))
    throw std::invalid_argument("top-k exceeds available patch count");
  std::sort(scored.begin(), scored.end(),
            [](const ScoredPatch& a, const ScoredPatch& b) {
              if (a.margin != b.margin) return a.margin > b.margin;
              if (a.source_id != b.source_id) return a.source_id < b.source_id;
              return a.rect < b.rect;
            });
  scored.resize(k);
  for (int i = 0; i < k; ++i) scored[i].rank = i + 1;
  return scored;
}

std::pair<std::vector<SynthesizedImage>, json> synthesize(
    const std::vector<ScoredPatch>& selected, const SynthesisConfig& config) {
  config.validate();
  if (static_cast<int>(selected.size()) != config.k)
    throw std::invalid_argument("selection size does not match configured k");
  for (int i = 0; i < config.k; ++i)
    if (selected[i].rank != i + 1)
      throw std::invalid_argument("selected patches must carry contiguous ranks");

  const int root = static_cast<int>(std::lround(std::sqrt(double(config.m))));
  const int tile = config.out_side / root;
  int channels = 1;
  for (const ScoredPatch& p : selected) channels = std::max(channels, p.pixels.channels);

  std::vector<SynthesizedImage> images;
  json records = json::array();
  for (int g = 0; g * config.m < config.k; ++g) {
    SynthesizedImage out;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "synth_%05d", g);
    out.id = idbuf;
    out.pixels = make_image(config.out_side, config.out_side, channels);
    json tiles = json::array();
    for (int t = 0; t < config.m; ++t) {
      const ScoredPatch& p = selected[g * config.m + t];
      Image resized = resize_bilinear(p.pixels, tile, tile);
      const int oy = (t / root) * tile;
      const int ox = (t % root) * tile;
      for (int y = 0; y < tile; ++y)
        for (int x = 0; x < tile; ++x)
          for (int c = 0; c < channels; ++c) {
            const int src_c = resized.channels == channels ? c : 0;
            out.pixels.at(oy + y, ox + x, c) = resized.at(y, x, src_c);
          }
      tiles.push_back({{"source_id", p.source_id},
                       {"source_rect", {p.rect.x, p.rect.y, p.rect.w, p.rect.h}},
                       {"margin", p.margin},
                       {"rank", p.rank}});
    }
    records.push_back({{"id", out.id}, {"tiles", tiles}});
    images.push_back(std::move(out));
  }
  return {std::move(images), std::move(records)};
}

PipelineResult run_pipeline(const std::string& input_dir,
                            const Segmenter& segmenter,
                            const ScorerSpec& scorer_spec,
                            const SynthesisConfig& config,
                            const std::string& output_dir) {
  config.validate();
  PipelineResult result;

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());

  std::vector<ScoredPatch> patches;
  std::size_t input_bytes = 0;
  for (const std::string& file : files) {
    const std::string id = fs::path(file).stem().string();
    try {
      const Image image = read_png(file);
      std::optional<Image> mask;
      if (segmenter.kind == Segmenter::Kind::ExternalMasks) {
        const fs::path mask_path =
            fs::path(segmenter.mask_dir) / fs::path(file).filename();
        if (!fs::exists(mask_path))
          throw std::runtime_error("missing mask " + mask_path.string());
        mask = read_png(mask_path.string());
      }
      std::vector<ScoredPatch> img_patches = segment(image, id, segmenter, mask);
      input_bytes += image.byte_size();
      for (ScoredPatch& p : img_patches) patches.push_back(std::move(p));
    } catch (const std::exception& err) {
      result.warnings.push_back(id + ": " + err.what());
    }
  }
  if (patches.empty())
    throw std::runtime_error("no usable input images in " + input_dir);

  DifficultyScorer scorer;
  if (scorer_spec.kind == ScorerSpec::Kind::PcaRecon) {
    scorer.kind = DifficultyScorer::Kind::PcaRecon;
    scorer.pca = fit_pca_scorer(patches, scorer_spec.rank, scorer_spec.side,
                                config.seed);
  } else {
    scorer = load_injected_scores(scorer_spec.scores_path);
  }

  std::vector<ScoredPatch> selected =
      select_top_k(score_patches(scorer, std::move(patches)), config.k);
  auto [images, records] = synthesize(selected, config);

  fs::create_directories(output_dir);
  std::size_t output_bytes = 0;
  for (const SynthesizedImage& img : images) {
    write_png((fs::path(output_dir) / (img.id + ".png")).string(), img.pixels);
    output_bytes += img.pixels.byte_size();
    result.output_ids.push_back(img.id);
  }
  result.storage_ratio =
      input_bytes ? static_cast<double>(output_bytes) / input_bytes : 0.0;

  json manifest;
  manifest["header"] = {{"seed", config.seed},
                        {"segmenter", segmenter.describe()},
                        {"scorer", scorer_spec.describe()},
                        {"k", config.k},
                        {"m", config.m},
                        {"out_side", config.out_side},
                        {"storage_ratio", result.storage_ratio}};
  manifest["images"] = records;
  result.diversity = diversity_metric(manifest);

  const fs::path manifest_path = fs::path(output_dir) / "manifest.json";
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << '\n';
  result.manifest_path = manifest_path.string();
  return result;
}

double diversity_metric(const json& manifest) {
  const json& images = manifest.at("images");
  if (images.empty()) throw std::invalid_argument("empty manifest");
  double total = 0.0;
  for (const json& img : images) {
    std::set<std::string> sources;
    for (const json& tile : img.at("tiles"))
      sources.insert(tile.at("source_id").get<std::string>());
    total += static_cast<double>(sources.size()) / img.at("tiles").size();
  }
  return total / images.size();
}

}  // namespace prunekit
