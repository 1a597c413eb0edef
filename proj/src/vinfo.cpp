#include "prunekit/vinfo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prunekit/rng.hpp"

namespace prunekit {

void PredictiveScores::validate() const {
  if (conditional_logp.empty())
    throw std::invalid_argument("scores are empty");
  if (conditional_logp.size() != label_ids.size())
    throw std::invalid_argument("log-probability and label counts differ");
  if (num_labels < 1) throw std::invalid_argument("num_labels must be >= 1");
  for (double lp : conditional_logp)
    if (lp > 0.0)
      throw std::invalid_argument(
          "log-probability above 0 is not a valid probability");
  for (int y : label_ids)
    if (y < 0 || y >= num_labels)
      throw std::invalid_argument("label id out of range");
}

double conditional_entropy(const PredictiveScores& scores) {
  scores.validate();
  double sum = 0.0;
  for (double lp : scores.conditional_logp) sum += lp;
  return -sum / static_cast<double>(scores.conditional_logp.size());
}

double marginal_entropy(const std::vector<int>& label_ids, int num_labels) {
  if (label_ids.empty()) throw std::invalid_argument("empty label sequence");
  std::vector<std::size_t> counts(num_labels, 0);
  for (int y : label_ids) {
    if (y < 0 || y >= num_labels)
      throw std::invalid_argument("label id out of range");
    ++counts[y];
  }
  const double n = static_cast<double>(label_ids.size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = c / n;
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

VInfoReport v_information(const PredictiveScores& scores) {
  VInfoReport report;
  report.h_cond = conditional_entropy(scores);
  report.h_marg = marginal_entropy(scores.label_ids, scores.num_labels);
  report.i_v = report.h_marg - report.h_cond;
  report.negative = report.i_v < 0.0;
  report.n = scores.conditional_logp.size();
  return report;
}

std::vector<SubsetScore> rank_subsets(
    const std::vector<std::pair<std::string, PredictiveScores>>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  const PredictiveScores& ref = candidates.front().second;
  std::vector<SubsetScore> out;
  for (const auto& [id, scores] : candidates) {
    scores.validate();
    if (scores.label_ids != ref.label_ids)
      throw std::invalid_argument(
          "candidate '" + id + "' was evaluated on a different set");
    double sum = 0.0;
    for (double lp : scores.conditional_logp) sum += lp;
    out.push_back({id, sum, scores.conditional_logp.size()});
  }
  std::sort(out.begin(), out.end(), [](const SubsetScore& a, const SubsetScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.subset_id < b.subset_id;
  });
  return out;
}

PredictiveScores parse_scores_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file");
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != "example_id,label_id,logp")
    throw std::runtime_error(path +
                             ":1: expected header 'example_id,label_id,logp'");

  PredictiveScores scores;
  int max_label = -1;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, label_str, logp_str;
    if (!std::getline(row, id, ',') || !std::getline(row, label_str, ',') ||
        !std::getline(row, logp_str))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 3 comma-separated fields");
    try {
      std::size_t used = 0;
      const int label = std::stoi(label_str, &used);
      if (used != label_str.size() || label < 0) throw std::invalid_argument("");
      const double logp = std::stod(logp_str, &used);
      if (used != logp_str.size()) throw std::invalid_argument("");
      scores.label_ids.push_back(label);
      scores.conditional_logp.push_back(logp);
      max_label = std::max(max_label, label);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed row '" + line + "'");
    }
  }
  scores.num_labels = max_label + 1;
  scores.validate();
  return scores;
}

std::string report_text(const VInfoReport& report) {
  std::ostringstream out;
  out << "h_cond " << fmt17(report.h_cond) << '\n'
      << "h_marg " << fmt17(report.h_marg) << '\n'
      << "i_v " << fmt17(report.i_v) << '\n'
      << "n " << report.n << '\n';
  if (report.negative)
    out << "note i_v is negative: the fitted predictor extracts less than the "
           "best constant\n";
  return out.str();
}

}  // namespace prunekit
