#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prunekit {

// Per-example log-probabilities assigned to the gold label by a fitted
// predictor, plus the gold labels themselves.
struct PredictiveScores {
  std::vector<double> conditional_logp;  // log f[x_i](y_i), nats, <= 0
  std::vector<int> label_ids;            // in [0, num_labels)
  int num_labels = 0;

  void validate() const;
};

struct VInfoReport {
  double h_cond;  // H(Y|X) under the fitted predictor, nats
  double h_marg;  // empirical label entropy H(Y|no input), nats
  double i_v;     // h_marg - h_cond; may be negative for a poor predictor
  bool negative;  // i_v < 0
  std::size_t n;
};

struct SubsetScore {
  std::string subset_id;
  double score;  // sum of conditional log-probabilities over the shared set
  std::size_t n;
};

double conditional_entropy(const PredictiveScores& scores);
double marginal_entropy(const std::vector<int>& label_ids, int num_labels);
VInfoReport v_information(const PredictiveScores& scores);

// Rank candidate subsets by total log-probability on a shared evaluation
// set, descending; ties broken by subset_id.
std::vector<SubsetScore> rank_subsets(
    const std::vector<std::pair<std::string, PredictiveScores>>& candidates);

// Parse a scores file: header `example_id,label_id,logp`, one row per
// example. Throws std::runtime_error naming the offending line.
PredictiveScores parse_scores_file(const std::string& path);

std::string report_text(const VInfoReport& report);

}  // namespace prunekit
