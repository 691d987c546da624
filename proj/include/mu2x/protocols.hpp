#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mu2x/features.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_explainer.hpp"
#include "mu2x/pipeline.hpp"

namespace mu2x {

// F1 of `positive` over paired predictions/golds; 0 when no true/predicted positives.
double f1_score(std::span<const int> preds, std::span<const int> golds, int positive);

struct BootstrapReport {
  double point_f1 = 0.0;
  double mean_f1 = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double half_width = 0.0;
  int resamples = 1000;
  std::uint64_t seed = 0;
};

// Misinformation (0) is the positive class. Resample i draws index
// Rng(seed).index(n) n times, resamples drawn sequentially from one stream.
BootstrapReport bootstrap_f1(std::span<const int> preds, std::span<const int> golds, int resamples,
                             std::uint64_t seed);

struct ModalityBucket {
  std::size_t explanations = 0;
  std::map<ModalityTag, std::size_t> counts;
  std::map<ModalityTag, double> frequencies;
};

// Buckets: "1", "2", "3", ">3" selected features; "overall" aggregates all.
struct ModalityReport {
  std::map<std::string, ModalityBucket> buckets;
  std::size_t empty_explanations = 0;
};

ModalityReport modality_distribution(std::span<const GraphExplanation> explanations, const FeatureLayout& layout);

// Ridge least squares with an unpenalized intercept.
struct LinearSurrogate {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double operator()(const Eigen::VectorXd& x) const { return intercept + weights.dot(x); }
};
LinearSurrogate fit_surrogate(const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, double lambda = 1e-3);

// Everything the simulated user needs for one explained test node.
struct TrustCase {
  std::string node;
  std::vector<std::size_t> ranked_dims;  // explanation order, beta > 0
  LinearSurrogate surrogate;
  Eigen::VectorXd row;
};

// Oracle: true when zeroing `untrusted` in the case's row changes the model's label.
using TrustOracle = std::function<bool(std::size_t case_index, std::span<const std::size_t> untrusted)>;

struct TrustRound {
  int round = 0;
  bool degenerate = false;  // oracle labels were single-class
  // per K: tp, fp, fn, tn with Trustworthy as the positive class
  std::map<int, std::array<std::size_t, 4>> confusion;
  std::map<int, double> f1;
};

struct TrustReport {
  std::string modality;
  std::vector<int> k_list;
  int rounds = 25;
  double untrustworthy_frac = 0.3;
  std::map<int, double> mean_f1;  // NaN when no round is valid
  std::map<int, double> std_f1;
  std::size_t valid_rounds = 0;
  std::size_t cases = 0;
  std::size_t skipped_nodes = 0;
  std::vector<TrustRound> per_round;
};

struct TrustOptions {
  std::vector<int> k_list{1, 2, 3, 5, 10};
  int rounds = 25;
  double frac = 0.3;
  std::uint64_t seed = 0;
  int jobs = 1;
  double ridge_lambda = 1e-3;
  ExplainOptions explain;
};

// User says Untrustworthy when zeroing top-K ∩ U flips the surrogate's
// thresholded (p >= 0.5 -> misinformation) decision.
bool user_flags_untrustworthy(const TrustCase& c, std::span<const std::size_t> untrusted, int k);

TrustReport run_trust_rounds(std::span<const TrustCase> cases, std::size_t total_dim, const TrustOracle& oracle,
                             const TrustOptions& options);

// Trains on `data`, explains every test node once, then runs the rounds.
TrustReport trustworthiness_protocol(const Dataset& data, const GatConfig& cfg, const TrustOptions& options);

struct RobustLevel {
  double p = 0.0;
  std::size_t noise_dims = 0;
  std::map<std::size_t, std::size_t> histogram;  // noisy selections per explanation -> count
  std::vector<double> round_percentages;
  double mean_percentage = 0.0;
  std::size_t explanations = 0;
};

struct RobustReport {
  std::string modality;
  int rounds = 25;
  std::size_t base_dim = 0;
  bool constant_noise = false;
  std::vector<RobustLevel> levels;
};

struct RobustOptions {
  std::vector<double> p_list{0.01, 0.1, 0.25, 0.5, 0.75, 1.0};
  int rounds = 25;
  std::size_t explained_per_round = 20;
  std::uint64_t seed = 0;
  bool constant_noise = false;
  int jobs = 1;
  ExplainOptions explain;
};

RobustReport robustness_protocol(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                                 const GatConfig& cfg, std::uint64_t split_seed, const RobustOptions& options);

std::string to_json(const BootstrapReport& r);
std::string to_json(const ModalityReport& r);
std::string to_json(const TrustReport& r);
std::string to_json(const RobustReport& r);
std::string to_csv(const TrustReport& r);   // x=K, y=F1 per round, series=modality
std::string to_csv(const RobustReport& r);  // x=100p, y=mean noisy-selection percentage

BootstrapReport parse_bootstrap_report(std::string_view json_text);
TrustReport parse_trust_report(std::string_view json_text);
RobustReport parse_robust_report(std::string_view json_text);

// Runs fn(0..n-1) on up to `jobs` threads; results must be written by index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mu2x
