#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mu2x/autodiff.hpp"
#include "mu2x/features.hpp"
#include "mu2x/graph_store.hpp"

namespace mu2x {

struct GatConfig {
  int hidden_dim = 16;
  int heads = 1;
  double lr = 0.005;
  int epochs = 400;
  double leaky_slope = 0.2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool self_loops = true;

  void validate() const;
};

// Message-passing structure over feature-matrix rows. Edges (src -> dst) are
// sorted by (dst, src), deduplicated, and include self-loops when enabled.
struct GatGraph {
  std::size_t num_nodes = 0;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<std::size_t> offsets;  // edges into node i: [offsets[i], offsets[i+1])

  // Relations between two classifiable nodes become undirected message edges.
  static GatGraph from_social(const SocialGraph& g, const FeatureMatrix& x, bool self_loops);
  static GatGraph from_pairs(std::size_t num_nodes, std::span<const std::pair<std::uint32_t, std::uint32_t>> undirected,
                             bool self_loops);

  std::size_t num_edges() const { return src.size(); }
  // Rows within `hops` message hops of `row`, sorted; the induced subgraph
  // reproduces row's output exactly when hops >= number of layers.
  std::vector<std::uint32_t> neighborhood(std::uint32_t row, int hops) const;
  GatGraph induced(std::span<const std::uint32_t> rows) const;
};

struct AttentionHead {
  ad::Matrix weight;    // in_dim x out_dim
  ad::Matrix att_dst;   // out_dim x 1, applied to the receiving node
  ad::Matrix att_src;   // out_dim x 1, applied to the neighbor
};

struct Prediction {
  std::array<double, 2> probs{0.5, 0.5};  // [misinformation, fact]
  Label label = Label::Misinformation;
};

Prediction make_prediction(double p_misinformation, double p_fact);

struct GatModel {
  GatConfig config;
  std::size_t input_dim = 0;
  std::vector<AttentionHead> layer1;  // input_dim -> hidden_dim
  std::vector<AttentionHead> layer2;  // hidden_dim -> 2
  bool frozen = false;

  static GatModel initialize(std::size_t input_dim, const GatConfig& cfg);
};

// Per layer, per head: attention weight of each GatGraph edge.
struct AttentionMaps {
  std::vector<std::vector<std::vector<double>>> layers;
};

struct GatOutput {
  ad::Var logits;                                   // n x 2
  std::vector<std::vector<ad::Var>> attention;      // [layer][head] E x 1
};

// Records the two-layer forward pass on `tape`. Parameters are bound as
// variables when `trainable`, otherwise as constants.
struct BoundParams {
  std::vector<std::array<ad::Var, 3>> layer1;
  std::vector<std::array<ad::Var, 3>> layer2;
};
BoundParams bind_params(ad::Tape& tape, const GatModel& model, bool trainable);
GatOutput gat_forward(const BoundParams& params, const GatConfig& cfg, ad::Var x, const GatGraph& graph);

std::vector<Prediction> forward(const GatModel& model, const GatGraph& graph, const ad::Matrix& x);
AttentionMaps attention_coefficients(const GatModel& model, const GatGraph& graph, const ad::Matrix& x);

struct TrainResult {
  GatModel model;
  std::vector<double> loss_history;
};

// labels[row] is 0, 1, or -1 for unlabeled; training uses `train_rows` only.
TrainResult train(const GatGraph& graph, const ad::Matrix& x, std::span<const int> labels,
                  std::span<const std::uint32_t> train_rows, const GatConfig& cfg);

// Prediction for `target` with `zero_dims` set to 0 in the target's row only.
Prediction predict_with_mask(const GatModel& model, const GatGraph& graph, const ad::Matrix& x,
                             std::span<const std::size_t> zero_dims, std::uint32_t target);

std::string serialize_checkpoint(const GatModel& model);
GatModel parse_checkpoint(std::string_view json_text);

}  // namespace mu2x
