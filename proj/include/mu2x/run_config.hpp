#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mu2x/gat.hpp"
#include "mu2x/graph_explainer.hpp"
#include "mu2x/pipeline.hpp"
#include "mu2x/protocols.hpp"
#include "mu2x/synth.hpp"

namespace mu2x {

// Every tunable of a run. Loaded from a flat `key = value` file; `#` starts a comment.
struct RunConfig {
  std::uint64_t seed = 7;
  std::uint64_t split_seed = 1;
  GatConfig gat;
  FeatureSpec features;
  // Explainers
  int k = 2;
  std::optional<double> rho;
  double rho_scale = 1e-2;
  int ig_steps = 50;
  std::string text_mode = "auto";  // auto | tokens | embedding
  // Protocols
  int bootstrap_b = 1000;
  int rounds = 25;
  double frac = 0.3;
  std::vector<int> k_list{1, 2, 3, 5, 10};
  std::vector<double> p_list{0.01, 0.1, 0.25, 0.5, 0.75, 1.0};
  std::size_t explained_per_round = 20;
  double ridge_lambda = 1e-3;
  bool constant_noise = false;
  std::size_t interpret_max_nodes = 0;  // 0 = every test node
  int jobs = 0;                         // 0 = available parallelism
  // Paths
  std::string nodes;
  std::string edges;
  std::string embeddings;
  std::string model;
  std::string out;
  // Synthetic corpus
  SynthConfig synth;
  std::string synth_embedding_format = "jsonl";  // jsonl | bin

  // Applies one key; throws InvalidConfig naming the key for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  ExplainOptions explain_options() const;
  TrustOptions trust_options() const;
  RobustOptions robust_options() const;
  GatConfig gat_config() const;  // gat with the run seed applied
  int resolved_jobs() const;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

// All keys with their defaults, in documentation order.
const std::vector<ConfigKey>& config_keys();
std::string describe_config_keys();

// `source` names the file in error messages.
RunConfig parse_run_config(std::string_view text, std::string_view source = "config");
RunConfig load_run_config(const std::string& path);

}  // namespace mu2x
