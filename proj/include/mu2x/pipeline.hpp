#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mu2x/features.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_store.hpp"
#include "mu2x/text_explainer.hpp"

namespace mu2x {

enum class TextSource : std::uint8_t { Embeddings, Tokens };
std::string_view to_string(TextSource s);
TextSource parse_text_source(std::string_view s);

// Everything needed to rebuild the exact feature matrix a model was trained on.
struct FeatureSpec {
  Modality modality = Modality::Multimodal;
  TextSource text_source = TextSource::Embeddings;
  std::size_t projection_dim = kDefaultProjectionDim;
  std::uint64_t projection_seed = 17;
  std::size_t token_dim = 32;
  std::uint64_t token_seed = 23;
  std::size_t token_min_count = 2;
};

struct NoiseSpec {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  bool constant = false;
};

// Feature-row indices of a stratified 70/10/20 split of labeled rows.
struct Split {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> validation;
  std::vector<std::uint32_t> test;
};

Split stratified_split(const std::vector<int>& labels, std::uint64_t seed);

struct Dataset {
  const SocialGraph* graph = nullptr;
  const EmbeddingTable* embeddings = nullptr;  // external table, embedding mode
  FeatureSpec spec;
  std::optional<ToyTextEncoder> encoder;       // token mode
  std::optional<EmbeddingTable> encoded;       // encoder output for every classifiable node
  Projection projection;
  FeatureMatrix features;
  Eigen::MatrixXd x;
  GatGraph gat;
  std::vector<int> labels;  // per feature row; -1 when unlabeled
  Split split;
  std::uint64_t split_seed = 0;

  const EmbeddingTable* text_table() const { return encoded ? &*encoded : embeddings; }
  TextPathway pathway() const;
  std::uint32_t row_of(std::string_view id) const;  // throws UnknownNode
};

// Text modalities in embedding mode require `embeddings`.
Dataset prepare_dataset(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                        std::uint64_t split_seed, bool self_loops = true, const NoiseSpec& noise = {});

// The base feature rows before noise and normalization, for protocol reuse.
RawFeatures raw_features(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                         std::optional<ToyTextEncoder>* encoder_out = nullptr,
                         std::optional<EmbeddingTable>* encoded_out = nullptr, Projection* projection_out = nullptr);

struct Checkpoint {
  FeatureSpec spec;
  std::uint64_t split_seed = 0;
  GatModel model;
  std::vector<double> loss_history;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_full_checkpoint(std::string_view text);

Checkpoint train_checkpoint(const Dataset& data, const GatConfig& cfg);

}  // namespace mu2x
