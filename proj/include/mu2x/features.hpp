#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mu2x/graph_store.hpp"

namespace mu2x {

// Which feature blocks a classifier sees.
enum class Modality : std::uint8_t { Graph, Text, Multimodal };
// The origin block of a single feature dimension.
enum class ModalityTag : std::uint8_t { Metadata, Structural, Text, Noise };

std::string_view to_string(Modality m);
std::string_view to_string(ModalityTag t);
Modality parse_modality(std::string_view s);

inline constexpr std::size_t kMetadataDims = 3;
inline constexpr std::size_t kStructuralDims = kNumRelationKinds + 1;
inline constexpr std::size_t kDefaultEmbeddingDim = 768;
inline constexpr std::size_t kDefaultProjectionDim = 812;

struct EmbeddingEntry {
  std::optional<Lang> lang;  // the packed binary form carries no language tag
  std::vector<float> vector;
};

struct EmbeddingTable {
  std::size_t dim = kDefaultEmbeddingDim;
  std::map<std::string, EmbeddingEntry> entries;  // ordered for deterministic output
};

EmbeddingTable parse_embeddings_jsonl(std::string_view text);
EmbeddingTable parse_embeddings_binary(std::string_view bytes);
// Dispatches on the "MU2XEMB1" magic.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
std::string serialize_embeddings_jsonl(const EmbeddingTable& t);
std::string serialize_embeddings_binary(const EmbeddingTable& t);

std::array<double, kMetadataDims> aggregate_metadata(const MetadataCounts& m);

// log1p of the degree per relation kind (RelationKind order), then log1p of total degree.
std::array<double, kStructuralDims> structural_features(const SocialGraph& g, NodeIndex node);
std::array<double, kStructuralDims> structural_features(const SocialGraph& g, std::string_view id);

// Affine text projection: out = weight * e + bias, weight is out_dim x in_dim.
struct Projection {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }

  // Gaussian entries scaled by 1/sqrt(in_dim), zero bias.
  static Projection random(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);
};

Eigen::VectorXd project_text(const Eigen::VectorXd& e, const Projection& p);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const IndexRange&) const = default;
};

// Column ranges are contiguous and ordered [metadata | structural | text | noise].
struct FeatureLayout {
  IndexRange meta;
  IndexRange structural;
  IndexRange text;
  IndexRange noise;
  std::size_t total_dim = 0;

  ModalityTag tag_of(std::size_t dim) const;
  bool operator==(const FeatureLayout&) const = default;
};

// Unnormalized rows for every classifiable node, in graph index order.
struct RawFeatures {
  std::vector<NodeIndex> nodes;
  Eigen::MatrixXd data;
  FeatureLayout layout;
};

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureMatrix {
  std::vector<NodeIndex> nodes;  // row -> graph node
  std::vector<int> row_of;       // graph node -> row, -1 for non-classifiable
  FloatMatrix data;
  FeatureLayout layout;
  // z = (raw - mean) * scale; scale is 0 for constant columns.
  Eigen::VectorXd column_mean;
  Eigen::VectorXd column_scale;

  std::size_t rows() const { return nodes.size(); }
  std::size_t cols() const { return layout.total_dim; }
  int row(NodeIndex node) const { return node < row_of.size() ? row_of[node] : -1; }
  Eigen::MatrixXd as_double() const { return data.cast<double>(); }
};

// `embeddings` and `projection` are required for the text and multimodal modalities.
RawFeatures assemble_features(const SocialGraph& g, const EmbeddingTable* embeddings,
                              Modality modality, const Projection* projection);

// Appends `count` standard-normal columns (or constant columns in debug mode) tagged Noise.
void append_noise_columns(RawFeatures& raw, std::size_t count, std::uint64_t seed,
                          bool constant = false);

FeatureMatrix normalize_features(const RawFeatures& raw, std::size_t graph_size);

FeatureMatrix build_features(const SocialGraph& g, const EmbeddingTable* embeddings,
                             Modality modality, const Projection* projection);

}  // namespace mu2x
