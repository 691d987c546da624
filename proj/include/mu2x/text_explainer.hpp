#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mu2x/autodiff.hpp"
#include "mu2x/features.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_store.hpp"

namespace mu2x {

// Lowercases ASCII, splits on whitespace and punctuation, keeps #hashtags and
// @mentions whole. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> tokenize(std::string_view text);

// Bag-of-embeddings text encoder used as a small stand-in language model.
class ToyTextEncoder {
 public:
  static constexpr std::uint32_t kUnk = 0;

  ToyTextEncoder() = default;
  // Vocabulary: tokens seen in at least `min_count` non-user texts, sorted.
  // Rows are seeded N(0, 1); the UNK row is zero.
  static ToyTextEncoder build(const SocialGraph& g, std::size_t dim, std::uint64_t seed, std::size_t min_count = 2);

  std::size_t dim() const { return static_cast<std::size_t>(table_.cols()); }
  std::size_t vocab_size() const { return vocab_.size() + 1; }
  std::uint32_t token_id(std::string_view token) const;
  std::vector<std::uint32_t> token_ids(std::string_view text) const;
  const Eigen::MatrixXd& table() const { return table_; }
  Eigen::MatrixXd& table() { return table_; }

  // T x dim token embedding rows.
  Eigen::MatrixXd token_rows(std::string_view text) const;
  // Mean of the token rows; zero vector for empty text.
  Eigen::VectorXd encode(std::string_view text) const;
  // One entry per classifiable node.
  EmbeddingTable encode_graph(const SocialGraph& g) const;

 private:
  std::map<std::string, std::uint32_t, std::less<>> vocab_;
  Eigen::MatrixXd table_;
};

using ScalarFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

struct IgResult {
  Eigen::MatrixXd raw;
  double f_input = 0.0;
  double f_baseline = 0.0;
  double convergence_delta = 0.0;  // |sum(raw) - (f_input - f_baseline)|
};

// Midpoint Riemann approximation of the straight-line path integral.
IgResult integrated_gradients(const ScalarFn& f, const Eigen::MatrixXd& input, const Eigen::MatrixXd& baseline,
                              int steps);

enum class TextMode { Tokens, Embedding };

// How the text block of a feature row is produced from an embedding:
// z = (projection(e) - column_mean) * column_scale over the layout's text range.
struct TextPathway {
  const Projection* projection = nullptr;
  Eigen::VectorXd column_mean;   // text columns only
  Eigen::VectorXd column_scale;  // text columns only
  IndexRange text;
  const ToyTextEncoder* encoder = nullptr;       // token mode
  const EmbeddingTable* embeddings = nullptr;    // embedding mode

  static TextPathway from(const FeatureMatrix& x, const Projection& projection, const ToyTextEncoder* encoder,
                          const EmbeddingTable* embeddings);
};

struct TokenAttribution {
  std::string target;
  std::vector<std::string> tokens;
  std::vector<double> scores;  // raw / max|raw|, in [-1, 1]
  std::vector<double> raw;
  double convergence_delta = 0.0;
  int steps = 0;
  Label predicted = Label::Misinformation;
};

// Attributes P(predicted class | target) to the target's token embeddings
// (Tokens) or raw embedding dimensions (Embedding); other rows stay fixed.
TokenAttribution explain_text(const GatModel& model, const GatGraph& graph, const Eigen::MatrixXd& x,
                              std::uint32_t target_row, const PostNode& node, const TextPathway& pathway,
                              TextMode mode, int steps = 50);

std::string attribution_json(const TokenAttribution& a);

}  // namespace mu2x
