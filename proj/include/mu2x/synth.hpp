#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "mu2x/features.hpp"
#include "mu2x/graph_store.hpp"

namespace mu2x {

struct SynthConfig {
  std::size_t n_tweets = 2000;
  std::size_t n_replies = 200;
  std::size_t n_users = 400;
  std::size_t n_claims = 100;
  // en, es, pt
  std::array<double, 3> lang_proportions{0.5, 0.25, 0.25};
  double signal_metadata = 1.0;
  double signal_structure = 1.0;
  double signal_text = 1.0;
  // Mean edges emitted per tweet.
  double retweet_density = 1.0;
  double quote_density = 0.2;
  double mention_density = 0.5;
  double misinformation_rate = 0.5;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthCorpus {
  SocialGraph graph;
  EmbeddingTable embeddings;

  std::string nodes_jsonl() const { return serialize_nodes(graph); }
  std::string edges_jsonl() const { return serialize_edges(graph); }
  std::string embeddings_jsonl() const { return serialize_embeddings_jsonl(embeddings); }
};

// Planted signal: misinformation posts draw higher engagement counts, use
// class-specific vocabulary, carry class-shifted embeddings, and link
// preferentially to same-label posts. Each channel scales with its strength.
SynthCorpus generate(const SynthConfig& cfg);

struct SynthPaths {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  std::filesystem::path embeddings;
};

SynthPaths write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace mu2x
