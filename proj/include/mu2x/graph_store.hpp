#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mu2x {

enum class NodeKind : std::uint8_t { Claim, Tweet, Reply, User };
enum class Lang : std::uint8_t { En, Es, Pt };
enum class Label : std::uint8_t { Misinformation = 0, Fact = 1 };

// Fixed order; structural features index degrees by this order.
enum class RelationKind : std::uint8_t { Posted, Mentions, Retweeted, QuoteOf, ReplyTo, Discusses };
inline constexpr std::size_t kNumRelationKinds = 6;

std::string_view to_string(NodeKind k);
std::string_view to_string(Lang l);
std::string_view to_string(RelationKind k);
NodeKind parse_node_kind(std::string_view s);
Lang parse_lang(std::string_view s);
RelationKind parse_relation_kind(std::string_view s);

struct MetadataCounts {
  std::uint64_t n_retweets = 0;
  std::uint64_t n_replies = 0;
  std::uint64_t n_quotes = 0;
  bool operator==(const MetadataCounts&) const = default;
};

struct PostNode {
  std::string id;
  NodeKind kind = NodeKind::Tweet;
  Lang lang = Lang::En;
  std::string text;
  MetadataCounts metadata;
  std::optional<Label> label;
  bool operator==(const PostNode&) const = default;
};

struct Relation {
  std::string src;
  std::string dst;
  RelationKind kind = RelationKind::Posted;
  bool operator==(const Relation&) const = default;
};

// Node ids are resolved to dense indices in lexicographic id order.
using NodeIndex = std::uint32_t;

struct Neighbor {
  NodeIndex node;
  RelationKind kind;
};

// Immutable heterogeneous graph. Construct through SocialGraph::build or load_graph.
class SocialGraph {
 public:
  SocialGraph() = default;

  // Validates every node/edge invariant and builds the undirected adjacency.
  static SocialGraph build(std::vector<PostNode> nodes, std::vector<Relation> edges);

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<PostNode>& nodes() const { return nodes_; }
  const std::vector<Relation>& edges() const { return edges_; }
  const PostNode& node(NodeIndex i) const { return nodes_[i]; }

  bool contains(std::string_view id) const;
  NodeIndex index_of(std::string_view id) const;  // throws UnknownNode
  const PostNode& node(std::string_view id) const { return nodes_[index_of(id)]; }
  const std::vector<Neighbor>& neighbors(NodeIndex i) const { return adjacency_[i]; }

  // Classifiable nodes are every non-User node, in lexicographic id order.
  std::vector<NodeIndex> classifiable() const;

 private:
  std::vector<PostNode> nodes_;
  std::vector<Relation> edges_;
  std::unordered_map<std::string, NodeIndex> index_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

SocialGraph load_graph(const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path);
SocialGraph parse_graph(std::string_view nodes_jsonl, std::string_view edges_jsonl);

// Canonical JSONL forms: nodes sorted by id, edges sorted by (src, dst, kind).
std::string serialize_nodes(const SocialGraph& g);
std::string serialize_edges(const SocialGraph& g);
void save_graph(const SocialGraph& g, const std::filesystem::path& nodes_path,
                const std::filesystem::path& edges_path);

// All nodes within k undirected hops of root, root included, sorted by index.
std::vector<NodeIndex> k_hop_subgraph(const SocialGraph& g, NodeIndex root, int k);
std::vector<std::string> k_hop_subgraph(const SocialGraph& g, std::string_view root, int k);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view contents);

}  // namespace mu2x
