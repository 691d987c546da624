#include "mu2x/graph_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "mu2x/errors.hpp"

namespace mu2x {

using nlohmann::json;

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Claim: return "claim";
    case NodeKind::Tweet: return "tweet";
    case NodeKind::Reply: return "reply";
    case NodeKind::User: return "user";
  }
  return "?";
}

std::string_view to_string(Lang l) {
  switch (l) {
    case Lang::En: return "en";
    case Lang::Es: return "es";
    case Lang::Pt: return "pt";
  }
  return "?";
}

std::string_view to_string(RelationKind k) {
  switch (k) {
    case RelationKind::Posted: return "posted";
    case RelationKind::Mentions: return "mentions";
    case RelationKind::Retweeted: return "retweeted";
    case RelationKind::QuoteOf: return "quote_of";
    case RelationKind::ReplyTo: return "reply_to";
    case RelationKind::Discusses: return "discusses";
  }
  return "?";
}

NodeKind parse_node_kind(std::string_view s) {
  if (s == "claim") return NodeKind::Claim;
  if (s == "tweet") return NodeKind::Tweet;
  if (s == "reply") return NodeKind::Reply;
  if (s == "user") return NodeKind::User;
  throw MalformedRecord("unknown node kind '" + std::string(s) + "'");
}

Lang parse_lang(std::string_view s) {
  if (s == "en") return Lang::En;
  if (s == "es") return Lang::Es;
  if (s == "pt") return Lang::Pt;
  throw MalformedRecord("unsupported language '" + std::string(s) + "'");
}

RelationKind parse_relation_kind(std::string_view s) {
  for (std::size_t i = 0; i < kNumRelationKinds; ++i) {
    auto k = static_cast<RelationKind>(i);
    if (s == to_string(k)) return k;
  }
  throw UnknownRelationKind("'" + std::string(s) + "'");
}

SocialGraph SocialGraph::build(std::vector<PostNode> nodes, std::vector<Relation> edges) {
  SocialGraph g;
  std::sort(nodes.begin(), nodes.end(),
            [](const PostNode& a, const PostNode& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].id == nodes[i - 1].id) throw DuplicateId("'" + nodes[i].id + "'");
  }
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::User && n.label) {
      throw MalformedRecord("user node '" + n.id + "' carries a label");
    }
  }
  g.nodes_ = std::move(nodes);
  g.index_.reserve(g.nodes_.size());
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    g.index_.emplace(g.nodes_[i].id, static_cast<NodeIndex>(i));
  }

  g.adjacency_.resize(g.nodes_.size());
  for (const auto& e : edges) {
    auto s = g.index_.find(e.src);
    if (s == g.index_.end()) throw DanglingEdge("source '" + e.src + "' not in graph");
    auto d = g.index_.find(e.dst);
    if (d == g.index_.end()) throw DanglingEdge("destination '" + e.dst + "' not in graph");
    if (e.kind == RelationKind::Posted && g.nodes_[s->second].kind != NodeKind::User) {
      throw RelationConstraint("posted edge " + e.src + "->" + e.dst + " must start at a user");
    }
    if (e.kind == RelationKind::Discusses && g.nodes_[d->second].kind != NodeKind::Claim) {
      throw RelationConstraint("discusses edge " + e.src + "->" + e.dst + " must end at a claim");
    }
    g.adjacency_[s->second].push_back({d->second, e.kind});
    if (s->second != d->second) g.adjacency_[d->second].push_back({s->second, e.kind});
  }
  for (auto& adj : g.adjacency_) {
    std::sort(adj.begin(), adj.end(), [](const Neighbor& a, const Neighbor& b) {
      return std::tie(a.node, a.kind) < std::tie(b.node, b.kind);
    });
  }
  std::sort(edges.begin(), edges.end(), [](const Relation& a, const Relation& b) {
    return std::tie(a.src, a.dst, a.kind) < std::tie(b.src, b.dst, b.kind);
  });
  g.edges_ = std::move(edges);
  return g;
}

bool SocialGraph::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

NodeIndex SocialGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw UnknownNode("'" + std::string(id) + "'");
  return it->second;
}

std::vector<NodeIndex> SocialGraph::classifiable() const {
  std::vector<NodeIndex> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind != NodeKind::User) out.push_back(static_cast<NodeIndex>(i));
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line, line_no);
    pos = end + 1;
  }
}

std::string where(const char* file, std::size_t line_no) {
  return std::string(file) + " line " + std::to_string(line_no);
}

std::uint64_t count_field(const json& j, const char* key, const char* file, std::size_t line_no) {
  if (!j.contains(key)) return 0;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw MalformedRecord(where(file, line_no) + ": '" + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

PostNode parse_node(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(where("nodes", line_no) + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("kind") ||
      !j["kind"].is_string()) {
    throw MalformedRecord(where("nodes", line_no) + ": missing string 'id' or 'kind'");
  }
  PostNode n;
  n.id = j["id"].get<std::string>();
  try {
    n.kind = parse_node_kind(j["kind"].get<std::string>());
    n.lang = parse_lang(j.value("lang", std::string("en")));
  } catch (const MalformedRecord& e) {
    throw MalformedRecord(where("nodes", line_no) + ": " + e.what());
  }
  if (j.contains("text")) {
    if (!j["text"].is_string()) throw MalformedRecord(where("nodes", line_no) + ": 'text' must be a string");
    n.text = j["text"].get<std::string>();
  }
  n.metadata.n_retweets = count_field(j, "n_retweets", "nodes", line_no);
  n.metadata.n_replies = count_field(j, "n_replies", "nodes", line_no);
  n.metadata.n_quotes = count_field(j, "n_quotes", "nodes", line_no);
  if (j.contains("label") && !j["label"].is_null()) {
    const auto& l = j["label"];
    if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1)) {
      throw MalformedRecord(where("nodes", line_no) + ": 'label' must be 0, 1 or null");
    }
    n.label = static_cast<Label>(l.get<int>());
  }
  return n;
}

Relation parse_edge(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(where("edges", line_no) + ": " + e.what());
  }
  for (const char* key : {"src", "dst", "kind"}) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
      throw MalformedRecord(where("edges", line_no) + ": missing string '" + key + "'");
    }
  }
  Relation r;
  r.src = j["src"].get<std::string>();
  r.dst = j["dst"].get<std::string>();
  try {
    r.kind = parse_relation_kind(j["kind"].get<std::string>());
  } catch (const UnknownRelationKind& e) {
    throw UnknownRelationKind(where("edges", line_no) + ": " + e.what());
  }
  return r;
}

}  // namespace

SocialGraph parse_graph(std::string_view nodes_jsonl, std::string_view edges_jsonl) {
  std::vector<PostNode> nodes;
  std::vector<Relation> edges;
  for_each_line(nodes_jsonl, [&](std::string_view l, std::size_t n) { nodes.push_back(parse_node(l, n)); });
  for_each_line(edges_jsonl, [&](std::string_view l, std::size_t n) { edges.push_back(parse_edge(l, n)); });
  return SocialGraph::build(std::move(nodes), std::move(edges));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MalformedRecord("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view contents) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedRecord("cannot write '" + p.string() + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

SocialGraph load_graph(const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path) {
  const std::string nodes = read_file(nodes_path);
  const std::string edges = read_file(edges_path);
  try {
    return parse_graph(nodes, edges);
  } catch (const Error& e) {
    // Prefix with the file so CLI messages name the offending input.
    const bool edge_error = std::string_view(e.what()).find("edges line") != std::string_view::npos ||
                            dynamic_cast<const DanglingEdge*>(&e) ||
                            dynamic_cast<const RelationConstraint*>(&e);
    const std::string file = (edge_error ? edges_path : nodes_path).string();
    if (dynamic_cast<const DanglingEdge*>(&e)) throw DanglingEdge(file + ": " + e.what());
    if (dynamic_cast<const DuplicateId*>(&e)) throw DuplicateId(file + ": " + e.what());
    if (dynamic_cast<const UnknownRelationKind*>(&e)) throw UnknownRelationKind(file + ": " + e.what());
    if (dynamic_cast<const RelationConstraint*>(&e)) throw RelationConstraint(file + ": " + e.what());
    throw MalformedRecord(file + ": " + e.what());
  }
}

std::string serialize_nodes(const SocialGraph& g) {
  std::string out;
  for (const auto& n : g.nodes()) {
    json j = json::object();
    j["id"] = n.id;
    j["kind"] = to_string(n.kind);
    j["lang"] = to_string(n.lang);
    j["text"] = n.text;
    j["n_retweets"] = n.metadata.n_retweets;
    j["n_replies"] = n.metadata.n_replies;
    j["n_quotes"] = n.metadata.n_quotes;
    j["label"] = n.label ? json(static_cast<int>(*n.label)) : json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string serialize_edges(const SocialGraph& g) {
  std::string out;
  for (const auto& e : g.edges()) {
    json j = json::object();
    j["src"] = e.src;
    j["dst"] = e.dst;
    j["kind"] = to_string(e.kind);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_graph(const SocialGraph& g, const std::filesystem::path& nodes_path,
                const std::filesystem::path& edges_path) {
  write_file(nodes_path, serialize_nodes(g));
  write_file(edges_path, serialize_edges(g));
}

std::vector<NodeIndex> k_hop_subgraph(const SocialGraph& g, NodeIndex root, int k) {
  if (root >= g.num_nodes()) throw UnknownNode("index " + std::to_string(root));
  if (k < 0) throw MalformedRecord("hop count must be nonnegative");
  std::vector<int> depth(g.num_nodes(), -1);
  std::vector<NodeIndex> frontier{root};
  std::vector<NodeIndex> out{root};
  depth[root] = 0;
  for (int d = 1; d <= k && !frontier.empty(); ++d) {
    std::vector<NodeIndex> next;
    for (NodeIndex u : frontier) {
      for (const auto& nb : g.neighbors(u)) {
        if (depth[nb.node] < 0) {
          depth[nb.node] = d;
          next.push_back(nb.node);
          out.push_back(nb.node);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> k_hop_subgraph(const SocialGraph& g, std::string_view root, int k) {
  std::vector<std::string> ids;
  for (NodeIndex i : k_hop_subgraph(g, g.index_of(root), k)) ids.push_back(g.node(i).id);
  return ids;
}

}  // namespace mu2x
