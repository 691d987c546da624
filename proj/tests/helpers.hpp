#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "mu2x/graph_store.hpp"
#include "mu2x/rng.hpp"

namespace testutil {

inline mu2x::PostNode post(std::string id, mu2x::NodeKind kind = mu2x::NodeKind::Tweet,
                           std::optional<mu2x::Label> label = std::nullopt, std::string text = "",
                           mu2x::MetadataCounts meta = {}, mu2x::Lang lang = mu2x::Lang::En) {
  mu2x::PostNode n;
  n.id = std::move(id);
  n.kind = kind;
  n.label = kind == mu2x::NodeKind::User ? std::nullopt : label;
  n.text = std::move(text);
  n.metadata = meta;
  n.lang = lang;
  return n;
}

inline mu2x::PostNode user(std::string id) { return post(std::move(id), mu2x::NodeKind::User); }

// Tweets t0..t{n-1} (alternating labels) and claims c0..c{n/4}; random relations
// that respect the kind constraints.
inline mu2x::SocialGraph random_graph(std::size_t n_tweets, std::size_t n_edges, std::uint64_t seed) {
  using namespace mu2x;
  Rng rng(seed);
  std::vector<PostNode> nodes;
  const std::size_t n_claims = std::max<std::size_t>(1, n_tweets / 4);
  const std::size_t n_users = std::max<std::size_t>(1, n_tweets / 3);
  for (std::size_t i = 0; i < n_tweets; ++i) {
    MetadataCounts m{rng.index(30), rng.index(20), rng.index(5)};
    nodes.push_back(post("t" + std::to_string(i), NodeKind::Tweet, static_cast<Label>(i % 2), "tweet text", m));
  }
  for (std::size_t i = 0; i < n_claims; ++i) {
    nodes.push_back(post("c" + std::to_string(i), NodeKind::Claim, static_cast<Label>(i % 2), "claim text"));
  }
  for (std::size_t i = 0; i < n_users; ++i) nodes.push_back(user("u" + std::to_string(i)));
  std::vector<Relation> edges;
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto t = "t" + std::to_string(rng.index(n_tweets));
    switch (rng.index(6)) {
      case 0: edges.push_back({"u" + std::to_string(rng.index(n_users)), t, RelationKind::Posted}); break;
      case 1: edges.push_back({t, "u" + std::to_string(rng.index(n_users)), RelationKind::Mentions}); break;
      case 2: edges.push_back({t, "t" + std::to_string(rng.index(n_tweets)), RelationKind::Retweeted}); break;
      case 3: edges.push_back({t, "t" + std::to_string(rng.index(n_tweets)), RelationKind::QuoteOf}); break;
      case 4: edges.push_back({t, "t" + std::to_string(rng.index(n_tweets)), RelationKind::ReplyTo}); break;
      default: edges.push_back({t, "c" + std::to_string(rng.index(n_claims)), RelationKind::Discusses}); break;
    }
  }
  return SocialGraph::build(std::move(nodes), std::move(edges));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, mu2x::Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("mu2x_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
