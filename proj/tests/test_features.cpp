#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/features.hpp"

using namespace mu2x;
using testutil::post;
using testutil::user;

namespace {

EmbeddingTable random_table(const SocialGraph& g, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable t;
  t.dim = dim;
  for (NodeIndex n : g.classifiable()) {
    EmbeddingEntry e;
    e.lang = g.node(n).lang;
    for (std::size_t i = 0; i < dim; ++i) e.vector.push_back(static_cast<float>(rng.normal()));
    t.entries.emplace(g.node(n).id, std::move(e));
  }
  return t;
}

}  // namespace

TEST_CASE("aggregate_metadata") {
  SUBCASE("zero counts") {
    const auto v = aggregate_metadata({0, 0, 0});
    CHECK(v == std::array<double, 3>{0.0, 0.0, 0.0});
  }
  SUBCASE("counts from a real post: 26 retweets, 42 replies, 7 quotes") {
    const auto v = aggregate_metadata({26, 42, 7});
    CHECK(v[0] == doctest::Approx(std::log(27.0)).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(std::log(43.0)).epsilon(1e-15));
    CHECK(v[2] == doctest::Approx(std::log(8.0)).epsilon(1e-15));
    CHECK(v[0] == doctest::Approx(3.295836866004329).epsilon(1e-15));
  }
  SUBCASE("strictly increasing in each count") {
    for (std::uint64_t c = 0; c < 50; ++c) {
      const auto a = aggregate_metadata({c, c, c});
      CHECK(aggregate_metadata({c + 1, c, c})[0] > a[0]);
      CHECK(aggregate_metadata({c, c + 1, c})[1] > a[1]);
      CHECK(aggregate_metadata({c, c, c + 1})[2] > a[2]);
    }
  }
}

TEST_CASE("structural_features") {
  SUBCASE("isolated node") {
    const auto g = SocialGraph::build({post("a")}, {});
    const auto v = structural_features(g, "a");
    for (double x : v) CHECK(x == 0.0);
  }
  SUBCASE("one reply edge") {
    const auto g = SocialGraph::build({post("a", NodeKind::Reply), post("b")}, {{"a", "b", RelationKind::ReplyTo}});
    const auto v = structural_features(g, "a");
    int nonzero = 0;
    for (std::size_t k = 0; k < kNumRelationKinds; ++k) nonzero += v[k] != 0.0;
    CHECK(nonzero == 1);
    CHECK(v[static_cast<std::size_t>(RelationKind::ReplyTo)] == doctest::Approx(std::log(2.0)));
    CHECK(v[kNumRelationKinds] == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("20-node random graph matches a recount of the edge list") {
    const auto g = testutil::random_graph(13, 45, 21);
    REQUIRE(g.num_nodes() >= 20);
    for (const auto& n : g.nodes()) {
      std::array<double, kNumRelationKinds> per_kind{};
      double total = 0;
      for (const auto& e : g.edges()) {
        if (e.src != n.id && e.dst != n.id) continue;
        per_kind[static_cast<std::size_t>(e.kind)] += 1.0;
        total += 1.0;
      }
      const auto v = structural_features(g, n.id);
      for (std::size_t k = 0; k < kNumRelationKinds; ++k) CHECK(v[k] == doctest::Approx(std::log1p(per_kind[k])));
      CHECK(v[kNumRelationKinds] == doctest::Approx(std::log1p(total)));
    }
  }
  SUBCASE("unknown node") {
    const auto g = SocialGraph::build({post("a")}, {});
    CHECK_THROWS_AS(structural_features(g, "zz"), UnknownNode);
  }
}

TEST_CASE("project_text") {
  Rng rng(5);
  SUBCASE("identity block leaves the embedding unchanged") {
    Projection p;
    p.weight = Eigen::MatrixXd::Identity(768, 768);
    p.bias = Eigen::VectorXd::Zero(768);
    const Eigen::VectorXd e = testutil::random_matrix(768, 1, rng);
    CHECK((project_text(e, p) - e).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero embedding maps to the bias") {
    Projection p = Projection::random(768, 812, 3);
    p.bias = testutil::random_matrix(812, 1, rng);
    CHECK((project_text(Eigen::VectorXd::Zero(768), p) - p.bias).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches a triple-loop multiply") {
    const Projection p = Projection::random(768, 812, 11);
    const Eigen::VectorXd e = testutil::random_matrix(768, 1, rng);
    const Eigen::VectorXd got = project_text(e, p);
    for (std::size_t r = 0; r < 812; ++r) {
      double acc = p.bias(static_cast<Eigen::Index>(r));
      for (std::size_t c = 0; c < 768; ++c) acc += p.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * e(static_cast<Eigen::Index>(c));
      CHECK(std::abs(acc - got(static_cast<Eigen::Index>(r))) < 1e-6);
    }
  }
  SUBCASE("seeded projections are reproducible") {
    CHECK(Projection::random(20, 10, 4).weight == Projection::random(20, 10, 4).weight);
    CHECK(Projection::random(20, 10, 4).weight != Projection::random(20, 10, 5).weight);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(project_text(Eigen::VectorXd::Zero(10), Projection::random(768, 812, 1)), DimensionMismatch);
  }
}

TEST_CASE("build_features layouts") {
  const auto g = testutil::random_graph(30, 80, 2);
  const auto emb = random_table(g, 768, 8);
  const auto proj = Projection::random(768, 812, 17);
  SUBCASE("graph modality has 10 columns and no text range") {
    const auto fm = build_features(g, nullptr, Modality::Graph, nullptr);
    CHECK(fm.cols() == 10);
    CHECK(fm.data.cols() == 10);
    CHECK(fm.layout.text.empty());
    CHECK(fm.layout.meta == IndexRange{0, 3});
    CHECK(fm.layout.structural == IndexRange{3, 10});
  }
  SUBCASE("multimodal with 812 projected dims has 822 columns") {
    const auto fm = build_features(g, &emb, Modality::Multimodal, &proj);
    CHECK(fm.cols() == 3 + 7 + 812);
    CHECK(fm.layout.text == IndexRange{10, 822});
    CHECK(fm.rows() == g.classifiable().size());
  }
  SUBCASE("text modality has only the projected block") {
    const auto fm = build_features(g, &emb, Modality::Text, &proj);
    CHECK(fm.cols() == 812);
    CHECK(fm.layout.text == IndexRange{0, 812});
    CHECK(fm.layout.meta.empty());
  }
  SUBCASE("ranges partition the columns in order") {
    for (auto m : {Modality::Graph, Modality::Text, Modality::Multimodal}) {
      auto raw = assemble_features(g, &emb, m, &proj);
      append_noise_columns(raw, 5, 1);
      const auto& l = raw.layout;
      CHECK(l.meta.begin == 0);
      CHECK(l.meta.end == l.structural.begin);
      CHECK(l.structural.end == l.text.begin);
      CHECK(l.text.end == l.noise.begin);
      CHECK(l.noise.end == l.total_dim);
      CHECK(static_cast<std::size_t>(raw.data.cols()) == l.total_dim);
      for (std::size_t d = 0; d < l.total_dim; ++d) {
        const int owners = l.meta.contains(d) + l.structural.contains(d) + l.text.contains(d) + l.noise.contains(d);
        CHECK(owners == 1);
      }
      CHECK_THROWS_AS(l.tag_of(l.total_dim), DimOutOfRange);
    }
  }
}

TEST_CASE("z-normalization") {
  const auto g = testutil::random_graph(60, 150, 6);
  const auto emb = random_table(g, 16, 3);
  const auto proj = Projection::random(16, 12, 9);
  auto raw = assemble_features(g, &emb, Modality::Multimodal, &proj);
  append_noise_columns(raw, 3, 4, true);
  const auto fm = normalize_features(raw, g.num_nodes());
  const auto x = fm.as_double();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const bool constant = (raw.data.col(c).array() == raw.data(0, c)).all();
    CHECK(std::abs(mean) < 1e-6);
    if (constant) {
      CHECK(x.col(c).cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  CHECK(x.allFinite());
  CHECK(fm.layout.noise.size() == 3);
}

TEST_CASE("missing embeddings are listed by id") {
  const auto g = SocialGraph::build({post("a"), post("b"), post("c"), user("u")}, {});
  EmbeddingTable t;
  t.dim = 4;
  t.entries["a"] = {Lang::En, {1, 2, 3, 4}};
  const auto proj = Projection::random(4, 3, 1);
  try {
    build_features(g, &t, Modality::Multimodal, &proj);
    FAIL("expected MissingEmbedding");
  } catch (const MissingEmbedding& e) {
    const std::string msg = e.what();
    CHECK(msg.find("b") != std::string::npos);
    CHECK(msg.find("c") != std::string::npos);
  }
  CHECK_NOTHROW(build_features(g, nullptr, Modality::Graph, nullptr));
  t.entries["zz"] = {Lang::En, {1, 2, 3, 4}};
  t.entries["b"] = t.entries["c"] = {Lang::En, {1, 2, 3, 4}};
  CHECK_THROWS_AS(build_features(g, &t, Modality::Text, &proj), UnknownNode);
}

TEST_CASE("node insertion order never changes a feature vector") {
  const auto g = testutil::random_graph(25, 60, 12);
  auto nodes = g.nodes();
  auto edges = g.edges();
  Rng rng(1);
  rng.shuffle(nodes);
  rng.shuffle(edges);
  const auto h = SocialGraph::build(nodes, edges);
  const auto emb = random_table(g, 8, 2);
  const auto proj = Projection::random(8, 6, 3);
  const auto a = build_features(g, &emb, Modality::Multimodal, &proj);
  const auto b = build_features(h, &emb, Modality::Multimodal, &proj);
  CHECK(a.data == b.data);
  CHECK(a.nodes == b.nodes);
}

TEST_CASE("embedding files") {
  const auto g = testutil::random_graph(10, 10, 1);
  const auto t = random_table(g, 768, 5);
  testutil::TempDir dir("emb");
  SUBCASE("JSONL round trip is exact") {
    write_file(dir / "e.jsonl", serialize_embeddings_jsonl(t));
    const auto back = load_embeddings(dir / "e.jsonl");
    CHECK(back.dim == 768);
    REQUIRE(back.entries.size() == t.entries.size());
    for (const auto& [id, e] : t.entries) {
      CHECK(back.entries.at(id).vector == e.vector);
      CHECK(back.entries.at(id).lang == e.lang);
    }
    CHECK(serialize_embeddings_jsonl(back) == serialize_embeddings_jsonl(t));
  }
  SUBCASE("binary layout: magic, u32 dim, u16 id length, id, floats") {
    EmbeddingTable small;
    small.dim = 2;
    small.entries["ab"] = {std::nullopt, {1.0f, -2.5f}};
    const std::string bytes = serialize_embeddings_binary(small);
    const std::string expected = std::string("MU2XEMB1") + std::string("\x02\x00\x00\x00", 4) +
                                 std::string("\x02\x00", 2) + "ab" + std::string("\x00\x00\x80\x3f", 4) +
                                 std::string("\x00\x00\x20\xc0", 4);
    CHECK(bytes == expected);
    write_file(dir / "e.bin", serialize_embeddings_binary(t));
    const auto back = load_embeddings(dir / "e.bin");
    for (const auto& [id, e] : t.entries) CHECK(back.entries.at(id).vector == e.vector);
  }
  SUBCASE("inconsistent vector length") {
    CHECK_THROWS_AS(parse_embeddings_jsonl("{\"id\":\"a\",\"lang\":\"en\",\"vector\":[1,2]}\n"
                                           "{\"id\":\"b\",\"lang\":\"en\",\"vector\":[1]}\n"),
                    DimensionMismatch);
  }
  SUBCASE("truncated binary") {
    std::string bytes = serialize_embeddings_binary(t);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(parse_embeddings_binary(bytes), MalformedRecord);
  }
}
