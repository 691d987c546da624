#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/pipeline.hpp"
#include "mu2x/text_explainer.hpp"

using namespace mu2x;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

// Misinformation posts contain "alpha", facts contain "beta"; the other words occur once
// and map to the unknown token.
SocialGraph planted_token_graph(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PostNode> nodes;
  std::vector<Relation> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const bool misinfo = i % 2 == 0;
    const auto word = [&](int k) { return "w" + std::to_string(i) + "x" + std::to_string(k); };
    std::string text = word(0) + " " + (misinfo ? "alpha" : "beta") + " " + word(1) + " " + word(2);
    nodes.push_back(testutil::post("t" + std::to_string(i), NodeKind::Tweet,
                                   misinfo ? Label::Misinformation : Label::Fact, text));
    if (i > 0) {
      edges.push_back({"t" + std::to_string(i), "t" + std::to_string(rng.index(i)), RelationKind::ReplyTo});
    }
  }
  nodes.push_back(testutil::post("t_unk", NodeKind::Tweet, Label::Misinformation, "zzz qqq"));
  nodes.push_back(testutil::post("t_empty", NodeKind::Tweet, Label::Fact, ""));
  return SocialGraph::build(nodes, edges);
}

FeatureSpec token_spec() {
  FeatureSpec s;
  s.modality = Modality::Text;
  s.text_source = TextSource::Tokens;
  s.projection_dim = 12;
  s.token_dim = 8;
  return s;
}

GatConfig quick_config() {
  GatConfig c;
  c.hidden_dim = 8;
  c.epochs = 150;
  c.lr = 0.01;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("tokenizer") {
  CHECK(tokenize("Hello, #World @user x_y!") == std::vector<std::string>{"hello", "#world", "@user", "x_y"});
  CHECK(tokenize("# @ !!").empty());
  CHECK(tokenize("") .empty());
  CHECK(tokenize("vacina é segura") == std::vector<std::string>{"vacina", "é", "segura"});
}

TEST_CASE("toy text encoder") {
  const auto g = planted_token_graph(20, 1);
  const auto enc = ToyTextEncoder::build(g, 8, 3, 2);
  CHECK(enc.token_id("alpha") != ToyTextEncoder::kUnk);
  CHECK(enc.token_id("zzz") == ToyTextEncoder::kUnk);
  CHECK(enc.table().row(ToyTextEncoder::kUnk).isZero());
  CHECK(enc.encode("zzz qqq").isZero());
  const auto again = ToyTextEncoder::build(g, 8, 3, 2);
  CHECK(enc.table() == again.table());
  CHECK(enc.encode("alpha beta").isApprox(0.5 * (enc.table().row(enc.token_id("alpha")) +
                                                  enc.table().row(enc.token_id("beta")))
                                                     .transpose()));
}

TEST_CASE("integrated gradients") {
  Rng rng(12);
  const Matrix x = testutil::random_matrix(3, 4, rng);
  const Matrix w = testutil::random_matrix(3, 4, rng);
  const ScalarFn linear = [&](Tape& t, Var in) { return ad::reduce_sum(ad::mul(in, t.constant(w))); };
  const ScalarFn square = [](Tape&, Var in) { return ad::reduce_sum(ad::mul(in, in)); };

  SUBCASE("input equal to the baseline gives zero attribution") {
    const auto r = integrated_gradients(square, x, x, 20);
    CHECK(r.raw.isZero());
    CHECK(r.convergence_delta == 0.0);
  }
  SUBCASE("linear functions are attributed exactly") {
    const Matrix b = testutil::random_matrix(3, 4, rng);
    const auto r = integrated_gradients(linear, x, b, 1);
    CHECK((r.raw - w.cwiseProduct(x - b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.convergence_delta < 1e-12);
  }
  SUBCASE("x squared from a zero baseline gives x squared") {
    const auto r = integrated_gradients(square, Matrix::Ones(1, 1), Matrix::Zero(1, 1), 200);
    CHECK(std::abs(r.raw(0, 0) - 1.0) <= 1e-3);
  }
  SUBCASE("completeness improves with more steps") {
    const ScalarFn smooth = [](Tape&, Var in) { return ad::reduce_sum(ad::exp(ad::scalar_mul(in, 0.7))); };
    const auto coarse = integrated_gradients(smooth, x, Matrix::Zero(3, 4), 4);
    const auto fine = integrated_gradients(smooth, x, Matrix::Zero(3, 4), 200);
    CHECK(fine.convergence_delta < coarse.convergence_delta);
    CHECK(fine.convergence_delta < 1e-4);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(integrated_gradients(square, x, Matrix::Zero(2, 4), 10), ShapeMismatch);
  }
}

TEST_CASE("token attributions through the trained classifier") {
  const auto g = planted_token_graph(80, 2);
  const auto data = prepare_dataset(g, nullptr, token_spec(), 1);
  const auto cp = train_checkpoint(data, quick_config());
  const auto pathway = data.pathway();

  SUBCASE("the planted token carries the largest attribution") {
    int checked = 0;
    for (std::size_t i = 0; i < 80; i += 9) {
      const auto& node = g.node("t" + std::to_string(i));
      const auto a = explain_text(cp.model, data.gat, data.x, data.row_of(node.id), node, pathway, TextMode::Tokens, 200);
      REQUIRE(a.tokens.size() == 4);
      const auto top = std::max_element(a.scores.begin(), a.scores.end(),
                                        [](double p, double q) { return std::abs(p) < std::abs(q); });
      CHECK(std::abs(*top) == 1.0);
      CHECK(a.tokens[static_cast<std::size_t>(top - a.scores.begin())] == (i % 2 == 0 ? "alpha" : "beta"));
      CHECK(a.scores[1] == 1.0);
      CHECK(a.scores[0] == 0.0);
      CHECK(a.convergence_delta < 1e-3);
      ++checked;
    }
    CHECK(checked == 9);
  }
  SUBCASE("sum of token attributions equals the change in probability") {
    const auto& node = g.node("t3");
    const auto row = data.row_of(node.id);
    const auto a = explain_text(cp.model, data.gat, data.x, row, node, pathway, TextMode::Tokens, 300);
    const auto pred = forward(cp.model, data.gat, data.x)[row];
    CHECK(a.predicted == pred.label);
    double sum = 0.0;
    for (double r : a.raw) sum += r;
    Matrix x0 = data.x;
    const auto tb = static_cast<Eigen::Index>(pathway.text.begin);
    const auto tn = static_cast<Eigen::Index>(pathway.text.size());
    x0.block(row, tb, 1, tn) =
        (-(pathway.column_mean.cwiseProduct(pathway.column_scale)) +
         pathway.projection->bias.cwiseProduct(pathway.column_scale))
            .transpose();
    const auto base = forward(cp.model, data.gat, x0)[row];
    const auto cls = static_cast<std::size_t>(pred.label);
    CHECK(std::abs(sum - (pred.probs[cls] - base.probs[cls])) < 1e-3);
  }
  SUBCASE("text made only of unknown tokens gets zero scores") {
    const auto& node = g.node("t_unk");
    const auto a = explain_text(cp.model, data.gat, data.x, data.row_of(node.id), node, pathway, TextMode::Tokens, 50);
    CHECK(a.tokens == std::vector<std::string>{"zzz", "qqq"});
    CHECK(a.scores == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("empty text") {
    const auto& node = g.node("t_empty");
    CHECK_THROWS_AS(explain_text(cp.model, data.gat, data.x, data.row_of(node.id), node, pathway, TextMode::Tokens, 50),
                    EmptyText);
  }
  SUBCASE("JSON output") {
    const auto& node = g.node("t0");
    const auto a = explain_text(cp.model, data.gat, data.x, data.row_of(node.id), node, pathway, TextMode::Tokens, 20);
    const auto j = attribution_json(a);
    CHECK(j.find("\"tokens\"") != std::string::npos);
    CHECK(j.find("\"convergence_delta\"") != std::string::npos);
  }
}

TEST_CASE("unavailable modes") {
  const auto g = planted_token_graph(40, 3);
  SUBCASE("graph-only model has no text pathway") {
    auto spec = token_spec();
    spec.modality = Modality::Graph;
    const auto data = prepare_dataset(g, nullptr, spec, 1);
    const auto cp = train_checkpoint(data, quick_config());
    const auto& node = g.node("t0");
    CHECK_THROWS_AS(explain_text(cp.model, data.gat, data.x, data.row_of("t0"), node, data.pathway(), TextMode::Tokens, 10),
                    ModeUnavailable);
  }
  SUBCASE("token mode needs the toy encoder") {
    const auto enc = ToyTextEncoder::build(g, 8, 3, 2);
    const auto table = enc.encode_graph(g);
    auto spec = token_spec();
    spec.text_source = TextSource::Embeddings;
    const auto data = prepare_dataset(g, &table, spec, 1);
    const auto cp = train_checkpoint(data, quick_config());
    const auto& node = g.node("t0");
    const auto pathway = data.pathway();
    CHECK_THROWS_AS(explain_text(cp.model, data.gat, data.x, data.row_of("t0"), node, pathway, TextMode::Tokens, 10),
                    ModeUnavailable);
    const auto a = explain_text(cp.model, data.gat, data.x, data.row_of("t0"), node, pathway, TextMode::Embedding, 10);
    CHECK(a.tokens.size() == 8);
    CHECK(a.tokens.front() == "dim0");
  }
}
