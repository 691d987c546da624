#include "mu2x/text_explainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

using ad::Matrix;
using ad::Var;

namespace {

bool word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool prefixed = (c == '#' || c == '@') && i + 1 < text.size() &&
                          word_char(static_cast<unsigned char>(text[i + 1]));
    if (!prefixed && !word_char(c)) {
      ++i;
      continue;
    }
    std::string token;
    if (prefixed) token.push_back(static_cast<char>(c)), ++i;
    while (i < text.size() && word_char(static_cast<unsigned char>(text[i]))) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    out.push_back(std::move(token));
  }
  return out;
}

ToyTextEncoder ToyTextEncoder::build(const SocialGraph& g, std::size_t dim, std::uint64_t seed,
                                     std::size_t min_count) {
  std::map<std::string, std::size_t, std::less<>> doc_freq;
  for (const auto& n : g.nodes()) {
    if (n.kind == NodeKind::User) continue;
    auto toks = tokenize(n.text);
    std::set<std::string> unique(toks.begin(), toks.end());
    for (const auto& t : unique) ++doc_freq[t];
  }
  ToyTextEncoder enc;
  std::uint32_t next = 1;
  for (const auto& [tok, count] : doc_freq) {
    if (count >= min_count) enc.vocab_.emplace(tok, next++);
  }
  Rng rng(seed);
  enc.table_ = Matrix::Zero(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 1; r < enc.table_.rows(); ++r) {
    for (Eigen::Index c = 0; c < enc.table_.cols(); ++c) enc.table_(r, c) = rng.normal();
  }
  return enc;
}

std::uint32_t ToyTextEncoder::token_id(std::string_view token) const {
  auto it = vocab_.find(token);
  return it == vocab_.end() ? kUnk : it->second;
}

std::vector<std::uint32_t> ToyTextEncoder::token_ids(std::string_view text) const {
  std::vector<std::uint32_t> ids;
  for (const auto& t : tokenize(text)) ids.push_back(token_id(t));
  return ids;
}

Matrix ToyTextEncoder::token_rows(std::string_view text) const {
  const auto ids = token_ids(text);
  Matrix rows(static_cast<Eigen::Index>(ids.size()), table_.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = table_.row(ids[i]);
  return rows;
}

Eigen::VectorXd ToyTextEncoder::encode(std::string_view text) const {
  const Matrix rows = token_rows(text);
  if (rows.rows() == 0) return Eigen::VectorXd::Zero(table_.cols());
  return rows.colwise().mean().transpose();
}

EmbeddingTable ToyTextEncoder::encode_graph(const SocialGraph& g) const {
  EmbeddingTable t;
  t.dim = dim();
  for (NodeIndex i : g.classifiable()) {
    const auto& n = g.node(i);
    const Eigen::VectorXd v = encode(n.text);
    EmbeddingEntry e;
    e.lang = n.lang;
    e.vector.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) e.vector[static_cast<std::size_t>(k)] = static_cast<float>(v(k));
    t.entries.emplace(n.id, std::move(e));
  }
  return t;
}

IgResult integrated_gradients(const ScalarFn& f, const Matrix& input, const Matrix& baseline, int steps) {
  if (input.rows() != baseline.rows() || input.cols() != baseline.cols()) {
    throw ShapeMismatch("input and baseline shapes differ");
  }
  if (steps < 1) throw ShapeMismatch("steps must be >= 1");
  auto eval = [&](const Matrix& at) {
    ad::Tape tape;
    Var out = f(tape, tape.constant(at));
    if (out.rows() != 1 || out.cols() != 1) throw NotScalarLoss("attributed function must be scalar");
    return out.value()(0, 0);
  };
  IgResult res;
  res.f_input = eval(input);
  res.f_baseline = eval(baseline);
  const Matrix diff = input - baseline;
  Matrix grad_sum = Matrix::Zero(input.rows(), input.cols());
  for (int s = 1; s <= steps; ++s) {
    const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
    ad::Tape tape;
    Var point = tape.variable(baseline + alpha * diff);
    Var out = f(tape, point);
    grad_sum += ad::grad_wrt_input(out, point);
  }
  res.raw = diff.cwiseProduct(grad_sum) / static_cast<double>(steps);
  res.convergence_delta = std::abs(res.raw.sum() - (res.f_input - res.f_baseline));
  return res;
}

TextPathway TextPathway::from(const FeatureMatrix& x, const Projection& projection, const ToyTextEncoder* encoder,
                              const EmbeddingTable* embeddings) {
  TextPathway p;
  p.projection = &projection;
  p.text = x.layout.text;
  const auto b = static_cast<Eigen::Index>(p.text.begin);
  const auto n = static_cast<Eigen::Index>(p.text.size());
  p.column_mean = x.column_mean.segment(b, n);
  p.column_scale = x.column_scale.segment(b, n);
  p.encoder = encoder;
  p.embeddings = embeddings;
  return p;
}

TokenAttribution explain_text(const GatModel& model, const GatGraph& graph, const Matrix& x, std::uint32_t target_row,
                              const PostNode& node, const TextPathway& pathway, TextMode mode, int steps) {
  if (target_row >= graph.num_nodes) throw UnknownNode("row " + std::to_string(target_row));
  if (pathway.text.empty() || pathway.projection == nullptr) {
    throw ModeUnavailable("the model has no text features to attribute");
  }
  if (node.text.empty()) throw EmptyText("'" + node.id + "' has no text");

  TokenAttribution out;
  out.target = node.id;
  out.steps = steps;

  Matrix input;
  if (mode == TextMode::Tokens) {
    if (pathway.encoder == nullptr) {
      throw ModeUnavailable("token-level attribution needs the toy text encoder; only precomputed embeddings are present");
    }
    out.tokens = tokenize(node.text);
    if (out.tokens.empty()) throw EmptyText("'" + node.id + "' has no tokens");
    input = pathway.encoder->token_rows(node.text);
  } else {
    if (pathway.embeddings == nullptr) throw ModeUnavailable("no embedding table bound");
    auto it = pathway.embeddings->entries.find(node.id);
    if (it == pathway.embeddings->entries.end()) throw MissingEmbedding("'" + node.id + "'");
    const auto& v = it->second.vector;
    input = Eigen::Map<const Eigen::RowVectorXf>(v.data(), static_cast<Eigen::Index>(v.size())).cast<double>();
    for (std::size_t i = 0; i < v.size(); ++i) out.tokens.push_back("dim" + std::to_string(i));
  }
  if (static_cast<std::size_t>(input.cols()) != pathway.projection->in_dim()) {
    throw DimensionMismatch("text input has " + std::to_string(input.cols()) + " dims, projection expects " +
                            std::to_string(pathway.projection->in_dim()));
  }

  // Fold normalization into the projection: text = e * W' + b'.
  const Matrix proj_t = pathway.projection->weight.transpose() * pathway.column_scale.asDiagonal();
  const Matrix proj_b =
      ((pathway.projection->bias - pathway.column_mean).cwiseProduct(pathway.column_scale)).transpose();

  const auto rows = graph.neighborhood(target_row, 2);
  const GatGraph local = graph.induced(rows);
  Matrix local_x(static_cast<Eigen::Index>(rows.size()), x.cols());
  Eigen::Index t_local = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    local_x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    if (rows[i] == target_row) t_local = static_cast<Eigen::Index>(i);
  }
  const Matrix target_full = local_x.row(t_local);
  local_x.row(t_local).setZero();
  Matrix onehot = Matrix::Zero(local_x.rows(), 1);
  onehot(t_local, 0) = 1.0;
  const auto tb = static_cast<Eigen::Index>(pathway.text.begin);
  const auto te = static_cast<Eigen::Index>(pathway.text.end);
  const Matrix left = target_full.leftCols(tb);
  const Matrix right = target_full.rightCols(x.cols() - te);
  const std::uint32_t t_index = static_cast<std::uint32_t>(t_local);

  auto make_f = [&](std::uint32_t cls) -> ScalarFn {
    return [&, cls](ad::Tape& tape, Var in) {
      Var pooled = in;
      if (in.rows() != 1) {
        pooled = ad::matmul(tape.constant(Matrix::Constant(1, in.rows(), 1.0 / static_cast<double>(in.rows()))), in);
      }
      Var text = ad::add(ad::matmul(pooled, tape.constant(proj_t)), tape.constant(proj_b));
      std::vector<Var> parts;
      if (left.cols() > 0) parts.push_back(tape.constant(left));
      parts.push_back(text);
      if (right.cols() > 0) parts.push_back(tape.constant(right));
      Var row = parts.size() == 1 ? text : ad::concat_cols(parts);
      Var xv = ad::add(tape.constant(local_x), ad::matmul(tape.constant(onehot), row));
      const auto params = bind_params(tape, model, false);
      const auto fwd = gat_forward(params, model.config, xv, local);
      Var probs = ad::row_softmax(ad::gather_rows(fwd.logits, std::span<const std::uint32_t>(&t_index, 1)));
      return ad::pick(probs, std::span<const std::uint32_t>(&cls, 1));
    };
  };

  // Predicted class at the actual input.
  double p0 = 0.0;
  {
    ad::Tape tape;
    p0 = make_f(0)(tape, tape.constant(input)).value()(0, 0);
  }
  const std::uint32_t cls = (1.0 - p0) > p0 ? 1u : 0u;
  out.predicted = static_cast<Label>(cls);

  const Matrix baseline = Matrix::Zero(input.rows(), input.cols());
  const auto ig = integrated_gradients(make_f(cls), input, baseline, steps);
  out.convergence_delta = ig.convergence_delta;
  if (mode == TextMode::Tokens) {
    const Eigen::VectorXd per_token = ig.raw.rowwise().sum();
    out.raw.assign(per_token.data(), per_token.data() + per_token.size());
  } else {
    out.raw.assign(ig.raw.data(), ig.raw.data() + ig.raw.size());
  }
  double max_abs = 0.0;
  for (double r : out.raw) max_abs = std::max(max_abs, std::abs(r));
  out.scores.resize(out.raw.size(), 0.0);
  if (max_abs > 0.0) {
    for (std::size_t i = 0; i < out.raw.size(); ++i) out.scores[i] = std::clamp(out.raw[i] / max_abs, -1.0, 1.0);
  }
  return out;
}

std::string attribution_json(const TokenAttribution& a) {
  nlohmann::json j;
  j["target"] = a.target;
  j["tokens"] = a.tokens;
  j["scores"] = a.scores;
  j["convergence_delta"] = a.convergence_delta;
  j["steps"] = a.steps;
  j["predicted_label"] = static_cast<int>(a.predicted);
  return j.dump(2);
}

}  // namespace mu2x
