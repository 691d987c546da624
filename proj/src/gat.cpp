#include "mu2x/gat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

using ad::Matrix;
using ad::Var;
using nlohmann::json;

void GatConfig::validate() const {
  if (hidden_dim < 1) throw InvalidConfig("hidden_dim must be >= 1");
  if (heads < 1) throw InvalidConfig("heads must be >= 1");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (!(lr >= 0.0)) throw InvalidConfig("lr must be >= 0");
  if (!(leaky_slope >= 0.0)) throw InvalidConfig("leaky_slope must be >= 0");
}

namespace {

GatGraph finalize(std::size_t n, std::vector<std::pair<std::uint32_t, std::uint32_t>> directed, bool self_loops) {
  if (self_loops) {
    for (std::uint32_t i = 0; i < n; ++i) directed.emplace_back(i, i);
  }
  // (dst, src) order
  std::sort(directed.begin(), directed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second, a.first) < std::tie(b.second, b.first);
  });
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  GatGraph g;
  g.num_nodes = n;
  g.src.reserve(directed.size());
  g.dst.reserve(directed.size());
  g.offsets.assign(n + 1, 0);
  for (const auto& [s, d] : directed) {
    g.src.push_back(s);
    g.dst.push_back(d);
    ++g.offsets[d + 1];
  }
  std::partial_sum(g.offsets.begin(), g.offsets.end(), g.offsets.begin());
  return g;
}

}  // namespace

GatGraph GatGraph::from_pairs(std::size_t num_nodes,
                              std::span<const std::pair<std::uint32_t, std::uint32_t>> undirected,
                              bool self_loops) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> directed;
  directed.reserve(undirected.size() * 2);
  for (const auto& [a, b] : undirected) {
    if (a >= num_nodes || b >= num_nodes) throw ShapeMismatch("edge endpoint out of range");
    if (a == b) continue;
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  return finalize(num_nodes, std::move(directed), self_loops);
}

GatGraph GatGraph::from_social(const SocialGraph& g, const FeatureMatrix& x, bool self_loops) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::size_t r = 0; r < x.nodes.size(); ++r) {
    for (const auto& nb : g.neighbors(x.nodes[r])) {
      const int other = x.row(nb.node);
      if (other >= 0 && static_cast<std::size_t>(other) > r) {
        pairs.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(other));
      }
    }
  }
  return from_pairs(x.nodes.size(), pairs, self_loops);
}

std::vector<std::uint32_t> GatGraph::neighborhood(std::uint32_t row, int hops) const {
  if (row >= num_nodes) throw ShapeMismatch("row out of range");
  std::vector<char> seen(num_nodes, 0);
  std::vector<std::uint32_t> frontier{row};
  std::vector<std::uint32_t> out{row};
  seen[row] = 1;
  for (int h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<std::uint32_t> next;
    for (std::uint32_t u : frontier) {
      for (std::size_t e = offsets[u]; e < offsets[u + 1]; ++e) {
        const std::uint32_t v = src[e];
        if (!seen[v]) {
          seen[v] = 1;
          next.push_back(v);
          out.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

GatGraph GatGraph::induced(std::span<const std::uint32_t> rows) const {
  std::vector<int> local(num_nodes, -1);
  for (std::size_t i = 0; i < rows.size(); ++i) local[rows[i]] = static_cast<int>(i);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> directed;
  for (std::size_t e = 0; e < src.size(); ++e) {
    const int s = local[src[e]];
    const int d = local[dst[e]];
    if (s >= 0 && d >= 0) directed.emplace_back(static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(d));
  }
  return finalize(rows.size(), std::move(directed), false);
}

Prediction make_prediction(double p_misinformation, double p_fact) {
  Prediction p;
  p.probs = {p_misinformation, p_fact};
  p.label = p_fact > p_misinformation ? Label::Fact : Label::Misinformation;
  return p;
}

namespace {

Matrix glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

AttentionHead init_head(Rng& rng, Eigen::Index in, Eigen::Index out) {
  AttentionHead h;
  h.weight = glorot(rng, in, out);
  Matrix a = glorot(rng, 2 * out, 1);
  h.att_dst = a.topRows(out);
  h.att_src = a.bottomRows(out);
  return h;
}

}  // namespace

GatModel GatModel::initialize(std::size_t input_dim, const GatConfig& cfg) {
  cfg.validate();
  GatModel m;
  m.config = cfg;
  m.input_dim = input_dim;
  Rng rng(cfg.seed);
  const auto in = static_cast<Eigen::Index>(input_dim);
  for (int h = 0; h < cfg.heads; ++h) m.layer1.push_back(init_head(rng, in, cfg.hidden_dim));
  for (int h = 0; h < cfg.heads; ++h) m.layer2.push_back(init_head(rng, cfg.hidden_dim, 2));
  return m;
}

BoundParams bind_params(ad::Tape& tape, const GatModel& model, bool trainable) {
  auto bind = [&](const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  BoundParams p;
  for (const auto& h : model.layer1) p.layer1.push_back({bind(h.weight), bind(h.att_dst), bind(h.att_src)});
  for (const auto& h : model.layer2) p.layer2.push_back({bind(h.weight), bind(h.att_dst), bind(h.att_src)});
  return p;
}

namespace {

// One attention layer: heads averaged, optional ELU.
Var attention_layer(const std::vector<std::array<Var, 3>>& heads, Var input, const GatGraph& graph,
                    double slope, bool apply_elu, std::vector<Var>& attention_out) {
  std::vector<Var> outs;
  for (const auto& [weight, att_dst, att_src] : heads) {
    Var z = ad::matmul(input, weight);
    Var score_dst = ad::matmul(z, att_dst);
    Var score_src = ad::matmul(z, att_src);
    Var e = ad::add(ad::gather_rows(score_dst, graph.dst), ad::gather_rows(score_src, graph.src));
    Var alpha = ad::segment_softmax(ad::leaky_relu(e, slope), graph.dst, graph.num_nodes);
    attention_out.push_back(alpha);
    outs.push_back(ad::edge_aggregate(alpha, z, graph.src, graph.dst, graph.num_nodes));
  }
  Var sum = outs.front();
  for (std::size_t i = 1; i < outs.size(); ++i) sum = ad::add(sum, outs[i]);
  if (outs.size() > 1) sum = ad::scalar_mul(sum, 1.0 / static_cast<double>(outs.size()));
  return apply_elu ? ad::elu(sum) : sum;
}

}  // namespace

GatOutput gat_forward(const BoundParams& params, const GatConfig& cfg, Var x, const GatGraph& graph) {
  if (static_cast<std::size_t>(x.rows()) != graph.num_nodes) {
    throw ShapeMismatch("feature rows " + std::to_string(x.rows()) + " vs graph nodes " +
                        std::to_string(graph.num_nodes));
  }
  if (params.layer1.empty() || x.cols() != params.layer1.front()[0].rows()) {
    throw ShapeMismatch("feature dim " + std::to_string(x.cols()) + " does not match the model input");
  }
  GatOutput out;
  out.attention.resize(2);
  Var h = attention_layer(params.layer1, x, graph, cfg.leaky_slope, true, out.attention[0]);
  out.logits = attention_layer(params.layer2, h, graph, cfg.leaky_slope, false, out.attention[1]);
  return out;
}

std::vector<Prediction> forward(const GatModel& model, const GatGraph& graph, const Matrix& x) {
  ad::Tape tape;
  const auto params = bind_params(tape, model, false);
  const auto out = gat_forward(params, model.config, tape.constant(x), graph);
  Var probs = ad::row_softmax(out.logits);
  std::vector<Prediction> preds(graph.num_nodes);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    preds[i] = make_prediction(probs.value()(static_cast<Eigen::Index>(i), 0), probs.value()(static_cast<Eigen::Index>(i), 1));
  }
  return preds;
}

AttentionMaps attention_coefficients(const GatModel& model, const GatGraph& graph, const Matrix& x) {
  ad::Tape tape;
  const auto params = bind_params(tape, model, false);
  const auto out = gat_forward(params, model.config, tape.constant(x), graph);
  AttentionMaps maps;
  for (const auto& layer : out.attention) {
    auto& dst = maps.layers.emplace_back();
    for (Var a : layer) dst.emplace_back(a.value().data(), a.value().data() + a.value().size());
  }
  return maps;
}

namespace {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

std::vector<Matrix*> parameter_list(GatModel& model) {
  std::vector<Matrix*> out;
  for (auto* layer : {&model.layer1, &model.layer2}) {
    for (auto& h : *layer) {
      out.push_back(&h.weight);
      out.push_back(&h.att_dst);
      out.push_back(&h.att_src);
    }
  }
  return out;
}

std::vector<Var> flatten(const BoundParams& p) {
  std::vector<Var> out;
  for (const auto* layer : {&p.layer1, &p.layer2}) {
    for (const auto& h : *layer) out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

}  // namespace

TrainResult train(const GatGraph& graph, const Matrix& x, std::span<const int> labels,
                  std::span<const std::uint32_t> train_rows, const GatConfig& cfg) {
  cfg.validate();
  if (labels.size() != graph.num_nodes || static_cast<std::size_t>(x.rows()) != graph.num_nodes) {
    throw ShapeMismatch("labels/features do not match the graph");
  }
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> targets;
  int seen[2] = {0, 0};
  for (std::uint32_t r : train_rows) {
    if (r >= graph.num_nodes) throw ShapeMismatch("training row out of range");
    const int l = labels[r];
    if (l != 0 && l != 1) continue;
    rows.push_back(r);
    targets.push_back(static_cast<std::uint32_t>(l));
    ++seen[l];
  }
  if (rows.size() < 2 || seen[0] == 0 || seen[1] == 0) {
    throw SingleClassTrainingSet("training split has " + std::to_string(seen[0]) + " misinformation and " +
                                 std::to_string(seen[1]) + " fact labels");
  }

  TrainResult result;
  result.model = GatModel::initialize(static_cast<std::size_t>(x.cols()), cfg);
  auto params = parameter_list(result.model);
  AdamState adam;
  for (Matrix* p : params) {
    adam.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    adam.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double b1_pow = 1.0;
  double b2_pow = 1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    const auto bound = bind_params(tape, result.model, true);
    const auto out = gat_forward(bound, cfg, tape.constant(x), graph);
    Var logp = ad::row_log_softmax(ad::gather_rows(out.logits, rows));
    Var loss = ad::scalar_mul(ad::reduce_sum(ad::pick(logp, targets)), -inv_n);
    const double loss_value = loss.value()(0, 0);
    if (!std::isfinite(loss_value)) {
      throw NonFiniteLoss("loss is " + std::to_string(loss_value) + " at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(loss_value);
    tape.backward(loss);

    b1_pow *= cfg.adam_beta1;
    b2_pow *= cfg.adam_beta2;
    const auto vars = flatten(bound);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = tape.grad(vars[i]);
      adam.m[i] = cfg.adam_beta1 * adam.m[i] + (1.0 - cfg.adam_beta1) * g;
      adam.v[i] = cfg.adam_beta2 * adam.v[i] + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
      const Matrix m_hat = adam.m[i] / (1.0 - b1_pow);
      const Matrix v_hat = adam.v[i] / (1.0 - b2_pow);
      *params[i] -= (cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.adam_eps)).matrix();
    }
  }
  result.model.frozen = true;
  return result;
}

Prediction predict_with_mask(const GatModel& model, const GatGraph& graph, const Matrix& x,
                             std::span<const std::size_t> zero_dims, std::uint32_t target) {
  if (target >= graph.num_nodes) throw UnknownNode("row " + std::to_string(target));
  for (std::size_t d : zero_dims) {
    if (d >= static_cast<std::size_t>(x.cols())) {
      throw DimOutOfRange(std::to_string(d) + " >= " + std::to_string(x.cols()));
    }
  }
  // Two layers: the 2-hop induced subgraph determines the target exactly.
  const auto rows = graph.neighborhood(target, 2);
  const GatGraph local = graph.induced(rows);
  Matrix local_x(static_cast<Eigen::Index>(rows.size()), x.cols());
  Eigen::Index target_local = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    local_x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    if (rows[i] == target) target_local = static_cast<Eigen::Index>(i);
  }
  for (std::size_t d : zero_dims) local_x(target_local, static_cast<Eigen::Index>(d)) = 0.0;
  const auto preds = forward(model, local, local_x);
  return preds[static_cast<std::size_t>(target_local)];
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(exact(m(r, c)));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw MalformedRecord("checkpoint matrix size mismatch");
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::stod(data[i++].get<std::string>());
  }
  return m;
}

json heads_json(const std::vector<AttentionHead>& heads) {
  json arr = json::array();
  for (const auto& h : heads) {
    arr.push_back({{"weight", matrix_json(h.weight)}, {"att_dst", matrix_json(h.att_dst)}, {"att_src", matrix_json(h.att_src)}});
  }
  return arr;
}

std::vector<AttentionHead> heads_from_json(const json& arr) {
  std::vector<AttentionHead> out;
  for (const auto& h : arr) {
    out.push_back({matrix_from_json(h.at("weight")), matrix_from_json(h.at("att_dst")), matrix_from_json(h.at("att_src"))});
  }
  return out;
}

}  // namespace

std::string serialize_checkpoint(const GatModel& model) {
  const auto& c = model.config;
  json j;
  j["config"] = {{"hidden_dim", c.hidden_dim}, {"heads", c.heads},       {"lr", exact(c.lr)},
                 {"epochs", c.epochs},         {"leaky_slope", exact(c.leaky_slope)},
                 {"adam_beta1", exact(c.adam_beta1)}, {"adam_beta2", exact(c.adam_beta2)},
                 {"adam_eps", exact(c.adam_eps)}, {"seed", std::to_string(c.seed)},
                 {"self_loops", c.self_loops}};
  j["input_dim"] = model.input_dim;
  j["frozen"] = model.frozen;
  j["layer1"] = heads_json(model.layer1);
  j["layer2"] = heads_json(model.layer2);
  return j.dump(1);
}

GatModel parse_checkpoint(std::string_view json_text) {
  try {
    const json j = json::parse(json_text);
    GatModel m;
    const auto& c = j.at("config");
    m.config.hidden_dim = c.at("hidden_dim").get<int>();
    m.config.heads = c.at("heads").get<int>();
    m.config.lr = std::stod(c.at("lr").get<std::string>());
    m.config.epochs = c.at("epochs").get<int>();
    m.config.leaky_slope = std::stod(c.at("leaky_slope").get<std::string>());
    m.config.adam_beta1 = std::stod(c.at("adam_beta1").get<std::string>());
    m.config.adam_beta2 = std::stod(c.at("adam_beta2").get<std::string>());
    m.config.adam_eps = std::stod(c.at("adam_eps").get<std::string>());
    m.config.seed = std::stoull(c.at("seed").get<std::string>());
    m.config.self_loops = c.at("self_loops").get<bool>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.frozen = j.at("frozen").get<bool>();
    m.layer1 = heads_from_json(j.at("layer1"));
    m.layer2 = heads_from_json(j.at("layer2"));
    return m;
  } catch (const json::exception& e) {
    throw MalformedRecord(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace mu2x
