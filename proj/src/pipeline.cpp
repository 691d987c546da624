#include "mu2x/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

using nlohmann::json;

std::string_view to_string(TextSource s) { return s == TextSource::Tokens ? "tokens" : "embeddings"; }

TextSource parse_text_source(std::string_view s) {
  if (s == "embeddings") return TextSource::Embeddings;
  if (s == "tokens") return TextSource::Tokens;
  throw InvalidConfig("unknown text source '" + std::string(s) + "' (embeddings|tokens)");
}

Split stratified_split(const std::vector<int>& labels, std::uint64_t seed) {
  Split s;
  Rng rng(seed);
  for (int cls : {0, 1}) {
    std::vector<std::uint32_t> rows;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] == cls) rows.push_back(static_cast<std::uint32_t>(r));
    }
    rng.shuffle(rows);
    const auto n = rows.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    s.train.insert(s.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.insert(s.validation.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                        rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), rows.end());
  }
  for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

RawFeatures raw_features(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                         std::optional<ToyTextEncoder>* encoder_out, std::optional<EmbeddingTable>* encoded_out,
                         Projection* projection_out) {
  const bool needs_text = spec.modality != Modality::Graph;
  std::optional<ToyTextEncoder> encoder;
  std::optional<EmbeddingTable> encoded;
  const EmbeddingTable* table = embeddings;
  if (needs_text && spec.text_source == TextSource::Tokens) {
    encoder = ToyTextEncoder::build(g, spec.token_dim, spec.token_seed, spec.token_min_count);
    encoded = encoder->encode_graph(g);
    table = &*encoded;
  }
  if (needs_text && table == nullptr) {
    throw MissingEmbedding("modality '" + std::string(to_string(spec.modality)) +
                           "' needs an embeddings file (or text_source=tokens)");
  }
  Projection projection;
  if (needs_text) projection = Projection::random(table->dim, spec.projection_dim, spec.projection_seed);
  RawFeatures raw = assemble_features(g, table, spec.modality, needs_text ? &projection : nullptr);
  if (encoder_out) *encoder_out = std::move(encoder);
  if (encoded_out) *encoded_out = std::move(encoded);
  if (projection_out) *projection_out = std::move(projection);
  return raw;
}

Dataset prepare_dataset(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                        std::uint64_t split_seed, bool self_loops, const NoiseSpec& noise) {
  Dataset d;
  d.graph = &g;
  d.embeddings = embeddings;
  d.spec = spec;
  RawFeatures raw = raw_features(g, embeddings, spec, &d.encoder, &d.encoded, &d.projection);
  append_noise_columns(raw, noise.count, noise.seed, noise.constant);
  d.features = normalize_features(raw, g.num_nodes());
  d.x = d.features.as_double();
  d.gat = GatGraph::from_social(g, d.features, self_loops);
  d.labels.resize(d.features.rows(), -1);
  for (std::size_t r = 0; r < d.features.rows(); ++r) {
    const auto& label = g.node(d.features.nodes[r]).label;
    if (label) d.labels[r] = static_cast<int>(*label);
  }
  d.split = stratified_split(d.labels, split_seed);
  d.split_seed = split_seed;
  return d;
}

TextPathway Dataset::pathway() const {
  return TextPathway::from(features, projection, encoder ? &*encoder : nullptr, text_table());
}

std::uint32_t Dataset::row_of(std::string_view id) const {
  const int r = features.row(graph->index_of(id));
  if (r < 0) throw UnknownNode("'" + std::string(id) + "' is not a classifiable node");
  return static_cast<std::uint32_t>(r);
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  json j;
  j["feature_spec"] = {{"modality", std::string(to_string(c.spec.modality))},
                       {"text_source", std::string(to_string(c.spec.text_source))},
                       {"projection_dim", c.spec.projection_dim},
                       {"projection_seed", std::to_string(c.spec.projection_seed)},
                       {"token_dim", c.spec.token_dim},
                       {"token_seed", std::to_string(c.spec.token_seed)},
                       {"token_min_count", c.spec.token_min_count}};
  j["split_seed"] = std::to_string(c.split_seed);
  json losses = json::array();
  for (double l : c.loss_history) losses.push_back(exact(l));
  j["loss_history"] = losses;
  j["model"] = json::parse(serialize_checkpoint(c.model));
  return j.dump(1) + "\n";
}

Checkpoint parse_full_checkpoint(std::string_view text) {
  try {
    const json j = json::parse(text);
    Checkpoint c;
    const auto& s = j.at("feature_spec");
    c.spec.modality = parse_modality(s.at("modality").get<std::string>());
    c.spec.text_source = parse_text_source(s.at("text_source").get<std::string>());
    c.spec.projection_dim = s.at("projection_dim").get<std::size_t>();
    c.spec.projection_seed = std::stoull(s.at("projection_seed").get<std::string>());
    c.spec.token_dim = s.at("token_dim").get<std::size_t>();
    c.spec.token_seed = std::stoull(s.at("token_seed").get<std::string>());
    c.spec.token_min_count = s.at("token_min_count").get<std::size_t>();
    c.split_seed = std::stoull(j.at("split_seed").get<std::string>());
    for (const auto& l : j.at("loss_history")) c.loss_history.push_back(std::stod(l.get<std::string>()));
    c.model = parse_checkpoint(j.at("model").dump());
    return c;
  } catch (const json::exception& e) {
    throw MalformedRecord(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint train_checkpoint(const Dataset& data, const GatConfig& cfg) {
  auto result = train(data.gat, data.x, data.labels, data.split.train, cfg);
  Checkpoint c;
  c.spec = data.spec;
  c.split_seed = data.split_seed;
  c.model = std::move(result.model);
  c.loss_history = std::move(result.loss_history);
  return c;
}

}  // namespace mu2x
