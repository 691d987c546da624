#include "mu2x/features.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

using nlohmann::json;

namespace {
constexpr std::string_view kBinaryMagic = "MU2XEMB1";
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Graph: return "graph";
    case Modality::Text: return "text";
    case Modality::Multimodal: return "multimodal";
  }
  return "?";
}

std::string_view to_string(ModalityTag t) {
  switch (t) {
    case ModalityTag::Metadata: return "metadata";
    case ModalityTag::Structural: return "structural";
    case ModalityTag::Text: return "text";
    case ModalityTag::Noise: return "noise";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "graph") return Modality::Graph;
  if (s == "text") return Modality::Text;
  if (s == "multimodal") return Modality::Multimodal;
  throw InvalidConfig("unknown modality '" + std::string(s) + "' (graph|text|multimodal)");
}

EmbeddingTable parse_embeddings_jsonl(std::string_view text) {
  EmbeddingTable t;
  bool dim_known = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "embeddings line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array()) {
      throw MalformedRecord(where + ": expected {\"id\", \"lang\", \"vector\"}");
    }
    EmbeddingEntry entry;
    if (j.contains("lang")) {
      try {
        entry.lang = parse_lang(j["lang"].get<std::string>());
      } catch (const std::exception& e) {
        throw MalformedRecord(where + ": " + e.what());
      }
    }
    entry.vector.reserve(j["vector"].size());
    for (const auto& v : j["vector"]) {
      if (!v.is_number()) throw MalformedRecord(where + ": non-numeric vector entry");
      entry.vector.push_back(v.get<float>());
    }
    if (!dim_known) {
      t.dim = entry.vector.size();
      dim_known = true;
    } else if (entry.vector.size() != t.dim) {
      throw DimensionMismatch(where + ": vector length " + std::to_string(entry.vector.size()) +
                              " != " + std::to_string(t.dim));
    }
    auto id = j["id"].get<std::string>();
    if (!t.entries.emplace(id, std::move(entry)).second) throw DuplicateId(where + ": '" + id + "'");
  }
  return t;
}

namespace {

template <typename T>
T read_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw MalformedRecord("truncated binary embeddings");
  T v{};
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) acc |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, float>) {
    auto bits = static_cast<std::uint32_t>(acc);
    std::memcpy(&v, &bits, sizeof(float));
  } else {
    v = static_cast<T>(acc);
  }
  pos += sizeof(T);
  return v;
}

template <typename T>
void write_le(std::string& out, T v) {
  std::uint64_t acc = 0;
  if constexpr (std::is_same_v<T, float>) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(float));
    acc = bits;
  } else {
    acc = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((acc >> (8 * i)) & 0xFF));
}

}  // namespace

EmbeddingTable parse_embeddings_binary(std::string_view bytes) {
  if (bytes.substr(0, kBinaryMagic.size()) != kBinaryMagic) {
    throw MalformedRecord("binary embeddings: bad magic");
  }
  std::size_t pos = kBinaryMagic.size();
  EmbeddingTable t;
  t.dim = read_le<std::uint32_t>(bytes, pos);
  std::size_t record = 0;
  while (pos < bytes.size()) {
    ++record;
    const auto len = read_le<std::uint16_t>(bytes, pos);
    if (pos + len > bytes.size()) throw MalformedRecord("binary embeddings: truncated id in record " + std::to_string(record));
    std::string id(bytes.substr(pos, len));
    pos += len;
    EmbeddingEntry entry;
    entry.vector.resize(t.dim);
    for (std::size_t i = 0; i < t.dim; ++i) entry.vector[i] = read_le<float>(bytes, pos);
    if (!t.entries.emplace(id, std::move(entry)).second) throw DuplicateId("binary embeddings: '" + id + "'");
  }
  return t;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    if (std::string_view(bytes).substr(0, kBinaryMagic.size()) == kBinaryMagic) {
      return parse_embeddings_binary(bytes);
    }
    return parse_embeddings_jsonl(bytes);
  } catch (const DimensionMismatch& e) {
    throw DimensionMismatch(path.string() + ": " + e.what());
  } catch (const DuplicateId& e) {
    throw DuplicateId(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw MalformedRecord(path.string() + ": " + e.what());
  }
}

std::string serialize_embeddings_jsonl(const EmbeddingTable& t) {
  std::string out;
  char buf[32];
  for (const auto& [id, entry] : t.entries) {
    out += "{\"id\":";
    out += json(id).dump();
    if (entry.lang) {
      out += ",\"lang\":\"";
      out += to_string(*entry.lang);
      out += '"';
    }
    out += ",\"vector\":[";
    for (std::size_t i = 0; i < entry.vector.size(); ++i) {
      if (i) out += ',';
      auto res = std::to_chars(buf, buf + sizeof(buf), entry.vector[i]);
      out.append(buf, res.ptr);
    }
    out += "]}\n";
  }
  return out;
}

std::string serialize_embeddings_binary(const EmbeddingTable& t) {
  std::string out(kBinaryMagic);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim));
  for (const auto& [id, entry] : t.entries) {
    if (id.size() > 0xFFFF) throw MalformedRecord("id too long for binary embeddings: " + id);
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float v : entry.vector) write_le<float>(out, v);
  }
  return out;
}

std::array<double, kMetadataDims> aggregate_metadata(const MetadataCounts& m) {
  return {std::log1p(static_cast<double>(m.n_retweets)), std::log1p(static_cast<double>(m.n_replies)),
          std::log1p(static_cast<double>(m.n_quotes))};
}

std::array<double, kStructuralDims> structural_features(const SocialGraph& g, NodeIndex node) {
  if (node >= g.num_nodes()) throw UnknownNode("index " + std::to_string(node));
  std::array<double, kStructuralDims> counts{};
  for (const auto& nb : g.neighbors(node)) counts[static_cast<std::size_t>(nb.kind)] += 1.0;
  const double total = static_cast<double>(g.neighbors(node).size());
  for (std::size_t k = 0; k < kNumRelationKinds; ++k) counts[k] = std::log1p(counts[k]);
  counts[kNumRelationKinds] = std::log1p(total);
  return counts;
}

std::array<double, kStructuralDims> structural_features(const SocialGraph& g, std::string_view id) {
  return structural_features(g, g.index_of(id));
}

Projection Projection::random(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  Rng rng(seed);
  Projection p;
  p.weight.resize(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(in_dim, 1)));
  for (Eigen::Index r = 0; r < p.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) p.weight(r, c) = rng.normal() * scale;
  }
  p.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out_dim));
  return p;
}

Eigen::VectorXd project_text(const Eigen::VectorXd& e, const Projection& p) {
  if (static_cast<std::size_t>(e.size()) != p.in_dim() || p.bias.size() != p.weight.rows()) {
    throw DimensionMismatch("embedding length " + std::to_string(e.size()) + " vs projection input " +
                            std::to_string(p.in_dim()));
  }
  return p.weight * e + p.bias;
}

ModalityTag FeatureLayout::tag_of(std::size_t dim) const {
  if (meta.contains(dim)) return ModalityTag::Metadata;
  if (structural.contains(dim)) return ModalityTag::Structural;
  if (text.contains(dim)) return ModalityTag::Text;
  if (noise.contains(dim)) return ModalityTag::Noise;
  throw DimOutOfRange(std::to_string(dim) + " >= " + std::to_string(total_dim));
}

RawFeatures assemble_features(const SocialGraph& g, const EmbeddingTable* embeddings,
                              Modality modality, const Projection* projection) {
  RawFeatures raw;
  raw.nodes = g.classifiable();
  const bool with_graph = modality != Modality::Text;
  const bool with_text = modality != Modality::Graph;

  if (with_text) {
    if (embeddings == nullptr || projection == nullptr) {
      throw MissingEmbedding("text features requested without an embedding table");
    }
    if (projection->in_dim() != embeddings->dim) {
      throw DimensionMismatch("projection expects " + std::to_string(projection->in_dim()) +
                              "-dim embeddings, table has " + std::to_string(embeddings->dim));
    }
    for (const auto& [id, entry] : embeddings->entries) {
      if (!g.contains(id)) throw UnknownNode("embedding for '" + id + "' has no graph node");
    }
    std::string missing;
    std::size_t n_missing = 0;
    for (NodeIndex n : raw.nodes) {
      if (embeddings->entries.find(g.node(n).id) == embeddings->entries.end()) {
        if (n_missing < 20) missing += (n_missing ? ", " : "") + g.node(n).id;
        ++n_missing;
      }
    }
    if (n_missing > 0) {
      throw MissingEmbedding(std::to_string(n_missing) + " node(s) without embedding: " + missing +
                             (n_missing > 20 ? ", ..." : ""));
    }
  }

  std::size_t col = 0;
  if (with_graph) {
    raw.layout.meta = {col, col + kMetadataDims};
    col += kMetadataDims;
    raw.layout.structural = {col, col + kStructuralDims};
    col += kStructuralDims;
  } else {
    raw.layout.meta = raw.layout.structural = {col, col};
  }
  if (with_text) {
    raw.layout.text = {col, col + projection->out_dim()};
    col += projection->out_dim();
  } else {
    raw.layout.text = {col, col};
  }
  raw.layout.noise = {col, col};
  raw.layout.total_dim = col;

  raw.data.resize(static_cast<Eigen::Index>(raw.nodes.size()), static_cast<Eigen::Index>(col));
  for (std::size_t r = 0; r < raw.nodes.size(); ++r) {
    const auto& node = g.node(raw.nodes[r]);
    const auto row = static_cast<Eigen::Index>(r);
    if (with_graph) {
      const auto meta = aggregate_metadata(node.metadata);
      for (std::size_t i = 0; i < kMetadataDims; ++i) raw.data(row, static_cast<Eigen::Index>(raw.layout.meta.begin + i)) = meta[i];
      const auto st = structural_features(g, raw.nodes[r]);
      for (std::size_t i = 0; i < kStructuralDims; ++i) raw.data(row, static_cast<Eigen::Index>(raw.layout.structural.begin + i)) = st[i];
    }
    if (with_text) {
      const auto& v = embeddings->entries.at(node.id).vector;
      Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size())).cast<double>();
      raw.data.row(row).segment(static_cast<Eigen::Index>(raw.layout.text.begin), static_cast<Eigen::Index>(raw.layout.text.size())) =
          project_text(e, *projection).transpose();
    }
  }
  return raw;
}

void append_noise_columns(RawFeatures& raw, std::size_t count, std::uint64_t seed, bool constant) {
  if (count == 0) return;
  const auto old_cols = raw.data.cols();
  const auto n = raw.data.rows();
  raw.data.conservativeResize(n, old_cols + static_cast<Eigen::Index>(count));
  Rng rng(seed);
  // Column-major draw order keeps each noise column independent of the row count of others.
  for (Eigen::Index c = old_cols; c < raw.data.cols(); ++c) {
    const double value = constant ? rng.normal() : 0.0;
    for (Eigen::Index r = 0; r < n; ++r) raw.data(r, c) = constant ? value : rng.normal();
  }
  raw.layout.noise = {raw.layout.total_dim, raw.layout.total_dim + count};
  raw.layout.total_dim += count;
}

FeatureMatrix normalize_features(const RawFeatures& raw, std::size_t graph_size) {
  FeatureMatrix fm;
  fm.nodes = raw.nodes;
  fm.row_of.assign(graph_size, -1);
  for (std::size_t r = 0; r < fm.nodes.size(); ++r) fm.row_of[fm.nodes[r]] = static_cast<int>(r);
  fm.layout = raw.layout;
  const auto n = raw.data.rows();
  const auto d = raw.data.cols();
  fm.column_mean = Eigen::VectorXd::Zero(d);
  fm.column_scale = Eigen::VectorXd::Zero(d);
  fm.data.resize(n, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    if (n == 0) break;
    const double mean = raw.data.col(c).mean();
    const double var = (raw.data.col(c).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    const double scale = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? 1.0 / sd : 0.0;
    fm.column_mean(c) = mean;
    fm.column_scale(c) = scale;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double z = (raw.data(r, c) - mean) * scale;
      if (!std::isfinite(z)) throw MalformedRecord("non-finite feature value in column " + std::to_string(c));
      fm.data(r, c) = static_cast<float>(z);
    }
  }
  return fm;
}

FeatureMatrix build_features(const SocialGraph& g, const EmbeddingTable* embeddings,
                             Modality modality, const Projection* projection) {
  return normalize_features(assemble_features(g, embeddings, modality, projection), g.num_nodes());
}

}  // namespace mu2x
