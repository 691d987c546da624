#include "mu2x/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <thread>

#include "mu2x/errors.hpp"

namespace mu2x {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InvalidConfig("key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidConfig("key '" + std::string(key) + "': expected true|false, got '" + std::string(v) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view v) {
  std::vector<T> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<T>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw InvalidConfig("key '" + std::string(key) + "': empty list");
  return out;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(static_cast<double>(v[i]));
  return out;
}

struct Entry {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NUM(name, field, T, doc)                                                                   \
  Entry {                                                                                          \
    name, doc, [](RunConfig& c, std::string_view v) { c.field = parse_number<T>(name, v); },       \
        [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); }                      \
  }
#define U64(name, field, doc)                                                                      \
  Entry {                                                                                          \
    name, doc, [](RunConfig& c, std::string_view v) { c.field = parse_number<std::uint64_t>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                                 \
  }
#define BOOL(name, field, doc)                                                                     \
  Entry {                                                                                          \
    name, doc, [](RunConfig& c, std::string_view v) { c.field = parse_bool(name, v); },            \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }                 \
  }
#define STR(name, field, doc)                                                                      \
  Entry {                                                                                          \
    name, doc, [](RunConfig& c, std::string_view v) { c.field = std::string(v); },                 \
        [](const RunConfig& c) { return c.field.empty() ? std::string("(none)") : c.field; }       \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      U64("seed", seed, "master seed: training, bootstrap, protocol rounds, synth"),
      U64("split_seed", split_seed, "seed of the stratified 70/10/20 split"),
      NUM("hidden_dim", gat.hidden_dim, int, "GAT hidden width"),
      NUM("heads", gat.heads, int, "attention heads per layer (averaged)"),
      NUM("lr", gat.lr, double, "Adam learning rate"),
      NUM("epochs", gat.epochs, int, "full-batch training epochs"),
      NUM("leaky_slope", gat.leaky_slope, double, "LeakyReLU slope in attention scores"),
      NUM("adam_beta1", gat.adam_beta1, double, "Adam beta1"),
      NUM("adam_beta2", gat.adam_beta2, double, "Adam beta2"),
      NUM("adam_eps", gat.adam_eps, double, "Adam epsilon"),
      BOOL("self_loops", gat.self_loops, "add self-loops to the message graph"),
      Entry{"modality", "feature blocks: graph | text | multimodal",
            [](RunConfig& c, std::string_view v) {
              try {
                c.features.modality = parse_modality(v);
              } catch (const Error& e) {
                throw InvalidConfig(std::string("key 'modality': ") + e.what());
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.features.modality)); }},
      Entry{"text_source", "text block input: embeddings (file) | tokens (built-in encoder)",
            [](RunConfig& c, std::string_view v) { c.features.text_source = parse_text_source(v); },
            [](const RunConfig& c) { return std::string(to_string(c.features.text_source)); }},
      NUM("projection_dim", features.projection_dim, std::size_t, "text projection width"),
      U64("projection_seed", features.projection_seed, "seed of the text projection"),
      NUM("token_dim", features.token_dim, std::size_t, "built-in token encoder width"),
      U64("token_seed", features.token_seed, "seed of the token embedding table"),
      NUM("token_min_count", features.token_min_count, std::size_t, "min document frequency of a vocabulary token"),
      NUM("k", k, int, "explanation neighborhood hops"),
      Entry{"rho", "absolute L1 weight; auto = rho_scale * rho_max",
            [](RunConfig& c, std::string_view v) {
              if (v == "auto") c.rho.reset();
              else c.rho = parse_number<double>("rho", v);
            },
            [](const RunConfig& c) { return c.rho ? fmt(*c.rho) : std::string("auto"); }},
      NUM("rho_scale", rho_scale, double, "rho as a fraction of rho_max"),
      NUM("ig_steps", ig_steps, int, "integrated-gradients steps"),
      STR("text_mode", text_mode, "word attribution mode: auto | tokens | embedding"),
      NUM("bootstrap_b", bootstrap_b, int, "bootstrap resamples"),
      NUM("rounds", rounds, int, "protocol rounds"),
      NUM("frac", frac, double, "untrustworthy feature fraction"),
      Entry{"k_list", "top-K values for the trust protocol",
            [](RunConfig& c, std::string_view v) { c.k_list = parse_list<int>("k_list", v); },
            [](const RunConfig& c) { return fmt_list(c.k_list); }},
      Entry{"p_list", "noise proportions for the robustness protocol",
            [](RunConfig& c, std::string_view v) { c.p_list = parse_list<double>("p_list", v); },
            [](const RunConfig& c) { return fmt_list(c.p_list); }},
      NUM("explained_per_round", explained_per_round, std::size_t, "explained test nodes per robustness round"),
      NUM("ridge_lambda", ridge_lambda, double, "simulated-user surrogate ridge penalty"),
      BOOL("constant_noise", constant_noise, "robustness debug mode: constant noise columns"),
      NUM("interpret_max_nodes", interpret_max_nodes, std::size_t, "cap on explained test nodes (0 = all)"),
      NUM("jobs", jobs, int, "protocol worker threads (0 = available parallelism)"),
      STR("nodes", nodes, "nodes JSONL path"),
      STR("edges", edges, "edges JSONL path"),
      STR("embeddings", embeddings, "embeddings path (JSONL or binary)"),
      STR("model", model, "model checkpoint path"),
      STR("out", out, "output path"),
      NUM("synth_tweets", synth.n_tweets, std::size_t, "synthetic tweets"),
      NUM("synth_replies", synth.n_replies, std::size_t, "synthetic replies"),
      NUM("synth_users", synth.n_users, std::size_t, "synthetic users"),
      NUM("synth_claims", synth.n_claims, std::size_t, "synthetic claims"),
      Entry{"synth_langs", "en,es,pt proportions",
            [](RunConfig& c, std::string_view v) {
              const auto l = parse_list<double>("synth_langs", v);
              if (l.size() != 3) throw InvalidConfig("key 'synth_langs': expected 3 proportions");
              std::copy(l.begin(), l.end(), c.synth.lang_proportions.begin());
            },
            [](const RunConfig& c) {
              return fmt_list(std::vector<double>(c.synth.lang_proportions.begin(), c.synth.lang_proportions.end()));
            }},
      NUM("synth_signal_metadata", synth.signal_metadata, double, "planted metadata signal in [0,1]"),
      NUM("synth_signal_structure", synth.signal_structure, double, "planted homophily signal in [0,1]"),
      NUM("synth_signal_text", synth.signal_text, double, "planted text signal in [0,1]"),
      NUM("synth_retweet_density", synth.retweet_density, double, "mean retweet edges per tweet"),
      NUM("synth_quote_density", synth.quote_density, double, "mean quote edges per tweet"),
      NUM("synth_mention_density", synth.mention_density, double, "mean mention edges per tweet"),
      NUM("synth_misinformation_rate", synth.misinformation_rate, double, "share of misinformation claims"),
      NUM("synth_embedding_dim", synth.embedding_dim, std::size_t, "synthetic embedding width"),
      STR("synth_embedding_format", synth_embedding_format, "synthetic embedding file: jsonl | bin"),
  };
  return table;
}

#undef NUM
#undef U64
#undef BOOL
#undef STR

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (e.key == key) {
      e.set(*this, trim(value));
      return;
    }
  }
  throw InvalidConfig("unknown key '" + std::string(key) + "'");
}

ExplainOptions RunConfig::explain_options() const {
  ExplainOptions o;
  o.k = k;
  o.rho = rho;
  o.rho_scale = rho_scale;
  return o;
}

GatConfig RunConfig::gat_config() const {
  GatConfig g = gat;
  g.seed = seed;
  return g;
}

int RunConfig::resolved_jobs() const {
  if (jobs > 0) return jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

TrustOptions RunConfig::trust_options() const {
  TrustOptions o;
  o.k_list = k_list;
  o.rounds = rounds;
  o.frac = frac;
  o.seed = seed;
  o.jobs = resolved_jobs();
  o.ridge_lambda = ridge_lambda;
  o.explain = explain_options();
  return o;
}

RobustOptions RunConfig::robust_options() const {
  RobustOptions o;
  o.p_list = p_list;
  o.rounds = rounds;
  o.explained_per_round = explained_per_round;
  o.seed = seed;
  o.constant_noise = constant_noise;
  o.jobs = resolved_jobs();
  o.explain = explain_options();
  return o;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    const RunConfig defaults;
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back({e.key, e.get(defaults), e.help});
    return out;
  }();
  return keys;
}

std::string describe_config_keys() {
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.key.size() + k.default_value.size() + 3);
  std::string out;
  for (const auto& k : config_keys()) {
    std::string lhs = k.key + " = " + k.default_value;
    lhs.resize(width, ' ');
    out += "  " + lhs + "  " + k.help + "\n";
  }
  return out;
}

RunConfig parse_run_config(std::string_view text, std::string_view source) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw InvalidConfig(where + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw InvalidConfig(where + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw InvalidConfig("cannot read config file '" + path + "'");
  }
  return parse_run_config(text, path);
}

}  // namespace mu2x
