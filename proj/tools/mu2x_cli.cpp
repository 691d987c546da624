#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/features.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_explainer.hpp"
#include "mu2x/graph_store.hpp"
#include "mu2x/pipeline.hpp"
#include "mu2x/protocols.hpp"
#include "mu2x/run_config.hpp"
#include "mu2x/synth.hpp"
#include "mu2x/text_explainer.hpp"

namespace {

using namespace mu2x;
using nlohmann::json;

struct Flags {
  std::string config;
  std::string nodes, edges, embeddings, model, out, csv;
  std::string node_id, modality;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  int top_k = 3;
};

// Precedence, lowest first: defaults, config file, MU2X_SEED, --set, explicit flags.
RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (const char* env = std::getenv("MU2X_SEED"); env != nullptr && *env != '\0') {
    try {
      c.set("seed", env);
    } catch (const Error& e) {
      throw InvalidConfig(std::string("MU2X_SEED: ") + e.what());
    }
  }
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidConfig("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) c.seed = *f.seed;
  if (f.jobs) c.jobs = *f.jobs;
  if (!f.nodes.empty()) c.nodes = f.nodes;
  if (!f.edges.empty()) c.edges = f.edges;
  if (!f.embeddings.empty()) c.embeddings = f.embeddings;
  if (!f.model.empty()) c.model = f.model;
  if (!f.out.empty()) c.out = f.out;
  if (!f.modality.empty()) c.set("modality", f.modality);
  return c;
}

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw InvalidConfig(std::string(flag) + " is required for '" + command + "'");
}

struct Inputs {
  SocialGraph graph;
  std::optional<EmbeddingTable> embeddings;
  const EmbeddingTable* table() const { return embeddings ? &*embeddings : nullptr; }
};

Inputs load_inputs(const RunConfig& c, const char* command) {
  require(c.nodes, "--nodes", command);
  require(c.edges, "--edges", command);
  Inputs in;
  in.graph = load_graph(c.nodes, c.edges);
  if (!c.embeddings.empty()) {
    try {
      in.embeddings = load_embeddings(c.embeddings);
    } catch (const Error& e) {
      if (std::string_view(e.what()).find(c.embeddings) != std::string_view::npos) throw;
      throw MalformedRecord(c.embeddings + ": " + e.what());
    }
  }
  return in;
}

Checkpoint load_model(const RunConfig& c, const Flags& f, const char* command) {
  require(c.model, "--model", command);
  Checkpoint ckpt;
  try {
    ckpt = parse_full_checkpoint(read_file(c.model));
  } catch (const Error& e) {
    throw MalformedRecord(c.model + ": " + e.what());
  }
  if (!f.modality.empty() && parse_modality(f.modality) != ckpt.spec.modality) {
    throw InvalidConfig("--modality " + f.modality + " disagrees with the checkpoint's modality '" +
                        std::string(to_string(ckpt.spec.modality)) + "'");
  }
  return ckpt;
}

void emit(const std::string& path, const std::string& contents) {
  if (path.empty()) return;
  if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  write_file(path, contents);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

const char* label_name(Label l) { return l == Label::Misinformation ? "misinformation" : "fact"; }

std::vector<Prediction> predict_all(const Dataset& d, const GatModel& model) { return forward(model, d.gat, d.x); }

Dataset dataset_for(const Inputs& in, const Checkpoint& ckpt) {
  return prepare_dataset(in.graph, in.table(), ckpt.spec, ckpt.split_seed, ckpt.model.config.self_loops);
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& c) {
  SynthConfig sc = c.synth;
  sc.seed = c.seed;
  const SynthCorpus corpus = generate(sc);
  const std::filesystem::path dir = c.out.empty() ? "synth" : c.out;
  std::filesystem::create_directories(dir);
  write_file(dir / "nodes.jsonl", corpus.nodes_jsonl());
  write_file(dir / "edges.jsonl", corpus.edges_jsonl());
  std::string emb_name;
  if (c.synth_embedding_format == "bin") {
    emb_name = "embeddings.bin";
    write_file(dir / emb_name, serialize_embeddings_binary(corpus.embeddings));
  } else if (c.synth_embedding_format == "jsonl") {
    emb_name = "embeddings.jsonl";
    write_file(dir / emb_name, corpus.embeddings_jsonl());
  } else {
    throw InvalidConfig("synth_embedding_format must be jsonl or bin");
  }
  std::size_t mis = 0, labeled = 0;
  for (const auto& n : corpus.graph.nodes()) {
    if (n.label) {
      ++labeled;
      mis += *n.label == Label::Misinformation;
    }
  }
  std::cout << "synth: " << corpus.graph.num_nodes() << " nodes, " << corpus.graph.num_edges() << " edges, "
            << labeled << " labeled (" << mis << " misinformation), " << corpus.embeddings.entries.size()
            << " embeddings\n"
            << "wrote " << (dir / "nodes.jsonl").string() << ", " << (dir / "edges.jsonl").string() << ", "
            << (dir / emb_name).string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const Inputs in = load_inputs(c, "train");
  const Dataset d = prepare_dataset(in.graph, in.table(), c.features, c.split_seed, c.gat.self_loops);
  const Checkpoint ckpt = train_checkpoint(d, c.gat_config());
  const std::string out = c.out.empty() ? "model.json" : c.out;
  emit(out, serialize_checkpoint(ckpt));
  const auto preds = predict_all(d, ckpt.model);
  std::vector<int> p, g;
  for (auto r : d.split.validation) {
    p.push_back(static_cast<int>(preds[r].label));
    g.push_back(d.labels[r]);
  }
  std::cout << "train: modality " << to_string(c.features.modality) << ", " << d.features.rows() << " nodes x "
            << d.features.cols() << " features, " << d.split.train.size() << " train / " << d.split.validation.size()
            << " validation / " << d.split.test.size() << " test\n"
            << "final loss " << fixed(ckpt.loss_history.back()) << ", validation F1 "
            << fixed(p.empty() ? 0.0 : f1_score(p, g, 0)) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

int cmd_predict(const RunConfig& c, const Flags& f) {
  const Checkpoint ckpt = load_model(c, f, "predict");
  const Inputs in = load_inputs(c, "predict");
  const Dataset d = dataset_for(in, ckpt);
  const auto preds = predict_all(d, ckpt.model);
  json arr = json::array();
  std::size_t mis = 0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto& id = in.graph.node(d.features.nodes[r]).id;
    if (!f.node_id.empty() && id != f.node_id) continue;
    mis += preds[r].label == Label::Misinformation;
    arr.push_back({{"id", id},
                   {"label", label_name(preds[r].label)},
                   {"p_misinformation", preds[r].probs[0]},
                   {"p_fact", preds[r].probs[1]}});
  }
  if (!f.node_id.empty() && arr.empty()) d.row_of(f.node_id);
  emit(c.out, json{{"predictions", arr}}.dump(2) + "\n");
  std::cout << "predict: " << arr.size() << " nodes, " << mis << " misinformation, " << arr.size() - mis
            << " fact\n";
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

TextMode text_mode_for(const RunConfig& c, const Dataset& d) {
  if (c.text_mode == "tokens") return TextMode::Tokens;
  if (c.text_mode == "embedding") return TextMode::Embedding;
  if (c.text_mode != "auto") throw InvalidConfig("text_mode must be auto, tokens or embedding");
  return d.encoder ? TextMode::Tokens : TextMode::Embedding;
}

int cmd_explain(const RunConfig& c, const Flags& f) {
  if (f.node_id.empty()) throw InvalidConfig("--node-id is required for 'explain'");
  if (f.top_k < 0) throw InvalidConfig("--top-k must be >= 0");
  const Checkpoint ckpt = load_model(c, f, "explain");
  const Inputs in = load_inputs(c, "explain");
  const Dataset d = dataset_for(in, ckpt);
  const std::uint32_t row = d.row_of(f.node_id);
  const PostNode& node = in.graph.node(f.node_id);
  const auto preds = predict_all(d, ckpt.model);
  std::vector<double> p0(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) p0[i] = preds[i].probs[0];

  GraphExplanation ge = explain_node(in.graph, d.features, p0, in.graph.index_of(f.node_id), c.explain_options());
  if (ge.selected.size() > static_cast<std::size_t>(f.top_k)) ge.selected.resize(static_cast<std::size_t>(f.top_k));

  json report;
  report["node"] = {{"id", node.id}, {"kind", std::string(to_string(node.kind))},
                    {"lang", std::string(to_string(node.lang))}, {"text", node.text}};
  report["prediction"] = {{"label", label_name(preds[row].label)},
                          {"p_misinformation", preds[row].probs[0]},
                          {"p_fact", preds[row].probs[1]}};
  report["graph_explanation"] = json::parse(explanation_json(ge));

  std::optional<TokenAttribution> ta;
  std::string text_note;
  if (ckpt.spec.modality == Modality::Graph) {
    text_note = "the model has no text features";
  } else {
    ta = explain_text(ckpt.model, d.gat, d.x, row, node, d.pathway(), text_mode_for(c, d), c.ig_steps);
  }
  report["text_attribution"] = ta ? json::parse(attribution_json(*ta)) : json(nullptr);
  if (!ta) report["text_attribution_note"] = text_note;
  emit(c.out, report.dump(2) + "\n");

  std::cout << "node " << node.id << " (" << to_string(node.kind) << ", " << to_string(node.lang) << ")\n"
            << "classification: " << label_name(preds[row].label) << " (p_misinformation "
            << fixed(preds[row].probs[0]) << ")\n"
            << "graph features (top " << f.top_k << " of " << ge.n_neighbors << "-node neighborhood):\n";
  if (ge.selected.empty()) std::cout << "  (none selected)\n";
  for (const auto& s : ge.selected) {
    std::cout << "  dim " << s.dim << "  " << to_string(s.modality) << "  beta " << fixed(s.beta, 6) << "\n";
  }
  if (ta) {
    std::cout << "word importance (delta " << fixed(ta->convergence_delta, 6) << "):\n";
    const std::size_t shown = std::min<std::size_t>(ta->tokens.size(), 40);
    for (std::size_t i = 0; i < shown; ++i) std::cout << "  " << ta->tokens[i] << "  " << fixed(ta->scores[i], 3) << "\n";
    if (shown < ta->tokens.size()) std::cout << "  ... " << ta->tokens.size() - shown << " more\n";
  } else {
    std::cout << "word importance: unavailable (" << text_note << ")\n";
  }
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

int cmd_eval_f1(const RunConfig& c, const Flags& f) {
  const Checkpoint ckpt = load_model(c, f, "eval-f1");
  const Inputs in = load_inputs(c, "eval-f1");
  const Dataset d = dataset_for(in, ckpt);
  if (d.split.test.empty()) throw NoTestNodes("the split has no test nodes");
  const auto preds = predict_all(d, ckpt.model);
  std::vector<int> p, g;
  for (auto r : d.split.test) {
    p.push_back(static_cast<int>(preds[r].label));
    g.push_back(d.labels[r]);
  }
  const BootstrapReport rep = bootstrap_f1(p, g, c.bootstrap_b, c.seed);
  emit(c.out, to_json(rep));
  std::cout << "eval-f1: " << p.size() << " test nodes, F1 " << fixed(rep.point_f1) << ", bootstrap mean "
            << fixed(rep.mean_f1) << " +/- " << fixed(rep.half_width) << " (95% CI " << fixed(rep.ci_low) << " - "
            << fixed(rep.ci_high) << ", B=" << rep.resamples << ")\n";
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

int cmd_eval_interpret(const RunConfig& c, const Flags& f) {
  const Checkpoint ckpt = load_model(c, f, "eval-interpret");
  const Inputs in = load_inputs(c, "eval-interpret");
  const Dataset d = dataset_for(in, ckpt);
  const auto preds = predict_all(d, ckpt.model);
  std::vector<double> p0(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) p0[i] = preds[i].probs[0];
  std::vector<std::uint32_t> rows = d.split.test;
  if (c.interpret_max_nodes > 0 && rows.size() > c.interpret_max_nodes) rows.resize(c.interpret_max_nodes);
  std::vector<std::optional<GraphExplanation>> slots(rows.size());
  const auto opts = c.explain_options();
  parallel_for(rows.size(), c.resolved_jobs(), [&](std::size_t i) {
    try {
      slots[i] = explain_node(in.graph, d.features, p0, d.features.nodes[rows[i]], opts);
    } catch (const NeighborhoodTooSmall&) {
    }
  });
  std::vector<GraphExplanation> explanations;
  for (auto& s : slots) {
    if (s) explanations.push_back(std::move(*s));
  }
  const ModalityReport rep = modality_distribution(explanations, d.features.layout);
  json j = json::parse(to_json(rep));
  j["modality"] = std::string(to_string(ckpt.spec.modality));
  j["explained_nodes"] = explanations.size();
  j["skipped_nodes"] = rows.size() - explanations.size();
  emit(c.out, j.dump(2) + "\n");
  std::cout << "eval-interpret: " << explanations.size() << " explanations (" << rows.size() - explanations.size()
            << " skipped)\n";
  for (const auto& [key, b] : rep.buckets) {
    std::cout << "  " << std::setw(7) << std::left << key << std::right << " n=" << b.explanations;
    for (const auto& [tag, freq] : b.frequencies) std::cout << "  " << to_string(tag) << " " << fixed(freq, 3);
    std::cout << "\n";
  }
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

int cmd_eval_trust(const RunConfig& c, const Flags& f) {
  const Inputs in = load_inputs(c, "eval-trust");
  const Dataset d = prepare_dataset(in.graph, in.table(), c.features, c.split_seed, c.gat.self_loops);
  const TrustReport rep = trustworthiness_protocol(d, c.gat_config(), c.trust_options());
  emit(c.out, to_json(rep));
  emit(f.csv, to_csv(rep));
  std::cout << "eval-trust: modality " << rep.modality << ", " << rep.cases << " explained test nodes ("
            << rep.skipped_nodes << " skipped), " << rep.valid_rounds << "/" << rep.rounds << " non-degenerate rounds\n";
  for (int k : rep.k_list) {
    if (std::isnan(rep.mean_f1.at(k))) {
      std::cout << "  top-" << k << "  F1 n/a (no non-degenerate round)\n";
    } else {
      std::cout << "  top-" << k << "  F1 " << fixed(rep.mean_f1.at(k)) << " +/- " << fixed(rep.std_f1.at(k)) << "\n";
    }
  }
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

int cmd_eval_robust(const RunConfig& c, const Flags& f) {
  const Inputs in = load_inputs(c, "eval-robust");
  const RobustReport rep =
      robustness_protocol(in.graph, in.table(), c.features, c.gat_config(), c.split_seed, c.robust_options());
  emit(c.out, to_json(rep));
  emit(f.csv, to_csv(rep));
  std::cout << "eval-robust: modality " << rep.modality << ", base dim " << rep.base_dim << ", " << rep.rounds
            << " rounds" << (rep.constant_noise ? " (constant noise)" : "") << "\n";
  for (const auto& lv : rep.levels) {
    std::cout << "  p=" << lv.p << "  noise dims " << lv.noise_dims << "  noisy selections "
              << fixed(lv.mean_percentage, 2) << "%\n";
  }
  if (!c.out.empty()) std::cout << "wrote " << c.out << "\n";
  return 0;
}

int exit_code(const Error& e) {
  switch (e.family()) {
    case ErrorFamily::Usage: return 2;
    case ErrorFamily::Data: return 3;
    case ErrorFamily::Numeric: return 4;
    case ErrorFamily::Logic: return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mu2x: explainable multimodal misinformation detection on social graphs"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 usage, 3 data, 4 numeric.\n"
             "Settings are resolved as: defaults < --config file < MU2X_SEED < --set < explicit flags.\n"
             "Config keys (key = default):\n" +
             describe_config_keys());

  Flags f;
  struct Spec {
    const char* name;
    const char* help;
    bool data, model, node, topk, csv, modality;
  };
  const std::vector<Spec> specs = {
      {"synth", "generate a synthetic corpus into --out (a directory)", false, false, false, false, false, false},
      {"train", "train a GAT and write the checkpoint to --out", true, false, false, false, false, true},
      {"predict", "classify nodes with a trained model", true, true, true, false, false, false},
      {"explain", "graph and word-level explanation of one node", true, true, true, true, false, false},
      {"eval-f1", "bootstrap F1 on the test split", true, true, false, false, false, false},
      {"eval-interpret", "modality distribution of test-node explanations", true, true, false, false, false, false},
      {"eval-trust", "simulated-user trustworthiness protocol", true, false, false, false, true, true},
      {"eval-robust", "noise-injection robustness protocol", true, false, false, false, true, true},
  };
  std::vector<CLI::App*> subs;
  for (const auto& s : specs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", f.config, "flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", f.overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", f.seed, "master seed (default 7)");
    sub->add_option("--out", f.out, "output path");
    if (s.data) {
      sub->add_option("--nodes", f.nodes, "nodes JSONL");
      sub->add_option("--edges", f.edges, "edges JSONL");
      sub->add_option("--embeddings", f.embeddings, "embeddings file (JSONL or binary)");
    }
    if (s.model) sub->add_option("--model", f.model, "model checkpoint");
    if (s.node) sub->add_option("--node-id", f.node_id, "node id");
    if (s.topk) sub->add_option("--top-k", f.top_k, "graph features to report")->capture_default_str();
    if (s.modality) {
      sub->add_option("--modality", f.modality, "graph | text | multimodal (default multimodal)")
          ->check(CLI::IsMember({"graph", "text", "multimodal"}));
    } else if (s.model) {
      sub->add_option("--modality", f.modality, "must match the checkpoint when given")
          ->check(CLI::IsMember({"graph", "text", "multimodal"}));
    }
    if (s.csv) sub->add_option("--csv", f.csv, "also write plot data (x,y,series)");
    if (std::string_view(s.name).starts_with("eval-")) {
      sub->add_option("--jobs", f.jobs, "worker threads (default: available parallelism)");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig c = resolve(f);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "synth") return cmd_synth(c);
    if (name == "train") return cmd_train(c);
    if (name == "predict") return cmd_predict(c, f);
    if (name == "explain") return cmd_explain(c, f);
    if (name == "eval-f1") return cmd_eval_f1(c, f);
    if (name == "eval-interpret") return cmd_eval_interpret(c, f);
    if (name == "eval-trust") return cmd_eval_trust(c, f);
    if (name == "eval-robust") return cmd_eval_robust(c, f);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
