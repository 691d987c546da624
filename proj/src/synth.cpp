#include "mu2x/synth.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

namespace {

const std::array<std::vector<std::string>, 3> kNeutralWords = {{
    {"the", "people", "today", "news", "video", "says", "government", "health", "world", "new",
     "vaccine", "city", "time", "week", "shared", "post", "claim", "president", "country", "school",
     "water", "money", "photo", "story", "million", "police", "virus", "election", "after", "before"},
    {"el", "gente", "hoy", "noticias", "video", "dice", "gobierno", "salud", "mundo", "nuevo",
     "vacuna", "ciudad", "tiempo", "semana", "compartido", "publicación", "presidente", "país", "escuela", "agua",
     "dinero", "foto", "historia", "millones", "policía", "virus", "elecciones", "después", "antes", "todos"},
    {"o", "pessoas", "hoje", "notícias", "vídeo", "diz", "governo", "saúde", "mundo", "novo",
     "vacina", "cidade", "tempo", "semana", "compartilhado", "post", "presidente", "país", "escola", "água",
     "dinheiro", "foto", "história", "milhões", "polícia", "vírus", "eleição", "depois", "antes", "todos"},
}};

const std::array<std::vector<std::string>, 2> kClassWords = {{
    {"#hoax", "fake", "coverup", "#wakeup", "lies", "hidden", "miracle", "banned", "@truthseeker", "secret"},
    {"study", "confirmed", "#factcheck", "official", "evidence", "report", "data", "verified", "@healthagency",
     "source"},
}};

double exponential(Rng& rng, double mean) {
  double u = rng.uniform();
  while (u <= 0.0) u = rng.uniform();
  return -mean * std::log(u);
}

std::uint64_t count_draw(Rng& rng, double mean) { return static_cast<std::uint64_t>(std::floor(exponential(rng, mean))); }

Lang draw_lang(Rng& rng, const std::array<double, 3>& p) {
  const double u = rng.uniform();
  if (u < p[0]) return Lang::En;
  if (u < p[0] + p[1]) return Lang::Es;
  return Lang::Pt;
}

struct Generator {
  const SynthConfig& cfg;
  Rng rng;
  std::vector<float> direction;  // +/-1 pattern for the embedding shift
  std::vector<PostNode> nodes;
  std::vector<Relation> edges;
  EmbeddingTable emb;

  explicit Generator(const SynthConfig& c) : cfg(c), rng(c.seed) {
    direction.resize(cfg.embedding_dim);
    for (auto& d : direction) d = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    emb.dim = cfg.embedding_dim;
  }

  std::string text(Lang lang, int label, std::size_t min_len, std::size_t max_len) {
    const auto& neutral = kNeutralWords[static_cast<std::size_t>(lang)];
    const auto len = min_len + static_cast<std::size_t>(rng.index(max_len - min_len + 1));
    std::string out;
    for (std::size_t i = 0; i < len; ++i) {
      const std::string* word;
      if (rng.bernoulli(0.3 * cfg.signal_text)) {
        const auto& cls = kClassWords[static_cast<std::size_t>(label)];
        word = &cls[rng.index(cls.size())];
      } else {
        word = &neutral[rng.index(neutral.size())];
      }
      if (!out.empty()) out += ' ';
      out += *word;
    }
    return out;
  }

  MetadataCounts metadata(int label) {
    const double boost = label == 0 ? cfg.signal_metadata : 0.0;
    MetadataCounts m;
    m.n_retweets = count_draw(rng, 4.0 * (1.0 + 4.0 * boost));
    m.n_replies = count_draw(rng, 2.0 * (1.0 + 4.0 * boost));
    m.n_quotes = count_draw(rng, 1.0 * (1.0 + 2.0 * boost));
    return m;
  }

  void embedding(const std::string& id, Lang lang, int label) {
    EmbeddingEntry e;
    e.lang = lang;
    e.vector.resize(cfg.embedding_dim);
    const double shift = 0.35 * cfg.signal_text * (label == 0 ? 1.0 : -1.0);
    for (std::size_t i = 0; i < cfg.embedding_dim; ++i) {
      e.vector[i] = static_cast<float>(rng.normal() + shift * direction[i]);
    }
    emb.entries.emplace(id, std::move(e));
  }

  // Same-label target with probability 0.5 + 0.5 * structure signal.
  std::size_t homophilous_pick(const std::vector<std::size_t>& same, const std::vector<std::size_t>& all) {
    if (!same.empty() && rng.bernoulli(0.5 + 0.5 * cfg.signal_structure)) return same[rng.index(same.size())];
    return all[rng.index(all.size())];
  }
};

}  // namespace

void SynthConfig::validate() const {
  const double total = lang_proportions[0] + lang_proportions[1] + lang_proportions[2];
  if (std::abs(total - 1.0) > 1e-9) throw InvalidConfig("language proportions must sum to 1");
  for (double p : lang_proportions) {
    if (p < 0.0) throw InvalidConfig("language proportions must be >= 0");
  }
  for (double s : {signal_metadata, signal_structure, signal_text}) {
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidConfig("signal strengths must lie in [0, 1]");
  }
  for (double d : {retweet_density, quote_density, mention_density}) {
    if (!(d >= 0.0)) throw InvalidConfig("edge densities must be >= 0");
  }
  if (!(misinformation_rate > 0.0 && misinformation_rate < 1.0)) {
    throw InvalidConfig("misinformation_rate must lie in (0, 1)");
  }
  if (n_tweets == 0 || n_users == 0 || n_claims == 0) throw InvalidConfig("n_tweets, n_users and n_claims must be >= 1");
  if (embedding_dim == 0) throw InvalidConfig("embedding_dim must be >= 1");
}

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Generator gen(cfg);
  Rng& rng = gen.rng;

  // Claims: an exact misinformation share, shuffled.
  std::vector<int> claim_label(cfg.n_claims, 1);
  const auto n_mis = static_cast<std::size_t>(std::llround(cfg.misinformation_rate * static_cast<double>(cfg.n_claims)));
  for (std::size_t i = 0; i < n_mis && i < cfg.n_claims; ++i) claim_label[i] = 0;
  rng.shuffle(claim_label);
  std::vector<Lang> claim_lang(cfg.n_claims);
  for (std::size_t c = 0; c < cfg.n_claims; ++c) {
    claim_lang[c] = draw_lang(rng, cfg.lang_proportions);
    PostNode n;
    n.id = "c" + std::to_string(c);
    n.kind = NodeKind::Claim;
    n.lang = claim_lang[c];
    n.text = gen.text(n.lang, claim_label[c], 6, 10);
    n.metadata = gen.metadata(claim_label[c]);
    n.label = static_cast<Label>(claim_label[c]);
    gen.embedding(n.id, n.lang, claim_label[c]);
    gen.nodes.push_back(std::move(n));
  }

  // Users lean towards one class; posting follows the lean under structure signal.
  std::vector<int> user_lean(cfg.n_users);
  std::array<std::vector<std::size_t>, 2> users_by_lean;
  std::vector<std::size_t> all_users(cfg.n_users);
  std::iota(all_users.begin(), all_users.end(), 0);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    user_lean[u] = rng.bernoulli(cfg.misinformation_rate) ? 0 : 1;
    users_by_lean[static_cast<std::size_t>(user_lean[u])].push_back(u);
    PostNode n;
    n.id = "u" + std::to_string(u);
    n.kind = NodeKind::User;
    n.lang = draw_lang(rng, cfg.lang_proportions);
    gen.nodes.push_back(std::move(n));
  }

  // Tweets discuss claims round-robin and inherit the claim's label.
  std::vector<int> tweet_label(cfg.n_tweets);
  std::array<std::vector<std::size_t>, 2> tweets_by_label;
  std::vector<std::size_t> all_tweets(cfg.n_tweets);
  std::iota(all_tweets.begin(), all_tweets.end(), 0);
  for (std::size_t t = 0; t < cfg.n_tweets; ++t) {
    const std::size_t c = t % cfg.n_claims;
    const int label = claim_label[c];
    tweet_label[t] = label;
    tweets_by_label[static_cast<std::size_t>(label)].push_back(t);
    PostNode n;
    n.id = "t" + std::to_string(t);
    n.kind = NodeKind::Tweet;
    n.lang = claim_lang[c];
    n.text = gen.text(n.lang, label, 8, 14);
    n.metadata = gen.metadata(label);
    n.label = static_cast<Label>(label);
    gen.embedding(n.id, n.lang, label);
    gen.edges.push_back({n.id, "c" + std::to_string(c), RelationKind::Discusses});
    const std::size_t poster = gen.homophilous_pick(users_by_lean[static_cast<std::size_t>(label)], all_users);
    gen.edges.push_back({"u" + std::to_string(poster), n.id, RelationKind::Posted});
    gen.nodes.push_back(std::move(n));
  }

  for (std::size_t t = 0; t < cfg.n_tweets && cfg.n_tweets > 1; ++t) {
    const auto& same = tweets_by_label[static_cast<std::size_t>(tweet_label[t])];
    const std::string id = "t" + std::to_string(t);
    auto emit = [&](double density, RelationKind kind) {
      const auto count = count_draw(rng, density);
      for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t other = gen.homophilous_pick(same, all_tweets);
        if (other != t) gen.edges.push_back({id, "t" + std::to_string(other), kind});
      }
    };
    if (cfg.retweet_density > 0.0) emit(cfg.retweet_density, RelationKind::Retweeted);
    if (cfg.quote_density > 0.0) emit(cfg.quote_density, RelationKind::QuoteOf);
    if (cfg.mention_density > 0.0) {
      const auto count = count_draw(rng, cfg.mention_density);
      for (std::uint64_t k = 0; k < count; ++k) {
        gen.edges.push_back({id, "u" + std::to_string(rng.index(cfg.n_users)), RelationKind::Mentions});
      }
    }
  }

  // Replies inherit the parent tweet's label and language.
  for (std::size_t r = 0; r < cfg.n_replies; ++r) {
    const std::size_t parent = rng.index(cfg.n_tweets);
    const int label = tweet_label[parent];
    PostNode n;
    n.id = "r" + std::to_string(r);
    n.kind = NodeKind::Reply;
    n.lang = claim_lang[parent % cfg.n_claims];
    n.text = gen.text(n.lang, label, 4, 8);
    n.metadata = gen.metadata(label);
    n.label = static_cast<Label>(label);
    gen.embedding(n.id, n.lang, label);
    gen.edges.push_back({n.id, "t" + std::to_string(parent), RelationKind::ReplyTo});
    const std::size_t poster = gen.homophilous_pick(users_by_lean[static_cast<std::size_t>(label)], all_users);
    gen.edges.push_back({"u" + std::to_string(poster), n.id, RelationKind::Posted});
    gen.nodes.push_back(std::move(n));
  }

  SynthCorpus corpus;
  corpus.graph = SocialGraph::build(std::move(gen.nodes), std::move(gen.edges));
  corpus.embeddings = std::move(gen.emb);
  return corpus;
}

SynthPaths write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthPaths p{dir / "nodes.jsonl", dir / "edges.jsonl", dir / "embeddings.jsonl"};
  write_file(p.nodes, corpus.nodes_jsonl());
  write_file(p.edges, corpus.edges_jsonl());
  write_file(p.embeddings, corpus.embeddings_jsonl());
  return p;
}

}  // namespace mu2x
