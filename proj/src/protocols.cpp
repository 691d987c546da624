#include "mu2x/protocols.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/rng.hpp"

namespace mu2x {

using nlohmann::json;

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double f1_score(std::span<const int> preds, std::span<const int> golds, int positive) {
  if (preds.size() != golds.size()) throw LengthMismatch(std::to_string(preds.size()) + " vs " + std::to_string(golds.size()));
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool g = golds[i] == positive;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

BootstrapReport bootstrap_f1(std::span<const int> preds, std::span<const int> golds, int resamples,
                             std::uint64_t seed) {
  if (preds.size() != golds.size()) throw LengthMismatch(std::to_string(preds.size()) + " vs " + std::to_string(golds.size()));
  if (preds.empty()) throw EmptyInput("bootstrap needs at least one prediction");
  if (resamples < 1) throw InvalidConfig("bootstrap resamples must be >= 1");
  BootstrapReport r;
  r.resamples = resamples;
  r.seed = seed;
  r.point_f1 = f1_score(preds, golds, 0);
  const std::size_t n = preds.size();
  Rng rng(seed);
  std::vector<double> scores(static_cast<std::size_t>(resamples));
  std::vector<int> p(n), g(n);
  for (auto& s : scores) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(rng.index(n));
      p[i] = preds[idx];
      g[i] = golds[idx];
    }
    s = f1_score(p, g, 0);
  }
  r.mean_f1 = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(resamples);
  std::sort(scores.begin(), scores.end());
  const double last = static_cast<double>(resamples - 1);
  r.ci_low = scores[static_cast<std::size_t>(std::floor(0.025 * last))];
  r.ci_high = scores[static_cast<std::size_t>(std::ceil(0.975 * last))];
  // The band always brackets the mean.
  r.ci_low = std::min(r.ci_low, r.mean_f1);
  r.ci_high = std::max(r.ci_high, r.mean_f1);
  r.half_width = 0.5 * (r.ci_high - r.ci_low);
  return r;
}

ModalityReport modality_distribution(std::span<const GraphExplanation> explanations, const FeatureLayout& layout) {
  ModalityReport rep;
  for (const char* key : {"1", "2", "3", ">3", "overall"}) rep.buckets[key];
  for (const auto& e : explanations) {
    if (static_cast<std::size_t>(e.beta.size()) != layout.total_dim) {
      throw LayoutMismatch("explanation for '" + e.target + "' has " + std::to_string(e.beta.size()) +
                           " dims, layout has " + std::to_string(layout.total_dim));
    }
    const auto n = e.selected.size();
    if (n == 0) {
      ++rep.empty_explanations;
      continue;
    }
    const std::string key = n > 3 ? ">3" : std::to_string(n);
    for (auto* bucket : {&rep.buckets[key], &rep.buckets["overall"]}) {
      ++bucket->explanations;
      for (const auto& s : e.selected) {
        if (layout.tag_of(s.dim) != s.modality) throw LayoutMismatch("modality tag disagrees with layout");
        ++bucket->counts[s.modality];
      }
    }
  }
  for (auto& [key, bucket] : rep.buckets) {
    std::size_t total = 0;
    for (const auto& [tag, c] : bucket.counts) total += c;
    for (const auto& [tag, c] : bucket.counts) bucket.frequencies[tag] = static_cast<double>(c) / static_cast<double>(total);
  }
  return rep;
}

LinearSurrogate fit_surrogate(const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets, double lambda) {
  if (rows.rows() != targets.size() || rows.rows() == 0) throw LengthMismatch("surrogate rows vs targets");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const double y_mean = targets.mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  const Eigen::VectorXd yc = targets.array() - y_mean;
  // Dual form: w = Xc^T (Xc Xc^T + lambda I)^-1 yc.
  Eigen::MatrixXd gram = centered * centered.transpose();
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd alpha = gram.ldlt().solve(yc);
  LinearSurrogate s;
  s.weights = centered.transpose() * alpha;
  s.intercept = y_mean - mean.dot(s.weights);
  return s;
}

bool user_flags_untrustworthy(const TrustCase& c, std::span<const std::size_t> untrusted, int k) {
  Eigen::VectorXd masked = c.row;
  bool changed = false;
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), c.ranked_dims.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t d = c.ranked_dims[i];
    if (std::binary_search(untrusted.begin(), untrusted.end(), d)) {
      masked(static_cast<Eigen::Index>(d)) = 0.0;
      changed = true;
    }
  }
  if (!changed) return false;
  const bool before = c.surrogate(c.row) >= 0.5;
  const bool after = c.surrogate(masked) >= 0.5;
  return before != after;
}

namespace {

std::vector<std::size_t> sample_untrusted(std::size_t total_dim, double frac, std::uint64_t seed) {
  std::vector<std::size_t> dims(total_dim);
  std::iota(dims.begin(), dims.end(), 0);
  Rng rng(seed);
  rng.shuffle(dims);
  const auto m = std::min(total_dim, static_cast<std::size_t>(std::llround(frac * static_cast<double>(total_dim))));
  dims.resize(m);
  std::sort(dims.begin(), dims.end());
  return dims;
}

}  // namespace

TrustReport run_trust_rounds(std::span<const TrustCase> cases, std::size_t total_dim, const TrustOracle& oracle,
                             const TrustOptions& options) {
  if (!(options.frac > 0.0 && options.frac < 1.0)) throw InvalidConfig("untrustworthy fraction must lie in (0, 1)");
  if (options.rounds < 1) throw InvalidConfig("rounds must be >= 1");
  TrustReport rep;
  rep.k_list = options.k_list;
  rep.rounds = options.rounds;
  rep.untrustworthy_frac = options.frac;
  rep.cases = cases.size();
  rep.per_round.resize(static_cast<std::size_t>(options.rounds));

  parallel_for(rep.per_round.size(), options.jobs, [&](std::size_t r) {
    TrustRound& round = rep.per_round[r];
    round.round = static_cast<int>(r);
    const auto untrusted = sample_untrusted(total_dim, options.frac, options.seed + r);
    std::vector<bool> oracle_trust(cases.size());
    std::size_t trusted = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      oracle_trust[i] = !oracle(i, untrusted);
      trusted += oracle_trust[i];
    }
    round.degenerate = trusted == 0 || trusted == cases.size();
    for (int k : options.k_list) {
      std::array<std::size_t, 4> cm{0, 0, 0, 0};
      for (std::size_t i = 0; i < cases.size(); ++i) {
        const bool user_trust = !user_flags_untrustworthy(cases[i], untrusted, k);
        if (user_trust && oracle_trust[i]) ++cm[0];
        else if (user_trust && !oracle_trust[i]) ++cm[1];
        else if (!user_trust && oracle_trust[i]) ++cm[2];
        else ++cm[3];
      }
      round.confusion[k] = cm;
      const std::size_t denom = 2 * cm[0] + cm[1] + cm[2];
      round.f1[k] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(cm[0]) / static_cast<double>(denom);
    }
  });

  for (int k : options.k_list) {
    std::vector<double> vals;
    for (const auto& round : rep.per_round) {
      if (!round.degenerate) vals.push_back(round.f1.at(k));
    }
    double mean = std::numeric_limits<double>::quiet_NaN(), sd = mean;
    if (!vals.empty()) {
      sd = 0.0;
      mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
      if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      }
    }
    rep.mean_f1[k] = mean;
    rep.std_f1[k] = sd;
    rep.valid_rounds = vals.size();
  }
  return rep;
}

namespace {

std::vector<double> misinformation_probs(const GatModel& model, const GatGraph& graph, const Eigen::MatrixXd& x) {
  const auto preds = forward(model, graph, x);
  std::vector<double> p(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) p[i] = preds[i].probs[0];
  return p;
}

}  // namespace

TrustReport trustworthiness_protocol(const Dataset& data, const GatConfig& cfg, const TrustOptions& options) {
  if (data.split.test.empty()) throw NoTestNodes("trustworthiness protocol needs test nodes");
  const auto trained = train(data.gat, data.x, data.labels, data.split.train, cfg);
  const GatModel& model = trained.model;
  const auto probs = misinformation_probs(model, data.gat, data.x);
  const auto& test = data.split.test;

  std::vector<std::optional<TrustCase>> slots(test.size());
  parallel_for(test.size(), options.jobs, [&](std::size_t i) {
    const std::uint32_t row = test[i];
    const NodeIndex node = data.features.nodes[row];
    GraphExplanation ex;
    try {
      ex = explain_node(*data.graph, data.features, probs, node, options.explain);
    } catch (const NeighborhoodTooSmall&) {
      return;
    }
    TrustCase c;
    c.node = ex.target;
    for (const auto& s : ex.selected) c.ranked_dims.push_back(s.dim);
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(ex.samples.size()), data.x.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(ex.samples.size()));
    for (std::size_t s = 0; s < ex.samples.size(); ++s) {
      const int r = data.features.row(ex.samples[s]);
      rows.row(static_cast<Eigen::Index>(s)) = data.x.row(r);
      y(static_cast<Eigen::Index>(s)) = probs[static_cast<std::size_t>(r)];
    }
    c.surrogate = fit_surrogate(rows, y, options.ridge_lambda);
    c.row = data.x.row(row).transpose();
    slots[i] = std::move(c);
  });

  std::vector<TrustCase> cases;
  std::vector<std::uint32_t> case_rows;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      cases.push_back(std::move(*slots[i]));
      case_rows.push_back(test[i]);
    } else {
      ++skipped;
    }
  }
  std::vector<Label> base(case_rows.size());
  for (std::size_t i = 0; i < case_rows.size(); ++i) {
    base[i] = make_prediction(probs[case_rows[i]], 1.0 - probs[case_rows[i]]).label;
  }
  TrustOracle oracle = [&](std::size_t i, std::span<const std::size_t> untrusted) {
    return predict_with_mask(model, data.gat, data.x, untrusted, case_rows[i]).label != base[i];
  };
  TrustReport rep = run_trust_rounds(cases, data.features.cols(), oracle, options);
  rep.modality = std::string(to_string(data.spec.modality));
  rep.skipped_nodes = skipped;
  return rep;
}

RobustReport robustness_protocol(const SocialGraph& g, const EmbeddingTable* embeddings, const FeatureSpec& spec,
                                 const GatConfig& cfg, std::uint64_t split_seed, const RobustOptions& options) {
  for (double p : options.p_list) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidConfig("noise proportions must lie in (0, 1]");
  }
  if (options.rounds < 1) throw InvalidConfig("rounds must be >= 1");
  const RawFeatures base = raw_features(g, embeddings, spec);
  RobustReport rep;
  rep.modality = std::string(to_string(spec.modality));
  rep.rounds = options.rounds;
  rep.base_dim = base.layout.total_dim;
  rep.constant_noise = options.constant_noise;

  const std::size_t n_levels = options.p_list.size();
  const auto n_rounds = static_cast<std::size_t>(options.rounds);
  struct Outcome {
    std::vector<std::size_t> noisy;  // per explanation
    std::size_t selected = 0;
  };
  std::vector<Outcome> outcomes(n_levels * n_rounds);

  parallel_for(outcomes.size(), options.jobs, [&](std::size_t job) {
    const std::size_t level = job / n_rounds;
    const std::size_t round = job % n_rounds;
    const double p = options.p_list[level];
    const auto n_noise = static_cast<std::size_t>(std::llround(static_cast<double>(base.layout.total_dim) * p));
    RawFeatures raw = base;
    append_noise_columns(raw, n_noise, options.seed + round + 1000003ULL * (level + 1), options.constant_noise);
    const FeatureMatrix fm = normalize_features(raw, g.num_nodes());
    const Eigen::MatrixXd x = fm.as_double();
    const GatGraph graph = GatGraph::from_social(g, fm, cfg.self_loops);
    std::vector<int> labels(fm.rows(), -1);
    for (std::size_t r = 0; r < fm.rows(); ++r) {
      if (const auto& l = g.node(fm.nodes[r]).label) labels[r] = static_cast<int>(*l);
    }
    const Split split = stratified_split(labels, split_seed);
    if (split.test.empty()) throw NoTestNodes("robustness protocol needs test nodes");
    GatConfig round_cfg = cfg;
    round_cfg.seed = cfg.seed + round;
    const auto trained = train(graph, x, labels, split.train, round_cfg);
    const auto probs = misinformation_probs(trained.model, graph, x);

    std::vector<std::uint32_t> candidates = split.test;
    Rng rng(options.seed + round);
    rng.shuffle(candidates);
    Outcome& out = outcomes[job];
    for (std::uint32_t row : candidates) {
      if (out.noisy.size() >= options.explained_per_round) break;
      GraphExplanation ex;
      try {
        ex = explain_node(g, fm, probs, fm.nodes[row], options.explain);
      } catch (const NeighborhoodTooSmall&) {
        continue;
      }
      std::size_t noisy = 0;
      for (const auto& s : ex.selected) noisy += fm.layout.noise.contains(s.dim);
      out.noisy.push_back(noisy);
      out.selected += ex.selected.size();
    }
  });

  for (std::size_t level = 0; level < n_levels; ++level) {
    RobustLevel lv;
    lv.p = options.p_list[level];
    lv.noise_dims = static_cast<std::size_t>(std::llround(static_cast<double>(base.layout.total_dim) * lv.p));
    for (std::size_t round = 0; round < n_rounds; ++round) {
      const Outcome& o = outcomes[level * n_rounds + round];
      std::size_t noisy_total = 0;
      for (std::size_t c : o.noisy) {
        ++lv.histogram[c];
        noisy_total += c;
      }
      lv.explanations += o.noisy.size();
      lv.round_percentages.push_back(o.selected == 0 ? 0.0
                                                     : 100.0 * static_cast<double>(noisy_total) /
                                                           static_cast<double>(o.selected));
    }
    lv.mean_percentage = std::accumulate(lv.round_percentages.begin(), lv.round_percentages.end(), 0.0) /
                         static_cast<double>(n_rounds);
    rep.levels.push_back(std::move(lv));
  }
  return rep;
}

// Serialization

std::string to_json(const BootstrapReport& r) {
  json j = {{"point_f1", r.point_f1}, {"mean_f1", r.mean_f1},     {"ci_low", r.ci_low},
            {"ci_high", r.ci_high},   {"half_width", r.half_width}, {"B", r.resamples},
            {"seed", std::to_string(r.seed)}};
  return j.dump(2) + "\n";
}

BootstrapReport parse_bootstrap_report(std::string_view text) {
  const json j = json::parse(text);
  BootstrapReport r;
  r.point_f1 = j.at("point_f1").get<double>();
  r.mean_f1 = j.at("mean_f1").get<double>();
  r.ci_low = j.at("ci_low").get<double>();
  r.ci_high = j.at("ci_high").get<double>();
  r.half_width = j.at("half_width").get<double>();
  r.resamples = j.at("B").get<int>();
  r.seed = std::stoull(j.at("seed").get<std::string>());
  return r;
}

std::string to_json(const ModalityReport& r) {
  json j;
  j["empty_explanations"] = r.empty_explanations;
  json buckets = json::object();
  for (const auto& [key, b] : r.buckets) {
    json counts = json::object(), freqs = json::object();
    for (const auto& [tag, c] : b.counts) counts[std::string(to_string(tag))] = c;
    for (const auto& [tag, f] : b.frequencies) freqs[std::string(to_string(tag))] = f;
    buckets[key] = {{"explanations", b.explanations}, {"counts", counts}, {"frequencies", freqs}};
  }
  j["buckets"] = buckets;
  return j.dump(2) + "\n";
}

std::string to_json(const TrustReport& r) {
  json j;
  j["modality"] = r.modality;
  j["k_list"] = r.k_list;
  j["rounds"] = r.rounds;
  j["untrustworthy_frac"] = r.untrustworthy_frac;
  j["valid_rounds"] = r.valid_rounds;
  j["cases"] = r.cases;
  j["skipped_nodes"] = r.skipped_nodes;
  json summary = json::array();
  const auto or_null = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  for (int k : r.k_list) {
    summary.push_back({{"k", k}, {"mean_f1", or_null(r.mean_f1.at(k))}, {"std_f1", or_null(r.std_f1.at(k))}});
  }
  j["summary"] = summary;
  json rounds = json::array();
  for (const auto& round : r.per_round) {
    json per_k = json::array();
    for (int k : r.k_list) {
      const auto& cm = round.confusion.at(k);
      per_k.push_back({{"k", k}, {"f1", round.f1.at(k)}, {"tp", cm[0]}, {"fp", cm[1]}, {"fn", cm[2]}, {"tn", cm[3]}});
    }
    rounds.push_back({{"round", round.round}, {"degenerate", round.degenerate}, {"per_k", per_k}});
  }
  j["per_round"] = rounds;
  return j.dump(2) + "\n";
}

TrustReport parse_trust_report(std::string_view text) {
  const json j = json::parse(text);
  TrustReport r;
  r.modality = j.at("modality").get<std::string>();
  r.k_list = j.at("k_list").get<std::vector<int>>();
  r.rounds = j.at("rounds").get<int>();
  r.untrustworthy_frac = j.at("untrustworthy_frac").get<double>();
  r.valid_rounds = j.at("valid_rounds").get<std::size_t>();
  r.cases = j.at("cases").get<std::size_t>();
  r.skipped_nodes = j.at("skipped_nodes").get<std::size_t>();
  for (const auto& s : j.at("summary")) {
    const auto value = [](const json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
    r.mean_f1[s.at("k").get<int>()] = value(s.at("mean_f1"));
    r.std_f1[s.at("k").get<int>()] = value(s.at("std_f1"));
  }
  for (const auto& jr : j.at("per_round")) {
    TrustRound round;
    round.round = jr.at("round").get<int>();
    round.degenerate = jr.at("degenerate").get<bool>();
    for (const auto& pk : jr.at("per_k")) {
      const int k = pk.at("k").get<int>();
      round.f1[k] = pk.at("f1").get<double>();
      round.confusion[k] = {pk.at("tp").get<std::size_t>(), pk.at("fp").get<std::size_t>(),
                            pk.at("fn").get<std::size_t>(), pk.at("tn").get<std::size_t>()};
    }
    r.per_round.push_back(std::move(round));
  }
  return r;
}

std::string to_json(const RobustReport& r) {
  json j;
  j["modality"] = r.modality;
  j["rounds"] = r.rounds;
  j["base_dim"] = r.base_dim;
  j["constant_noise"] = r.constant_noise;
  json levels = json::array();
  for (const auto& lv : r.levels) {
    json hist = json::array();
    for (const auto& [count, freq] : lv.histogram) hist.push_back({{"noisy_selected", count}, {"explanations", freq}});
    levels.push_back({{"p", lv.p},
                      {"noise_dims", lv.noise_dims},
                      {"explanations", lv.explanations},
                      {"mean_percentage", lv.mean_percentage},
                      {"round_percentages", lv.round_percentages},
                      {"histogram", hist}});
  }
  j["levels"] = levels;
  return j.dump(2) + "\n";
}

RobustReport parse_robust_report(std::string_view text) {
  const json j = json::parse(text);
  RobustReport r;
  r.modality = j.at("modality").get<std::string>();
  r.rounds = j.at("rounds").get<int>();
  r.base_dim = j.at("base_dim").get<std::size_t>();
  r.constant_noise = j.at("constant_noise").get<bool>();
  for (const auto& jl : j.at("levels")) {
    RobustLevel lv;
    lv.p = jl.at("p").get<double>();
    lv.noise_dims = jl.at("noise_dims").get<std::size_t>();
    lv.explanations = jl.at("explanations").get<std::size_t>();
    lv.mean_percentage = jl.at("mean_percentage").get<double>();
    lv.round_percentages = jl.at("round_percentages").get<std::vector<double>>();
    for (const auto& h : jl.at("histogram")) {
      lv.histogram[h.at("noisy_selected").get<std::size_t>()] = h.at("explanations").get<std::size_t>();
    }
    r.levels.push_back(std::move(lv));
  }
  return r;
}

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

std::string to_csv(const TrustReport& r) {
  std::string out = "x,y,series\n";
  for (const auto& round : r.per_round) {
    if (round.degenerate) continue;
    for (int k : r.k_list) out += std::to_string(k) + "," + num(round.f1.at(k)) + "," + r.modality + "\n";
  }
  for (int k : r.k_list) {
    if (!std::isnan(r.mean_f1.at(k))) out += std::to_string(k) + "," + num(r.mean_f1.at(k)) + "," + r.modality + "/mean\n";
  }
  return out;
}

std::string to_csv(const RobustReport& r) {
  std::string out = "x,y,series\n";
  for (const auto& lv : r.levels) out += num(100.0 * lv.p) + "," + num(lv.mean_percentage) + "," + r.modality + "/mean_pct\n";
  for (const auto& lv : r.levels) {
    for (const auto& [count, freq] : lv.histogram) {
      out += std::to_string(count) + "," + std::to_string(freq) + "," + r.modality + "/hist_p=" + num(lv.p) + "\n";
    }
  }
  return out;
}

}  // namespace mu2x
