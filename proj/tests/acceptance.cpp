// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "grad_check.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "mu2x/errors.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_explainer.hpp"
#include "mu2x/pipeline.hpp"
#include "mu2x/protocols.hpp"
#include "mu2x/synth.hpp"
#include "mu2x/text_explainer.hpp"

using namespace mu2x;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Tolerances and budgets.
constexpr double kFdEps = 1e-4;
constexpr double kFdTol = 1e-4;
constexpr int kFdSeeds = 100;
constexpr double kFdBudgetS = 10.0;
constexpr double kAttentionTol = 1e-6;
constexpr double kIgLinearTol = 1e-8;
constexpr double kIgDeltaTol = 1e-3;
constexpr int kIgSteps = 200;
constexpr double kGridTol = 1e-3;
constexpr double kF1Margin = 0.02;
constexpr double kF1Floor = 0.95;
constexpr int kF1Seeds = 5;
constexpr double kF1BudgetS = 600.0;
constexpr double kTrustBudgetS = 1800.0;
constexpr double kRobustBudgetS = 3600.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), s);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[4096];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<MatrixXd> kernels_of(const MatrixXd& x) {
  std::vector<MatrixXd> out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.col(c).data(), x.col(c).data() + x.rows());
    out.push_back(centered_kernel(col));
  }
  return out;
}

MatrixXd output_kernel(const VectorXd& y) { return centered_kernel(std::vector<double>(y.data(), y.data() + y.size())); }

double frob(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.array()).sum(); }

// Default-sized corpus shared by the attention, trust and robustness checks.
const SynthCorpus& default_corpus() {
  static const SynthCorpus c = generate(SynthConfig{});
  return c;
}

Outcome autodiff_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t cases = 0;
  for (int s = 0; s < kFdSeeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    for (const auto& op : testutil::grad_ops()) {
      worst = std::max(worst, testutil::max_gradient_error(testutil::make_grad_case(op, rng), kFdEps));
      ++cases;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= kFdTol && t < kFdBudgetS,
          fmt("%zu randomized cases over %zu ops, worst relative error %.3g (tol %.0e), %.2f s (budget %.0f s)", cases,
              testutil::grad_ops().size(), worst, kFdTol, t, kFdBudgetS)};
}

Outcome attention_criterion() {
  const auto& c = default_corpus();
  const auto data = prepare_dataset(c.graph, &c.embeddings, FeatureSpec{}, 1);
  GatConfig cfg;
  cfg.seed = 7;
  const auto cp = train_checkpoint(data, cfg);
  const auto maps = attention_coefficients(cp.model, data.gat, data.x);
  double worst = 0.0;
  std::size_t rows = 0;
  for (const auto& layer : maps.layers) {
    for (const auto& head : layer) {
      for (std::size_t i = 0; i < data.gat.num_nodes; ++i) {
        double s = 0.0;
        for (std::size_t e = data.gat.offsets[i]; e < data.gat.offsets[i + 1]; ++e) s += head[e];
        worst = std::max(worst, std::abs(s - 1.0));
        ++rows;
      }
    }
  }
  return {maps.layers.size() == 2 && worst <= kAttentionTol,
          fmt("%zu nodes, %zu edges, %zu layers, %zu attention rows, max |row sum - 1| = %.3g (tol %.0e)",
              data.gat.num_nodes, data.gat.num_edges(), maps.layers.size(), rows, worst, kAttentionTol)};
}

Outcome ig_criterion() {
  // Linear exactness at steps = 1.
  double linear_err = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s + 500);
    const auto rows = static_cast<Eigen::Index>(1 + rng.index(6));
    const auto cols = static_cast<Eigen::Index>(1 + rng.index(12));
    const MatrixXd w = testutil::random_matrix(rows, cols, rng);
    const MatrixXd x = testutil::random_matrix(rows, cols, rng);
    const MatrixXd b = testutil::random_matrix(rows, cols, rng);
    const ScalarFn f = [&](ad::Tape& t, ad::Var in) { return ad::reduce_sum(ad::mul(in, t.constant(w))); };
    const auto r = integrated_gradients(f, x, b, 1);
    linear_err = std::max(linear_err, (r.raw - w.cwiseProduct(x - b)).cwiseAbs().maxCoeff());
  }

  // Completeness on a trained toy model (token-mode text pathway).
  SynthConfig sc;
  sc.n_tweets = 400;
  sc.n_replies = 40;
  sc.n_users = 80;
  sc.n_claims = 20;
  sc.embedding_dim = 32;
  sc.seed = 11;
  const auto corpus = generate(sc);
  FeatureSpec spec;
  spec.text_source = TextSource::Tokens;
  spec.projection_dim = 64;
  const auto data = prepare_dataset(corpus.graph, nullptr, spec, 1);
  GatConfig cfg;
  cfg.seed = 11;
  const auto cp = train_checkpoint(data, cfg);
  const auto pathway = data.pathway();
  double worst_delta = 0.0;
  std::size_t explained = 0;
  for (std::size_t i = 0; i < data.split.test.size() && explained < 40; ++i) {
    const auto row = data.split.test[i];
    const auto& node = corpus.graph.node(data.features.nodes[row]);
    if (tokenize(node.text).empty()) continue;
    const auto a = explain_text(cp.model, data.gat, data.x, row, node, pathway, TextMode::Tokens, kIgSteps);
    worst_delta = std::max(worst_delta, a.convergence_delta);
    ++explained;
  }

  // Input equal to the baseline: a nonlinear function, and a post made of unknown tokens.
  Rng rng(9);
  const MatrixXd x = testutil::random_matrix(3, 5, rng);
  const ScalarFn g = [](ad::Tape&, ad::Var in) { return ad::reduce_sum(ad::exp(ad::mul(in, in))); };
  const auto same = integrated_gradients(g, x, x, kIgSteps);
  bool zero = same.raw.isZero(0.0) && same.convergence_delta == 0.0;
  auto unk = corpus.graph.node(data.features.nodes[data.split.test.front()]);
  unk.text = "qqqzzz1 qqqzzz2 qqqzzz3";
  const auto a = explain_text(cp.model, data.gat, data.x, data.split.test.front(), unk, pathway, TextMode::Tokens, kIgSteps);
  zero = zero && std::all_of(a.raw.begin(), a.raw.end(), [](double r) { return r == 0.0; });

  return {linear_err <= kIgLinearTol && explained > 0 && worst_delta <= kIgDeltaTol && zero,
          fmt("linear max error %.3g (tol %.0e); completeness max delta %.3g over %zu nodes at %d steps (tol %.0e); "
              "baseline input exact zeros: %s",
              linear_err, kIgLinearTol, worst_delta, explained, kIgSteps, kIgDeltaTol, zero ? "yes" : "no")};
}

Outcome hsic_criterion() {
  // Grid-search reference.
  double worst_gap = 0.0;
  bool below_grid = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed + 900);
    const MatrixXd x = testutil::random_matrix(8, 3, rng);
    VectorXd y(8);
    for (Eigen::Index i = 0; i < 8; ++i) y(i) = x(i, 1) - 0.7 * x(i, 2) * x(i, 2) + 0.1 * rng.normal();
    const auto kernels = kernels_of(x);
    const MatrixXd l = output_kernel(y);
    const double rho = 0.05 * hsic_rho_max(kernels, l);
    Eigen::Matrix3d gram;
    Eigen::Vector3d b;
    for (int i = 0; i < 3; ++i) {
      b(i) = frob(kernels[static_cast<std::size_t>(i)], l);
      for (int j = 0; j < 3; ++j) {
        gram(i, j) = frob(kernels[static_cast<std::size_t>(i)], kernels[static_cast<std::size_t>(j)]);
      }
    }
    const double c = frob(l, l);
    auto objective = [&](const Eigen::Vector3d& beta) {
      return 0.5 * (c - 2 * beta.dot(b) + beta.dot(gram * beta)) + rho * beta.sum();
    };
    double grid = INFINITY;
    for (int i = 0; i <= 200; ++i) {
      for (int j = 0; j <= 200; ++j) {
        for (int k = 0; k <= 200; ++k) grid = std::min(grid, objective({0.01 * i, 0.01 * j, 0.01 * k}));
      }
    }
    const double got = objective(hsic_lasso(kernels, l, rho).beta);
    below_grid = below_grid && got <= grid + 1e-12;
    worst_gap = std::max(worst_gap, std::abs(got - grid));
  }

  // Non-negativity after every sweep on a real neighborhood, and exact zeros for constant columns.
  const auto& corpus = default_corpus();
  RawFeatures raw = raw_features(corpus.graph, &corpus.embeddings, FeatureSpec{});
  const std::size_t base = raw.layout.total_dim;
  append_noise_columns(raw, 20, 3, true);
  const auto fm = normalize_features(raw, corpus.graph.num_nodes());
  const MatrixXd xd = fm.as_double();
  std::vector<double> p(fm.rows());
  for (std::size_t r = 0; r < p.size(); ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    p[r] = 1.0 / (1.0 + std::exp(-(xd(rr, 0) - 0.5 * xd(rr, 5) + 0.3 * xd(rr, 12))));
  }
  std::size_t sweeps = 0, negative = 0, constant_nonzero = 0, explanations = 0;
  for (std::size_t r = 0; r < fm.rows() && explanations < 25; r += 91) {
    GraphExplanation ex;
    try {
      ex = explain_node(corpus.graph, fm, p, fm.nodes[r], {});
    } catch (const NeighborhoodTooSmall&) {
      continue;
    }
    ++explanations;
    for (std::size_t d = base; d < fm.cols(); ++d) constant_nonzero += ex.beta(static_cast<Eigen::Index>(d)) != 0.0;
    MatrixXd sub(static_cast<Eigen::Index>(ex.samples.size()), xd.cols());
    VectorXd y(static_cast<Eigen::Index>(ex.samples.size()));
    for (std::size_t s = 0; s < ex.samples.size(); ++s) {
      const int row = fm.row(ex.samples[s]);
      sub.row(static_cast<Eigen::Index>(s)) = xd.row(row);
      y(static_cast<Eigen::Index>(s)) = p[static_cast<std::size_t>(row)];
    }
    const auto kernels = kernels_of(sub.leftCols(40));
    const MatrixXd l = output_kernel(y);
    HsicLassoOptions opts;
    opts.on_sweep = [&](const VectorXd& beta) {
      ++sweeps;
      negative += beta.minCoeff() < 0.0;
    };
    hsic_lasso(kernels, l, 1e-2 * hsic_rho_max(kernels, l), opts);
  }
  const bool pass = below_grid && worst_gap <= kGridTol && sweeps > 0 && negative == 0 && constant_nonzero == 0 &&
                    explanations > 0;
  return {pass, fmt("grid gap %.3g (tol %.0e, solver never above grid: %s); %zu sweeps with negative beta: %zu; "
                    "%zu explanations, non-zero beta on constant columns: %zu",
                    worst_gap, kGridTol, below_grid ? "yes" : "no", sweeps, negative, explanations,
                    constant_nonzero)};
}

struct F1Row {
  double graph = 0, text = 0, multimodal = 0;
};

Outcome table1_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  F1Row mean;
  std::string per_seed;
  for (int s = 1; s <= kF1Seeds; ++s) {
    SynthConfig sc;
    sc.seed = static_cast<std::uint64_t>(s);
    const auto corpus = generate(sc);
    F1Row row;
    for (Modality m : {Modality::Graph, Modality::Text, Modality::Multimodal}) {
      FeatureSpec spec;
      spec.modality = m;
      const auto data = prepare_dataset(corpus.graph, &corpus.embeddings, spec, static_cast<std::uint64_t>(s));
      GatConfig cfg;
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto cp = train_checkpoint(data, cfg);
      const auto preds = forward(cp.model, data.gat, data.x);
      std::vector<int> p, g;
      for (auto r : data.split.test) {
        p.push_back(static_cast<int>(preds[r].label));
        g.push_back(data.labels[r]);
      }
      const double f1 = bootstrap_f1(p, g, 1000, static_cast<std::uint64_t>(s)).mean_f1;
      (m == Modality::Graph ? row.graph : m == Modality::Text ? row.text : row.multimodal) = f1;
    }
    per_seed += fmt(" s%d=%.3f/%.3f/%.3f", s, row.graph, row.text, row.multimodal);
    mean.graph += row.graph / kF1Seeds;
    mean.text += row.text / kF1Seeds;
    mean.multimodal += row.multimodal / kF1Seeds;
  }
  const double t = seconds_since(t0);
  const bool pass = mean.multimodal >= std::max(mean.graph, mean.text) - kF1Margin && mean.multimodal >= kF1Floor &&
                    t < kF1BudgetS;
  return {pass, fmt("mean bootstrap F1 graph %.4f, text %.4f, multimodal %.4f (need >= max - %.2f and >= %.2f);"
                    " graph/text/multimodal per seed:%s; %.0f s (budget %.0f s)",
                    mean.graph, mean.text, mean.multimodal, kF1Margin, kF1Floor, per_seed.c_str(), t, kF1BudgetS)};
}

Outcome bootstrap_criterion() {
  Rng rng(31);
  std::vector<int> p(400), g(400);
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = static_cast<int>(rng.index(2));
    p[i] = rng.bernoulli(0.9) ? g[i] : 1 - g[i];
  }
  const bool deterministic = to_json(bootstrap_f1(p, g, 1000, 5)) == to_json(bootstrap_f1(p, g, 1000, 5));
  const auto all = bootstrap_f1(g, g, 1000, 5);
  const bool all_correct = all.ci_low == 1.0 && all.ci_high == 1.0 && all.mean_f1 == 1.0;

  const std::vector<int> p10{0, 1, 0, 0, 1, 1, 0, 1, 0, 0};
  const std::vector<int> g10{0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
  const int b = 1000;
  const auto r = bootstrap_f1(p10, g10, b, 42);
  Rng ref(42);
  std::vector<double> scores;
  for (int k = 0; k < b; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < 10; ++i) {
      const auto j = ref.index(10);
      tp += p10[j] == 0 && g10[j] == 0;
      fp += p10[j] == 0 && g10[j] == 1;
      fn += p10[j] == 1 && g10[j] == 0;
    }
    scores.push_back(2 * tp + fp + fn == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn));
  }
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / b;
  std::sort(scores.begin(), scores.end());
  const auto lo = static_cast<std::size_t>(std::floor(0.025 * (b - 1)));
  const auto hi = static_cast<std::size_t>(std::ceil(0.975 * (b - 1)));
  const bool matches = std::abs(r.mean_f1 - mean) <= 1e-12 && r.ci_low == std::min(scores[lo], mean) &&
                       r.ci_high == std::max(scores[hi], mean);
  return {deterministic && all_correct && matches,
          fmt("B=1000 seed-deterministic: %s; all-correct CI [%g, %g]; 10-prediction reimplementation matches: %s "
              "(mean %.6f, CI [%.4f, %.4f])",
              deterministic ? "yes" : "no", all.ci_low, all.ci_high, matches ? "yes" : "no", r.mean_f1, r.ci_low,
              r.ci_high)};
}

// Linear classifier on one normalized metadata column; the surrogate can represent it exactly.
Outcome linear_trust_world(std::string& detail) {
  const auto g = testutil::random_graph(300, 1500, 13);
  const auto fm = build_features(g, nullptr, Modality::Graph, nullptr);
  const MatrixXd x = fm.as_double();
  const Eigen::Index j = 0;
  std::vector<double> p(fm.rows());
  for (std::size_t r = 0; r < p.size(); ++r) p[r] = 0.45 + 0.1 * x(static_cast<Eigen::Index>(r), j);
  double margin = INFINITY;
  for (double v : p) margin = std::min(margin, std::abs(v - 0.5));

  std::vector<TrustCase> cases;
  for (std::size_t r = 0; r < fm.rows(); r += 2) {
    GraphExplanation ex;
    try {
      ex = explain_node(g, fm, p, fm.nodes[r], {});
    } catch (const NeighborhoodTooSmall&) {
      continue;
    }
    TrustCase c;
    c.node = ex.target;
    for (const auto& s : ex.selected) c.ranked_dims.push_back(s.dim);
    MatrixXd rows(static_cast<Eigen::Index>(ex.samples.size()), x.cols());
    VectorXd y(rows.rows());
    for (std::size_t s = 0; s < ex.samples.size(); ++s) {
      const int row = fm.row(ex.samples[s]);
      rows.row(static_cast<Eigen::Index>(s)) = x.row(row);
      y(static_cast<Eigen::Index>(s)) = p[static_cast<std::size_t>(row)];
    }
    c.surrogate = fit_surrogate(rows, y);
    c.row = x.row(static_cast<Eigen::Index>(r)).transpose();
    cases.push_back(std::move(c));
  }
  const TrustOracle oracle = [&](std::size_t i, std::span<const std::size_t> u) {
    VectorXd masked = cases[i].row;
    for (auto d : u) masked(static_cast<Eigen::Index>(d)) = 0.0;
    const double base = 0.45 + 0.1 * cases[i].row(j);
    const double after = 0.45 + 0.1 * masked(j);
    return make_prediction(base, 1 - base).label != make_prediction(after, 1 - after).label;
  };
  TrustOptions opts;
  opts.seed = 21;
  const auto rep = run_trust_rounds(cases, fm.cols(), oracle, opts);
  bool pass = rep.valid_rounds >= 2;
  std::string per_k;
  for (int k : opts.k_list) {
    pass = pass && rep.mean_f1.at(k) == 1.0 && rep.std_f1.at(k) == 0.0;
    per_k += fmt(" K=%d %.3f±%.3f", k, rep.mean_f1.at(k), rep.std_f1.at(k));
  }
  detail = fmt("linear world: %zu cases, %zu valid rounds, decision margin %.3g,%s", cases.size(), rep.valid_rounds,
               margin, per_k.c_str());
  return {pass, detail};
}

Outcome trust_criterion() {
  std::string linear_detail;
  const auto linear = linear_trust_world(linear_detail);

  const auto t0 = std::chrono::steady_clock::now();
  const auto& corpus = default_corpus();
  bool schema = true;
  std::string table;
  for (Modality m : {Modality::Graph, Modality::Text, Modality::Multimodal}) {
    FeatureSpec spec;
    spec.modality = m;
    const auto data = prepare_dataset(corpus.graph, &corpus.embeddings, spec, 1);
    GatConfig cfg;
    cfg.seed = 7;
    TrustOptions opts;
    opts.seed = 7;
    const auto rep = trustworthiness_protocol(data, cfg, opts);
    const auto j = nlohmann::json::parse(to_json(rep));
    schema = schema && rep.rounds == 25 && rep.per_round.size() == 25 && j.at("modality") == to_string(m);
    table += fmt(" %s(valid %zu):", std::string(to_string(m)).c_str(), rep.valid_rounds);
    for (int k : opts.k_list) {
      const bool defined = rep.valid_rounds > 0;
      schema = schema && rep.mean_f1.count(k) == 1 && rep.std_f1.count(k) == 1 &&
               std::isfinite(rep.mean_f1.at(k)) == defined && std::isfinite(rep.std_f1.at(k)) == defined;
      table += defined ? fmt(" K%d=%.3f±%.3f", k, rep.mean_f1.at(k), rep.std_f1.at(k)) : fmt(" K%d=n/a", k);
    }
  }
  const double t = seconds_since(t0);
  return {linear.pass && schema && t < kTrustBudgetS,
          fmt("%s; schema ok: %s;%s; 3 modalities x 25 rounds in %.0f s (budget %.0f s)", linear_detail.c_str(),
              schema ? "yes" : "no", table.c_str(), t, kTrustBudgetS)};
}

Outcome robustness_criterion() {
  const auto& corpus = default_corpus();
  GatConfig cfg;
  cfg.seed = 7;

  RobustOptions constant;
  constant.rounds = 2;
  constant.constant_noise = true;
  constant.seed = 7;
  const auto crep = robustness_protocol(corpus.graph, &corpus.embeddings, FeatureSpec{}, cfg, 1, constant);
  std::size_t clean = 0, total = 0;
  for (const auto& level : crep.levels) {
    for (const auto& [noisy, count] : level.histogram) {
      total += count;
      if (noisy == 0) clean += count;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  RobustOptions full;
  full.seed = 7;
  const auto rep = robustness_protocol(corpus.graph, &corpus.embeddings, FeatureSpec{}, cfg, 1, full);
  const double t = seconds_since(t0);
  std::string curve;
  for (const auto& level : rep.levels) curve += fmt(" p=%.2f:%.2f%%", level.p, level.mean_percentage);
  const double low = rep.levels.front().mean_percentage;
  const double high = rep.levels.back().mean_percentage;
  const bool pass = total > 0 && clean == total && high >= low && rep.levels.size() == 6 && t < kRobustBudgetS;
  return {pass, fmt("constant noise: %zu/%zu explanations select no noisy feature; standard-normal sweep%s; "
                    "p=1.0 >= p=0.01: %s; full sweep x 25 rounds in %.0f s (budget %.0f s)",
                    clean, total, curve.c_str(), high >= low ? "yes" : "no", t, kRobustBudgetS)};
}

int run_cli(const testutil::TempDir& dir, const std::string& args) {
  const std::string cmd = std::string(MU2X_CLI_PATH) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::set<std::string> cli_files;

Outcome determinism_criterion(const testutil::TempDir& dir) {
  const std::string size =
      "--set synth_tweets=400 --set synth_replies=40 --set synth_users=80 --set synth_claims=20 ";
  std::vector<std::string> failed;
  std::vector<std::string> compared;
  for (const char* run : {"a", "b"}) {
    const std::string r = run;
    const std::string jobs = r == "a" ? " --jobs 1" : " --jobs 2";
    const auto d = (dir / ("data_" + r)).string();
    const auto data = " --nodes " + d + "/nodes.jsonl --edges " + d + "/edges.jsonl --embeddings " + d +
                      "/embeddings.jsonl";
    const auto model = (dir / ("model_" + r + ".json")).string();
    const auto out = [&](const std::string& f) { return " --out " + (dir / (f + "_" + r + ".json")).string(); };
    const auto csv = [&](const std::string& f) { return " --csv " + (dir / (f + "_" + r + ".csv")).string(); };
    const std::vector<std::pair<std::string, std::string>> steps{
        {"synth", "synth " + size + "--out " + d},
        {"train", "train" + data + " --out " + model},
        {"predict", "predict --model " + model + data + out("predict")},
        {"explain", "explain --model " + model + data + " --node-id t5" + out("explain")},
        {"eval-f1", "eval-f1 --model " + model + data + out("f1")},
        {"eval-interpret", "eval-interpret --model " + model + data + jobs + out("interpret")},
        {"eval-trust", "eval-trust" + data + " --set rounds=5" + jobs + out("trust") + csv("trust")},
        {"eval-robust", "eval-robust" + data + " --set rounds=2 --set p_list=0.1,1 --set explained_per_round=5" +
                            jobs + out("robust") + csv("robust")},
    };
    for (const auto& [name, args] : steps) {
      if (run_cli(dir, args) != 0) failed.push_back(name + " (run " + r + " exit code)");
    }
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory()) {
      for (const auto& f : std::filesystem::directory_iterator(entry.path())) cli_files.insert(name + "/" + f.path().filename().string());
    } else {
      cli_files.insert(name);
    }
  }
  for (const auto& f : cli_files) {
    const auto a = f.find("_a");
    if (a == std::string::npos) continue;
    std::string other = f;
    other.replace(a, 2, "_b");
    compared.push_back(f);
    if (!std::filesystem::exists(dir / other) || read_file(dir / f) != read_file(dir / other)) failed.push_back(f);
  }
  std::string list;
  for (const auto& f : failed) list += " " + f;
  // 3 corpus files, the model, 6 JSON reports and 2 CSV files per run.
  constexpr std::size_t kExpected = 12;
  return {failed.empty() && compared.size() == kExpected,
          fmt("%zu/%zu output files compared across two runs (second run with --jobs 2); mismatches:%s",
              compared.size(), kExpected, failed.empty() ? " none" : list.c_str())};
}

Outcome synthetic_only_criterion(const testutil::TempDir& dir) {
  // Every file the CLI touched lives in the scratch directory and was produced by synth or a later step.
  const std::set<std::string> inputs{"nodes.jsonl", "edges.jsonl", "embeddings.jsonl"};
  std::size_t synth_inputs = 0, other = 0;
  for (const auto& f : cli_files) {
    const auto slash = f.find('/');
    if (slash != std::string::npos) {
      synth_inputs += f.rfind("data_", 0) == 0 && inputs.count(f.substr(slash + 1));
      other += !(f.rfind("data_", 0) == 0 && inputs.count(f.substr(slash + 1)));
    }
  }
  const auto& c = default_corpus();
  const bool in_process = c.embeddings.dim == kDefaultEmbeddingDim &&
                          c.embeddings.entries.size() == c.graph.classifiable().size();
  return {synth_inputs == 6 && other == 0 && in_process,
          fmt("CLI inputs: %zu synth-generated files, %zu foreign; library checks use in-process synth embeddings "
              "for all %zu classifiable nodes",
              synth_inputs, other, c.graph.classifiable().size())};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  report(1, "autodiff finite differences", autodiff_criterion);
  report(2, "attention normalization on a trained synth graph", attention_criterion);
  report(3, "integrated gradients exactness and completeness", ig_criterion);
  report(4, "HSIC Lasso optimality and constraints", hsic_criterion);
  report(5, "classification F1 across modalities", table1_criterion);
  report(6, "bootstrap determinism and reference", bootstrap_criterion);
  report(7, "trustworthiness protocol", trust_criterion);
  report(8, "robustness protocol", robustness_criterion);
  testutil::TempDir dir("acceptance");
  report(9, "CLI determinism", [&] { return determinism_criterion(dir); });
  report(10, "synthetic inputs only", [&] { return synthetic_only_criterion(dir); });
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
  return failures == 0 ? 0 : 1;
}
