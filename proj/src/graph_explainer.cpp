#include "mu2x/graph_explainer.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mu2x/errors.hpp"

namespace mu2x {

namespace {

// Symmetric n x n kernels stored as packed upper triangles, off-diagonal
// entries scaled by sqrt(2) so packed dot products equal Frobenius ones.
using Packed = Eigen::MatrixXd;  // (n(n+1)/2) x num_kernels

std::vector<double> znormalize(std::span<const double> column) {
  const double n = static_cast<double>(column.size());
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : column) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::sqrt(var);
  std::vector<double> z(column.size(), 0.0);
  if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
    for (std::size_t i = 0; i < column.size(); ++i) z[i] = (column[i] - mean) / sd;
  }
  return z;
}

// Writes the centered, unit-norm kernel of `column` into packed form.
void packed_kernel(std::span<const double> column, Eigen::Ref<Eigen::VectorXd> out, Eigen::MatrixXd& scratch) {
  const auto n = static_cast<Eigen::Index>(column.size());
  const auto z = znormalize(column);
  scratch.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scratch(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = z[static_cast<std::size_t>(i)] - z[static_cast<std::size_t>(j)];
      scratch(i, j) = scratch(j, i) = std::exp(-0.5 * d * d);
    }
  }
  const Eigen::VectorXd row_mean = scratch.rowwise().mean();
  const double grand = row_mean.mean();
  double norm2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      scratch(i, j) = scratch(i, j) - row_mean(i) - row_mean(j) + grand;
      norm2 += scratch(i, j) * scratch(i, j);
    }
  }
  const double norm = std::sqrt(norm2);
  const double scale = norm < 1e-12 ? 0.0 : 1.0 / norm;
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(p++) = scratch(i, i) * scale;
    for (Eigen::Index j = i + 1; j < n; ++j) out(p++) = scratch(i, j) * scale * std::numbers::sqrt2;
  }
}

Eigen::VectorXd pack(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  Eigen::VectorXd out(n * (n + 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(p++) = m(i, i);
    for (Eigen::Index j = i + 1; j < n; ++j) out(p++) = 0.5 * (m(i, j) + m(j, i)) * std::numbers::sqrt2;
  }
  return out;
}

HsicLassoResult solve_packed(const Packed& kernels, const Eigen::VectorXd& output, double rho,
                             const HsicLassoOptions& options) {
  const auto d = kernels.cols();
  HsicLassoResult res;
  res.beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd residual = output;
  const Eigen::VectorXd sq_norm = kernels.colwise().squaredNorm().transpose();
  auto objective = [&] { return 0.5 * residual.squaredNorm() + rho * res.beta.sum(); };

  Eigen::VectorXd best_beta = res.beta;
  double best_obj = objective();
  while (res.sweeps < options.max_sweeps) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double a = sq_norm(k);
      if (a <= 0.0) continue;  // zero kernel: beta_k stays 0
      const double old = res.beta(k);
      const double z = old + kernels.col(k).dot(residual) / a;
      const double updated = std::max(0.0, z - rho / a);
      const double delta = updated - old;
      if (delta != 0.0) {
        residual.noalias() -= delta * kernels.col(k);
        res.beta(k) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    ++res.sweeps;
    const double obj = objective();
    res.objective.push_back(obj);
    if (options.on_sweep) options.on_sweep(res.beta);
    if (obj <= best_obj) {
      best_obj = obj;
      best_beta = res.beta;
    }
    if (max_change < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) res.beta = best_beta;
  return res;
}

}  // namespace

Eigen::MatrixXd centered_kernel(std::span<const double> column) {
  const auto n = static_cast<Eigen::Index>(column.size());
  if (n < 2) throw TooFewSamples("centered kernel needs n >= 2, got " + std::to_string(n));
  Eigen::VectorXd packed(n * (n + 1) / 2);
  Eigen::MatrixXd scratch;
  packed_kernel(column, packed, scratch);
  Eigen::MatrixXd out(n, n);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = packed(p++);
    for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i) = packed(p++) / std::numbers::sqrt2;
  }
  return out;
}

namespace {

Packed pack_all(std::span<const Eigen::MatrixXd> kernels, const Eigen::MatrixXd& output_kernel) {
  const auto n = output_kernel.rows();
  if (output_kernel.cols() != n) throw KernelSizeMismatch("output kernel is not square");
  Packed packed(n * (n + 1) / 2, static_cast<Eigen::Index>(kernels.size()));
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    if (kernels[k].rows() != n || kernels[k].cols() != n) {
      throw KernelSizeMismatch("kernel " + std::to_string(k) + " is " + std::to_string(kernels[k].rows()) + "x" +
                               std::to_string(kernels[k].cols()) + ", output is " + std::to_string(n));
    }
    packed.col(static_cast<Eigen::Index>(k)) = pack(kernels[k]);
  }
  return packed;
}

}  // namespace

HsicLassoResult hsic_lasso(std::span<const Eigen::MatrixXd> kernels, const Eigen::MatrixXd& output_kernel,
                           double rho, const HsicLassoOptions& options) {
  if (!(rho >= 0.0)) throw KernelSizeMismatch("rho must be >= 0");
  const Packed packed = pack_all(kernels, output_kernel);
  return solve_packed(packed, pack(output_kernel), rho, options);
}

double hsic_rho_max(std::span<const Eigen::MatrixXd> kernels, const Eigen::MatrixXd& output_kernel) {
  const Packed packed = pack_all(kernels, output_kernel);
  if (packed.cols() == 0) return 0.0;
  return std::max(0.0, (packed.transpose() * pack(output_kernel)).maxCoeff());
}

std::vector<std::size_t> GraphExplanation::top_k(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < selected.size() && i < k; ++i) out.push_back(selected[i].dim);
  return out;
}

GraphExplanation explain_node(const SocialGraph& g, const FeatureMatrix& x, std::span<const double> p_misinformation,
                              NodeIndex target, const ExplainOptions& options) {
  if (target >= g.num_nodes()) throw UnknownNode("index " + std::to_string(target));
  if (p_misinformation.size() != x.rows()) throw ShapeMismatch("one probability per feature row required");

  GraphExplanation ex;
  ex.target = g.node(target).id;
  ex.k = options.k;
  for (NodeIndex n : k_hop_subgraph(g, target, options.k)) {
    if (x.row(n) >= 0) ex.samples.push_back(n);
  }
  ex.n_neighbors = ex.samples.size();
  if (ex.samples.size() < 3) {
    throw NeighborhoodTooSmall("'" + ex.target + "' has " + std::to_string(ex.samples.size()) +
                               " classifiable node(s) within " + std::to_string(options.k) + " hops; need 3");
  }

  const auto n = static_cast<Eigen::Index>(ex.samples.size());
  const auto d = static_cast<Eigen::Index>(x.cols());
  const Eigen::Index m = n * (n + 1) / 2;
  Packed kernels(m, d);
  Eigen::MatrixXd scratch;
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = x.data(x.row(ex.samples[static_cast<std::size_t>(i)]), c);
    packed_kernel(column, kernels.col(c), scratch);
  }
  for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = p_misinformation[static_cast<std::size_t>(x.row(ex.samples[static_cast<std::size_t>(i)]))];
  Eigen::VectorXd output(m);
  packed_kernel(column, output, scratch);

  const double rho_max = d > 0 ? std::max(0.0, (kernels.transpose() * output).maxCoeff()) : 0.0;
  ex.rho = options.rho ? *options.rho : options.rho_scale * rho_max;
  const auto res = solve_packed(kernels, output, ex.rho, {});
  ex.beta = res.beta;
  ex.converged = res.converged;
  for (Eigen::Index c = 0; c < d; ++c) {
    if (ex.beta(c) > 0.0) ex.selected.push_back({static_cast<std::size_t>(c), x.layout.tag_of(static_cast<std::size_t>(c)), ex.beta(c)});
  }
  std::stable_sort(ex.selected.begin(), ex.selected.end(),
                   [](const SelectedFeature& a, const SelectedFeature& b) { return a.beta > b.beta; });
  return ex;
}

GraphExplanation explain_node(const GatModel& model, const SocialGraph& g, const FeatureMatrix& x,
                              const GatGraph& graph, NodeIndex target, const ExplainOptions& options) {
  const auto preds = forward(model, graph, x.as_double());
  std::vector<double> p(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) p[i] = preds[i].probs[0];
  return explain_node(g, x, p, target, options);
}

std::string explanation_json(const GraphExplanation& e) {
  nlohmann::json j;
  j["target"] = e.target;
  j["k"] = e.k;
  j["rho"] = e.rho;
  j["n_neighbors"] = e.n_neighbors;
  j["converged"] = e.converged;
  auto& sel = j["selected"] = nlohmann::json::array();
  for (const auto& s : e.selected) {
    sel.push_back({{"dim", s.dim}, {"modality", std::string(to_string(s.modality))}, {"beta", s.beta}});
  }
  return j.dump(2);
}

}  // namespace mu2x
