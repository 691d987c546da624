#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mu2x/features.hpp"
#include "mu2x/gat.hpp"
#include "mu2x/graph_store.hpp"

namespace mu2x {

// Gaussian kernel (sigma = 1) on the z-normalized column, double-centered as
// HKH and scaled to unit Frobenius norm (zero matrix when the norm is < 1e-12).
Eigen::MatrixXd centered_kernel(std::span<const double> column);

struct HsicLassoResult {
  Eigen::VectorXd beta;
  std::vector<double> objective;  // after each sweep
  int sweeps = 0;
  bool converged = false;
};

struct HsicLassoOptions {
  double tolerance = 1e-8;  // max coordinate change
  int max_sweeps = 10000;
  // Called with beta after each sweep.
  std::function<void(const Eigen::VectorXd&)> on_sweep;
};

// argmin_{beta >= 0} 1/2 ||vec(L) - sum_k beta_k vec(K_k)||^2 + rho ||beta||_1
// by cyclic coordinate descent on the residual.
HsicLassoResult hsic_lasso(std::span<const Eigen::MatrixXd> kernels, const Eigen::MatrixXd& output_kernel,
                           double rho, const HsicLassoOptions& options = {});

// Smallest rho for which beta = 0: max_k <vec(K_k), vec(L)>.
double hsic_rho_max(std::span<const Eigen::MatrixXd> kernels, const Eigen::MatrixXd& output_kernel);

struct SelectedFeature {
  std::size_t dim = 0;
  ModalityTag modality = ModalityTag::Metadata;
  double beta = 0.0;
};

struct GraphExplanation {
  std::string target;
  int k = 2;
  double rho = 0.0;
  Eigen::VectorXd beta;
  std::vector<SelectedFeature> selected;  // beta > 0, descending
  std::vector<NodeIndex> samples;         // classifiable nodes used, graph index order
  std::size_t n_neighbors = 0;
  bool converged = true;

  std::vector<std::size_t> top_k(std::size_t k) const;
};

struct ExplainOptions {
  int k = 2;
  // Absolute rho; when unset rho = rho_scale * rho_max.
  std::optional<double> rho;
  double rho_scale = 1e-2;
};

// p_misinformation[row] is the frozen model's class-0 probability for each feature row.
GraphExplanation explain_node(const SocialGraph& g, const FeatureMatrix& x, std::span<const double> p_misinformation,
                              NodeIndex target, const ExplainOptions& options = {});

GraphExplanation explain_node(const GatModel& model, const SocialGraph& g, const FeatureMatrix& x,
                              const GatGraph& graph, NodeIndex target, const ExplainOptions& options = {});

std::string explanation_json(const GraphExplanation& e);

}  // namespace mu2x
