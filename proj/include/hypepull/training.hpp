#pragma once

// MAP training of latent models: priors over latent configurations
// (graph stress, trajectory dynamics, wrapped Gaussian at the origin),
// Gamma hyperpriors, back constraints and the optimisation loop.

#include <optional>
#include <string>
#include <vector>

#include "hypepull/gplvm.hpp"

namespace hypepull {

struct GraphPrior {
  Matrix dist;                  // node distance matrix d_G
  std::vector<int> assignment;  // data row -> node
  double weight = 1.0;          // gamma
  bool mean = false;            // average over scored pairs instead of summing
  std::vector<int> rows;        // rows entering the loss; empty means all
};

struct TrajectoryPrior {
  std::vector<int> starts;  // first row of every trajectory, ascending, starts[0] = 0
  double sigma2 = 0.01;
  double weight = 1.0;
};

/// sum_{i<j} (d_G(c_i, c_j) - d(x_i, x_j))^2 over the scored rows (mean if prior.mean).
/// grad, if given, receives the N x A ambient gradient.
double stress_loss(const Matrix& X, ManifoldKind manifold, const GraphPrior& prior, Matrix* grad = nullptr);

/// Sum of wrapped-Gaussian (or Gaussian) log densities of x_{t+1} given x_t
/// with isotropic variance sigma2, over consecutive rows of each trajectory.
double dynamics_logprior(const Matrix& X, ManifoldKind manifold, const TrajectoryPrior& prior,
                         Matrix* grad = nullptr);

/// Row index ranges [begin, end) of the trajectories.
std::vector<std::pair<int, int>> trajectory_segments(const TrajectoryPrior& prior, int n);

struct GammaPrior {
  double shape = 2.0;
  double rate = 2.0;
  double logpdf(double x) const;
};

struct TrainConfig {
  int steps = 500;
  double lr = 0.05;
  bool optimize_hyperparameters = true;
  std::optional<GammaPrior> kappa_prior;
  std::optional<GammaPrior> tau_prior;
  std::optional<GraphPrior> graph;
  std::optional<TrajectoryPrior> trajectory;
  /// Spread of a wrapped Gaussian prior at the origin on every latent (0 disables).
  double latent_prior_var = 0.0;
  bool back_constraints = false;
  double bc_tau = 1.0;
  double bc_kappa = 0.4;
};

/// Preset names: mnist-like, robots-like, grasps-like.
TrainConfig train_preset(const std::string& name, ManifoldKind manifold, int output_dim, int latent_dim);

struct TraceRow {
  int step;
  double objective;
  double loglik;
  double stress;
  double dynamics;
  double tau;
  double kappa;
  double noise_var;
};

struct TrainResult {
  LatentModel model;            // best iterate
  std::vector<TraceRow> trace;  // iterate k = 0..steps
  int best_step = 0;
  Matrix bc_coefficients;       // N x D, empty without back constraints
};

/// Tangent-space PCA at the origin (hyperbolic) or plain PCA (Euclidean) of
/// centred observations, scaled so the largest latent has norm `radius`.
Matrix pca_init(const Matrix& Y, ManifoldKind manifold, int latent_dim, double radius);

/// Full objective at the model's current state.
struct ObjectiveParts {
  double total;
  double loglik;
  double stress;
  double dynamics;
};
ObjectiveParts training_objective(const LatentModel& model, const TrainConfig& config);

/// N x A ambient gradient of the total objective w.r.t. the latent rows.
Matrix training_gradient(const LatentModel& model, const TrainConfig& config);

TrainResult train_map(const LatentModel& init, const TrainConfig& config);

}  // namespace hypepull
