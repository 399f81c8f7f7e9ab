#pragma once

// Experiment commands behind the CLI. Each takes a resolved RunConfig, writes
// its artifacts to config.out (skipped when empty) and returns a summary for
// in-process callers.

#include <optional>
#include <string>
#include <vector>

#include "hypepull/geodesic.hpp"
#include "hypepull/io.hpp"
#include "hypepull/pullback.hpp"
#include "hypepull/training.hpp"

namespace hypepull {

/// git-describe-style build version.
std::string version_string();
ManifoldKind manifold_from_string(const std::string& name);
enum class InitKind { Base, ViaOrigin };
InitKind init_kind_from_string(const std::string& name);
std::string to_string(InitKind kind);

struct RunConfig {
  std::string command;
  ManifoldKind manifold = ManifoldKind::Hyperbolic;
  int dim = 2;
  std::string kernel = "auto";  // auto picks hyp2se / hyp3se / euclse from manifold and dim
  double tau = 0.7;
  double kappa = 0.15;
  double noise = 0.69;
  int mc_samples = 3000;
  std::uint64_t seed = 0;
  std::string out;

  // C-shape data
  int n = 1000;
  double data_noise = 0.0;

  // geodesics
  int points = 25;
  int steps = 200;
  double lr = 0.005;
  double lambda = 1.0;
  std::string grad_mode = "auto";  // auto: fd-local for hyp2se, analytic otherwise
  InitKind init = InitKind::Base;
  int from = -1;  // data-row endpoints
  int to = -1;
  std::vector<double> from_point;  // or latent coordinates (Poincare/Euclidean chart, or ambient)
  std::vector<double> to_point;

  // volume grid
  int grid = 110;
  double extent = 1.0;  // Euclidean grids cover [-extent, extent]^2
  bool with_metric = false;

  // training
  std::string data;
  std::string graph;
  std::string trajectory;
  std::string checkpoint;
  std::string preset;  // empty: flags only
  std::optional<int> train_steps;
  std::optional<double> train_lr;
  std::optional<double> stress_weight;
  std::optional<bool> stress_mean;
  std::optional<double> dynamics_weight;
  std::optional<double> dynamics_var;
  bool fix_hyperparameters = false;
  double init_radius = 1.0;

  // tree generator
  int depth = 3;
  int branching = 2;
  int features = 5;
  int samples_per_node = 2;

  /// Resolved configuration, including the version string.
  Json to_json() const;
};

/// Creates the kernel named by the config (auto resolution included).
std::shared_ptr<const Kernel> make_kernel(const RunConfig& config, double tau, double kappa);
GradMode resolve_grad_mode(const RunConfig& config, const Kernel& kernel);

struct VolumeGrid {
  ManifoldKind manifold = ManifoldKind::Hyperbolic;
  int resolution = 0;
  Matrix chart;        // rows: Poincare (hyperbolic) or Euclidean grid coordinates
  Vector volume;
  std::vector<Matrix> metric;  // filled when requested
};
/// Regular resolution x resolution grid over [-1, 1]^2 cell centres (hyperbolic:
/// points off the unit disk dropped; 3D models are sliced at the third chart
/// coordinate 0) or over [-extent, extent]^2 (Euclidean).
VolumeGrid volume_grid(const LatentModel& model, int resolution, double extent = 1.0, bool with_metric = false);
Json grid_to_json(const VolumeGrid& grid, const Json& config);

/// Chart coordinates of a latent point (Poincare for hyperbolic).
Vector chart_coords(ManifoldKind manifold, const Vector& x);

Json curve_to_json(const std::string& name, const DiscreteCurve& curve, const CurveEnergy& pullback_energy,
                   const std::vector<double>& trace, const std::optional<DecodedCurve>& decoded, const Json& config);

struct GeodesicSummary {
  DiscreteCurve base;
  GeodesicResult pullback;
  CurveEnergy base_energy;      // base geodesic under the pullback metric
  CurveEnergy pullback_energy;  // optimised curve under the pullback metric
  double cv_base = 0.0;
  double cv_pullback = 0.0;
  DecodedCurve decoded_base;
  DecodedCurve decoded_pullback;
  GradMode grad_mode = GradMode::Analytic;
};
/// Base-manifold geodesic between a and b, then the pullback geodesic
/// initialised from it (or from the via-origin curve).
GeodesicSummary run_geodesic(const LatentModel& model, const Vector& a, const Vector& b, const RunConfig& config);

struct CShapeSummary {
  Matrix data_chart;  // N x 2
  LatentModel model;
  VolumeGrid grid;
  GeodesicSummary geodesic;
};
/// The C-shape model with X = Y and fixed hyperparameters; volume grid and geodesics.
CShapeSummary cmd_cshape(const RunConfig& config);

struct TrainSummary {
  TrainResult result;
  TrainConfig train_config;
  double initial_stress = 0.0;
  double final_stress = 0.0;
};
/// Builds the training configuration from the preset and overrides.
TrainConfig resolve_train_config(const RunConfig& config, const Dataset& data, int latent_dim);
TrainSummary train_dataset(const Dataset& data, const RunConfig& config);
TrainSummary cmd_train(const RunConfig& config);

GeodesicSummary cmd_geodesic(const RunConfig& config);
VolumeGrid cmd_volume_grid(const RunConfig& config);
TreeDataset cmd_gen_tree(const RunConfig& config);

/// Maps an exception to the CLI exit code (2 config, 3 data, 4 numeric).
int exit_code_for(const std::exception& e);

}  // namespace hypepull
