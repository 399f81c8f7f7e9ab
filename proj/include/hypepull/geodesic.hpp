#pragma once

// Discretised geodesics under a Riemannian metric field on the latent space:
// initialisers, curve and spline energies, their gradients and the
// regularised energy minimisation.

#include <memory>
#include <string>
#include <vector>

#include "hypepull/gplvm.hpp"
#include "hypepull/optim.hpp"

namespace hypepull {

/// A metric on the latent space, given as an ambient matrix per point.
class MetricField {
 public:
  virtual ~MetricField() = default;
  virtual ManifoldKind manifold() const = 0;
  virtual int ambient_dim() const = 0;
  virtual Matrix metric(const Vector& p) const = 0;
  /// dG[m] = dG / dp_m.
  virtual MatrixStack derivative(const Vector& p) const = 0;
};

/// Expected pullback metric of a latent model.
class PullbackMetricField final : public MetricField {
 public:
  explicit PullbackMetricField(const LatentModel& model) : model_(model) {}
  ManifoldKind manifold() const override { return model_.manifold(); }
  int ambient_dim() const override { return model_.ambient_dim(); }
  Matrix metric(const Vector& p) const override;
  MatrixStack derivative(const Vector& p) const override;

 private:
  const LatentModel& model_;
};

/// A position-independent ambient matrix (G^L gives the hyperbolic base metric).
class ConstantMetricField final : public MetricField {
 public:
  ConstantMetricField(ManifoldKind manifold, Matrix G) : manifold_(manifold), G_(std::move(G)) {}
  ManifoldKind manifold() const override { return manifold_; }
  int ambient_dim() const override { return static_cast<int>(G_.rows()); }
  Matrix metric(const Vector&) const override { return G_; }
  MatrixStack derivative(const Vector&) const override {
    return MatrixStack(G_.rows(), Matrix::Zero(G_.rows(), G_.cols()));
  }

 private:
  ManifoldKind manifold_;
  Matrix G_;
};

struct DiscreteCurve {
  ManifoldKind manifold = ManifoldKind::Hyperbolic;
  std::vector<Vector> points;
  int size() const { return static_cast<int>(points.size()); }
};

enum class GradMode { Analytic, FdLocal };
std::string to_string(GradMode mode);
GradMode grad_mode_from_string(const std::string& name);

DiscreteCurve base_geodesic(ManifoldKind manifold, const Vector& a, const Vector& b, int M);
/// Two hyperbolic geodesics joined at the origin: ceil(M/2) points on the
/// first leg (ending at the origin) and floor(M/2) after it.
DiscreteCurve via_origin_init(const Vector& a, const Vector& b, int M);

/// v_i = Log_{x_i}(x_{i+1}) (hyperbolic) or x_{i+1} - x_i.
Vector segment_vector(ManifoldKind manifold, const Vector& x, const Vector& y);
/// Geodesic distance (hyperbolic) or Euclidean norm.
double point_distance(ManifoldKind manifold, const Vector& x, const Vector& y);

struct CurveEnergy {
  double total = 0.0;
  std::vector<double> per_segment;
};
CurveEnergy curve_energy(const DiscreteCurve& curve, const MetricField& metric);
double spline_energy(const DiscreteCurve& curve);
/// Polyline length sum d(x_i, x_{i+1}).
double curve_length(const DiscreteCurve& curve);

/// E + lambda * E_spline with unclamped segment terms.
double geodesic_loss(const DiscreteCurve& curve, const MetricField& metric, double lambda);

/// Riemannian gradient of the loss at every point (zero at the endpoints).
std::vector<Vector> energy_gradient(const DiscreteCurve& curve, const MetricField& metric, double lambda,
                                    GradMode mode);

struct GeodesicConfig {
  int steps = 200;
  double lr = 0.005;
  double lambda = 1.0;
  GradMode grad_mode = GradMode::FdLocal;
};

struct GeodesicResult {
  DiscreteCurve curve;        // best iterate
  std::vector<double> trace;  // loss of iterate k, k = 0..steps
  int best_step = 0;
  bool aborted = false;
  std::string message;
};

GeodesicResult optimize_geodesic(const DiscreteCurve& init, const MetricField& metric, const GeodesicConfig& config);

struct DecodedCurve {
  Matrix means;              // M x D_y
  Vector vars;               // M
  double mean_uncertainty;   // average posterior variance
};
DecodedCurve decode_curve(const DiscreteCurve& curve, const LatentModel& model);

/// Coefficient of variation (std / mean) of a list of values.
double coefficient_of_variation(const std::vector<double>& values);

}  // namespace hypepull
