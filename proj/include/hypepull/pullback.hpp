#pragma once

// Expected pullback metric of a GP latent variable model. With the Jacobian
// posterior J ~ N(mu, I_{D_y} (x) Sigma), the metric J^T J is non-central
// Wishart and its mean is mu^T mu + D_y Sigma. On the hyperboloid both factors
// are sandwiched by the tangent projector P_x.

#include <optional>

#include "hypepull/gplvm.hpp"

namespace hypepull {

struct WishartParams {
  int dof = 0;          // D_y
  Matrix scale;         // (projected) Jacobian covariance
  Matrix noncentrality; // E[J]^T E[J]
};

struct MetricEval {
  ManifoldKind manifold = ManifoldKind::Euclidean;
  Vector point;
  Matrix G;
  std::optional<MatrixStack> dG;  // dG[m] = dG / dx_m (ambient)
  WishartParams wishart;
};

MetricEval expected_metric_euclidean(const LatentModel& model, const Vector& p);
MetricEval expected_metric_hyperbolic(const LatentModel& model, const Vector& p);
/// Dispatches on the model's manifold; optionally fills dG.
MetricEval expected_metric(const LatentModel& model, const Vector& p, bool with_derivative = false);

/// Hyperbolic: sqrt of the product of the D largest-magnitude eigenvalues
/// (the null direction G^L x is dropped). Euclidean: sqrt(det G).
double metric_volume(const MetricEval& me);

/// dG[m] = d/dp_m of the expected metric, including the projector terms.
MatrixStack metric_derivative(const LatentModel& model, const Vector& p);

}  // namespace hypepull
