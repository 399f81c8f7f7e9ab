#pragma once

// Riemannian Adam over a list of parameters, each either a point on a
// hyperboloid or a Euclidean vector.

#include <vector>

#include "hypepull/kernels.hpp"

namespace hypepull {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class RiemannianAdam {
 public:
  RiemannianAdam(AdamConfig config, std::vector<ManifoldKind> kinds);

  /// One update. Hyperbolic gradients must be tangent at their parameter.
  void step(std::vector<Vector>& params, const std::vector<Vector>& grads);

  int step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Vector>& first_moments() const { return m_; }

 private:
  AdamConfig config_;
  std::vector<ManifoldKind> kinds_;
  std::vector<Vector> m_;
  std::vector<Vector> v_;  // one entry for hyperbolic, coordinatewise for Euclidean
  int t_ = 0;
};

}  // namespace hypepull
