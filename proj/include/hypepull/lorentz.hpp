#pragma once

// Lorentz (hyperboloid) model of hyperbolic space H^D embedded in R^{D+1}.
//
// Points satisfy <x, x>_L = -1 with x_0 > 0, where <a, b>_L = -a_0 b_0 + sum_i a_i b_i.
// Tangent vectors at x satisfy <u, x>_L = 0. All functions take ambient
// coordinates as Eigen vectors of length D+1.

#include <random>
#include <vector>

#include <Eigen/Dense>

namespace hypepull {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace lorentz {

/// Tolerance used when validating that inputs lie on the hyperboloid.
inline constexpr double kManifoldTol = 1e-6;

double minkowski_inner(const Vector& a, const Vector& b);

/// G^L a, i.e. a with its first coordinate negated.
Vector apply_metric(const Vector& a);
Matrix metric(int ambient_dim);

/// mu_0 = (1, 0, ..., 0) in H^dim.
Vector origin(int dim);

bool on_manifold(const Vector& x, double tol = kManifoldTol);
void require_on_manifold(const Vector& x, const char* what = "point");
bool is_tangent(const Vector& x, const Vector& u, double tol = kManifoldTol);

/// Recomputes x_0 = sqrt(1 + |x_{1:}|^2) so that x is exactly on the hyperboloid.
Vector renormalize(const Vector& x);

/// sqrt(max(<u, u>_L, 0)).
double tangent_norm(const Vector& u);

double distance(const Vector& x, const Vector& y);
Vector expmap(const Vector& x, const Vector& u);
Vector logmap(const Vector& x, const Vector& y);
Vector parallel_transport(const Vector& x, const Vector& y, const Vector& u);

/// P_x w with P_x = G^L + x x^T. Maps a Euclidean (ambient) gradient to the
/// Riemannian gradient in T_x.
Vector project_to_tangent(const Vector& x, const Vector& w);
Matrix projector(const Vector& x);

/// Pi_x v = P_x G^L v = v + <x, v>_L x. Removes the normal part of an ambient vector.
Vector tangent_component(const Vector& x, const Vector& v);

/// Geodesic midpoint, (x + y) / sqrt(-<x + y, x + y>_L).
Vector midpoint(const Vector& x, const Vector& y);

Vector lorentz_to_poincare(const Vector& x);
Vector poincare_to_lorentz(const Vector& p);
double poincare_distance(const Vector& p, const Vector& q);

struct ChartJacobians {
  Matrix first;                // D x (D+1), d p_i / d x_j
  std::vector<Matrix> second;  // second[i](j, k) = d^2 p_i / d x_j d x_k
};

/// Derivatives of the Lorentz -> Poincare map p = x_{1:} / (1 + x_0).
ChartJacobians chart_jacobians(const Vector& x);

/// a(c) = arccosh(-c) / sqrt(c^2 - 1) and its first three derivatives in c.
///
/// a(c) is the scalar factor of the logarithmic map, Log_x(y) = a(c) (y + c x)
/// with c = <x, y>_L, and the building block of the 3D heat kernel. It is
/// analytic on c < 1 and satisfies (c^2 - 1) a' + c a + 1 = 0, which gives
/// a^{(n)}(-1) = prod_{k<=n} k^2 / (2k + 1). Near c = -1 a Taylor series is
/// summed; elsewhere the closed form plus the ODE recurrence is used.
struct AcoshRatio {
  double value = 1.0;
  double d1 = 1.0 / 3.0;
  double d2 = 4.0 / 15.0;
  double d3 = 12.0 / 35.0;
};
AcoshRatio acosh_ratio(double c);

/// Wrapped (tangent-space) Gaussian on H^D.
struct WrappedGaussian {
  Vector mean;  // on H^D, length D+1
  Matrix cov;   // D x D, SPD

  static WrappedGaussian isotropic(const Vector& mean, double alpha);
  int dim() const { return static_cast<int>(cov.rows()); }
};

double wrapped_logpdf(const WrappedGaussian& dist, const Vector& x);
Vector wrapped_sample(const WrappedGaussian& dist, std::mt19937_64& rng);

/// log(r / sinh r), evaluated stably for all r >= 0.
double log_r_over_sinh(double r);

}  // namespace lorentz
}  // namespace hypepull
