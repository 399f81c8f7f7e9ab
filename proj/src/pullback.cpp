#include "hypepull/pullback.hpp"

#include <algorithm>
#include <cmath>

#include "hypepull/errors.hpp"

namespace hypepull {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

MetricEval assemble(const LatentModel& model, const Vector& p, bool projected) {
  const JacobianPosterior j = model.jacobian_posterior(p);
  MetricEval me;
  me.manifold = model.manifold();
  me.point = p;
  me.wishart.dof = model.output_dim();
  if (projected) {
    const Matrix P = lorentz::projector(p);
    const Matrix mu = j.mean * P;
    me.wishart.scale = symmetrize(P * j.cov * P);
    me.wishart.noncentrality = symmetrize(mu.transpose() * mu);
  } else {
    me.wishart.scale = j.cov;
    me.wishart.noncentrality = symmetrize(j.mean.transpose() * j.mean);
  }
  me.G = symmetrize(me.wishart.noncentrality + model.output_dim() * me.wishart.scale);
  return me;
}

}  // namespace

MetricEval expected_metric_euclidean(const LatentModel& model, const Vector& p) {
  if (model.manifold() != ManifoldKind::Euclidean)
    throw UnsupportedError("expected_metric_euclidean called on a hyperbolic model");
  return assemble(model, p, false);
}

MetricEval expected_metric_hyperbolic(const LatentModel& model, const Vector& p) {
  if (model.manifold() != ManifoldKind::Hyperbolic)
    throw UnsupportedError("expected_metric_hyperbolic called on a Euclidean model");
  return assemble(model, p, true);
}

MetricEval expected_metric(const LatentModel& model, const Vector& p, bool with_derivative) {
  MetricEval me = model.manifold() == ManifoldKind::Hyperbolic ? expected_metric_hyperbolic(model, p)
                                                                : expected_metric_euclidean(model, p);
  if (with_derivative) me.dG = metric_derivative(model, p);
  return me;
}

double metric_volume(const MetricEval& me) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(me.G, Eigen::EigenvaluesOnly);
  std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  if (me.manifold == ManifoldKind::Hyperbolic) {
    // Drop the (near-)null eigenvalue belonging to the normal direction.
    auto smallest = std::min_element(ev.begin(), ev.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    ev.erase(smallest);
  }
  double prod = 1.0;
  for (double e : ev) prod *= e;
  const double scale = std::max(1.0, me.G.norm());
  if (prod < -1e-9 * std::pow(scale, static_cast<double>(ev.size())))
    throw NumericError("metric volume: eigenvalue product is negative");
  return std::sqrt(std::max(0.0, prod));
}

MatrixStack metric_derivative(const LatentModel& model, const Vector& p) {
  const int A = model.ambient_dim();
  const int N = model.size();
  const int Dy = model.output_dim();
  const Kernel& k = model.kernel();

  const JacobianPosterior j = model.jacobian_posterior(p);
  const Matrix M = j.mean.transpose() * j.mean + Dy * j.cov;
  const ThirdDerivatives t = k.third(p, p);

  Matrix kx = Matrix::Zero(A, N), S = Matrix::Zero(N, A);
  std::vector<Matrix> H;
  if (N > 0) {
    kx = model.block().grad_rows(p);
    S = model.solve(kx.transpose());
    H = model.block().xx_hessians(p);
  }
  const Matrix& alpha = model.alpha();

  MatrixStack dM(A);
  for (int m = 0; m < A; ++m) {
    // d kx / dp_m, column n = H_n(:, m).
    Matrix dkx(A, N);
    for (int n = 0; n < N; ++n) dkx.col(n) = H[n].col(m);
    const Matrix dmu = (dkx * alpha).transpose();  // D_y x A
    const Matrix dQ = dkx * S;
    const Matrix dSigma = t.wrt_x[m] + t.wrt_z[m] - dQ - dQ.transpose();
    dM[m] = dmu.transpose() * j.mean + j.mean.transpose() * dmu + Dy * dSigma;
  }

  if (model.manifold() != ManifoldKind::Hyperbolic) {
    for (auto& d : dM) d = symmetrize(d);
    return dM;
  }
  const Matrix P = lorentz::projector(p);
  const Matrix MP = M * P;
  const Matrix PM = P * M;
  MatrixStack dG(A);
  for (int m = 0; m < A; ++m) {
    Matrix dP = Matrix::Zero(A, A);
    dP.row(m) += p.transpose();
    dP.col(m) += p;
    dG[m] = symmetrize(dP * MP + P * dM[m] * P + PM * dP);
  }
  return dG;
}

}  // namespace hypepull
