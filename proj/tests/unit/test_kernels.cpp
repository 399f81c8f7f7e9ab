#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hypepull/errors.hpp"
#include "hypepull/kernels.hpp"
#include "../support/testing.hpp"

using namespace hypepull;
using hypepull::testing::fd_jacobian;
using hypepull::testing::fd_matrix;
using hypepull::testing::random_point;
using hypepull::testing::rel_err;
using hypepull::testing::stack_rel_err;

namespace {

struct FdErrors {
  double grad = 0, cross = 0, xx = 0, third_x = 0, third_z = 0;
};

FdErrors fd_errors(const Kernel& k, const Vector& x, const Vector& z, double h) {
  FdErrors e;
  const Matrix g_fd = fd_jacobian([&](const Vector& a) { return Vector::Constant(1, k.eval(a, z)); }, x, h);
  e.grad = rel_err(g_fd.transpose(), k.grad_x(x, z));
  e.cross = rel_err(fd_jacobian([&](const Vector& b) { return k.grad_x(x, b); }, z, h), k.cross_hessian(x, z));
  e.xx = rel_err(fd_jacobian([&](const Vector& a) { return k.grad_x(a, z); }, x, h), k.xx_hessian(x, z));
  const auto t = k.third(x, z);
  e.third_x = stack_rel_err(fd_matrix([&](const Vector& a) { return k.cross_hessian(a, z); }, x, h), t.wrt_x);
  e.third_z = stack_rel_err(fd_matrix([&](const Vector& b) { return k.cross_hessian(x, b); }, z, h), t.wrt_z);
  return e;
}

std::pair<Vector, Vector> separated_pair(std::mt19937_64& rng, int dim, double max_radius) {
  for (;;) {
    Vector x = random_point(rng, dim, max_radius);
    Vector z = random_point(rng, dim, max_radius);
    if (lorentz::distance(x, z) > 0.1) return {x, z};
  }
}

}  // namespace

TEST_CASE("kernel name round trip") {
  for (auto k : {KernelKind::Hyp2SE, KernelKind::Hyp3SE, KernelKind::EuclSE})
    CHECK(kernel_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(kernel_kind_from_string("matern"), ConfigError);
  CHECK_THROWS_AS(Hyp3SEKernel(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Hyp2SEKernel(1.0, -1.0, 10, 1), ConfigError);
}

TEST_CASE("hyp3 helper limits and continuity") {
  for (double nu : {0.045, 0.5, 2.0, 8.0}) {
    const auto lim = hyp3_helpers(-1.0, nu);
    CHECK(lim.g == doctest::Approx(2 / nu + 1.0 / 3).epsilon(1e-14));
    CHECK(lim.h == doctest::Approx(4 / (nu * nu) + 6 / (3 * nu) + 4.0 / 15).epsilon(1e-14));
    CHECK(lim.q == doctest::Approx(8 / (nu * nu * nu) + 8 / (nu * nu) + 14 / (5 * nu) + 12.0 / 35).epsilon(1e-14));
    // Just past the threshold the general branch joins the limits.
    const auto near = hyp3_helpers(-std::cosh(1.0001e-4), nu);
    CHECK(std::abs(near.g - lim.g) < 1e-6 * std::max(1.0, lim.g));
    CHECK(std::abs(near.h - lim.h) < 1e-6 * std::max(1.0, lim.h));
    CHECK(std::abs(near.q - lim.q) < 1e-6 * std::max(1.0, lim.q));
  }
  CHECK_THROWS_AS(hyp3_helpers(-0.5, 1.0), DomainError);
}

TEST_CASE("hyp3 helper g matches the direct formula") {
  // g(u) = 2 rho^2 / (nu s^2) - 1 / s^2 - u rho / s^3 with s = sqrt(u^2 - 1).
  const double nu = 2.0;
  for (double rho : {0.3, 1.0, 2.5}) {
    const double u = -std::cosh(rho);
    const double s = std::sinh(rho);
    const double direct = 2 * rho * rho / (nu * s * s) - 1 / (s * s) - u * rho / (s * s * s);
    CHECK(hyp3_helpers(u, nu).g == doctest::Approx(direct).epsilon(1e-12));
    // h = dg/du + 2 g rho / (nu s), q = dh/du + 2 h rho / (nu s).
    const auto hp = hyp3_helpers(u, nu);
    const double eps = 1e-6;
    const auto up = hyp3_helpers(u + eps, nu);
    const auto dn = hyp3_helpers(u - eps, nu);
    const double dg_fd = (up.g - dn.g) / (2 * eps);
    const double dh_fd = (up.h - dn.h) / (2 * eps);
    CHECK(hp.dg == doctest::Approx(dg_fd).epsilon(1e-7));
    CHECK(hp.dh == doctest::Approx(dh_fd).epsilon(1e-7));
    CHECK(hp.h == doctest::Approx(hp.dg + 2 * hp.g * rho / (nu * s)).epsilon(1e-12));
    CHECK(hp.q == doctest::Approx(hp.dh + 2 * hp.h * rho / (nu * s)).epsilon(1e-12));
  }
}

TEST_CASE("hyp3 kernel values") {
  const Hyp3SEKernel k(0.7, 0.15);
  std::mt19937_64 rng(11);
  const Vector x = random_point(rng, 3, 2.0);
  CHECK(k.eval(x, x) == doctest::Approx(0.7).epsilon(1e-14));
  Vector axis = Vector::Zero(4);
  axis[0] = std::cosh(1.0);
  axis[1] = std::sinh(1.0);
  CHECK(k.eval(lorentz::origin(3), axis) ==
        doctest::Approx(0.7 / std::sinh(1.0) * std::exp(-1.0 / 0.045)).epsilon(1e-12));
  const Vector z = random_point(rng, 3, 2.0);
  CHECK(k.eval(x, z) == k.eval(z, x));
  CHECK_THROWS_AS(k.eval(Vector::Zero(3), Vector::Zero(3)), DimensionError);
}

TEST_CASE("hyp3 derivatives match finite differences") {
  const Hyp3SEKernel k(1.3, 0.8);
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    auto [x, z] = separated_pair(rng, 3, 1.5);
    const auto e = fd_errors(k, x, z, 1e-6);
    CHECK(e.grad < 1e-5);
    CHECK(e.cross < 1e-5);
    CHECK(e.xx < 1e-5);
    CHECK(e.third_x < 1e-4);
    CHECK(e.third_z < 1e-4);
    CHECK(rel_err(k.cross_hessian(x, z), k.cross_hessian(z, x).transpose()) < 1e-12);
  }
}

TEST_CASE("hyp3 derivatives at coincident inputs") {
  std::mt19937_64 rng(13);
  for (double kappa : {0.15, 0.5, 1.0, 2.0}) {
    const Hyp3SEKernel k(0.7, kappa);
    const double nu = 2 * kappa * kappa;
    const auto lim = hyp3_limits(nu);
    const Vector x = random_point(rng, 3, 2.0);
    const Vector gx = lorentz::apply_metric(x);
    CHECK(rel_err(k.grad_x(x, x), 0.7 * lim.g * gx) < 1e-13);
    CHECK(rel_err(k.cross_hessian(x, x), 0.7 * (lim.h * gx * gx.transpose() + lim.g * lorentz::metric(4))) < 1e-13);
    const auto t = k.third(x, x);
    for (int m = 0; m < 4; ++m) CHECK(t.wrt_x[m].allFinite());
  }
}

TEST_CASE("hyp3 metric sign pattern") {
  // The metric-free core h z x^T + g Delta, with Delta the identity whose (0, 0)
  // entry is -1, picks up the signs s_i s_j (s_0 = -1) when sandwiched by G^L.
  const Hyp3SEKernel k(1.0, 1.0);
  std::mt19937_64 rng(14);
  auto [x, z] = separated_pair(rng, 3, 1.0);
  const auto hp = hyp3_helpers(lorentz::minkowski_inner(x, z), k.nu());
  const double env = std::exp(-std::pow(lorentz::distance(x, z), 2) / k.nu());
  const Matrix G = lorentz::metric(4);
  const Matrix plain = env * (hp.h * z * x.transpose() + hp.g * G);
  const Matrix cross = k.cross_hessian(x, z);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double sign = (i == 0 ? -1.0 : 1.0) * (j == 0 ? -1.0 : 1.0);
      CHECK(cross(i, j) == doctest::Approx(sign * plain(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("hyp2 initialisation") {
  const Hyp2SEKernel a(0.7, 0.15, 3000, 42);
  const Hyp2SEKernel b(0.7, 0.15, 3000, 42);
  CHECK(a.samples().s == b.samples().s);
  CHECK(a.samples().b == b.samples().b);
  const Vector o = lorentz::origin(2);
  CHECK(a.eval(o, o) == doctest::Approx(0.7).epsilon(1e-14));
  double mean = 0;
  for (double s : a.samples().s) mean += s;
  mean /= 3000;
  const double expected = std::sqrt(2 / std::numbers::pi) / 0.15;
  const double sd = std::sqrt(1 - 2 / std::numbers::pi) / 0.15 / std::sqrt(3000.0);
  CHECK(std::abs(mean - expected) < 3 * sd);
  double cinf = 0;
  for (double s : a.samples().s) cinf += s * std::tanh(std::numbers::pi * s);
  CHECK(a.c_inf() == doctest::Approx(cinf / 3000).epsilon(1e-12));
}

TEST_CASE("hyp2 values and Gram") {
  std::mt19937_64 rng(15);
  const Hyp2SEKernel k(1.0, 0.5, 3000, 3);
  const Vector x = random_point(rng, 2, 1.0);
  // Stationary only in expectation: average k(x, x) over a few seeds.
  double avg = 0;
  for (int seed = 0; seed < 5; ++seed) avg += Hyp2SEKernel(1.0, 0.5, 3000, seed).eval(x, x) / 5;
  CHECK(std::abs(avg - 1.0) < 0.1);
  CHECK(std::abs(k.eval_imag(x, x)) < 1e-12);
  const Vector z = random_point(rng, 2, 1.0);
  CHECK(k.eval(x, z) == doctest::Approx(k.eval(z, x)).epsilon(1e-12));
  CHECK(std::abs(k.eval_imag(x, z) + k.eval_imag(z, x)) < 1e-12);

  Matrix X(50, 3);
  for (int i = 0; i < 50; ++i) X.row(i) = random_point(rng, 2, 2.0).transpose();
  const auto block = k.bind(X);
  const Matrix K = block->gram();
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(K).eigenvalues().minCoeff() >= -1e-8);
  for (int i = 0; i < 50; i += 7)
    for (int j = 0; j < 50; j += 5)
      CHECK(K(i, j) == doctest::Approx(k.eval(X.row(i).transpose(), X.row(j).transpose())).epsilon(1e-10));
  CHECK_THROWS_AS(k.eval(Vector::Zero(4), Vector::Zero(4)), DimensionError);
}

TEST_CASE("hyp2 derivatives match finite differences") {
  const Hyp2SEKernel k(1.0, 0.5, 500, 7);
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    auto [x, z] = separated_pair(rng, 2, 1.5);
    const auto e = fd_errors(k, x, z, 1e-5);
    CHECK(e.grad < 1e-3);
    CHECK(e.cross < 1e-3);
    CHECK(e.xx < 1e-3);
    CHECK(e.third_x < 5e-3);
    CHECK(e.third_z < 5e-3);
  }
  // Slot swap: d/dz k(x, z) is the first-slot gradient of k(z, x).
  auto [x, z] = separated_pair(rng, 2, 1.0);
  const Matrix dz = fd_jacobian([&](const Vector& b) { return Vector::Constant(1, k.eval(x, b)); }, z, 1e-6);
  CHECK(rel_err(dz.transpose(), k.grad_x(z, x)) < 1e-6);
  // Origin: finite, FD-consistent.
  const Vector o = lorentz::origin(2);
  CHECK(k.third(o, o).wrt_x[0].allFinite());
  const Matrix go = fd_jacobian([&](const Vector& a) { return Vector::Constant(1, k.eval(a, o)); }, o, 1e-6);
  CHECK(rel_err(go.transpose(), k.grad_x(o, o)) < 1e-5);
}

TEST_CASE("hyp2 block matches pointwise evaluation") {
  const Hyp2SEKernel k(0.9, 0.4, 200, 9);
  std::mt19937_64 rng(17);
  Matrix X(12, 3);
  for (int i = 0; i < 12; ++i) X.row(i) = random_point(rng, 2, 1.5).transpose();
  const auto block = k.bind(X);
  const Vector p = random_point(rng, 2, 1.0);
  const Vector r = block->row(p);
  const Matrix gr = block->grad_rows(p);
  const auto hs = block->xx_hessians(p);
  Matrix W = Matrix::Random(12, 12);
  const Matrix wg = block->weighted_grads(W);
  for (int n = 0; n < 12; ++n) {
    const Vector xn = X.row(n).transpose();
    CHECK(r[n] == doctest::Approx(k.eval(p, xn)).epsilon(1e-11));
    CHECK(rel_err(gr.col(n), k.grad_x(p, xn)) < 1e-11);
    CHECK(rel_err(hs[n], k.xx_hessian(p, xn)) < 1e-11);
    Vector ref = Vector::Zero(3);
    for (int m = 0; m < 12; ++m) ref += W(n, m) * k.grad_x(xn, X.row(m).transpose());
    CHECK(rel_err(wg.row(n).transpose(), ref) < 1e-10);
  }
}

TEST_CASE("hyp2 hyperparameter update rescales frequencies") {
  const Hyp2SEKernel k(1.0, 0.5, 100, 5);
  const auto k2 = std::static_pointer_cast<const Hyp2SEKernel>(k.with_hyperparameters(2.0, 0.25));
  CHECK(k2->samples().s[3] == doctest::Approx(2 * k.samples().s[3]).epsilon(1e-15));
  CHECK(k2->samples().b == k.samples().b);
  CHECK(k2->eval(lorentz::origin(2), lorentz::origin(2)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("Euclidean SE derivatives") {
  const EuclSEKernel k(1.7, 0.6, 2);
  Vector x(2), z(2);
  x << 0.3, -0.2;
  z << -0.1, 0.4;
  const auto d = eucl_se_derivatives(k, x, x);
  CHECK(d.value == doctest::Approx(1.7));
  CHECK(d.grad.norm() == 0.0);
  const auto e = fd_errors(k, x, z, 1e-5);
  CHECK(e.grad < 1e-7);
  CHECK(e.cross < 1e-7);
  CHECK(e.xx < 1e-7);
  CHECK(e.third_x < 1e-7);
  CHECK(e.third_z < 1e-7);
}

TEST_CASE("Gram matrices with jitter factorise") {
  std::mt19937_64 rng(18);
  Matrix H2(200, 3), H3(200, 4), E(200, 2);
  for (int i = 0; i < 200; ++i) {
    H2.row(i) = random_point(rng, 2, 2.0).transpose();
    H3.row(i) = random_point(rng, 3, 2.0).transpose();
    E.row(i) = Eigen::Vector2d::Random().transpose();
  }
  const Hyp2SEKernel k2(1.0, 0.5, 500, 1);
  const Hyp3SEKernel k3(1.0, 0.5);
  const EuclSEKernel ke(1.0, 0.5, 2);
  for (const Matrix& K : {k2.bind(H2)->gram(), k3.bind(H3)->gram(), ke.bind(E)->gram()}) {
    Eigen::LLT<Matrix> llt(K + 1e-6 * Matrix::Identity(200, 200));
    CHECK(llt.info() == Eigen::Success);
  }
}
