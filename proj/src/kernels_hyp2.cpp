#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "hypepull/errors.hpp"
#include "hypepull/kernels.hpp"

namespace hypepull {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using cd = std::complex<double>;

// Chart point and the two Jacobians of p = x_{1:} / (1 + x_0), specialised to D = 2.
struct Chart {
  Eigen::Vector2d p;
  Eigen::Matrix<double, 2, 3> J1;
  Eigen::Matrix3d J2[2];
};

Chart chart(const Vector& x) {
  if (!(x[0] > -1.0)) throw DomainError("hyp2 kernel: point outside the chart domain (x_0 <= -1)");
  const double w = 1.0 + x[0];
  const double w2 = w * w;
  Chart c;
  c.p << x[1] / w, x[2] / w;
  c.J1.setZero();
  for (int i = 0; i < 2; ++i) {
    c.J1(i, 0) = -x[i + 1] / w2;
    c.J1(i, i + 1) = 1.0 / w;
    c.J2[i].setZero();
    c.J2[i](0, 0) = 2.0 * x[i + 1] / (w2 * w);
    c.J2[i](0, i + 1) = -1.0 / w2;
    c.J2[i](i + 1, 0) = -1.0 / w2;
  }
  return c;
}

// phi = exp(c * h) with c = 1 + 2 s i and h = <p, b> the hyperbolic outer product.
cd feature_value(double h, double s) { return std::exp(h) * cd(std::cos(2.0 * s * h), std::sin(2.0 * s * h)); }

}  // namespace

Hyp2SEKernel::Hyp2SEKernel(double tau, double kappa, int num_samples, std::uint64_t seed)
    : Kernel(tau, kappa), seed_(seed) {
  if (num_samples < 1) throw ConfigError("hyp2 kernel needs at least one Monte Carlo sample");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  samples_.b.resize(2 * num_samples);
  samples_.s.resize(num_samples);
  for (int l = 0; l < num_samples; ++l) {
    const double theta = 2.0 * std::numbers::pi * unif(rng);
    samples_.b[2 * l] = std::cos(theta);
    samples_.b[2 * l + 1] = std::sin(theta);
  }
  // Half-normal with scale 1/kappa by inverse CDF: s = sqrt(2) erfinv(U) / kappa.
  for (int l = 0; l < num_samples; ++l)
    samples_.s[l] = std::sqrt(2.0) * boost::math::erf_inv(unif(rng)) / kappa;
  finish_init();
}

Hyp2SEKernel::Hyp2SEKernel(double tau, double kappa, std::uint64_t seed, Samples samples)
    : Kernel(tau, kappa), seed_(seed), samples_(std::move(samples)) {
  finish_init();
}

void Hyp2SEKernel::finish_init() {
  const std::size_t L = samples_.s.size();
  if (L == 0 || samples_.b.size() != 2 * L)
    throw DataError("hyp2 kernel: sample arrays are empty or have mismatched lengths");
  b_.resize(2, static_cast<Eigen::Index>(L));
  s_.resize(static_cast<Eigen::Index>(L));
  weights_.resize(static_cast<Eigen::Index>(L));
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double b0 = samples_.b[2 * l];
    const double b1 = samples_.b[2 * l + 1];
    if (std::abs(std::hypot(b0, b1) - 1.0) > 1e-12)
      throw DataError("hyp2 kernel: boundary sample is not on the unit circle");
    const double s = samples_.s[l];
    if (!(s >= 0.0) || !std::isfinite(s)) throw DataError("hyp2 kernel: frequency sample must be >= 0");
    b_(0, l) = b0;
    b_(1, l) = b1;
    s_[l] = s;
    weights_[l] = s * std::tanh(std::numbers::pi * s);
    total += weights_[l];
  }
  if (total > 0.0) {
    c_inf_ = total / static_cast<double>(L);
    weights_ *= tau() / total;
  } else {
    // All frequencies zero: every sample contributes equally.
    c_inf_ = 0.0;
    weights_.setConstant(tau() / static_cast<double>(L));
  }
}

std::shared_ptr<const Kernel> Hyp2SEKernel::with_hyperparameters(double tau, double kappa) const {
  if (!(kappa > 0.0)) throw ConfigError("kernel lengthscale must be positive");
  Samples next = samples_;
  const double ratio = this->kappa() / kappa;
  for (double& s : next.s) s *= ratio;
  return std::make_shared<Hyp2SEKernel>(tau, kappa, seed_, std::move(next));
}

Hyp2SEKernel::Features Hyp2SEKernel::features(const Vector& x, int order) const {
  check_input(x);
  const Chart c = chart(x);
  const int L = num_samples();
  Features f;
  f.phi.resize(L);
  if (order >= 1) f.d1.resize(3, L);
  if (order >= 2) f.d2.resize(9, L);
  const double np = c.p.squaredNorm();
  const double one_minus = 1.0 - np;
  if (!(one_minus > 0.0)) throw DomainError("hyp2 kernel: chart point outside the unit disk");
  const double log_inner = std::log(one_minus);
  for (int l = 0; l < L; ++l) {
    const Eigen::Vector2d d = c.p - b_.col(l);
    const double nd2 = d.squaredNorm();
    const double h = 0.5 * (log_inner - std::log(nd2));
    const cd phi = feature_value(h, s_[l]);
    f.phi[l] = phi;
    if (order < 1) continue;
    const cd coef(1.0, 2.0 * s_[l]);
    const Eigen::Vector2d gp = c.p / (np - 1.0) - d / nd2;
    const Eigen::Vector3d r = c.J1.transpose() * gp;
    const cd cphi = coef * phi;
    for (int i = 0; i < 3; ++i) f.d1(i, l) = cphi * r[i];
    if (order < 2) continue;
    const Eigen::Matrix2d Hp = Eigen::Matrix2d::Identity() / (np - 1.0) -
                               2.0 * c.p * c.p.transpose() / ((np - 1.0) * (np - 1.0)) -
                               Eigen::Matrix2d::Identity() / nd2 + 2.0 * d * d.transpose() / (nd2 * nd2);
    const Eigen::Matrix3d R = c.J1.transpose() * Hp * c.J1 + gp[0] * c.J2[0] + gp[1] * c.J2[1];
    for (int i = 0; i < 3; ++i)
      for (int m = 0; m < 3; ++m) f.d2(3 * i + m, l) = cphi * (coef * r[i] * r[m] + R(i, m));
  }
  return f;
}

double Hyp2SEKernel::eval(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 0);
  const Features fz = features(z, 0);
  return (fx.phi.array() * fz.phi.conjugate().array()).real().matrix().dot(weights_);
}

double Hyp2SEKernel::eval_imag(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 0);
  const Features fz = features(z, 0);
  return (fx.phi.array() * fz.phi.conjugate().array()).imag().matrix().dot(weights_);
}

Vector Hyp2SEKernel::grad_x(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 1);
  const Features fz = features(z, 0);
  const VectorXcd wz = weights_.cast<cd>().cwiseProduct(fz.phi.conjugate());
  return (fx.d1 * wz).real();
}

Matrix Hyp2SEKernel::cross_hessian(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 1);
  const Features fz = features(z, 1);
  return (fx.d1 * weights_.asDiagonal() * fz.d1.adjoint()).real();
}

Matrix Hyp2SEKernel::xx_hessian(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 2);
  const Features fz = features(z, 0);
  const VectorXcd wz = weights_.cast<cd>().cwiseProduct(fz.phi.conjugate());
  const Eigen::VectorXd flat = (fx.d2 * wz).real();
  Matrix out(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int m = 0; m < 3; ++m) out(i, m) = flat[3 * i + m];
  return out;
}

ThirdDerivatives Hyp2SEKernel::third(const Vector& x, const Vector& z) const {
  const Features fx = features(x, 2);
  const Features fz = features(z, 2);
  // (9 x 3): row 3i+m, column j.
  const Matrix xpart = (fx.d2 * weights_.asDiagonal() * fz.d1.adjoint()).real();
  const Matrix zpart = (fx.d1 * weights_.asDiagonal() * fz.d2.adjoint()).real();  // (3 x 9): col 3j+m
  ThirdDerivatives out;
  out.wrt_x.assign(3, Matrix::Zero(3, 3));
  out.wrt_z.assign(3, Matrix::Zero(3, 3));
  for (int m = 0; m < 3; ++m)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        out.wrt_x[m](i, j) = xpart(3 * i + m, j);
        out.wrt_z[m](i, j) = zpart(i, 3 * j + m);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Cached block: per-datapoint features are computed once, so every cross
// quantity against a query point becomes one complex matrix product.

namespace {

class Hyp2Block final : public KernelBlock {
 public:
  Hyp2Block(std::shared_ptr<const Kernel> kernel, const Matrix& X)
      : KernelBlock(std::move(kernel), X), k_(static_cast<const Hyp2SEKernel&>(*kernel_)) {
    const int n = size();
    phi_.resize(n, k_.num_samples());
    for (int r = 0; r < n; ++r) phi_.row(r) = k_.features(X_.row(r).transpose(), 0).phi.transpose();
    weighted_conj_ = phi_.conjugate() * k_.weights().asDiagonal();
  }

  Matrix gram() const override {
    Matrix K = (phi_ * weighted_conj_.transpose()).real();
    return 0.5 * (K + K.transpose());
  }

  Vector row(const Vector& p) const override {
    const auto f = k_.features(p, 0);
    return (weighted_conj_ * f.phi).real();
  }

  Matrix grad_rows(const Vector& p) const override {
    const auto f = k_.features(p, 1);
    return (f.d1 * weighted_conj_.transpose()).real();
  }

  std::vector<Matrix> xx_hessians(const Vector& p) const override {
    const auto f = k_.features(p, 2);
    const Matrix flat = (f.d2 * weighted_conj_.transpose()).real();  // 9 x N
    std::vector<Matrix> out(size(), Matrix(3, 3));
    for (int n = 0; n < size(); ++n)
      for (int i = 0; i < 3; ++i)
        for (int m = 0; m < 3; ++m) out[n](i, m) = flat(3 * i + m, n);
    return out;
  }

  Matrix weighted_grads(const Matrix& W) const override {
    const MatrixXcd mixed = W.cast<cd>() * weighted_conj_;  // N x L
    Matrix out(size(), 3);
    for (int n = 0; n < size(); ++n) {
      const auto f = k_.features(X_.row(n).transpose(), 1);
      out.row(n) = (f.d1 * mixed.row(n).transpose()).real().transpose();
    }
    return out;
  }

 private:
  const Hyp2SEKernel& k_;
  MatrixXcd phi_;            // N x L, phi_l(x_n)
  MatrixXcd weighted_conj_;  // N x L, w_l conj(phi_l(x_n))
};

}  // namespace

std::unique_ptr<KernelBlock> Hyp2SEKernel::bind(const Matrix& X) const {
  return std::make_unique<Hyp2Block>(std::shared_ptr<const Kernel>(this, [](const Kernel*) {}), X);
}

}  // namespace hypepull
