#include "hypepull/gplvm.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hypepull/errors.hpp"

namespace hypepull {

LatentModel::LatentModel(std::shared_ptr<const Kernel> kernel, Matrix X, Matrix Y, double noise_var,
                         double jitter, bool center)
    : kernel_(std::move(kernel)), X_(std::move(X)), Y_(std::move(Y)), noise_var_(noise_var), jitter_(jitter) {
  if (!kernel_) throw ConfigError("latent model needs a kernel");
  if (Y_.rows() != X_.rows()) throw DimensionError("latent model: X and Y must have the same number of rows");
  offset_ = Vector::Zero(Y_.cols());
  if (center && Y_.rows() > 0) {
    offset_ = Y_.colwise().mean().transpose();
    Y_.rowwise() -= offset_.transpose();
  }
  validate();
  rebuild();
}

LatentModel::LatentModel(std::shared_ptr<const Kernel> kernel, Matrix X, Matrix Y_centered, Vector offset,
                         double noise_var, double jitter)
    : kernel_(std::move(kernel)),
      X_(std::move(X)),
      Y_(std::move(Y_centered)),
      offset_(std::move(offset)),
      noise_var_(noise_var),
      jitter_(jitter) {
  if (!kernel_) throw ConfigError("latent model needs a kernel");
  if (Y_.rows() != X_.rows()) throw DimensionError("latent model: X and Y must have the same number of rows");
  if (offset_.size() != Y_.cols()) throw DimensionError("latent model: offset length must equal D_y");
  validate();
  rebuild();
}

LatentModel::LatentModel(const LatentModel& other)
    : kernel_(other.kernel_),
      X_(other.X_),
      Y_(other.Y_),
      offset_(other.offset_),
      noise_var_(other.noise_var_),
      jitter_(other.jitter_),
      jitter_used_(other.jitter_used_),
      block_(other.kernel_->bind(other.X_)),
      A_(other.A_),
      llt_(other.llt_),
      alpha_(other.alpha_),
      logdet_(other.logdet_) {}

LatentModel& LatentModel::operator=(const LatentModel& other) {
  if (this != &other) {
    LatentModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void LatentModel::validate() const {
  if (!(noise_var_ > 0.0) || !std::isfinite(noise_var_)) throw ConfigError("noise variance must be positive");
  if (!(jitter_ >= 0.0)) throw ConfigError("jitter must be non-negative");
  if (X_.rows() > 0 && X_.cols() != kernel_->ambient_dim()) {
    std::ostringstream os;
    os << "latent model: latent rows have length " << X_.cols() << ", kernel expects " << kernel_->ambient_dim();
    throw DimensionError(os.str());
  }
  if (!Y_.allFinite()) throw DataError("latent model: observations contain non-finite values");
  if (!X_.allFinite()) throw NumericError("latent model: latent points contain non-finite values");
  if (manifold() == ManifoldKind::Hyperbolic)
    for (int n = 0; n < size(); ++n) lorentz::require_on_manifold(X_.row(n).transpose(), "latent point");
}

void LatentModel::rebuild() {
  if (X_.rows() == 0) X_.resize(0, kernel_->ambient_dim());
  block_ = kernel_->bind(X_);
  const int n = size();
  const Matrix K = block_->gram();
  const Matrix I = Matrix::Identity(n, n);
  double jitter = jitter_;
  for (;;) {
    A_ = K + (noise_var_ + jitter) * I;
    llt_.compute(A_);
    if (llt_.info() == Eigen::Success && (llt_.matrixLLT().diagonal().array() > 0.0).all()) break;
    jitter = jitter < 1e-8 ? 1e-8 : jitter * 10.0;
    if (jitter > 1e-2 * (1.0 + 1e-9)) {
      throw NumericError("Gram matrix is not positive definite even with jitter 1e-2");
    }
  }
  jitter_used_ = jitter;
  alpha_ = llt_.solve(Y_);
  logdet_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

void LatentModel::set_latents(Matrix X) {
  X_ = std::move(X);
  validate();
  rebuild();
}

void LatentModel::set_hyperparameters(double tau, double kappa, double noise_var) {
  kernel_ = kernel_->with_hyperparameters(tau, kappa);
  noise_var_ = noise_var;
  validate();
  rebuild();
}

void LatentModel::set_kernel(std::shared_ptr<const Kernel> kernel) {
  if (!kernel) throw ConfigError("latent model needs a kernel");
  kernel_ = std::move(kernel);
  validate();
  rebuild();
}

double LatentModel::log_marginal_likelihood() const {
  const int n = size();
  const double dy = output_dim();
  const double fit = (Y_.array() * alpha_.array()).sum();
  return -0.5 * fit - 0.5 * dy * logdet_ - 0.5 * dy * n * std::log(2.0 * std::numbers::pi);
}

Matrix LatentModel::loglik_latent_gradient() const {
  const int n = size();
  if (n == 0) return Matrix::Zero(0, ambient_dim());
  const Matrix Ainv = llt_.solve(Matrix::Identity(n, n));
  Matrix W = 0.5 * (alpha_ * alpha_.transpose() - output_dim() * Ainv);
  W = 0.5 * (W + W.transpose());
  return 2.0 * block_->weighted_grads(W);
}

Prediction LatentModel::predict(const Vector& p) const {
  const double prior = kernel_->eval(p, p);
  if (size() == 0) return {offset_, prior};
  const Vector k = block_->row(p);
  Prediction out;
  out.mean = alpha_.transpose() * k + offset_;
  out.var = std::max(0.0, prior - k.dot(llt_.solve(k)));
  return out;
}

JacobianPosterior LatentModel::jacobian_posterior(const Vector& p) const {
  JacobianPosterior out;
  Matrix C = kernel_->cross_hessian(p, p);
  if (size() == 0) {
    out.mean = Matrix::Zero(output_dim(), ambient_dim());
    out.cov = 0.5 * (C + C.transpose());
    return out;
  }
  const Matrix kx = block_->grad_rows(p);  // A x N
  out.mean = (kx * alpha_).transpose();
  const Matrix S = llt_.solve(kx.transpose());  // N x A
  C -= kx * S;
  out.cov = 0.5 * (C + C.transpose());
  return out;
}

JacobianPosterior LatentModel::riemannian_jacobian_posterior(const Vector& p) const {
  if (manifold() != ManifoldKind::Hyperbolic)
    throw UnsupportedError("Riemannian Jacobian posterior requires a hyperbolic model");
  const JacobianPosterior j = jacobian_posterior(p);
  const Matrix P = lorentz::projector(p);
  return {j.mean * P, P * j.cov * P};
}

}  // namespace hypepull
