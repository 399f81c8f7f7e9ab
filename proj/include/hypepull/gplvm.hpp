#pragma once

// GP latent variable model with a zero-mean GP prior over each output dimension:
// Gram factorisation, marginal likelihood, posterior prediction and the
// Gaussian posterior over the Jacobian of the mean map.

#include <memory>

#include "hypepull/kernels.hpp"

namespace hypepull {

struct Prediction {
  Vector mean;  // D_y, includes the stored observation offset
  double var;   // shared across output dimensions, >= 0
};

struct JacobianPosterior {
  Matrix mean;  // D_y x A, row d = gradient of posterior mean d
  Matrix cov;   // A x A, shared across output dimensions
};

class LatentModel {
 public:
  /// X: N x A latent rows (ambient coordinates for hyperbolic kernels), Y: N x D_y.
  /// With center = true the column means of Y are removed and re-added on prediction.
  LatentModel(std::shared_ptr<const Kernel> kernel, Matrix X, Matrix Y, double noise_var,
              double jitter = 0.0, bool center = true);
  /// Rebuilds a model with an explicit observation offset (checkpoint load).
  LatentModel(std::shared_ptr<const Kernel> kernel, Matrix X, Matrix Y_centered, Vector offset,
              double noise_var, double jitter);
  LatentModel(const LatentModel& other);
  LatentModel(LatentModel&&) noexcept = default;
  LatentModel& operator=(const LatentModel& other);
  LatentModel& operator=(LatentModel&&) noexcept = default;

  const Kernel& kernel() const { return *kernel_; }
  std::shared_ptr<const Kernel> kernel_ptr() const { return kernel_; }
  ManifoldKind manifold() const { return kernel_->manifold(); }
  int size() const { return static_cast<int>(X_.rows()); }
  int ambient_dim() const { return kernel_->ambient_dim(); }
  int latent_dim() const { return kernel_->latent_dim(); }
  int output_dim() const { return static_cast<int>(Y_.cols()); }

  const Matrix& latents() const { return X_; }
  const Matrix& observations() const { return Y_; }  // centred
  const Vector& offset() const { return offset_; }
  double noise_var() const { return noise_var_; }
  double jitter() const { return jitter_; }
  /// Jitter actually added after escalation.
  double jitter_used() const { return jitter_used_; }

  void set_latents(Matrix X);
  void set_hyperparameters(double tau, double kappa, double noise_var);
  void set_kernel(std::shared_ptr<const Kernel> kernel);

  /// K_X + (sigma^2 + jitter) I.
  const Matrix& gram() const { return A_; }
  const Eigen::LLT<Matrix>& factor() const { return llt_; }
  /// (K_X + sigma^2 I)^{-1} Y, N x D_y.
  const Matrix& alpha() const { return alpha_; }
  const KernelBlock& block() const { return *block_; }
  Matrix solve(const Matrix& B) const { return llt_.solve(B); }

  double log_marginal_likelihood() const;
  /// N x A ambient (Euclidean) gradient of the log marginal likelihood w.r.t. X.
  Matrix loglik_latent_gradient() const;

  Prediction predict(const Vector& p) const;
  JacobianPosterior jacobian_posterior(const Vector& p) const;
  /// Projected posterior (P mu, P Sigma P); hyperbolic models only.
  JacobianPosterior riemannian_jacobian_posterior(const Vector& p) const;

 private:
  void validate() const;
  void rebuild();

  std::shared_ptr<const Kernel> kernel_;
  Matrix X_;
  Matrix Y_;
  Vector offset_;
  double noise_var_;
  double jitter_;
  double jitter_used_ = 0.0;
  std::unique_ptr<KernelBlock> block_;
  Matrix A_;
  Eigen::LLT<Matrix> llt_;
  Matrix alpha_;
  double logdet_ = 0.0;
};

}  // namespace hypepull
