#pragma once

// Squared-exponential kernels on H^2 (Monte Carlo features), H^3 (closed form)
// and R^D, with analytic derivatives up to third order.
//
// Derivative conventions, for k(x, z) with ambient inputs:
//   grad_x(x, z)          (i)      = dk / dx_i
//   cross_hessian(x, z)   (i, j)   = d^2 k / dx_i dz_j
//   xx_hessian(x, z)      (i, m)   = d^2 k / dx_i dx_m
//   third(x, z).wrt_x[m]  (i, j)   = d^3 k / dx_i dz_j dx_m
//   third(x, z).wrt_z[m]  (i, j)   = d^3 k / dx_i dz_j dz_m
// Hyperbolic kernels are extended off the hyperboloid through their
// ambient-coordinate formulas, so all derivatives are plain ambient partials.

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hypepull/lorentz.hpp"

namespace hypepull {

enum class ManifoldKind { Hyperbolic, Euclidean };
enum class KernelKind { Hyp2SE, Hyp3SE, EuclSE };

std::string to_string(ManifoldKind kind);
std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// stack[m] is the derivative of a matrix-valued quantity w.r.t. coordinate m.
using MatrixStack = std::vector<Matrix>;

struct ThirdDerivatives {
  MatrixStack wrt_x;
  MatrixStack wrt_z;
};

class KernelBlock;

class Kernel {
 public:
  Kernel(double tau, double kappa);
  virtual ~Kernel() = default;

  virtual KernelKind kind() const = 0;
  /// Length of input vectors (D+1 for hyperbolic kernels, D for Euclidean).
  virtual int ambient_dim() const = 0;
  virtual std::shared_ptr<const Kernel> with_hyperparameters(double tau, double kappa) const = 0;

  virtual double eval(const Vector& x, const Vector& z) const = 0;
  virtual Vector grad_x(const Vector& x, const Vector& z) const = 0;
  virtual Matrix cross_hessian(const Vector& x, const Vector& z) const = 0;
  virtual Matrix xx_hessian(const Vector& x, const Vector& z) const = 0;
  virtual ThirdDerivatives third(const Vector& x, const Vector& z) const = 0;

  /// Binds the kernel to data points (rows of X) for repeated cross evaluations.
  virtual std::unique_ptr<KernelBlock> bind(const Matrix& X) const;

  ManifoldKind manifold() const;
  int latent_dim() const;
  double tau() const { return tau_; }
  double kappa() const { return kappa_; }

 protected:
  void check_input(const Vector& x) const;

 private:
  double tau_;
  double kappa_;
};

/// A kernel together with a fixed set of data points X (N rows).
class KernelBlock {
 public:
  KernelBlock(std::shared_ptr<const Kernel> kernel, Matrix X);
  virtual ~KernelBlock() = default;

  int size() const { return static_cast<int>(X_.rows()); }
  const Matrix& points() const { return X_; }
  const Kernel& kernel() const { return *kernel_; }

  /// K_X (N x N), without noise.
  virtual Matrix gram() const;
  /// k(p, x_n) for all n.
  virtual Vector row(const Vector& p) const;
  /// A x N, column n = dk(p, x_n) / dp.
  virtual Matrix grad_rows(const Vector& p) const;
  /// N matrices, d^2 k(p, x_n) / dp dp.
  virtual std::vector<Matrix> xx_hessians(const Vector& p) const;
  /// N x A, row n = sum_m W(n, m) dk(x_n, x_m) / dx_n.
  virtual Matrix weighted_grads(const Matrix& W) const;

 protected:
  std::shared_ptr<const Kernel> kernel_;
  Matrix X_;
};

/// 3D closed-form helpers g, h, q and the u-derivatives dg/du, dh/du.
struct Hyp3Helpers {
  double g = 0.0;
  double h = 0.0;
  double q = 0.0;
  double dg = 0.0;
  double dh = 0.0;
};

/// The coincident-input limits of g, h, q.
Hyp3Helpers hyp3_limits(double nu);
/// u = <x, z>_L <= -1. Returns the limits when arccosh(-u) <= limit_threshold.
Hyp3Helpers hyp3_helpers(double u, double nu, double limit_threshold = 1e-4);

/// k(x, z) = tau * rho / sinh(rho) * exp(-rho^2 / (2 kappa^2)) on H^3.
class Hyp3SEKernel final : public Kernel {
 public:
  Hyp3SEKernel(double tau, double kappa, double limit_threshold = 1e-4);

  KernelKind kind() const override { return KernelKind::Hyp3SE; }
  int ambient_dim() const override { return 4; }
  std::shared_ptr<const Kernel> with_hyperparameters(double tau, double kappa) const override;

  double eval(const Vector& x, const Vector& z) const override;
  Vector grad_x(const Vector& x, const Vector& z) const override;
  Matrix cross_hessian(const Vector& x, const Vector& z) const override;
  Matrix xx_hessian(const Vector& x, const Vector& z) const override;
  ThirdDerivatives third(const Vector& x, const Vector& z) const override;

  double nu() const { return nu_; }
  double limit_threshold() const { return limit_threshold_; }

 private:
  struct Pair {
    double u;
    double envelope;  // exp(-rho^2 / nu)
    double ratio;     // rho / sinh(rho)
    Hyp3Helpers helpers;
  };
  Pair pair(const Vector& x, const Vector& z) const;

  double nu_;
  double limit_threshold_;
};

/// Monte Carlo feature approximation of the H^2 heat kernel,
/// k(x, z) = sum_l w_l Re(phi_l(x) conj(phi_l(z))) with
/// phi_l(x) = exp((1 + 2 s_l i) <x_P, b_l>) and w_l proportional to s_l tanh(pi s_l),
/// normalized so that sum_l w_l = tau (k(mu_0, mu_0) = tau).
class Hyp2SEKernel final : public Kernel {
 public:
  struct Samples {
    std::vector<double> b;  // 2L values, (b_l0, b_l1) interleaved
    std::vector<double> s;  // L values
  };

  /// Draws b_l uniformly on the unit circle and s_l from the half-normal with
  /// scale 1/kappa by inverse CDF.
  Hyp2SEKernel(double tau, double kappa, int num_samples, std::uint64_t seed);
  /// Rebuilds a kernel from stored samples (checkpoint load).
  Hyp2SEKernel(double tau, double kappa, std::uint64_t seed, Samples samples);

  KernelKind kind() const override { return KernelKind::Hyp2SE; }
  int ambient_dim() const override { return 3; }
  /// The s_l are rescaled by kappa_old / kappa_new; b_l stay fixed.
  std::shared_ptr<const Kernel> with_hyperparameters(double tau, double kappa) const override;

  double eval(const Vector& x, const Vector& z) const override;
  Vector grad_x(const Vector& x, const Vector& z) const override;
  Matrix cross_hessian(const Vector& x, const Vector& z) const override;
  Matrix xx_hessian(const Vector& x, const Vector& z) const override;
  ThirdDerivatives third(const Vector& x, const Vector& z) const override;
  std::unique_ptr<KernelBlock> bind(const Matrix& X) const override;

  int num_samples() const { return static_cast<int>(samples_.s.size()); }
  std::uint64_t seed() const { return seed_; }
  const Samples& samples() const { return samples_; }
  /// C_inf = (1/L) sum_l s_l tanh(pi s_l).
  double c_inf() const { return c_inf_; }
  /// Imaginary part of the Monte Carlo sum (diagnostic).
  double eval_imag(const Vector& x, const Vector& z) const;

  /// Per-sample features of one point: phi (L), d phi (3 x L) and, for
  /// order 2, d^2 phi stored as (3*3) x L with row index 3*i + m.
  struct Features {
    Eigen::VectorXcd phi;
    Eigen::MatrixXcd d1;
    Eigen::MatrixXcd d2;
  };
  Features features(const Vector& x, int order) const;
  /// Weights w_l = tau s_l tanh(pi s_l) / (L C_inf).
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  void finish_init();

  std::uint64_t seed_;
  Samples samples_;
  double c_inf_ = 1.0;
  Eigen::VectorXd weights_;
  Eigen::Matrix2Xd b_;
  Eigen::VectorXd s_;
};

/// tau * exp(-|x - z|^2 / (2 kappa^2)) on R^D.
class EuclSEKernel final : public Kernel {
 public:
  EuclSEKernel(double tau, double kappa, int dim);

  KernelKind kind() const override { return KernelKind::EuclSE; }
  int ambient_dim() const override { return dim_; }
  std::shared_ptr<const Kernel> with_hyperparameters(double tau, double kappa) const override;

  double eval(const Vector& x, const Vector& z) const override;
  Vector grad_x(const Vector& x, const Vector& z) const override;
  Matrix cross_hessian(const Vector& x, const Vector& z) const override;
  Matrix xx_hessian(const Vector& x, const Vector& z) const override;
  ThirdDerivatives third(const Vector& x, const Vector& z) const override;

 private:
  int dim_;
};

struct EuclSEDerivatives {
  double value;
  Vector grad;
  Matrix cross_hessian;
  ThirdDerivatives thirds;
};
EuclSEDerivatives eucl_se_derivatives(const EuclSEKernel& k, const Vector& x, const Vector& z);

}  // namespace hypepull
