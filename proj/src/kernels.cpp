#include "hypepull/kernels.hpp"

#include <cmath>
#include <sstream>

#include "hypepull/errors.hpp"

namespace hypepull {

std::string to_string(ManifoldKind kind) {
  return kind == ManifoldKind::Hyperbolic ? "hyperbolic" : "euclidean";
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Hyp2SE: return "hyp2se";
    case KernelKind::Hyp3SE: return "hyp3se";
    case KernelKind::EuclSE: return "euclse";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "hyp2se") return KernelKind::Hyp2SE;
  if (name == "hyp3se") return KernelKind::Hyp3SE;
  if (name == "euclse") return KernelKind::EuclSE;
  throw ConfigError("unknown kernel '" + name + "' (expected hyp2se, hyp3se or euclse)");
}

// ---------------------------------------------------------------------------
// Kernel / KernelBlock

Kernel::Kernel(double tau, double kappa) : tau_(tau), kappa_(kappa) {
  if (!(tau > 0.0) || !(kappa > 0.0) || !std::isfinite(tau) || !std::isfinite(kappa))
    throw ConfigError("kernel variance and lengthscale must be positive and finite");
}

ManifoldKind Kernel::manifold() const {
  return kind() == KernelKind::EuclSE ? ManifoldKind::Euclidean : ManifoldKind::Hyperbolic;
}

int Kernel::latent_dim() const {
  return manifold() == ManifoldKind::Hyperbolic ? ambient_dim() - 1 : ambient_dim();
}

void Kernel::check_input(const Vector& x) const {
  if (x.size() != ambient_dim()) {
    std::ostringstream os;
    os << to_string(kind()) << " kernel expects inputs of length " << ambient_dim() << ", got "
       << x.size();
    throw DimensionError(os.str());
  }
}

std::unique_ptr<KernelBlock> Kernel::bind(const Matrix& X) const {
  // The block shares ownership through a non-owning alias; callers keep the kernel alive.
  return std::make_unique<KernelBlock>(std::shared_ptr<const Kernel>(this, [](const Kernel*) {}), X);
}

KernelBlock::KernelBlock(std::shared_ptr<const Kernel> kernel, Matrix X)
    : kernel_(std::move(kernel)), X_(std::move(X)) {
  if (X_.rows() > 0 && X_.cols() != kernel_->ambient_dim())
    throw DimensionError("kernel block: data columns do not match kernel input length");
}

Matrix KernelBlock::gram() const {
  const int n = size();
  Matrix K(n, n);
  for (int i = 0; i < n; ++i) {
    const Vector xi = X_.row(i).transpose();
    for (int j = i; j < n; ++j) {
      K(i, j) = kernel_->eval(xi, X_.row(j).transpose());
      K(j, i) = K(i, j);
    }
  }
  return K;
}

Vector KernelBlock::row(const Vector& p) const {
  Vector out(size());
  for (int n = 0; n < size(); ++n) out[n] = kernel_->eval(p, X_.row(n).transpose());
  return out;
}

Matrix KernelBlock::grad_rows(const Vector& p) const {
  Matrix out(kernel_->ambient_dim(), size());
  for (int n = 0; n < size(); ++n) out.col(n) = kernel_->grad_x(p, X_.row(n).transpose());
  return out;
}

std::vector<Matrix> KernelBlock::xx_hessians(const Vector& p) const {
  std::vector<Matrix> out;
  out.reserve(size());
  for (int n = 0; n < size(); ++n) out.push_back(kernel_->xx_hessian(p, X_.row(n).transpose()));
  return out;
}

Matrix KernelBlock::weighted_grads(const Matrix& W) const {
  const int n = size();
  Matrix out = Matrix::Zero(n, kernel_->ambient_dim());
  for (int i = 0; i < n; ++i) {
    const Vector xi = X_.row(i).transpose();
    for (int j = 0; j < n; ++j) {
      if (W(i, j) == 0.0) continue;
      out.row(i) += W(i, j) * kernel_->grad_x(xi, X_.row(j).transpose()).transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// H^3 closed form

namespace {

// arccosh(1 + w) without the cancellation of acosh near 1.
double acosh1p(double w) { return std::log1p(w + std::sqrt(w * (w + 2.0))); }

Hyp3Helpers helpers_from_ratio(const lorentz::AcoshRatio& a, double nu) {
  const double k = 2.0 / nu;
  Hyp3Helpers out;
  out.g = a.d1 + k * a.value * a.value;
  out.h = a.d2 + 3.0 * k * a.value * a.d1 + k * k * a.value * a.value * a.value;
  out.q = a.d3 + 3.0 * k * a.d1 * a.d1 + 4.0 * k * a.value * a.d2 +
          6.0 * k * k * a.value * a.value * a.d1 + k * k * k * std::pow(a.value, 4);
  out.dg = out.h - k * a.value * out.g;
  out.dh = out.q - k * a.value * out.h;
  return out;
}

}  // namespace

Hyp3Helpers hyp3_limits(double nu) {
  Hyp3Helpers out;
  out.g = 2.0 / nu + 1.0 / 3.0;
  out.h = 4.0 / (nu * nu) + 6.0 / (3.0 * nu) + 4.0 / 15.0;
  out.q = 8.0 / (nu * nu * nu) + 8.0 / (nu * nu) + 14.0 / (5.0 * nu) + 12.0 / 35.0;
  out.dg = out.h - 2.0 * out.g / nu;
  out.dh = out.q - 2.0 * out.h / nu;
  return out;
}

Hyp3Helpers hyp3_helpers(double u, double nu, double limit_threshold) {
  if (u > -1.0 + 1e-12) {
    std::ostringstream os;
    os << "hyp3_helpers: u = " << u << " exceeds -1";
    throw DomainError(os.str());
  }
  u = std::min(u, -1.0);
  if (acosh1p(-u - 1.0) <= limit_threshold) return hyp3_limits(nu);
  return helpers_from_ratio(lorentz::acosh_ratio(u), nu);
}

Hyp3SEKernel::Hyp3SEKernel(double tau, double kappa, double limit_threshold)
    : Kernel(tau, kappa), nu_(2.0 * kappa * kappa), limit_threshold_(limit_threshold) {
  if (!(limit_threshold > 0.0)) throw ConfigError("hyp3 limit threshold must be positive");
}

std::shared_ptr<const Kernel> Hyp3SEKernel::with_hyperparameters(double tau, double kappa) const {
  return std::make_shared<Hyp3SEKernel>(tau, kappa, limit_threshold_);
}

Hyp3SEKernel::Pair Hyp3SEKernel::pair(const Vector& x, const Vector& z) const {
  check_input(x);
  check_input(z);
  double u = lorentz::minkowski_inner(x, z);
  if (u > -1.0) {
    if (u > -1.0 + 1e-9 * std::max(1.0, std::abs(x[0] * z[0])))
      throw DomainError("hyp3 kernel: inputs are not on the hyperboloid (<x,z>_L > -1)");
    u = -1.0;
  }
  const double rho = acosh1p(-u - 1.0);
  Pair p;
  p.u = u;
  p.envelope = std::exp(-rho * rho / nu_);
  const auto ratio = lorentz::acosh_ratio(u);
  p.ratio = ratio.value;
  p.helpers = rho <= limit_threshold_ ? hyp3_limits(nu_) : helpers_from_ratio(ratio, nu_);
  return p;
}

double Hyp3SEKernel::eval(const Vector& x, const Vector& z) const {
  const Pair p = pair(x, z);
  return tau() * p.ratio * p.envelope;
}

Vector Hyp3SEKernel::grad_x(const Vector& x, const Vector& z) const {
  const Pair p = pair(x, z);
  return (tau() * p.helpers.g * p.envelope) * lorentz::apply_metric(z);
}

Matrix Hyp3SEKernel::cross_hessian(const Vector& x, const Vector& z) const {
  const Pair p = pair(x, z);
  const Vector gz = lorentz::apply_metric(z);
  const Vector gx = lorentz::apply_metric(x);
  const double scale = tau() * p.envelope;
  return scale * (p.helpers.h * gz * gx.transpose() + p.helpers.g * lorentz::metric(4));
}

Matrix Hyp3SEKernel::xx_hessian(const Vector& x, const Vector& z) const {
  const Pair p = pair(x, z);
  const Vector gz = lorentz::apply_metric(z);
  return (tau() * p.envelope * p.helpers.h) * gz * gz.transpose();
}

ThirdDerivatives Hyp3SEKernel::third(const Vector& x, const Vector& z) const {
  const Pair p = pair(x, z);
  const Vector gz = lorentz::apply_metric(z);
  const Vector gx = lorentz::apply_metric(x);
  const Matrix G = lorentz::metric(4);
  const double scale = tau() * p.envelope;
  const double q = p.helpers.q;
  const double h = p.helpers.h;
  const Matrix outer = gz * gx.transpose();
  ThirdDerivatives out;
  out.wrt_x.resize(4);
  out.wrt_z.resize(4);
  for (int m = 0; m < 4; ++m) {
    // d/dx_m: u picks up (G z)_m, and the (G x)_j factor differentiates to G_jm.
    out.wrt_x[m] = scale * (q * gz[m] * outer + h * gz * G.row(m) + h * gz[m] * G);
    // d/dz_m: u picks up (G x)_m, and the (G z)_i factor differentiates to G_im.
    out.wrt_z[m] = scale * (q * gx[m] * outer + h * G.col(m) * gx.transpose() + h * gx[m] * G);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Euclidean SE

EuclSEKernel::EuclSEKernel(double tau, double kappa, int dim) : Kernel(tau, kappa), dim_(dim) {
  if (dim < 1) throw ConfigError("Euclidean kernel dimension must be >= 1");
}

std::shared_ptr<const Kernel> EuclSEKernel::with_hyperparameters(double tau, double kappa) const {
  return std::make_shared<EuclSEKernel>(tau, kappa, dim_);
}

double EuclSEKernel::eval(const Vector& x, const Vector& z) const {
  check_input(x);
  check_input(z);
  return tau() * std::exp(-0.5 * (x - z).squaredNorm() / (kappa() * kappa()));
}

Vector EuclSEKernel::grad_x(const Vector& x, const Vector& z) const {
  const double l = 1.0 / (kappa() * kappa());
  return -l * eval(x, z) * (x - z);
}

Matrix EuclSEKernel::cross_hessian(const Vector& x, const Vector& z) const {
  const double l = 1.0 / (kappa() * kappa());
  const Vector r = x - z;
  return eval(x, z) * (l * Matrix::Identity(dim_, dim_) - l * l * r * r.transpose());
}

Matrix EuclSEKernel::xx_hessian(const Vector& x, const Vector& z) const {
  return -cross_hessian(x, z);
}

ThirdDerivatives EuclSEKernel::third(const Vector& x, const Vector& z) const {
  const double l = 1.0 / (kappa() * kappa());
  const Vector r = x - z;
  const double k = eval(x, z);
  const Matrix I = Matrix::Identity(dim_, dim_);
  const Matrix K = k * (l * I - l * l * r * r.transpose());
  ThirdDerivatives out;
  out.wrt_x.resize(dim_);
  out.wrt_z.resize(dim_);
  for (int m = 0; m < dim_; ++m) {
    Matrix dm = -l * r[m] * K;
    dm -= k * l * l * (I.col(m) * r.transpose() + r * I.row(m));
    out.wrt_x[m] = dm;
    out.wrt_z[m] = -dm;
  }
  return out;
}

EuclSEDerivatives eucl_se_derivatives(const EuclSEKernel& k, const Vector& x, const Vector& z) {
  return EuclSEDerivatives{k.eval(x, z), k.grad_x(x, z), k.cross_hessian(x, z), k.third(x, z)};
}

}  // namespace hypepull
