#include "hypepull/lorentz.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hypepull/errors.hpp"

namespace hypepull::lorentz {

namespace {

void require_same_size(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) {
    std::ostringstream os;
    os << "ambient vectors must have equal length >= 2 (got " << a.size() << " and " << b.size()
       << ")";
    throw DimensionError(os.str());
  }
}

bool exactly_equal(const Vector& a, const Vector& b) { return a.size() == b.size() && a == b; }

}  // namespace

double minkowski_inner(const Vector& a, const Vector& b) {
  require_same_size(a, b);
  return -a[0] * b[0] + a.tail(a.size() - 1).dot(b.tail(b.size() - 1));
}

Vector apply_metric(const Vector& a) {
  Vector out = a;
  out[0] = -out[0];
  return out;
}

Matrix metric(int ambient_dim) {
  Matrix g = Matrix::Identity(ambient_dim, ambient_dim);
  g(0, 0) = -1.0;
  return g;
}

Vector origin(int dim) {
  Vector x = Vector::Zero(dim + 1);
  x[0] = 1.0;
  return x;
}

bool on_manifold(const Vector& x, double tol) {
  if (x.size() < 2 || !x.allFinite() || x[0] <= 0.0) return false;
  const double q = minkowski_inner(x, x);
  return std::abs(q + 1.0) <= tol * std::max(1.0, x[0] * x[0]);
}

void require_on_manifold(const Vector& x, const char* what) {
  if (!on_manifold(x)) {
    std::ostringstream os;
    os << what << " is not on the hyperboloid";
    if (x.size() >= 2 && x.allFinite()) os << " (<x,x>_L + 1 = " << minkowski_inner(x, x) + 1.0 << ")";
    throw DomainError(os.str());
  }
}

bool is_tangent(const Vector& x, const Vector& u, double tol) {
  if (x.size() != u.size()) return false;
  return std::abs(minkowski_inner(x, u)) <= tol * (1.0 + x.norm() * u.norm());
}

Vector renormalize(const Vector& x) {
  Vector out = x;
  out[0] = std::sqrt(1.0 + x.tail(x.size() - 1).squaredNorm());
  return out;
}

double tangent_norm(const Vector& u) {
  const double q = -u[0] * u[0] + u.tail(u.size() - 1).squaredNorm();
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

double distance(const Vector& x, const Vector& y) {
  require_same_size(x, y);
  require_on_manifold(x, "distance: first point");
  require_on_manifold(y, "distance: second point");
  const double c = -minkowski_inner(x, y);
  if (c < 1.5) {
    // |x - y|_L = 2 sinh(d / 2); better conditioned than arccosh near 1.
    const Vector diff = x - y;
    const double q = std::max(0.0, minkowski_inner(diff, diff));
    return 2.0 * std::asinh(0.5 * std::sqrt(q));
  }
  return std::acosh(std::max(1.0, c));
}

Vector expmap(const Vector& x, const Vector& u) {
  require_same_size(x, u);
  require_on_manifold(x, "expmap: base point");
  if (!is_tangent(x, u)) throw DomainError("expmap: vector is not tangent at the base point");
  const double n = tangent_norm(u);
  if (n < 1e-8) {
    const double n2 = n * n;
    return x * (1.0 + 0.5 * n2) + u * (1.0 + n2 / 6.0);
  }
  return std::cosh(n) * x + (std::sinh(n) / n) * u;
}

Vector logmap(const Vector& x, const Vector& y) {
  require_same_size(x, y);
  require_on_manifold(x, "logmap: base point");
  require_on_manifold(y, "logmap: target point");
  if (exactly_equal(x, y)) return Vector::Zero(x.size());
  const double c = minkowski_inner(x, y);
  const Vector u = acosh_ratio(c).value * (y + c * x);
  return tangent_component(x, u);
}

Vector parallel_transport(const Vector& x, const Vector& y, const Vector& u) {
  require_same_size(x, y);
  require_same_size(x, u);
  if (exactly_equal(x, y)) return u;
  const double denom = 1.0 - minkowski_inner(x, y);
  return u + (minkowski_inner(y, u) / denom) * (x + y);
}

Vector project_to_tangent(const Vector& x, const Vector& w) {
  require_same_size(x, w);
  return apply_metric(w) + x * x.dot(w);
}

Matrix projector(const Vector& x) {
  return metric(static_cast<int>(x.size())) + x * x.transpose();
}

Vector tangent_component(const Vector& x, const Vector& v) {
  return v + minkowski_inner(x, v) * x;
}

Vector midpoint(const Vector& x, const Vector& y) {
  const Vector w = x + y;
  return w / std::sqrt(-minkowski_inner(w, w));
}

Vector lorentz_to_poincare(const Vector& x) {
  if (x.size() < 2) throw DimensionError("lorentz_to_poincare: need ambient length >= 2");
  require_on_manifold(x, "lorentz_to_poincare: point");
  return x.tail(x.size() - 1) / (1.0 + x[0]);
}

Vector poincare_to_lorentz(const Vector& p) {
  const double n2 = p.squaredNorm();
  if (!(n2 < 1.0)) throw DomainError("poincare_to_lorentz: point is not inside the unit ball");
  Vector x(p.size() + 1);
  x[0] = (1.0 + n2) / (1.0 - n2);
  x.tail(p.size()) = (2.0 / (1.0 - n2)) * p;
  return x;
}

double poincare_distance(const Vector& p, const Vector& q) {
  const double a = 1.0 - p.squaredNorm();
  const double b = 1.0 - q.squaredNorm();
  if (a <= 0.0 || b <= 0.0) throw DomainError("poincare_distance: point outside the unit ball");
  // arccosh(1 + t) = log1p(t + sqrt(t (t + 2))) keeps precision for small t.
  const double t = 2.0 * (p - q).squaredNorm() / (a * b);
  return std::log1p(t + std::sqrt(t * (t + 2.0)));
}

ChartJacobians chart_jacobians(const Vector& x) {
  const int amb = static_cast<int>(x.size());
  const int d = amb - 1;
  const double w = 1.0 + x[0];
  const double w2 = w * w;
  ChartJacobians out;
  out.first = Matrix::Zero(d, amb);
  out.second.assign(d, Matrix::Zero(amb, amb));
  for (int i = 0; i < d; ++i) {
    out.first(i, 0) = -x[i + 1] / w2;
    out.first(i, i + 1) = 1.0 / w;
    Matrix& s = out.second[i];
    s(0, 0) = 2.0 * x[i + 1] / (w2 * w);
    s(0, i + 1) = -1.0 / w2;
    s(i + 1, 0) = -1.0 / w2;
  }
  return out;
}

AcoshRatio acosh_ratio(double c) {
  if (!(c < 1.0)) throw DomainError("acosh_ratio: argument must be < 1");
  const double delta = c + 1.0;
  AcoshRatio r;
  if (std::abs(delta) <= 0.5) {
    // Coefficients a^{(n)}(-1), n = 0..kTerms+2.
    constexpr int kTerms = 80;
    static const auto coeffs = [] {
      std::array<double, kTerms + 4> a{};
      a[0] = 1.0;
      for (int n = 1; n < kTerms + 4; ++n) a[n] = a[n - 1] * double(n) * n / (2.0 * n + 1.0);
      return a;
    }();
    double out[4];
    for (int k = 0; k < 4; ++k) {
      double sum = 0.0;
      double pow_over_fact = 1.0;  // delta^m / m!
      for (int m = 0; m < kTerms; ++m) {
        const double term = coeffs[k + m] * pow_over_fact;
        sum += term;
        if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        pow_over_fact *= delta / (m + 1.0);
      }
      out[k] = sum;
    }
    r.value = out[0];
    r.d1 = out[1];
    r.d2 = out[2];
    r.d3 = out[3];
    return r;
  }
  const double s2 = c * c - 1.0;
  if (c < -1.0) {
    r.value = std::acosh(-c) / std::sqrt(s2);
  } else {
    r.value = std::acos(-c) / std::sqrt(-s2);
  }
  r.d1 = -(1.0 + c * r.value) / s2;
  r.d2 = -(3.0 * c * r.d1 + r.value) / s2;
  r.d3 = -(5.0 * c * r.d2 + 4.0 * r.d1) / s2;
  return r;
}

double log_r_over_sinh(double r) {
  r = std::abs(r);
  if (r < 1e-4) {
    const double r2 = r * r;
    return -r2 / 6.0 + r2 * r2 / 180.0;
  }
  if (r > 30.0) return std::log(2.0 * r) - r - std::log1p(-std::exp(-2.0 * r));
  return std::log(r / std::sinh(r));
}

WrappedGaussian WrappedGaussian::isotropic(const Vector& mean, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("wrapped Gaussian spread must be positive");
  const int d = static_cast<int>(mean.size()) - 1;
  return WrappedGaussian{mean, alpha * Matrix::Identity(d, d)};
}

namespace {

Eigen::LLT<Matrix> factor_cov(const WrappedGaussian& dist) {
  const int d = dist.dim();
  if (dist.mean.size() != d + 1) throw DimensionError("wrapped Gaussian: mean/cov size mismatch");
  if (!dist.cov.isApprox(dist.cov.transpose(), 1e-12))
    throw DomainError("wrapped Gaussian: covariance is not symmetric");
  Eigen::LLT<Matrix> llt(dist.cov);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
    throw DomainError("wrapped Gaussian: covariance is singular or not positive definite");
  return llt;
}

}  // namespace

double wrapped_logpdf(const WrappedGaussian& dist, const Vector& x) {
  const auto llt = factor_cov(dist);
  const int d = dist.dim();
  const Vector u = logmap(dist.mean, x);
  const Vector v = parallel_transport(dist.mean, origin(d), u);
  const Vector vt = v.tail(d);
  const double r = tangent_norm(u);
  const Vector white = llt.matrixL().solve(vt);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_gauss =
      -0.5 * white.squaredNorm() - 0.5 * logdet - 0.5 * d * std::log(2.0 * std::numbers::pi);
  return log_gauss + (d - 1) * log_r_over_sinh(r);
}

Vector wrapped_sample(const WrappedGaussian& dist, std::mt19937_64& rng) {
  const auto llt = factor_cov(dist);
  const int d = dist.dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(d);
  for (int i = 0; i < d; ++i) z[i] = normal(rng);
  Vector v = Vector::Zero(d + 1);
  v.tail(d) = llt.matrixL() * z;
  const Vector u = parallel_transport(origin(d), dist.mean, v);
  return renormalize(expmap(dist.mean, tangent_component(dist.mean, u)));
}

}  // namespace hypepull::lorentz
