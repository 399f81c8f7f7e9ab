#include "hypepull/geodesic.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "hypepull/errors.hpp"
#include "hypepull/parallel.hpp"
#include "hypepull/pullback.hpp"

namespace hypepull {

Matrix PullbackMetricField::metric(const Vector& p) const { return expected_metric(model_, p).G; }

MatrixStack PullbackMetricField::derivative(const Vector& p) const { return metric_derivative(model_, p); }

std::string to_string(GradMode mode) { return mode == GradMode::Analytic ? "analytic" : "fd_local"; }

GradMode grad_mode_from_string(const std::string& name) {
  if (name == "analytic") return GradMode::Analytic;
  if (name == "fd_local" || name == "fd-local") return GradMode::FdLocal;
  throw ConfigError("unknown gradient mode '" + name + "' (expected analytic or fd_local)");
}

namespace {

void require_curve_size(int M) {
  if (M < 3) throw ConfigError("a discrete curve needs at least 3 points");
}

bool hyperbolic(ManifoldKind m) { return m == ManifoldKind::Hyperbolic; }

}  // namespace

DiscreteCurve base_geodesic(ManifoldKind manifold, const Vector& a, const Vector& b, int M) {
  require_curve_size(M);
  if (a.size() != b.size()) throw DimensionError("base geodesic: endpoint lengths differ");
  DiscreteCurve c;
  c.manifold = manifold;
  c.points.reserve(M);
  if (hyperbolic(manifold)) {
    lorentz::require_on_manifold(a, "geodesic start");
    lorentz::require_on_manifold(b, "geodesic end");
    const Vector u = lorentz::logmap(a, b);
    for (int i = 0; i < M; ++i) {
      if (i == 0) c.points.push_back(a);
      else if (i == M - 1) c.points.push_back(b);
      else c.points.push_back(lorentz::renormalize(lorentz::expmap(a, u * (double(i) / (M - 1)))));
    }
  } else {
    for (int i = 0; i < M; ++i) {
      const double t = double(i) / (M - 1);
      c.points.push_back(i == M - 1 ? b : Vector((1.0 - t) * a + t * b));
    }
  }
  return c;
}

namespace {

// count >= 2 points evenly spaced on the geodesic from a to b.
std::vector<Vector> geodesic_points(const Vector& a, const Vector& b, int count) {
  std::vector<Vector> pts{a};
  const Vector u = lorentz::logmap(a, b);
  for (int i = 1; i + 1 < count; ++i) pts.push_back(lorentz::renormalize(lorentz::expmap(a, u * (double(i) / (count - 1)))));
  pts.push_back(b);
  return pts;
}

}  // namespace

DiscreteCurve via_origin_init(const Vector& a, const Vector& b, int M) {
  require_curve_size(M);
  lorentz::require_on_manifold(a, "geodesic start");
  lorentz::require_on_manifold(b, "geodesic end");
  const Vector o = lorentz::origin(static_cast<int>(a.size()) - 1);
  if (a == o || b == o) return base_geodesic(ManifoldKind::Hyperbolic, a, b, M);
  const int first = (M + 1) / 2;  // a .. o inclusive
  const int second = M - first;   // after o
  DiscreteCurve c;
  c.manifold = ManifoldKind::Hyperbolic;
  c.points = geodesic_points(a, o, first);
  const auto leg = geodesic_points(o, b, second + 1);
  c.points.insert(c.points.end(), leg.begin() + 1, leg.end());
  return c;
}

Vector segment_vector(ManifoldKind manifold, const Vector& x, const Vector& y) {
  return hyperbolic(manifold) ? lorentz::logmap(x, y) : Vector(y - x);
}

double point_distance(ManifoldKind manifold, const Vector& x, const Vector& y) {
  return hyperbolic(manifold) ? lorentz::distance(x, y) : (x - y).norm();
}

namespace {

double quad(const Vector& v, const Matrix& G) { return v.dot(G * v); }

// Squared distance of point j to the midpoint of its neighbours.
double spline_term(const DiscreteCurve& c, int j) {
  const Vector& prev = c.points[j - 1];
  const Vector& next = c.points[j + 1];
  if (hyperbolic(c.manifold)) {
    const double d = lorentz::distance(c.points[j], lorentz::midpoint(prev, next));
    return d * d;
  }
  return (c.points[j] - 0.5 * (prev + next)).squaredNorm();
}

std::vector<Matrix> segment_metrics(const DiscreteCurve& c, const MetricField& metric) {
  const int M = c.size();
  std::vector<Matrix> G(M - 1);
  parallel_for(M - 1, [&](std::size_t i) { G[i] = metric.metric(c.points[i]); });
  return G;
}

double loss_from_metrics(const DiscreteCurve& c, const std::vector<Matrix>& G, double lambda) {
  double e = 0.0;
  for (int i = 0; i + 1 < c.size(); ++i) e += quad(segment_vector(c.manifold, c.points[i], c.points[i + 1]), G[i]);
  double s = 0.0;
  for (int j = 1; j + 1 < c.size(); ++j) s += spline_term(c, j);
  return e + lambda * s;
}

// Loss terms touching point i: segments i-1 and i, spline terms i-1..i+1.
double local_loss(const DiscreteCurve& c, int i, const Matrix& G_prev, const Matrix& G_here, double lambda) {
  const int M = c.size();
  double e = quad(segment_vector(c.manifold, c.points[i - 1], c.points[i]), G_prev) +
             quad(segment_vector(c.manifold, c.points[i], c.points[i + 1]), G_here);
  double s = 0.0;
  for (int j = i - 1; j <= i + 1; ++j)
    if (j >= 1 && j <= M - 2) s += spline_term(c, j);
  return e + lambda * s;
}

// Jacobians of the ambient extension f(x, y) = a(c) (y + c x), c = <x, y>_L.
struct LogJacobians {
  Matrix dx;
  Matrix dy;
};

LogJacobians log_jacobians(const Vector& x, const Vector& y) {
  const int A = static_cast<int>(x.size());
  const double c = std::min(lorentz::minkowski_inner(x, y), -1.0);
  const auto a = lorentz::acosh_ratio(c);
  const Vector base = y + c * x;
  const Vector gx = lorentz::apply_metric(x);
  const Vector gy = lorentz::apply_metric(y);
  const Matrix I = Matrix::Identity(A, A);
  LogJacobians j;
  j.dy = a.d1 * base * gx.transpose() + a.value * (I + x * gx.transpose());
  j.dx = a.d1 * base * gy.transpose() + a.value * (c * I + x * gy.transpose());
  return j;
}

Vector analytic_point_gradient(const DiscreteCurve& c, int i, const std::vector<Matrix>& G,
                               const MetricField& metric, double lambda) {
  const int M = c.size();
  const int A = static_cast<int>(c.points[i].size());
  const Vector& x = c.points[i];
  const Vector& xp = c.points[i - 1];
  const Vector& xn = c.points[i + 1];
  Vector g = Vector::Zero(A);
  const MatrixStack dG = metric.derivative(x);
  if (hyperbolic(c.manifold)) {
    const Vector v_prev = lorentz::logmap(xp, x);
    const Vector v_here = lorentz::logmap(x, xn);
    g += 2.0 * log_jacobians(xp, x).dy.transpose() * (G[i - 1] * v_prev);
    g += 2.0 * log_jacobians(x, xn).dx.transpose() * (G[i] * v_here);
    for (int m = 0; m < A; ++m) g[m] += quad(v_here, dG[m]);
    for (int j = i - 1; j <= i + 1; ++j) {
      if (j < 1 || j > M - 2) continue;
      const Vector w = c.points[j - 1] + c.points[j + 1];
      const double n = std::sqrt(-lorentz::minkowski_inner(w, w));
      const Vector mid = w / n;
      const double u = std::min(lorentz::minkowski_inner(c.points[j], mid), -1.0);
      const double a = lorentz::acosh_ratio(u).value;
      if (j == i) {
        g += lambda * (-2.0 * a) * lorentz::apply_metric(mid);
      } else {
        g += lambda * (-2.0 * a / n) * (lorentz::apply_metric(c.points[j]) + u * lorentz::apply_metric(mid));
      }
    }
    return lorentz::project_to_tangent(x, g);
  }
  const Vector v_prev = x - xp;
  const Vector v_here = xn - x;
  g += 2.0 * (G[i - 1] * v_prev);
  g -= 2.0 * (G[i] * v_here);
  for (int m = 0; m < A; ++m) g[m] += quad(v_here, dG[m]);
  for (int j = i - 1; j <= i + 1; ++j) {
    if (j < 1 || j > M - 2) continue;
    const Vector r = c.points[j] - 0.5 * (c.points[j - 1] + c.points[j + 1]);
    g += lambda * (j == i ? Vector(2.0 * r) : Vector(-r));
  }
  return g;
}

constexpr double kFdStep = 1e-5;

Vector fd_point_gradient(const DiscreteCurve& c, int i, const std::vector<Matrix>& G, const MetricField& metric,
                         double lambda) {
  const int A = static_cast<int>(c.points[i].size());
  const bool hyp = hyperbolic(c.manifold);
  Vector g = Vector::Zero(A);
  DiscreteCurve work = c;
  // With renormalisation x_0 is a function of the other coordinates, so its partial is zero.
  for (int m = hyp ? 1 : 0; m < A; ++m) {
    double vals[2];
    for (int s = 0; s < 2; ++s) {
      Vector p = c.points[i];
      p[m] += s == 0 ? kFdStep : -kFdStep;
      if (hyp) p = lorentz::renormalize(p);
      work.points[i] = p;
      vals[s] = local_loss(work, i, G[i - 1], metric.metric(p), lambda);
    }
    g[m] = (vals[0] - vals[1]) / (2.0 * kFdStep);
  }
  return hyp ? lorentz::project_to_tangent(c.points[i], g) : g;
}

std::vector<Vector> gradient_with_metrics(const DiscreteCurve& c, const MetricField& metric, double lambda,
                                          GradMode mode, const std::vector<Matrix>& G) {
  const int M = c.size();
  std::vector<Vector> grads(M, Vector::Zero(c.points[0].size()));
  parallel_for(M - 2, [&](std::size_t k) {
    const int i = static_cast<int>(k) + 1;
    grads[i] = mode == GradMode::Analytic ? analytic_point_gradient(c, i, G, metric, lambda)
                                          : fd_point_gradient(c, i, G, metric, lambda);
  });
  return grads;
}

void check_curve(const DiscreteCurve& c, const MetricField& metric) {
  require_curve_size(c.size());
  if (metric.manifold() != c.manifold) throw ConfigError("curve and metric live on different manifolds");
  for (const auto& p : c.points)
    if (p.size() != metric.ambient_dim()) throw DimensionError("curve point length does not match the metric");
}

}  // namespace

CurveEnergy curve_energy(const DiscreteCurve& curve, const MetricField& metric) {
  check_curve(curve, metric);
  const auto G = segment_metrics(curve, metric);
  CurveEnergy out;
  for (int i = 0; i + 1 < curve.size(); ++i) {
    const double e = quad(segment_vector(curve.manifold, curve.points[i], curve.points[i + 1]), G[i]);
    out.per_segment.push_back(std::max(0.0, e));
    out.total += out.per_segment.back();
  }
  return out;
}

double spline_energy(const DiscreteCurve& curve) {
  require_curve_size(curve.size());
  double s = 0.0;
  for (int j = 1; j + 1 < curve.size(); ++j) s += spline_term(curve, j);
  return s;
}

double curve_length(const DiscreteCurve& curve) {
  double len = 0.0;
  for (int i = 0; i + 1 < curve.size(); ++i) len += point_distance(curve.manifold, curve.points[i], curve.points[i + 1]);
  return len;
}

double geodesic_loss(const DiscreteCurve& curve, const MetricField& metric, double lambda) {
  check_curve(curve, metric);
  return loss_from_metrics(curve, segment_metrics(curve, metric), lambda);
}

std::vector<Vector> energy_gradient(const DiscreteCurve& curve, const MetricField& metric, double lambda,
                                    GradMode mode) {
  check_curve(curve, metric);
  return gradient_with_metrics(curve, metric, lambda, mode, segment_metrics(curve, metric));
}

GeodesicResult optimize_geodesic(const DiscreteCurve& init, const MetricField& metric, const GeodesicConfig& config) {
  check_curve(init, metric);
  if (config.steps < 0) throw ConfigError("geodesic optimisation steps must be >= 0");
  if (!(config.lambda >= 0.0)) throw ConfigError("spline weight lambda must be >= 0");
  const int M = init.size();
  GeodesicResult res;
  res.curve = init;
  DiscreteCurve cur = init;
  std::vector<ManifoldKind> kinds(M - 2, init.manifold);
  RiemannianAdam adam(AdamConfig{config.lr}, kinds);
  double best = std::numeric_limits<double>::infinity();
  for (int step = 0;; ++step) {
    const auto G = segment_metrics(cur, metric);
    const double loss = loss_from_metrics(cur, G, config.lambda);
    if (!std::isfinite(loss)) {
      res.aborted = true;
      std::ostringstream os;
      os << "non-finite geodesic loss at step " << step << "; returning the best finite iterate";
      res.message = os.str();
      break;
    }
    res.trace.push_back(loss);
    if (loss < best) {
      best = loss;
      res.curve = cur;
      res.best_step = step;
    }
    if (step == config.steps) break;
    const auto grads = gradient_with_metrics(cur, metric, config.lambda, config.grad_mode, G);
    for (int i = 1; i + 1 < M; ++i) {
      if (!grads[i].allFinite()) {
        std::ostringstream os;
        os << "non-finite geodesic gradient at point " << i << " (segments " << i - 1 << " and " << i
           << ") at step " << step;
        throw NumericError(os.str());
      }
    }
    std::vector<Vector> params(cur.points.begin() + 1, cur.points.end() - 1);
    std::vector<Vector> g(grads.begin() + 1, grads.end() - 1);
    adam.step(params, g);
    for (int i = 1; i + 1 < M; ++i) cur.points[i] = params[i - 1];
  }
  return res;
}

DecodedCurve decode_curve(const DiscreteCurve& curve, const LatentModel& model) {
  const int M = curve.size();
  DecodedCurve out;
  out.means.resize(M, model.output_dim());
  out.vars.resize(M);
  std::vector<Prediction> preds(M);
  parallel_for(M, [&](std::size_t i) { preds[i] = model.predict(curve.points[i]); });
  for (int i = 0; i < M; ++i) {
    out.means.row(i) = preds[i].mean.transpose();
    out.vars[i] = preds[i].var;
  }
  out.mean_uncertainty = M > 0 ? out.vars.mean() : 0.0;
  return out;
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= values.size();
  return mean != 0.0 ? std::sqrt(var) / std::abs(mean) : 0.0;
}

}  // namespace hypepull
