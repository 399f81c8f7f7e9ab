#include "hypepull/training.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hypepull/errors.hpp"
#include "hypepull/optim.hpp"

namespace hypepull {

namespace {

bool hyperbolic(ManifoldKind m) { return m == ManifoldKind::Hyperbolic; }

// Distance d(x, y) and its ambient gradients.
struct DistanceGrad {
  double d;
  Vector dx;
  Vector dy;
};

DistanceGrad distance_grad(ManifoldKind manifold, const Vector& x, const Vector& y) {
  DistanceGrad out;
  if (hyperbolic(manifold)) {
    out.d = lorentz::distance(x, y);
    if (out.d < 1e-12) {
      out.dx = Vector::Zero(x.size());
      out.dy = Vector::Zero(y.size());
      return out;
    }
    // d = arccosh(-u), dd/du = -a(u) / d with a the arccosh ratio.
    const double u = std::min(lorentz::minkowski_inner(x, y), -1.0);
    const double s = -lorentz::acosh_ratio(u).value / out.d;
    out.dx = s * lorentz::apply_metric(y);
    out.dy = s * lorentz::apply_metric(x);
    return out;
  }
  const Vector r = x - y;
  out.d = r.norm();
  if (out.d < 1e-300) {
    out.dx = Vector::Zero(x.size());
    out.dy = Vector::Zero(y.size());
    return out;
  }
  out.dx = r / out.d;
  out.dy = -out.dx;
  return out;
}

// log density of y under the isotropic wrapped Gaussian (or Gaussian) centred
// at x, with ambient gradients w.r.t. both points.
struct PairDensity {
  double value;
  Vector dx;
  Vector dy;
};

PairDensity pair_logdensity(ManifoldKind manifold, const Vector& x, const Vector& y, double sigma2, int dim) {
  PairDensity out;
  const double norm_const = -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma2);
  if (!hyperbolic(manifold)) {
    const Vector r = y - x;
    out.value = norm_const - 0.5 * r.squaredNorm() / sigma2;
    out.dy = -r / sigma2;
    out.dx = r / sigma2;
    return out;
  }
  const double r = lorentz::distance(x, y);
  out.value = norm_const - 0.5 * r * r / sigma2 + (dim - 1) * lorentz::log_r_over_sinh(r);
  // d value / d(r^2), with (1/r - coth r) / r -> -1/3 as r -> 0.
  const double core = r < 1e-3 ? -1.0 / 3.0 + r * r / 45.0 : (1.0 / r - 1.0 / std::tanh(r)) / r;
  const double dv_dr2 = -0.5 / sigma2 + 0.5 * (dim - 1) * core;
  // d(r^2)/dx = -2 a(u) G y.
  const double u = std::min(lorentz::minkowski_inner(x, y), -1.0);
  const double a = lorentz::acosh_ratio(u).value;
  out.dx = dv_dr2 * (-2.0 * a) * lorentz::apply_metric(y);
  out.dy = dv_dr2 * (-2.0 * a) * lorentz::apply_metric(x);
  return out;
}

std::vector<int> scored_rows(const GraphPrior& prior, int n) {
  if (!prior.rows.empty()) return prior.rows;
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

int latent_dim_of(ManifoldKind manifold, int ambient) { return hyperbolic(manifold) ? ambient - 1 : ambient; }

}  // namespace

double stress_loss(const Matrix& X, ManifoldKind manifold, const GraphPrior& prior, Matrix* grad) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(prior.assignment.size()) < n)
    throw DataError("stress loss: assignment does not cover every data row");
  const auto rows = scored_rows(prior, n);
  if (grad) *grad = Matrix::Zero(n, X.cols());
  double total = 0.0;
  long pairs = 0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const int i = rows[a], j = rows[b];
      const double dg = prior.dist(prior.assignment[i], prior.assignment[j]);
      const Vector xi = X.row(i).transpose(), xj = X.row(j).transpose();
      ++pairs;
      if (grad) {
        const auto dgrad = distance_grad(manifold, xi, xj);
        const double diff = dg - dgrad.d;
        total += diff * diff;
        grad->row(i) += (-2.0 * diff) * dgrad.dx.transpose();
        grad->row(j) += (-2.0 * diff) * dgrad.dy.transpose();
      } else {
        const double diff = dg - (hyperbolic(manifold) ? lorentz::distance(xi, xj) : (xi - xj).norm());
        total += diff * diff;
      }
    }
  }
  if (prior.mean && pairs > 0) {
    total /= pairs;
    if (grad) *grad /= static_cast<double>(pairs);
  }
  return total;
}

std::vector<std::pair<int, int>> trajectory_segments(const TrajectoryPrior& prior, int n) {
  if (prior.starts.empty() || prior.starts[0] != 0) throw DataError("trajectory starts must begin with 0");
  for (std::size_t s = 1; s < prior.starts.size(); ++s) {
    const int v = prior.starts[s];
    if (v <= prior.starts[s - 1] || v >= n) {
      std::ostringstream os;
      os << "trajectory start " << v << " (entry " << s << ") is not strictly increasing within [0, " << n << ")";
      throw DataError(os.str());
    }
  }
  if (n < 1) throw DataError("trajectory prior needs at least one row");
  std::vector<std::pair<int, int>> out;
  for (std::size_t s = 0; s < prior.starts.size(); ++s)
    out.emplace_back(prior.starts[s], s + 1 < prior.starts.size() ? prior.starts[s + 1] : n);
  return out;
}

double dynamics_logprior(const Matrix& X, ManifoldKind manifold, const TrajectoryPrior& prior, Matrix* grad) {
  const int n = static_cast<int>(X.rows());
  if (!(prior.sigma2 > 0.0)) throw ConfigError("dynamics variance must be positive");
  const int dim = latent_dim_of(manifold, static_cast<int>(X.cols()));
  if (grad) *grad = Matrix::Zero(n, X.cols());
  double total = 0.0;
  for (const auto& [begin, end] : trajectory_segments(prior, n)) {
    for (int t = begin; t + 1 < end; ++t) {
      const auto pd = pair_logdensity(manifold, X.row(t).transpose(), X.row(t + 1).transpose(), prior.sigma2, dim);
      total += pd.value;
      if (grad) {
        grad->row(t) += pd.dx.transpose();
        grad->row(t + 1) += pd.dy.transpose();
      }
    }
  }
  return total;
}

double GammaPrior::logpdf(double x) const {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

TrainConfig train_preset(const std::string& name, ManifoldKind manifold, int output_dim, int latent_dim) {
  TrainConfig c;
  const bool hyp = hyperbolic(manifold);
  if (name == "mnist-like") {
    c.steps = 500;
    c.lr = hyp ? 0.05 : 0.01;
    c.kappa_prior = GammaPrior{2.0, 2.0};
    c.tau_prior = GammaPrior{5.0, 0.8};
  } else if (name == "robots-like") {
    c.steps = 500;
    c.lr = hyp ? 0.05 : 0.01;
    c.kappa_prior = GammaPrior{2.0, 2.0};
    GraphPrior g;
    g.weight = 6000.0;
    g.mean = true;
    c.graph = g;
  } else if (name == "grasps-like") {
    c.steps = 10000;
    c.lr = 0.001;
    GraphPrior g;
    g.weight = output_dim;
    g.mean = false;
    c.graph = g;
    TrajectoryPrior t;
    t.weight = 2.0 * output_dim / latent_dim;
    c.trajectory = t;
    c.back_constraints = true;
  } else {
    throw ConfigError("unknown training preset '" + name + "' (expected mnist-like, robots-like or grasps-like)");
  }
  return c;
}

Matrix pca_init(const Matrix& Y, ManifoldKind manifold, int latent_dim, double radius) {
  const int n = static_cast<int>(Y.rows());
  Matrix scores = Matrix::Zero(n, latent_dim);
  if (n > 0) {
    const Matrix Yc = Y.rowwise() - Y.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(Yc, Eigen::ComputeThinV);
    const Matrix& V = svd.matrixV();
    for (int d = 0; d < std::min<int>(latent_dim, static_cast<int>(V.cols())); ++d) {
      Vector v = V.col(d);
      // Fix the sign so the largest-magnitude loading is positive.
      Eigen::Index arg;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0) v = -v;
      scores.col(d) = Yc * v;
    }
    const double maxn = scores.rowwise().norm().maxCoeff();
    if (maxn > 0) scores *= radius / maxn;
  }
  if (!hyperbolic(manifold)) return scores;
  Matrix X(n, latent_dim + 1);
  const Vector o = lorentz::origin(latent_dim);
  for (int i = 0; i < n; ++i) {
    Vector u = Vector::Zero(latent_dim + 1);
    u.tail(latent_dim) = scores.row(i).transpose();
    X.row(i) = lorentz::renormalize(lorentz::expmap(o, u)).transpose();
  }
  return X;
}

namespace {

struct Hypers {
  double tau, kappa, noise;
};

Hypers hypers_of(const LatentModel& m) { return {m.kernel().tau(), m.kernel().kappa(), m.noise_var()}; }

double hyper_terms(const Hypers& h, const TrainConfig& c) {
  double out = 0.0;
  if (c.kappa_prior) out += c.kappa_prior->logpdf(h.kappa);
  if (c.tau_prior) out += c.tau_prior->logpdf(h.tau);
  return out;
}

double latent_prior(const Matrix& X, ManifoldKind manifold, double var, Matrix* grad) {
  const int n = static_cast<int>(X.rows());
  if (grad) *grad = Matrix::Zero(n, X.cols());
  if (!(var > 0.0)) return 0.0;
  const int dim = latent_dim_of(manifold, static_cast<int>(X.cols()));
  const Vector o = hyperbolic(manifold) ? lorentz::origin(dim) : Vector(Vector::Zero(dim));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto pd = pair_logdensity(manifold, o, X.row(i).transpose(), var, dim);
    total += pd.value;
    if (grad) grad->row(i) = pd.dy.transpose();
  }
  return total;
}

// Log marginal likelihood of Y under the covariance K + (noise + jitter) I;
// NaN when the factorisation fails.
double gram_loglik(const Matrix& K, double noise, double jitter, const Matrix& Y) {
  const int n = static_cast<int>(K.rows());
  const Eigen::LLT<Matrix> llt(K + (noise + jitter) * Matrix::Identity(n, n));
  if (llt.info() != Eigen::Success) return std::nan("");
  const Matrix alpha = llt.solve(Y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double dy = static_cast<double>(Y.cols());
  return -0.5 * (Y.array() * alpha.array()).sum() - 0.5 * dy * logdet - 0.5 * dy * n * std::log(2.0 * std::numbers::pi);
}

void require_finite(double v, const char* term, int step) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "training objective term '" << term << "' is not finite at step " << step;
    throw NumericError(os.str());
  }
}

// Exp at the origin of [0, t] and its Jacobian w.r.t. t.
Vector lift(const Vector& t) {
  Vector u = Vector::Zero(t.size() + 1);
  u.tail(t.size()) = t;
  return lorentz::renormalize(lorentz::expmap(lorentz::origin(static_cast<int>(t.size())), u));
}

Matrix lift_jacobian(const Vector& t) {
  const int d = static_cast<int>(t.size());
  const double r = t.norm();
  Matrix J = Matrix::Zero(d + 1, d);
  if (r < 1e-8) {
    J.bottomRows(d).setIdentity();
    J.row(0) = t.transpose();
    return J;
  }
  const double sr = std::sinh(r) / r;
  J.row(0) = sr * t.transpose();
  J.bottomRows(d) = sr * Matrix::Identity(d, d) + ((std::cosh(r) - sr) / (r * r)) * t * t.transpose();
  return J;
}

}  // namespace

ObjectiveParts training_objective(const LatentModel& model, const TrainConfig& config) {
  ObjectiveParts p{};
  const Matrix& X = model.latents();
  p.loglik = model.log_marginal_likelihood();
  p.total = p.loglik + hyper_terms(hypers_of(model), config);
  if (config.graph) {
    p.stress = stress_loss(X, model.manifold(), *config.graph);
    p.total -= config.graph->weight * p.stress;
  }
  if (config.trajectory) {
    p.dynamics = dynamics_logprior(X, model.manifold(), *config.trajectory);
    p.total += config.trajectory->weight * p.dynamics;
  }
  p.total += latent_prior(X, model.manifold(), config.latent_prior_var, nullptr);
  return p;
}

Matrix training_gradient(const LatentModel& model, const TrainConfig& config) {
  const Matrix& X = model.latents();
  const ManifoldKind manifold = model.manifold();
  Matrix g = model.loglik_latent_gradient();
  Matrix tmp;
  if (config.graph) {
    stress_loss(X, manifold, *config.graph, &tmp);
    g -= config.graph->weight * tmp;
  }
  if (config.trajectory) {
    dynamics_logprior(X, manifold, *config.trajectory, &tmp);
    g += config.trajectory->weight * tmp;
  }
  if (config.latent_prior_var > 0.0) {
    latent_prior(X, manifold, config.latent_prior_var, &tmp);
    g += tmp;
  }
  return g;
}

TrainResult train_map(const LatentModel& init, const TrainConfig& config) {
  if (config.steps < 0) throw ConfigError("training steps must be >= 0");
  const ManifoldKind manifold = init.manifold();
  const bool hyp = hyperbolic(manifold);
  const int n = init.size();
  const int A = init.ambient_dim();
  const int dim = init.latent_dim();
  if (config.graph) {
    const auto& g = *config.graph;
    if (static_cast<int>(g.assignment.size()) != n) throw DataError("graph assignment length must equal N");
    for (int node : g.assignment)
      if (node < 0 || node >= g.dist.rows()) throw DataError("graph assignment refers to an unknown node");
  }
  if (config.trajectory) trajectory_segments(*config.trajectory, n);

  LatentModel model = init;

  // Back constraints: X = lift(K_Y C).
  Matrix KY, C;
  if (config.back_constraints) {
    const EuclSEKernel bck(config.bc_tau, config.bc_kappa, model.output_dim());
    KY = bck.bind(model.observations())->gram();
    Matrix T(n, dim);
    for (int i = 0; i < n; ++i) {
      const Vector x = model.latents().row(i).transpose();
      const Vector t = hyp ? Vector(lorentz::logmap(lorentz::origin(dim), x).tail(dim)) : x;
      T.row(i) = t.transpose();
    }
    C = (KY + 1e-6 * Matrix::Identity(n, n)).ldlt().solve(T);
  }
  auto latents_from_C = [&](const Matrix& coeffs) {
    const Matrix T = KY * coeffs;
    if (!hyp) return T;
    Matrix X(n, A);
    for (int i = 0; i < n; ++i) X.row(i) = lift(T.row(i).transpose()).transpose();
    return X;
  };
  if (config.back_constraints) model.set_latents(latents_from_C(C));

  // Parameter layout: latent rows (or C rows), then the log-hyperparameters.
  std::vector<ManifoldKind> kinds;
  std::vector<Vector> params;
  for (int i = 0; i < n; ++i) {
    if (config.back_constraints) {
      kinds.push_back(ManifoldKind::Euclidean);
      params.push_back(C.row(i).transpose());
    } else {
      kinds.push_back(manifold);
      params.push_back(model.latents().row(i).transpose());
    }
  }
  const bool opt_hyp = config.optimize_hyperparameters;
  if (opt_hyp) {
    kinds.push_back(ManifoldKind::Euclidean);
    const Hypers h = hypers_of(model);
    Vector th(3);
    th << std::log(h.tau), std::log(h.kappa), std::log(h.noise);
    params.push_back(th);
  }
  RiemannianAdam adam(AdamConfig{config.lr}, kinds);

  TrainResult res{model, {}, 0, C};
  double best = -std::numeric_limits<double>::infinity();

  for (int step = 0;; ++step) {
    const ObjectiveParts parts = training_objective(model, config);
    require_finite(parts.loglik, "log marginal likelihood", step);
    require_finite(parts.stress, "stress", step);
    require_finite(parts.dynamics, "dynamics", step);
    require_finite(parts.total, "total", step);
    const Hypers h = hypers_of(model);
    res.trace.push_back({step, parts.total, parts.loglik, parts.stress, parts.dynamics, h.tau, h.kappa, h.noise});
    if (parts.total > best) {
      best = parts.total;
      res.model = model;
      res.best_step = step;
      res.bc_coefficients = C;
    }
    if (step == config.steps) break;

    const Matrix gX = training_gradient(model, config);
    if (!gX.allFinite()) {
      std::ostringstream os;
      os << "training gradient is not finite at step " << step;
      throw NumericError(os.str());
    }

    // Descent directions on the negated objective.
    std::vector<Vector> grads(params.size());
    if (config.back_constraints) {
      Matrix gT(n, dim);
      const Matrix T = KY * C;
      for (int i = 0; i < n; ++i) {
        const Vector gx = gX.row(i).transpose();
        const Vector gt = hyp ? Vector(lift_jacobian(T.row(i).transpose()).transpose() * gx) : gx;
        gT.row(i) = gt.transpose();
      }
      const Matrix gC = KY.transpose() * gT;
      for (int i = 0; i < n; ++i) grads[i] = -gC.row(i).transpose();
    } else {
      for (int i = 0; i < n; ++i) {
        const Vector gx = gX.row(i).transpose();
        grads[i] = hyp ? Vector(-lorentz::project_to_tangent(params[i], gx)) : Vector(-gx);
      }
    }
    if (opt_hyp) {
      // Central differences over the log-hyperparameters; only the likelihood
      // and the hyperpriors depend on them. tau scales the Gram matrix and the
      // noise shifts its diagonal, so only kappa needs new kernel evaluations.
      const Vector th = params[n];
      const Hypers cur = hypers_of(model);
      const double jitter = model.jitter_used();
      const int N = model.size();
      const Matrix K0 = model.gram() - (cur.noise + jitter) * Matrix::Identity(N, N);
      Vector g(3);
      const double eps = 1e-5;
      for (int k = 0; k < 3; ++k) {
        double vals[2];
        for (int s = 0; s < 2; ++s) {
          Vector t = th;
          t[k] += s == 0 ? eps : -eps;
          const Hypers h{std::exp(t[0]), std::exp(t[1]), std::exp(t[2])};
          const Matrix K = k == 1 ? model.kernel().with_hyperparameters(h.tau, h.kappa)->bind(model.latents())->gram()
                                  : Matrix(K0 * (h.tau / cur.tau));
          vals[s] = gram_loglik(K, h.noise, jitter, model.observations());
          if (!std::isfinite(vals[s])) {
            LatentModel probe = model;
            probe.set_hyperparameters(h.tau, h.kappa, h.noise);
            vals[s] = probe.log_marginal_likelihood();
          }
          vals[s] += hyper_terms(h, config);
        }
        g[k] = (vals[0] - vals[1]) / (2.0 * eps);
      }
      if (!g.allFinite()) throw NumericError("hyperparameter gradient is not finite");
      grads[n] = -g;
    }

    adam.step(params, grads);

    if (config.back_constraints) {
      for (int i = 0; i < n; ++i) C.row(i) = params[i].transpose();
    }
    Matrix Xn(n, A);
    if (config.back_constraints) {
      Xn = latents_from_C(C);
    } else {
      for (int i = 0; i < n; ++i) Xn.row(i) = params[i].transpose();
    }
    if (opt_hyp) {
      const Vector& th = params[n];
      model.set_hyperparameters(std::exp(th[0]), std::exp(th[1]), std::exp(th[2]));
    }
    model.set_latents(std::move(Xn));
  }
  return res;
}

}  // namespace hypepull
