#include <cmath>
#include <random>

#include "doctest.h"
#include "hypepull/errors.hpp"
#include "hypepull/io.hpp"
#include "hypepull/training.hpp"
#include "../support/models.hpp"

using namespace hypepull;
using namespace hypepull::testing;

namespace {

Matrix random_latents(std::mt19937_64& rng, ManifoldKind manifold, int n, int dim, double radius) {
  const int a = manifold == ManifoldKind::Hyperbolic ? dim + 1 : dim;
  Matrix X(n, a);
  for (int i = 0; i < n; ++i) X.row(i) = toy_query(rng, manifold, dim, radius).transpose();
  return X;
}

// Directional FD of f(X) when row i moves along u, against grad.row(i) . u.
template <class F>
void check_row_gradients(std::mt19937_64& rng, ManifoldKind manifold, const Matrix& X, const Matrix& grad, F f,
                         double tol) {
  for (int i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const Vector u = toy_direction(rng, manifold, x);
    const double h = 1e-6;
    Matrix P = X, M = X;
    P.row(i) = toy_move(manifold, x, u, h).transpose();
    M.row(i) = toy_move(manifold, x, u, -h).transpose();
    const double fd = (f(P) - f(M)) / (2 * h);
    const double an = grad.row(i).dot(u);
    CHECK(std::abs(fd - an) <= tol * std::max(1.0, std::abs(fd)));
  }
}

GraphPrior chain_graph(int n, double weight, bool mean) {
  GraphPrior g;
  g.dist.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g.dist(i, j) = 0.3 * std::abs(i - j);
  for (int i = 0; i < n; ++i) g.assignment.push_back(i);
  g.weight = weight;
  g.mean = mean;
  return g;
}

}  // namespace

TEST_CASE("stress loss against explicit pairs, with FD gradients") {
  std::mt19937_64 rng(1);
  for (auto manifold : {ManifoldKind::Hyperbolic, ManifoldKind::Euclidean}) {
    const Matrix X = random_latents(rng, manifold, 7, 2, 1.5);
    for (bool mean : {false, true}) {
      GraphPrior g = chain_graph(7, 1.0, mean);
      for (bool subset : {false, true}) {
        g.rows = subset ? std::vector<int>{0, 3, 6} : std::vector<int>{};
        double ref = 0.0;
        int pairs = 0;
        const std::vector<int> rows = subset ? g.rows : std::vector<int>{0, 1, 2, 3, 4, 5, 6};
        for (std::size_t a = 0; a < rows.size(); ++a)
          for (std::size_t b = a + 1; b < rows.size(); ++b) {
            const Vector xi = X.row(rows[a]).transpose(), xj = X.row(rows[b]).transpose();
            const double d = manifold == ManifoldKind::Hyperbolic ? lorentz::distance(xi, xj) : (xi - xj).norm();
            ref += std::pow(g.dist(rows[a], rows[b]) - d, 2);
            ++pairs;
          }
        if (mean) ref /= pairs;
        Matrix grad;
        CHECK(stress_loss(X, manifold, g, &grad) == doctest::Approx(ref).epsilon(1e-12));
        CHECK(stress_loss(X, manifold, g) == doctest::Approx(ref).epsilon(1e-12));
        check_row_gradients(rng, manifold, X, grad, [&](const Matrix& Z) { return stress_loss(Z, manifold, g); }, 1e-6);
        if (subset) CHECK(grad.row(1).norm() == 0.0);
      }
    }
  }
  // Coincident points contribute no gradient instead of NaN.
  Matrix same(2, 3);
  same.row(0) = lorentz::origin(2).transpose();
  same.row(1) = lorentz::origin(2).transpose();
  Matrix grad;
  stress_loss(same, ManifoldKind::Hyperbolic, chain_graph(2, 1.0, false), &grad);
  CHECK(grad.allFinite());
}

TEST_CASE("dynamics prior against the wrapped Gaussian density") {
  std::mt19937_64 rng(2);
  const Matrix X = random_latents(rng, ManifoldKind::Hyperbolic, 8, 2, 1.0);
  TrajectoryPrior t;
  t.starts = {0, 5};
  t.sigma2 = 0.3;
  double ref = 0.0;
  for (int i : {0, 1, 2, 3, 5, 6}) {
    const auto wg = lorentz::WrappedGaussian::isotropic(X.row(i).transpose(), 0.3);
    ref += lorentz::wrapped_logpdf(wg, X.row(i + 1).transpose());
  }
  Matrix grad;
  CHECK(dynamics_logprior(X, ManifoldKind::Hyperbolic, t, &grad) == doctest::Approx(ref).epsilon(1e-10));
  check_row_gradients(rng, ManifoldKind::Hyperbolic, X, grad,
                      [&](const Matrix& Z) { return dynamics_logprior(Z, ManifoldKind::Hyperbolic, t); }, 1e-6);

  // Small steps exercise the series branch of the density gradient.
  Matrix close(3, 3);
  const Vector o = lorentz::origin(2);
  close.row(0) = o.transpose();
  close.row(1) = lorentz::expmap(o, random_tangent(rng, o, 4e-4)).transpose();
  close.row(2) = lorentz::expmap(o, random_tangent(rng, o, 2e-4)).transpose();
  TrajectoryPrior one;
  one.starts = {0};
  dynamics_logprior(close, ManifoldKind::Hyperbolic, one, &grad);
  check_row_gradients(rng, ManifoldKind::Hyperbolic, close, grad,
                      [&](const Matrix& Z) { return dynamics_logprior(Z, ManifoldKind::Hyperbolic, one); }, 1e-5);

  // Euclidean: plain Gaussian increments.
  const Matrix E = random_latents(rng, ManifoldKind::Euclidean, 4, 2, 1.0);
  double eref = 0.0;
  for (int i = 0; i < 3; ++i)
    eref += -std::log(2 * M_PI * 0.3) - 0.5 * (E.row(i + 1) - E.row(i)).squaredNorm() / 0.3;
  TrajectoryPrior e;
  e.starts = {0};
  e.sigma2 = 0.3;
  dynamics_logprior(E, ManifoldKind::Euclidean, e, &grad);
  CHECK(dynamics_logprior(E, ManifoldKind::Euclidean, e) == doctest::Approx(eref).epsilon(1e-12));
  check_row_gradients(rng, ManifoldKind::Euclidean, E, grad,
                      [&](const Matrix& Z) { return dynamics_logprior(Z, ManifoldKind::Euclidean, e); }, 1e-6);
}

TEST_CASE("trajectory segments") {
  TrajectoryPrior t;
  t.starts = {0, 10};
  const auto seg = trajectory_segments(t, 15);
  REQUIRE(seg.size() == 2);
  CHECK(seg[0] == std::pair<int, int>{0, 10});
  CHECK(seg[1] == std::pair<int, int>{10, 15});
  t.starts = {0, 10, 10};
  CHECK_THROWS_WITH_AS(trajectory_segments(t, 15), doctest::Contains("entry 2"), DataError);
  t.starts = {3};
  CHECK_THROWS_AS(trajectory_segments(t, 15), DataError);
  t.starts = {0, 20};
  CHECK_THROWS_AS(trajectory_segments(t, 15), DataError);
}

TEST_CASE("Gamma hyperprior density") {
  const GammaPrior g{2.0, 2.0};
  CHECK(std::exp(g.logpdf(1.0)) == doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-14));
  const GammaPrior h{5.0, 0.8};
  CHECK(std::exp(h.logpdf(3.0)) == doctest::Approx(std::pow(0.8, 5) * 81.0 * std::exp(-2.4) / 24.0).epsilon(1e-13));
}

TEST_CASE("training presets") {
  const auto mn = train_preset("mnist-like", ManifoldKind::Hyperbolic, 784, 2);
  CHECK(mn.steps == 500);
  CHECK(mn.lr == 0.05);
  CHECK(mn.kappa_prior->shape == 2.0);
  CHECK(mn.tau_prior->rate == 0.8);
  CHECK(train_preset("mnist-like", ManifoldKind::Euclidean, 784, 2).lr == 0.01);
  const auto rb = train_preset("robots-like", ManifoldKind::Hyperbolic, 5, 2);
  REQUIRE(rb.graph.has_value());
  CHECK(rb.graph->weight == 6000.0);
  const auto gr = train_preset("grasps-like", ManifoldKind::Hyperbolic, 24, 3);
  CHECK(gr.steps == 10000);
  CHECK(gr.lr == 0.001);
  CHECK(gr.graph->weight == 24.0);
  CHECK(gr.trajectory->weight == 16.0);
  CHECK(gr.back_constraints);
  CHECK_THROWS_AS(train_preset("imagenet-like", ManifoldKind::Hyperbolic, 2, 2), ConfigError);
}

TEST_CASE("PCA initialisation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix Y(20, 4);
  for (int i = 0; i < 20; ++i) {
    const double s = nd(rng), t = nd(rng);
    Y.row(i) << 3 * s, 3 * s + 0.1 * t, t, 0.01 * nd(rng);
  }
  const Matrix E = pca_init(Y, ManifoldKind::Euclidean, 2, 1.0);
  CHECK(E.rowwise().norm().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(E.colwise().mean().norm() < 1e-12);
  // Scores are uncorrelated and ordered by variance.
  const Matrix C = E.transpose() * E;
  CHECK(std::abs(C(0, 1)) < 1e-10 * C(0, 0));
  CHECK(C(0, 0) > C(1, 1));
  const Matrix H = pca_init(Y, ManifoldKind::Hyperbolic, 2, 0.5);
  for (int i = 0; i < 20; ++i) {
    const Vector x = H.row(i).transpose();
    CHECK(lorentz::on_manifold(x, 1e-12));
    CHECK(lorentz::distance(lorentz::origin(2), x) == doctest::Approx(0.5 * E.row(i).norm()).epsilon(1e-9));
  }
}

TEST_CASE("training gradient matches FD of the objective at checkpoints") {
  std::mt19937_64 rng(4);
  for (auto kind : {KernelKind::Hyp3SE, KernelKind::Hyp2SE, KernelKind::EuclSE}) {
    LatentModel m = toy_model(kind, 9, 3, 5, 0.1);
    TrainConfig cfg;
    cfg.graph = chain_graph(9, 2.0, true);
    TrajectoryPrior t;
    t.starts = {0, 4};
    t.sigma2 = 0.2;
    t.weight = 0.5;
    cfg.trajectory = t;
    cfg.latent_prior_var = 2.0;
    cfg.kappa_prior = GammaPrior{2.0, 2.0};
    cfg.steps = 8;
    cfg.lr = 0.02;
    // Five checkpoints along a short training run.
    for (int checkpoint = 0; checkpoint < 5; ++checkpoint) {
      const Matrix g = training_gradient(m, cfg);
      check_row_gradients(rng, m.manifold(), m.latents(), g,
                          [&](const Matrix& Z) {
                            LatentModel c = m;
                            c.set_latents(Z);
                            return training_objective(c, cfg).total;
                          },
                          1e-4);
      m = train_map(m, cfg).model;
    }
  }
}

TEST_CASE("train_map bookkeeping") {
  const auto tree = gen_tree(2, 2, 4, 5, 2);
  const Matrix Yc = tree.Y.rowwise() - tree.Y.colwise().mean();
  for (auto manifold : {ManifoldKind::Hyperbolic, ManifoldKind::Euclidean}) {
    const auto kernel = manifold == ManifoldKind::Hyperbolic ? toy_kernel(KernelKind::Hyp2SE, 1.0, 1.0, 200)
                                                             : toy_kernel(KernelKind::EuclSE, 1.0, 1.0);
    const LatentModel init(kernel, pca_init(Yc, manifold, 2, 1.0), tree.Y, 0.1);
    TrainConfig cfg = train_preset("robots-like", manifold, 4, 2);
    cfg.graph->dist = tree.graph.dist;
    cfg.graph->assignment = tree.graph.assignment;

    cfg.steps = 0;
    const TrainResult zero = train_map(init, cfg);
    CHECK(zero.trace.size() == 1);
    CHECK(zero.model.latents() == init.latents());
    CHECK(zero.model.noise_var() == init.noise_var());

    cfg.steps = 60;
    const TrainResult r = train_map(init, cfg);
    REQUIRE(r.trace.size() == 61);
    for (int k = 0; k <= 60; ++k) CHECK(r.trace[k].step == k);
    CHECK(r.trace[r.best_step].objective >= r.trace[0].objective);
    for (const auto& row : r.trace) CHECK(r.trace[r.best_step].objective >= row.objective);
    CHECK(training_objective(r.model, cfg).total == doctest::Approx(r.trace[r.best_step].objective).epsilon(1e-12));
    CHECK(r.trace[r.best_step].stress < r.trace[0].stress);
    if (manifold == ManifoldKind::Hyperbolic)
      for (int i = 0; i < r.model.size(); ++i) CHECK(lorentz::on_manifold(r.model.latents().row(i).transpose(), 1e-9));
    const TrainResult again = train_map(init, cfg);
    CHECK(again.model.latents() == r.model.latents());

    cfg.optimize_hyperparameters = false;
    const TrainResult fixed = train_map(init, cfg);
    CHECK(fixed.model.kernel().tau() == init.kernel().tau());
    CHECK(fixed.model.noise_var() == init.noise_var());
  }
}

TEST_CASE("back constraints keep latents a smooth function of the data") {
  const auto tree = gen_tree(2, 2, 4, 6, 2);
  const Matrix Yc = tree.Y.rowwise() - tree.Y.colwise().mean();
  const LatentModel init(toy_kernel(KernelKind::Hyp3SE, 1.0, 1.0), pca_init(Yc, ManifoldKind::Hyperbolic, 3, 1.0),
                         tree.Y, 0.1);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.lr = 0.01;
  cfg.back_constraints = true;
  const TrainResult r = train_map(init, cfg);
  REQUIRE(r.bc_coefficients.rows() == init.size());
  const EuclSEKernel k(cfg.bc_tau, cfg.bc_kappa, 4);
  const Matrix T = k.bind(r.model.observations())->gram() * r.bc_coefficients;
  for (int i = 0; i < init.size(); ++i) {
    Vector u = Vector::Zero(4);
    u.tail(3) = T.row(i).transpose();
    const Vector x = lorentz::expmap(lorentz::origin(3), u);
    CHECK((x - r.model.latents().row(i).transpose()).norm() < 1e-9);
  }
  CHECK(r.trace[r.best_step].objective > r.trace[0].objective);
}

TEST_CASE("training failures name the offending term") {
  const LatentModel m = toy_model(KernelKind::EuclSE, 5, 2, 7);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.graph = chain_graph(5, 1.0, false);
  cfg.graph->dist(0, 1) = cfg.graph->dist(1, 0) = std::nan("");
  CHECK_THROWS_WITH_AS(train_map(m, cfg), doctest::Contains("stress"), NumericError);
  cfg.graph = chain_graph(5, 1.0, false);
  cfg.graph->assignment[2] = 9;
  CHECK_THROWS_AS(train_map(m, cfg), DataError);
  cfg.graph.reset();
  cfg.steps = -1;
  CHECK_THROWS_AS(train_map(m, cfg), ConfigError);
}
