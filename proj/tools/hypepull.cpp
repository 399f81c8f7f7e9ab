// hypepull command-line interface.

#include <iostream>

#include "CLI11.hpp"

#include "hypepull/commands.hpp"

using namespace hypepull;

namespace {

struct Flags {
  RunConfig config;
  std::string manifold = "hyperbolic";
  std::string init = "base";
  std::optional<double> tau, kappa, noise;
  std::optional<int> mc_samples;
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<double> lambda;
};

void add_model_flags(CLI::App* app, Flags& f) {
  app->add_option("--manifold", f.manifold, "hyperbolic or euclidean")->check(CLI::IsMember({"hyperbolic", "euclidean"}));
  app->add_option("--dim", f.config.dim, "latent dimension");
  app->add_option("--kernel", f.config.kernel, "auto, hyp2se, hyp3se or euclse");
  app->add_option("--tau", f.tau, "kernel variance");
  app->add_option("--kappa", f.kappa, "kernel lengthscale");
  app->add_option("--noise", f.noise, "observation noise variance");
  app->add_option("--mc-samples", f.mc_samples, "Monte Carlo samples of the 2D hyperbolic kernel");
  app->add_option("--seed", f.config.seed, "random seed");
  app->add_option("--out", f.config.out, "output directory")->required();
}

void add_geodesic_flags(CLI::App* app, Flags& f) {
  app->add_option("--points", f.config.points, "points per discrete curve (M)");
  app->add_option("--steps", f.steps, "optimisation steps");
  app->add_option("--lr", f.lr, "learning rate");
  app->add_option("--lambda", f.lambda, "spline energy weight");
  app->add_option("--grad-mode", f.config.grad_mode, "auto, analytic or fd-local")
      ->check(CLI::IsMember({"auto", "analytic", "fd-local", "fd_local"}));
  app->add_option("--init", f.init, "base or via-origin")->check(CLI::IsMember({"base", "via-origin"}));
  app->add_option("--from", f.config.from, "start point as a data row index");
  app->add_option("--to", f.config.to, "end point as a data row index");
  app->add_option("--from-point", f.config.from_point, "start point coordinates (chart or ambient)")->delimiter(',');
  app->add_option("--to-point", f.config.to_point, "end point coordinates (chart or ambient)")->delimiter(',');
}

void add_grid_flags(CLI::App* app, Flags& f) {
  app->add_option("--grid", f.config.grid, "grid resolution per axis");
  app->add_option("--extent", f.config.extent, "half-width of Euclidean grids");
  app->add_flag("--with-metric", f.config.with_metric, "store the metric matrix per grid point");
}

void finish(Flags& f, const std::string& command) {
  RunConfig& c = f.config;
  c.command = command;
  c.manifold = manifold_from_string(f.manifold);
  c.init = init_kind_from_string(f.init);
  if (f.tau) c.tau = *f.tau;
  if (f.kappa) c.kappa = *f.kappa;
  if (f.noise) c.noise = *f.noise;
  if (f.mc_samples) c.mc_samples = *f.mc_samples;
  if (command == "train") {
    // Training starts from neutral hyperparameters unless given.
    if (!f.tau) c.tau = 1.0;
    if (!f.kappa) c.kappa = 1.0;
    if (!f.noise) c.noise = 0.1;
    if (!f.mc_samples) c.mc_samples = 1000;
    c.train_steps = f.steps;
    c.train_lr = f.lr;
  } else {
    if (f.steps) c.steps = *f.steps;
    if (f.lr) c.lr = *f.lr;
  }
  if (f.lambda) c.lambda = *f.lambda;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pullback metrics and geodesics on hyperbolic GP latent spaces"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  Flags cs, tr, geo, vg, tree;

  auto* cshape = app.add_subcommand("cshape", "C-shape experiment: volume grid, base and pullback geodesics");
  add_model_flags(cshape, cs);
  add_geodesic_flags(cshape, cs);
  add_grid_flags(cshape, cs);
  cshape->add_option("--n", cs.config.n, "number of C-shape points");
  cshape->add_option("--data-noise", cs.config.data_noise, "Gaussian jitter of the C-shape points");

  auto* train = app.add_subcommand("train", "MAP training on a dataset; writes checkpoint.json and trace.csv");
  add_model_flags(train, tr);
  train->add_option("--data", tr.config.data, "observations CSV")->required();
  train->add_option("--graph", tr.config.graph, "graph JSON");
  train->add_option("--trajectory", tr.config.trajectory, "trajectory JSON");
  train->add_option("--preset", tr.config.preset, "mnist-like, robots-like or grasps-like")
      ->check(CLI::IsMember({"mnist-like", "robots-like", "grasps-like"}));
  train->add_option("--steps", tr.steps, "training steps");
  train->add_option("--lr", tr.lr, "learning rate");
  train->add_option("--stress-weight", tr.config.stress_weight, "stress weight");
  train->add_option("--stress-mean", tr.config.stress_mean, "average (true) or sum (false) the stress");
  train->add_option("--dynamics-weight", tr.config.dynamics_weight, "dynamics prior weight");
  train->add_option("--dynamics-var", tr.config.dynamics_var, "dynamics prior variance");
  train->add_flag("--fix-hyperparameters", tr.config.fix_hyperparameters, "keep tau, kappa and noise fixed");
  train->add_option("--init-radius", tr.config.init_radius, "largest tangent norm of the PCA initialisation");

  auto* geodesic = app.add_subcommand("geodesic", "base and pullback geodesics on a trained checkpoint");
  geodesic->add_option("--checkpoint", geo.config.checkpoint, "checkpoint JSON")->required();
  geodesic->add_option("--out", geo.config.out, "output directory")->required();
  add_geodesic_flags(geodesic, geo);

  auto* grid = app.add_subcommand("volume-grid", "metric volume on a regular grid");
  grid->add_option("--checkpoint", vg.config.checkpoint, "checkpoint JSON")->required();
  grid->add_option("--out", vg.config.out, "output directory")->required();
  add_grid_flags(grid, vg);

  auto* gen = app.add_subcommand("gen-tree", "synthetic tree dataset with graph distances");
  gen->add_option("--depth", tree.config.depth, "tree depth");
  gen->add_option("--branching", tree.config.branching, "children per node");
  gen->add_option("--features", tree.config.features, "observation dimension");
  gen->add_option("--samples-per-node", tree.config.samples_per_node, "rows per node");
  gen->add_option("--seed", tree.config.seed, "random seed");
  gen->add_option("--out", tree.config.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cshape) {
      finish(cs, "cshape");
      const auto s = cmd_cshape(cs.config);
      std::cout << "base energy " << s.geodesic.base_energy.total << " (cv " << s.geodesic.cv_base << "), pullback energy "
                << s.geodesic.pullback_energy.total << " (cv " << s.geodesic.cv_pullback << ")\n";
    } else if (*train) {
      finish(tr, "train");
      const auto s = cmd_train(tr.config);
      const auto& t = s.result.trace;
      std::cout << "objective " << t.front().objective << " -> " << t[s.result.best_step].objective << " (best step "
                << s.result.best_step << ")";
      if (s.train_config.graph) std::cout << ", stress " << s.initial_stress << " -> " << s.final_stress;
      std::cout << '\n';
    } else if (*geodesic) {
      geo.manifold = "hyperbolic";
      finish(geo, "geodesic");
      const auto s = cmd_geodesic(geo.config);
      std::cout << "mean uncertainty base " << s.decoded_base.mean_uncertainty << ", pullback "
                << s.decoded_pullback.mean_uncertainty << '\n';
    } else if (*grid) {
      finish(vg, "volume-grid");
      const auto g = cmd_volume_grid(vg.config);
      std::cout << g.volume.size() << " grid points\n";
    } else if (*gen) {
      finish(tree, "gen-tree");
      const auto t = cmd_gen_tree(tree.config);
      std::cout << t.parent.size() << " nodes, " << t.Y.rows() << " rows\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
