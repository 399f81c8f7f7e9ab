#include "hypepull/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hypepull/errors.hpp"
#include "hypepull/parallel.hpp"

namespace hypepull {

namespace fs = std::filesystem;

std::string version_string() { return std::string(HYPEPULL_VERSION) + "+" + HYPEPULL_GIT_DESCRIBE; }

ManifoldKind manifold_from_string(const std::string& name) {
  if (name == "hyperbolic") return ManifoldKind::Hyperbolic;
  if (name == "euclidean") return ManifoldKind::Euclidean;
  throw ConfigError("unknown manifold '" + name + "' (expected hyperbolic or euclidean)");
}

InitKind init_kind_from_string(const std::string& name) {
  if (name == "base") return InitKind::Base;
  if (name == "via-origin") return InitKind::ViaOrigin;
  throw ConfigError("unknown geodesic initialiser '" + name + "' (expected base or via-origin)");
}

std::string to_string(InitKind kind) { return kind == InitKind::Base ? "base" : "via-origin"; }

Json RunConfig::to_json() const {
  Json j{{"command", command},
         {"version", version_string()},
         {"manifold", hypepull::to_string(manifold)},
         {"dim", dim},
         {"kernel", kernel},
         {"tau", tau},
         {"kappa", kappa},
         {"noise", noise},
         {"mc_samples", mc_samples},
         {"seed", seed},
         {"out", out}};
  if (command == "cshape") {
    j["n"] = n;
    j["data_noise"] = data_noise;
  }
  if (command == "cshape" || command == "geodesic") {
    j["points"] = points;
    j["steps"] = steps;
    j["lr"] = lr;
    j["lambda"] = lambda;
    j["grad_mode"] = grad_mode;
    j["init"] = hypepull::to_string(init);
    j["from"] = from;
    j["to"] = to;
    j["from_point"] = from_point;
    j["to_point"] = to_point;
  }
  if (command == "cshape" || command == "volume-grid") {
    j["grid"] = grid;
    j["extent"] = extent;
    j["with_metric"] = with_metric;
  }
  if (command == "geodesic" || command == "volume-grid") j["checkpoint"] = checkpoint;
  if (command == "train") {
    j["data"] = data;
    j["graph"] = graph;
    j["trajectory"] = trajectory;
    j["preset"] = preset;
    j["fix_hyperparameters"] = fix_hyperparameters;
    j["init_radius"] = init_radius;
    if (train_steps) j["steps"] = *train_steps;
    if (train_lr) j["lr"] = *train_lr;
    if (stress_weight) j["stress_weight"] = *stress_weight;
    if (stress_mean) j["stress_mean"] = *stress_mean;
    if (dynamics_weight) j["dynamics_weight"] = *dynamics_weight;
    if (dynamics_var) j["dynamics_var"] = *dynamics_var;
  }
  if (command == "gen-tree") {
    j["depth"] = depth;
    j["branching"] = branching;
    j["features"] = features;
    j["samples_per_node"] = samples_per_node;
  }
  return j;
}

std::shared_ptr<const Kernel> make_kernel(const RunConfig& config, double tau, double kappa) {
  std::string name = config.kernel;
  if (name == "auto") {
    if (config.manifold == ManifoldKind::Euclidean) name = "euclse";
    else if (config.dim == 2) name = "hyp2se";
    else if (config.dim == 3) name = "hyp3se";
    else throw ConfigError("hyperbolic latent spaces support dim 2 or 3");
  }
  const KernelKind kind = kernel_kind_from_string(name);
  const bool hyp_kernel = kind != KernelKind::EuclSE;
  if (hyp_kernel != (config.manifold == ManifoldKind::Hyperbolic))
    throw ConfigError("kernel '" + name + "' does not match manifold " + hypepull::to_string(config.manifold));
  switch (kind) {
    case KernelKind::Hyp2SE:
      if (config.dim != 2) throw ConfigError("hyp2se requires dim 2");
      return std::make_shared<Hyp2SEKernel>(tau, kappa, config.mc_samples, config.seed);
    case KernelKind::Hyp3SE:
      if (config.dim != 3) throw ConfigError("hyp3se requires dim 3");
      return std::make_shared<Hyp3SEKernel>(tau, kappa);
    case KernelKind::EuclSE:
      if (config.dim < 1) throw ConfigError("dim must be >= 1");
      return std::make_shared<EuclSEKernel>(tau, kappa, config.dim);
  }
  throw ConfigError("unknown kernel");
}

GradMode resolve_grad_mode(const RunConfig& config, const Kernel& kernel) {
  if (config.grad_mode == "auto") return kernel.kind() == KernelKind::Hyp2SE ? GradMode::FdLocal : GradMode::Analytic;
  return grad_mode_from_string(config.grad_mode);
}

Vector chart_coords(ManifoldKind manifold, const Vector& x) {
  return manifold == ManifoldKind::Hyperbolic ? lorentz::lorentz_to_poincare(x) : x;
}

namespace {

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Json matrix_rows(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) rows.push_back(vector_json(M.row(r).transpose()));
  return rows;
}

// CSV with a provenance comment line.
void write_artifact_csv(const std::string& path, const Matrix& M, const std::vector<std::string>& header,
                        const Json& config) {
  write_csv(path, M, header);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream body;
  body << in.rdbuf();
  in.close();
  std::ofstream out(path, std::ios::binary);
  out << "# hypepull " << config.value("version", std::string()) << " config=" << config.dump() << '\n' << body.str();
}

Vector parse_endpoint(const std::vector<double>& coords, const LatentModel& model) {
  const Eigen::Map<const Vector> v(coords.data(), static_cast<Eigen::Index>(coords.size()));
  const int D = model.latent_dim();
  if (model.manifold() == ManifoldKind::Euclidean) {
    if (v.size() != D) throw ConfigError("endpoint needs " + std::to_string(D) + " coordinates");
    return v;
  }
  if (v.size() == D) {
    if (v.norm() >= 1.0) throw ConfigError("Poincare endpoint must lie inside the unit ball");
    return lorentz::poincare_to_lorentz(v);
  }
  if (v.size() == D + 1) {
    lorentz::require_on_manifold(v, "endpoint");
    return v;
  }
  throw ConfigError("endpoint needs " + std::to_string(D) + " Poincare or " + std::to_string(D + 1) +
                    " Lorentz coordinates");
}

Vector endpoint(int row, const std::vector<double>& coords, const LatentModel& model, const char* which) {
  if (!coords.empty()) return parse_endpoint(coords, model);
  if (row < 0 || row >= model.size())
    throw ConfigError(std::string("geodesic ") + which + " row " + std::to_string(row) + " outside [0, " +
                      std::to_string(model.size()) + ")");
  return model.latents().row(row).transpose();
}

void write_geodesic_artifacts(const GeodesicSummary& g, const Json& cfg, const std::string& out) {
  write_json(join(out, "curve_base.json"),
             curve_to_json("base", g.base, g.base_energy, {}, g.decoded_base, cfg));
  write_json(join(out, "curve_pullback.json"),
             curve_to_json("pullback", g.pullback.curve, g.pullback_energy, g.pullback.trace, g.decoded_pullback, cfg));
  const int S = static_cast<int>(g.base_energy.per_segment.size());
  Matrix E(S, 3);
  for (int i = 0; i < S; ++i) {
    E(i, 0) = i;
    E(i, 1) = g.base_energy.per_segment[i];
    E(i, 2) = g.pullback_energy.per_segment[i];
  }
  write_artifact_csv(join(out, "energies.csv"), E, {"segment", "base", "pullback"}, cfg);
}

}  // namespace

VolumeGrid volume_grid(const LatentModel& model, int resolution, double extent, bool with_metric) {
  if (resolution < 1) throw ConfigError("grid resolution must be >= 1");
  const ManifoldKind manifold = model.manifold();
  const int D = model.latent_dim();
  if (D < 2) throw ConfigError("volume grids need a latent dimension >= 2");
  const bool hyp = manifold == ManifoldKind::Hyperbolic;
  const double half = hyp ? 1.0 : extent;
  if (!(half > 0.0)) throw ConfigError("grid extent must be positive");
  std::vector<Vector> chart;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      Vector p = Vector::Zero(D);
      p[0] = -half + (j + 0.5) * 2.0 * half / resolution;
      p[1] = -half + (i + 0.5) * 2.0 * half / resolution;
      if (hyp && p.squaredNorm() >= 1.0) continue;
      chart.push_back(p);
    }
  }
  VolumeGrid g;
  g.manifold = manifold;
  g.resolution = resolution;
  const int n = static_cast<int>(chart.size());
  g.chart.resize(n, 2);
  g.volume.resize(n);
  std::vector<Matrix> metrics(n);
  std::vector<double> vols(n);
  parallel_for(n, [&](std::size_t k) {
    const Vector x = hyp ? lorentz::poincare_to_lorentz(chart[k]) : chart[k];
    const MetricEval me = expected_metric(model, x);
    vols[k] = metric_volume(me);
    if (with_metric) metrics[k] = me.G;
  });
  for (int k = 0; k < n; ++k) {
    g.chart.row(k) = chart[k].head(2).transpose();
    g.volume[k] = vols[k];
  }
  if (with_metric) g.metric = std::move(metrics);
  return g;
}

Json grid_to_json(const VolumeGrid& grid, const Json& config) {
  Json j{{"schema", "hypepull.grid"},
         {"schema_version", 1},
         {"version", config.value("version", version_string())},
         {"config", config},
         {"manifold", to_string(grid.manifold)},
         {"chart", grid.manifold == ManifoldKind::Hyperbolic ? "poincare" : "euclidean"},
         {"resolution", grid.resolution},
         {"points", matrix_rows(grid.chart)},
         {"volume", vector_json(grid.volume)}};
  if (!grid.metric.empty()) {
    Json ms = Json::array();
    for (const Matrix& G : grid.metric) ms.push_back(matrix_rows(G));
    j["metric"] = ms;
  }
  return j;
}

Json curve_to_json(const std::string& name, const DiscreteCurve& curve, const CurveEnergy& pullback_energy,
                   const std::vector<double>& trace, const std::optional<DecodedCurve>& decoded, const Json& config) {
  Json ambient = Json::array(), chart = Json::array();
  for (const Vector& p : curve.points) {
    ambient.push_back(vector_json(p));
    chart.push_back(vector_json(chart_coords(curve.manifold, p)));
  }
  Json j{{"schema", "hypepull.curve"},
         {"schema_version", 1},
         {"version", config.value("version", version_string())},
         {"config", config},
         {"name", name},
         {"manifold", to_string(curve.manifold)},
         {"points", ambient},
         {"chart", chart},
         {"segment_energy", pullback_energy.per_segment},
         {"total_energy", pullback_energy.total},
         {"energy_cv", coefficient_of_variation(pullback_energy.per_segment)},
         {"length", curve_length(curve)},
         {"spline_energy", spline_energy(curve)},
         {"loss_trace", trace}};
  if (decoded) {
    j["decoded_mean"] = matrix_rows(decoded->means);
    j["decoded_var"] = vector_json(decoded->vars);
    j["mean_uncertainty"] = decoded->mean_uncertainty;
  }
  return j;
}

GeodesicSummary run_geodesic(const LatentModel& model, const Vector& a, const Vector& b, const RunConfig& config) {
  const ManifoldKind manifold = model.manifold();
  GeodesicSummary s;
  s.grad_mode = resolve_grad_mode(config, model.kernel());
  s.base = base_geodesic(manifold, a, b, config.points);
  DiscreteCurve init = s.base;
  if (config.init == InitKind::ViaOrigin) {
    if (manifold != ManifoldKind::Hyperbolic) throw ConfigError("--init via-origin needs a hyperbolic model");
    init = via_origin_init(a, b, config.points);
  }
  const PullbackMetricField field(model);
  GeodesicConfig gc;
  gc.steps = config.steps;
  gc.lr = config.lr;
  gc.lambda = config.lambda;
  gc.grad_mode = s.grad_mode;
  s.pullback = optimize_geodesic(init, field, gc);
  s.base_energy = curve_energy(s.base, field);
  s.pullback_energy = curve_energy(s.pullback.curve, field);
  s.cv_base = coefficient_of_variation(s.base_energy.per_segment);
  s.cv_pullback = coefficient_of_variation(s.pullback_energy.per_segment);
  s.decoded_base = decode_curve(s.base, model);
  s.decoded_pullback = decode_curve(s.pullback.curve, model);
  return s;
}

CShapeSummary cmd_cshape(const RunConfig& config) {
  if (config.dim != 2) throw ConfigError("the C-shape experiment is two-dimensional (dim 2)");
  const Matrix P = gen_cshape(config.n, config.data_noise, config.seed);
  const bool hyp = config.manifold == ManifoldKind::Hyperbolic;
  Matrix X = P;
  if (hyp) {
    X.resize(P.rows(), 3);
    for (Eigen::Index i = 0; i < P.rows(); ++i) X.row(i) = lorentz::poincare_to_lorentz(P.row(i).transpose()).transpose();
  }
  auto kernel = make_kernel(config, config.tau, config.kappa);
  // Observations equal the latents; the GP mean is zero (no centring).
  LatentModel model(kernel, X, X, config.noise, 0.0, false);

  RunConfig gcfg = config;
  // Default endpoints: the points a quarter of the way in from either arc end,
  // so the base geodesic crosses the hollow of the C.
  const int quarter = static_cast<int>(std::lround(0.25 * (config.n - 1)));
  if (gcfg.from < 0 && gcfg.from_point.empty()) gcfg.from = quarter;
  if (gcfg.to < 0 && gcfg.to_point.empty()) gcfg.to = config.n - 1 - quarter;
  const Vector a = endpoint(gcfg.from, gcfg.from_point, model, "start");
  const Vector b = endpoint(gcfg.to, gcfg.to_point, model, "end");

  CShapeSummary s{P, model, volume_grid(model, config.grid, config.extent, config.with_metric),
                  run_geodesic(model, a, b, gcfg)};
  if (!config.out.empty()) {
    ensure_dir(config.out);
    Json cfg = gcfg.to_json();
    write_json(join(config.out, "resolved_config.json"), cfg);
    write_json(join(config.out, "grid.json"), grid_to_json(s.grid, cfg));
    write_geodesic_artifacts(s.geodesic, cfg, config.out);
    write_artifact_csv(join(config.out, "data.csv"), P, {"p0", "p1"}, cfg);
  }
  return s;
}

TrainConfig resolve_train_config(const RunConfig& config, const Dataset& data, int latent_dim) {
  const int dy = static_cast<int>(data.Y.cols());
  TrainConfig tc;
  if (!config.preset.empty()) tc = train_preset(config.preset, config.manifold, dy, latent_dim);
  else tc.lr = config.manifold == ManifoldKind::Hyperbolic ? 0.05 : 0.01;
  if (config.train_steps) tc.steps = *config.train_steps;
  if (config.train_lr) tc.lr = *config.train_lr;
  tc.optimize_hyperparameters = !config.fix_hyperparameters;
  if (data.graph) {
    GraphPrior g = tc.graph.value_or(GraphPrior{});
    g.dist = data.graph->dist;
    g.assignment = data.graph->assignment;
    if (config.stress_weight) g.weight = *config.stress_weight;
    if (config.stress_mean) g.mean = *config.stress_mean;
    tc.graph = g;
  } else if (tc.graph) {
    throw ConfigError("preset '" + config.preset + "' needs a graph (--graph)");
  }
  if (data.trajectory) {
    TrajectoryPrior t = tc.trajectory.value_or(TrajectoryPrior{});
    t.starts = data.trajectory->starts;
    if (config.dynamics_weight) t.weight = *config.dynamics_weight;
    if (config.dynamics_var) t.sigma2 = *config.dynamics_var;
    tc.trajectory = t;
  } else if (tc.trajectory) {
    throw ConfigError("preset '" + config.preset + "' needs trajectories (--trajectory)");
  }
  // Stress over trajectory endpoints when both structures are present (grasps-like).
  if (config.preset == "grasps-like" && tc.graph && tc.trajectory) {
    const auto segs = trajectory_segments(*tc.trajectory, static_cast<int>(data.Y.rows()));
    tc.graph->rows.clear();
    for (const auto& [b, e] : segs) {
      tc.graph->rows.push_back(b);
      if (e - 1 != b) tc.graph->rows.push_back(e - 1);
    }
  }
  return tc;
}

TrainSummary train_dataset(const Dataset& data, const RunConfig& config) {
  auto kernel = make_kernel(config, config.tau, config.kappa);
  const int D = kernel->latent_dim();
  const Matrix X0 = pca_init(data.Y, config.manifold, D, config.init_radius);
  LatentModel init(kernel, X0, data.Y, data.offset, config.noise, 0.0);
  const TrainConfig tc = resolve_train_config(config, data, D);
  TrainSummary s{train_map(init, tc), tc, 0.0, 0.0};
  if (s.train_config.graph) {
    s.initial_stress = s.result.trace.front().stress;
    s.final_stress = stress_loss(s.result.model.latents(), config.manifold, *s.train_config.graph);
  }
  return s;
}

namespace {

Json priors_json(const TrainConfig& tc) {
  Json j{{"steps", tc.steps}, {"lr", tc.lr}, {"optimize_hyperparameters", tc.optimize_hyperparameters},
         {"latent_prior_var", tc.latent_prior_var}, {"back_constraints", tc.back_constraints}};
  if (tc.back_constraints) {
    j["bc_tau"] = tc.bc_tau;
    j["bc_kappa"] = tc.bc_kappa;
  }
  if (tc.kappa_prior) j["kappa_prior"] = {{"shape", tc.kappa_prior->shape}, {"rate", tc.kappa_prior->rate}};
  if (tc.tau_prior) j["tau_prior"] = {{"shape", tc.tau_prior->shape}, {"rate", tc.tau_prior->rate}};
  if (tc.graph) j["graph"] = {{"weight", tc.graph->weight}, {"mean", tc.graph->mean}, {"rows", tc.graph->rows}};
  if (tc.trajectory)
    j["trajectory"] = {{"weight", tc.trajectory->weight}, {"sigma2", tc.trajectory->sigma2},
                       {"starts", tc.trajectory->starts}};
  return j;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config) {
  if (config.data.empty()) throw ConfigError("train needs --data");
  const Dataset data = load_dataset(config.data, config.graph, config.trajectory);
  TrainSummary s = train_dataset(data, config);
  if (!config.out.empty()) {
    ensure_dir(config.out);
    const Json cfg = config.to_json();
    write_json(join(config.out, "resolved_config.json"), cfg);
    const auto& tr = s.result.trace;
    const Json summary{{"steps", static_cast<int>(tr.size()) - 1},
                       {"best_step", s.result.best_step},
                       {"initial_objective", tr.front().objective},
                       {"best_objective", tr[s.result.best_step].objective},
                       {"final_objective", tr.back().objective},
                       {"initial_stress", s.initial_stress},
                       {"final_stress", s.final_stress}};
    save_checkpoint(join(config.out, "checkpoint.json"), s.result.model, priors_json(s.train_config), summary, cfg);
    Matrix T(tr.size(), 8);
    for (std::size_t k = 0; k < tr.size(); ++k)
      T.row(k) << tr[k].step, tr[k].objective, tr[k].loglik, tr[k].stress, tr[k].dynamics, tr[k].tau, tr[k].kappa,
          tr[k].noise_var;
    write_artifact_csv(join(config.out, "trace.csv"), T,
                       {"step", "objective", "loglik", "stress", "dynamics", "tau", "kappa", "noise_var"}, cfg);
  }
  return s;
}

GeodesicSummary cmd_geodesic(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("geodesic needs --checkpoint");
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const LatentModel& model = *ck.model;
  const Vector a = endpoint(config.from, config.from_point, model, "start");
  const Vector b = endpoint(config.to, config.to_point, model, "end");
  GeodesicSummary s = run_geodesic(model, a, b, config);
  if (!config.out.empty()) {
    ensure_dir(config.out);
    Json cfg = config.to_json();
    cfg["manifold"] = to_string(model.manifold());
    cfg["dim"] = model.latent_dim();
    cfg["kernel"] = to_string(model.kernel().kind());
    cfg["resolved_grad_mode"] = to_string(s.grad_mode);
    cfg["mean_uncertainty"] = {{"base", s.decoded_base.mean_uncertainty},
                               {"pullback", s.decoded_pullback.mean_uncertainty}};
    write_json(join(config.out, "resolved_config.json"), cfg);
    write_geodesic_artifacts(s, cfg, config.out);
  }
  return s;
}

VolumeGrid cmd_volume_grid(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("volume-grid needs --checkpoint");
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  VolumeGrid g = volume_grid(*ck.model, config.grid, config.extent, config.with_metric);
  if (!config.out.empty()) {
    ensure_dir(config.out);
    Json cfg = config.to_json();
    cfg["manifold"] = to_string(ck.model->manifold());
    cfg["dim"] = ck.model->latent_dim();
    cfg["kernel"] = to_string(ck.model->kernel().kind());
    write_json(join(config.out, "resolved_config.json"), cfg);
    write_json(join(config.out, "grid.json"), grid_to_json(g, cfg));
    Matrix rows(g.chart.rows(), 3);
    rows << g.chart, g.volume;
    write_artifact_csv(join(config.out, "grid.csv"), rows, {"p0", "p1", "volume"}, cfg);
  }
  return g;
}

TreeDataset cmd_gen_tree(const RunConfig& config) {
  TreeDataset t = gen_tree(config.depth, config.branching, config.features, config.seed, config.samples_per_node);
  if (!config.out.empty()) {
    ensure_dir(config.out);
    const Json cfg = config.to_json();
    write_json(join(config.out, "resolved_config.json"), cfg);
    std::vector<std::string> header;
    for (int c = 0; c < config.features; ++c) header.push_back("y" + std::to_string(c));
    write_artifact_csv(join(config.out, "observations.csv"), t.Y, header, cfg);
    Json gj = graph_to_json(t.graph);
    gj["version"] = cfg["version"];
    gj["config"] = cfg;
    write_json(join(config.out, "graph.json"), gj);
  }
  return t;
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::Config:
      case ErrorKind::Dimension:
      case ErrorKind::Unsupported: return 2;
      case ErrorKind::Data:
      case ErrorKind::Domain: return 3;
      case ErrorKind::Numeric: return 4;
    }
  }
  return 4;
}

}  // namespace hypepull
