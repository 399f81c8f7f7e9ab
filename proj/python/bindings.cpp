// Python bindings for the core operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hypepull/commands.hpp"
#include "hypepull/errors.hpp"

namespace py = pybind11;
using namespace hypepull;

namespace {

ManifoldKind manifold_arg(const std::string& s) { return manifold_from_string(s); }

std::shared_ptr<const Kernel> make_kernel_py(const std::string& kind, double tau, double kappa, int dim,
                                             int mc_samples, std::uint64_t seed) {
  switch (kernel_kind_from_string(kind)) {
    case KernelKind::Hyp2SE: return std::make_shared<Hyp2SEKernel>(tau, kappa, mc_samples, seed);
    case KernelKind::Hyp3SE: return std::make_shared<Hyp3SEKernel>(tau, kappa);
    case KernelKind::EuclSE: return std::make_shared<EuclSEKernel>(tau, kappa, dim);
  }
  throw ConfigError("unknown kernel");
}

py::dict metric_dict(const MetricEval& me) {
  py::dict d;
  d["G"] = me.G;
  d["volume"] = metric_volume(me);
  d["dof"] = me.wishart.dof;
  d["scale"] = me.wishart.scale;
  d["noncentrality"] = me.wishart.noncentrality;
  if (me.dG) d["dG"] = *me.dG;
  return d;
}

py::dict curve_dict(const DiscreteCurve& c) {
  py::dict d;
  d["manifold"] = to_string(c.manifold);
  d["points"] = c.points;
  return d;
}

DiscreteCurve curve_from(const std::string& manifold, const std::vector<Vector>& points) {
  return DiscreteCurve{manifold_arg(manifold), points};
}

}  // namespace

PYBIND11_MODULE(_hypepull, m) {
  m.doc() = "Pullback metrics and geodesics on hyperbolic GP latent spaces";
  m.attr("__version__") = version_string();

  static py::exception<Error> base_exc(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_exc(m, "ConfigError", base_exc.ptr());
  static py::exception<DataError> data_exc(m, "DataError", base_exc.ptr());
  static py::exception<NumericError> numeric_exc(m, "NumericError", base_exc.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_exc.ptr(), e.what());
    } catch (const DataError& e) {
      PyErr_SetString(data_exc.ptr(), e.what());
    } catch (const NumericError& e) {
      PyErr_SetString(numeric_exc.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base_exc.ptr(), e.what());
    }
  });

  // Lorentz model
  m.def("minkowski_inner", &lorentz::minkowski_inner);
  m.def("distance", &lorentz::distance);
  m.def("expmap", &lorentz::expmap);
  m.def("logmap", &lorentz::logmap);
  m.def("parallel_transport", &lorentz::parallel_transport);
  m.def("project_to_tangent", &lorentz::project_to_tangent);
  m.def("origin", &lorentz::origin);
  m.def("lorentz_to_poincare", &lorentz::lorentz_to_poincare);
  m.def("poincare_to_lorentz", &lorentz::poincare_to_lorentz);

  // Kernels
  py::class_<Kernel, std::shared_ptr<Kernel>>(m, "Kernel")
      .def_property_readonly("kind", [](const Kernel& k) { return to_string(k.kind()); })
      .def_property_readonly("tau", &Kernel::tau)
      .def_property_readonly("kappa", &Kernel::kappa)
      .def_property_readonly("ambient_dim", &Kernel::ambient_dim)
      .def("eval", &Kernel::eval)
      .def("grad_x", &Kernel::grad_x)
      .def("cross_hessian", &Kernel::cross_hessian)
      .def("gram", [](const Kernel& k, const Matrix& X) { return k.bind(X)->gram(); });
  m.def(
      "make_kernel",
      [](const std::string& kind, double tau, double kappa, int dim, int mc_samples, std::uint64_t seed) {
        return std::const_pointer_cast<Kernel>(make_kernel_py(kind, tau, kappa, dim, mc_samples, seed));
      },
      py::arg("kind"), py::arg("tau"), py::arg("kappa"), py::arg("dim") = 2, py::arg("mc_samples") = 1000,
      py::arg("seed") = 0);

  // Latent model
  py::class_<LatentModel>(m, "LatentModel")
      .def(py::init([](std::shared_ptr<Kernel> k, const Matrix& X, const Matrix& Y, double noise, bool center) {
             return LatentModel(std::move(k), X, Y, noise, 0.0, center);
           }),
           py::arg("kernel"), py::arg("X"), py::arg("Y"), py::arg("noise_var"), py::arg("center") = true)
      .def_property_readonly("manifold", [](const LatentModel& mdl) { return to_string(mdl.manifold()); })
      .def_property_readonly("latents", &LatentModel::latents)
      .def_property_readonly("offset", &LatentModel::offset)
      .def_property_readonly("noise_var", &LatentModel::noise_var)
      .def_property_readonly("kernel",
                             [](const LatentModel& mdl) { return std::const_pointer_cast<Kernel>(mdl.kernel_ptr()); })
      .def("log_marginal_likelihood", &LatentModel::log_marginal_likelihood)
      .def("predict",
           [](const LatentModel& mdl, const Vector& p) {
             const auto pr = mdl.predict(p);
             return py::make_tuple(pr.mean, pr.var);
           })
      .def("jacobian_posterior", [](const LatentModel& mdl, const Vector& p) {
        const auto j = mdl.jacobian_posterior(p);
        return py::make_tuple(j.mean, j.cov);
      });

  m.def(
      "expected_metric",
      [](const LatentModel& mdl, const Vector& p, bool with_derivative) {
        return metric_dict(expected_metric(mdl, p, with_derivative));
      },
      py::arg("model"), py::arg("point"), py::arg("with_derivative") = false);

  // Geodesics
  m.def("base_geodesic", [](const std::string& manifold, const Vector& a, const Vector& b, int M) {
    return curve_dict(base_geodesic(manifold_arg(manifold), a, b, M));
  });
  m.def(
      "pullback_energy",
      [](const LatentModel& mdl, const std::vector<Vector>& points) {
        const auto e = curve_energy(curve_from(to_string(mdl.manifold()), points), PullbackMetricField(mdl));
        return py::make_tuple(e.total, e.per_segment);
      },
      py::arg("model"), py::arg("points"));
  m.def(
      "optimize_geodesic",
      [](const LatentModel& mdl, const std::vector<Vector>& points, int steps, double lr, double lambda,
         const std::string& grad_mode) {
        GeodesicConfig gc{steps, lr, lambda, grad_mode_from_string(grad_mode)};
        const auto r = optimize_geodesic(curve_from(to_string(mdl.manifold()), points), PullbackMetricField(mdl), gc);
        py::dict d = curve_dict(r.curve);
        d["trace"] = r.trace;
        d["best_step"] = r.best_step;
        return d;
      },
      py::arg("model"), py::arg("points"), py::arg("steps") = 200, py::arg("lr") = 0.005, py::arg("lambda_") = 1.0,
      py::arg("grad_mode") = "analytic");

  // Data and checkpoints
  m.def("gen_cshape", &gen_cshape, py::arg("n"), py::arg("noise") = 0.0, py::arg("seed") = 0);
  m.def(
      "gen_tree",
      [](int depth, int branching, int dims, std::uint64_t seed, int samples_per_node) {
        const auto t = gen_tree(depth, branching, dims, seed, samples_per_node);
        return py::make_tuple(t.Y, t.graph.dist, t.graph.assignment);
      },
      py::arg("depth"), py::arg("branching"), py::arg("dims"), py::arg("seed") = 0, py::arg("samples_per_node") = 1);
  m.def("save_checkpoint",
        [](const std::string& path, const LatentModel& mdl) { save_checkpoint(path, mdl); });
  m.def("load_checkpoint", [](const std::string& path) { return *load_checkpoint(path).model; });
  m.def("volume_grid", [](const LatentModel& mdl, int resolution) {
    const auto g = volume_grid(mdl, resolution);
    return py::make_tuple(g.chart, g.volume);
  });
}
