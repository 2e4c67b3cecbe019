#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfk/benchmark.hpp"
#include "mfk/crossval.hpp"
#include "mfk/design.hpp"
#include "mfk/errors.hpp"
#include "mfk/io.hpp"
#include "mfk/metrics.hpp"
#include "mfk/model.hpp"

namespace py = pybind11;
using namespace mfk;

namespace {

PredictionMode mode_of(const std::string& m) {
  if (m == "simple") return PredictionMode::Simple;
  if (m == "universal") return PredictionMode::Universal;
  throw InvalidHyperparameter("mode must be 'simple' or 'universal'");
}

MultiFidelityModel fit_py(const std::vector<std::pair<Design, Eigen::VectorXd>>& data,
                          const std::vector<std::optional<Eigen::VectorXd>>& theta,
                          const std::vector<std::string>& f_basis, const std::vector<std::string>& g_basis,
                          const std::string& objective, int restarts, std::uint64_t seed, double nugget) {
  std::vector<LevelData> levels;
  for (std::size_t t = 0; t < data.size(); ++t) {
    LevelData lv;
    lv.design = data[t].first;
    lv.observations = data[t].second;
    if (!f_basis.empty() && !f_basis.at(t).empty()) lv.f_basis = BasisSpec::parse(f_basis[t]);
    if (t > 0 && !g_basis.empty() && !g_basis.at(t).empty()) lv.g_basis = BasisSpec::parse(g_basis[t]);
    levels.push_back(std::move(lv));
  }
  FitOptions o;
  for (const auto& th : theta) {
    if (th)
      o.kernels.emplace_back(matern52(*th, nugget));
    else
      o.kernels.emplace_back(std::nullopt);
  }
  if (objective == "reml")
    o.search.objective = ThetaObjective::Reml;
  else if (objective == "loo_cv")
    o.search.objective = ThetaObjective::LooCv;
  else
    throw InvalidHyperparameter("objective must be 'reml' or 'loo_cv'");
  o.search.restarts = restarts;
  o.search.seed = seed;
  o.auto_nugget = nugget;
  return fit(std::move(levels), o);
}

py::tuple predict_py(const MultiFidelityModel& model, const Design& points, const std::string& mode) {
  const std::vector<Prediction> p = predict_batch(model, points, mode_of(mode));
  Eigen::VectorXd mean(p.size()), var(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    mean[i] = p[i].top_mean();
    var[i] = p[i].top_variance();
  }
  return py::make_tuple(mean, var);
}

py::dict cv_py(const MultiFidelityModel& model, int removal_depth, const std::string& mode, int folds,
               std::uint64_t seed, bool reestimate_trend, bool reestimate_variance) {
  const int n = model.data.back().n();
  const int depth = removal_depth <= 0 ? model.levels() : removal_depth;
  CVRequest req = folds <= 0 ? CVRequest::leave_one_out(n, depth) : CVRequest::k_fold(n, folds, seed, depth);
  req.mode = mode_of(mode);
  req.reestimate_trend = reestimate_trend;
  req.reestimate_variance = reestimate_variance;
  const CVReport r = fast_cv(model, req);
  Eigen::VectorXd err(n), var(n);
  for (const auto& f : r.folds)
    for (std::size_t i = 0; i < f.indices.size(); ++i) {
      err[f.indices[i]] = f.errors[i];
      var[f.indices[i]] = f.variances[i];
    }
  py::dict out;
  out["errors"] = err;
  out["variances"] = var;
  out["rmse"] = r.rmse;
  return out;
}

EvalSet eval_set(const Eigen::VectorXd& truth, const Eigen::VectorXd& mean, const Eigen::VectorXd& var) {
  return EvalSet{truth, mean, var};
}

}  // namespace

PYBIND11_MODULE(_mfk, m) {
  m.doc() = "Recursive multi-fidelity co-kriging";
  static py::exception<Error> base(m, "MfkError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  py::class_<MultiFidelityModel>(m, "Model")
      .def_property_readonly("levels", &MultiFidelityModel::levels)
      .def_property_readonly("dim", &MultiFidelityModel::dim)
      .def_property_readonly("warnings", [](const MultiFidelityModel& mm) { return mm.warnings; })
      .def("sigma2_eml", &MultiFidelityModel::sigma2_eml)
      .def("trend", [](const MultiFidelityModel& mm, int t) { return mm.fitted.at(t).trend_mean; })
      .def("theta", [](const MultiFidelityModel& mm, int t) { return mm.fitted.at(t).kernel.theta; })
      .def("applied_nugget", [](const MultiFidelityModel& mm, int t) { return mm.fitted.at(t).applied_nugget(); })
      .def("posterior", [](const MultiFidelityModel& mm, int t) {
        const auto& f = mm.fitted.at(t);
        return py::make_tuple(f.Q, f.a);
      })
      .def("predict", &predict_py, py::arg("points"), py::arg("mode") = "simple")
      .def("save", [](const MultiFidelityModel& mm, const std::string& path) { save_model(path, mm, Provenance{}); });

  m.def("fit", &fit_py, py::arg("levels"), py::arg("theta") = std::vector<std::optional<Eigen::VectorXd>>{},
        py::arg("f_basis") = std::vector<std::string>{}, py::arg("g_basis") = std::vector<std::string>{},
        py::arg("objective") = "reml", py::arg("restarts") = 10, py::arg("seed") = 0, py::arg("nugget") = 1e-10);
  m.def("load", [](const std::string& path) { return load_model(path); });
  m.def("cross_validate", &cv_py, py::arg("model"), py::arg("removal_depth") = 0, py::arg("mode") = "simple",
        py::arg("folds") = 0, py::arg("seed") = 0, py::arg("reestimate_trend") = true,
        py::arg("reestimate_variance") = true);
  m.def(
      "nested_design",
      [](const std::vector<int>& sizes, const std::vector<std::pair<double, double>>& bounds, const std::string& method,
         std::uint64_t seed) {
        DesignRequest req;
        req.sizes = sizes;
        for (const auto& b : bounds) req.bounds.push_back(Interval{b.first, b.second});
        if (method == "lhs")
          req.method = DesignMethod::Lhs;
        else if (method == "maximin_lhs")
          req.method = DesignMethod::MaximinLhs;
        else if (method == "random")
          req.method = DesignMethod::Random;
        else
          throw InvalidHyperparameter("method must be lhs, maximin_lhs or random");
        return nest(req);
      },
      py::arg("sizes"), py::arg("bounds"), py::arg("method") = "maximin_lhs", py::arg("seed") = 0);
  m.def("rmse", [](const Eigen::VectorXd& t, const Eigen::VectorXd& p) { return rmse(eval_set(t, p, {})); });
  m.def("maxae", [](const Eigen::VectorXd& t, const Eigen::VectorXd& p) { return maxae(eval_set(t, p, {})); });
  m.def("q2", [](const Eigen::VectorXd& t, const Eigen::VectorXd& p) { return q2(eval_set(t, p, {})); });
  m.def("rimse", [](const Eigen::VectorXd& v) { return rimse(eval_set({}, {}, v)); });
  m.def("forrester_high", py::vectorize(&forrester_high));
  m.def("forrester_low", py::vectorize(&forrester_low));
}
