#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "knnens/bench.hpp"
#include "knnens/ensemble.hpp"
#include "knnens/errors.hpp"
#include "knnens/functionals.hpp"
#include "knnens/inference.hpp"
#include "knnens/neighbors.hpp"
#include "knnens/synth.hpp"

namespace py = pybind11;
using namespace knnens;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointSet to_points(const Array& a, const char* name) {
  if (a.ndim() == 1) {
    return PointSet(std::vector<double>(a.data(), a.data() + a.size()), 1);
  }
  if (a.ndim() != 2) throw ParameterError(std::string(name) + " must be a 1-d or 2-d array");
  return PointSet(std::vector<double>(a.data(), a.data() + a.size()), static_cast<std::size_t>(a.shape(1)));
}

py::array_t<double> to_array(const PointSet& p) {
  py::array_t<double> out({p.size(), p.dim()});
  std::copy(p.data().begin(), p.data().end(), out.mutable_data());
  return out;
}

FunctionalSpec functional(const std::string& name, double alpha) {
  if (name == "renyi_integral") return make_functional(name, std::vector<double>{alpha});
  return make_functional(name);
}

EnsembleConfig ensemble_config(const std::string& mode, std::size_t d, std::size_t n,
                               const std::optional<std::vector<double>>& l_values, double delta, int nu,
                               double eta, const std::string& solver, std::size_t k_min) {
  EnsembleConfig c;
  if (mode == "odin1") {
    c = EnsembleConfig::odin1_defaults(d, n);
  } else if (mode == "odin2") {
    c = EnsembleConfig::odin2_defaults(d, n);
  } else {
    throw ConfigurationError("mode must be odin1 or odin2, got '" + mode + "'");
  }
  if (l_values) c.l_values = *l_values;
  c.delta = delta;
  c.nu = nu;
  c.eta = eta;
  if (solver == "exact") {
    c.solver = WeightSolver::exact;
  } else if (solver == "relaxed") {
    c.solver = WeightSolver::relaxed;
  } else {
    throw ConfigurationError("solver must be exact or relaxed, got '" + solver + "'");
  }
  c.k_min = k_min;
  return c;
}

DensityMode density_mode(bool strict) { return strict ? DensityMode::strict : DensityMode::robust; }

py::dict inference_dict(const InferenceResult& r) {
  py::dict d;
  d["estimate"] = r.estimate;
  d["std_error"] = r.std_error;
  d["ci_low"] = r.ci_low;
  d["ci_high"] = r.ci_high;
  d["z_score"] = r.z_score;
  d["p_value"] = r.p_value;
  d["null_value"] = r.null_value;
  d["level"] = r.level;
  d["reject"] = r.reject;
  d["bootstrap_reps"] = r.bootstrap_reps;
  return d;
}

#define ENSEMBLE_ARGS                                                                          \
  py::arg("mode") = "odin1", py::arg("l_values") = py::none(), py::arg("delta") = 0.5,         \
      py::arg("nu") = 2, py::arg("eta") = 1.0, py::arg("solver") = "relaxed", py::arg("k_min") = 3

}  // namespace

PYBIND11_MODULE(_knnens, m) {
  m.doc() = "k-NN plug-in and weighted-ensemble estimators of density functionals";

  py::register_exception<DegeneracyError>(m, "DegeneracyError", PyExc_ArithmeticError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.def(
      "kth_nn_distance",
      [](const Array& points, const Array& queries, std::size_t k) {
        const PointSet ref = to_points(points, "points");
        const PointSet q = to_points(queries, "queries");
        if (q.dim() != ref.dim()) throw ParameterError("queries and points differ in dimension");
        const NeighborIndex index = build_index(ref);
        std::vector<double> out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) out[i] = kth_nn_distance(index, q.row(i), k, false);
        return py::array_t<double>(static_cast<py::ssize_t>(out.size()), out.data());
      },
      py::arg("points"), py::arg("queries"), py::arg("k"),
      "Distance from each query row to its k-th nearest row of points.");

  m.def(
      "plugin_estimate",
      [](const Array& x, const Array& y, std::size_t k1, std::size_t k2, const std::string& name, double alpha,
         bool strict) {
        const PluginEstimate e =
            plugin_estimate(to_points(x, "x"), to_points(y, "y"), k1, k2, functional(name, alpha), density_mode(strict));
        return e.value;
      },
      py::arg("x"), py::arg("y"), py::arg("k1"), py::arg("k2"), py::arg("functional") = "renyi_integral",
      py::arg("alpha") = 0.5, py::arg("strict") = false,
      "Leave-one-out k-NN plug-in estimate. x is the f2 sample, y the f1 sample.");

  m.def(
      "ensemble_weights",
      [](std::size_t d, std::size_t n, const std::string& mode, const std::optional<std::vector<double>>& l_values,
         double delta, int nu, double eta, const std::string& solver, std::size_t k_min) {
        const EnsemblePlan plan =
            plan_ensemble(ensemble_config(mode, d, n, l_values, delta, nu, eta, solver, k_min), n, n);
        py::dict out;
        std::vector<double> l;
        std::vector<std::size_t> k;
        for (const auto& e : plan.schedule.entries) {
          l.push_back(e.l);
          k.push_back(e.k);
        }
        out["l"] = l;
        out["k"] = k;
        out["weights"] = plan.weights.weights;
        out["residuals"] = plan.weights.residuals;
        out["objective"] = plan.weights.objective;
        out["warnings"] = plan.warnings;
        return out;
      },
      py::arg("d"), py::arg("n"), ENSEMBLE_ARGS, "k schedule and ensemble weights for dimension d and size n.");

  m.def(
      "estimate",
      [](const Array& x, const Array& y, const std::string& name, double alpha, const std::string& mode,
         const std::optional<std::vector<double>>& l_values, double delta, int nu, double eta,
         const std::string& solver, std::size_t k_min, bool strict, unsigned threads) {
        const PointSet px = to_points(x, "x"), py_ = to_points(y, "y");
        const EnsembleConfig c =
            ensemble_config(mode, px.dim(), px.size(), l_values, delta, nu, eta, solver, k_min);
        const EstimateReport r = ensemble_estimate(px, py_, c, functional(name, alpha), density_mode(strict), threads);
        py::dict out;
        out["value"] = r.value;
        std::vector<std::size_t> k;
        std::vector<double> per_k;
        for (const auto& e : r.per_k) {
          k.push_back(e.k);
          per_k.push_back(e.value);
        }
        out["k"] = k;
        out["per_k"] = per_k;
        out["weights"] = r.weights.weights;
        out["warnings"] = r.warnings;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("functional") = "renyi_integral", py::arg("alpha") = 0.5, ENSEMBLE_ARGS,
      py::arg("strict") = false, py::arg("threads") = 1,
      "Weighted-ensemble estimate. x is the f2 sample, y the f1 sample.");

  m.def(
      "confidence_interval",
      [](const Array& x, const Array& y, const std::string& name, double alpha, double level, int reps,
         std::uint64_t seed, const std::string& mode, const std::optional<std::vector<double>>& l_values,
         double delta, int nu, double eta, const std::string& solver, std::size_t k_min, bool strict,
         unsigned threads) {
        const PointSet px = to_points(x, "x"), py_ = to_points(y, "y");
        const EnsembleConfig c =
            ensemble_config(mode, px.dim(), px.size(), l_values, delta, nu, eta, solver, k_min);
        return inference_dict(confidence_interval(px, py_, c, functional(name, alpha), level, reps, seed, 0.0,
                                                  density_mode(strict), threads));
      },
      py::arg("x"), py::arg("y"), py::arg("functional") = "renyi_integral", py::arg("alpha") = 0.5,
      py::arg("level") = 0.95, py::arg("reps") = 200, py::arg("seed") = 1, ENSEMBLE_ARGS, py::arg("strict") = false,
      py::arg("threads") = 1, "Ensemble estimate with a bootstrap normal interval.");

  m.def(
      "two_sample_test",
      [](const Array& x, const Array& y, const std::string& name, double alpha, std::optional<double> null_value,
         double level, int reps, std::uint64_t seed, const std::string& mode,
         const std::optional<std::vector<double>>& l_values, double delta, int nu, double eta,
         const std::string& solver, std::size_t k_min, bool strict, unsigned threads) {
        const PointSet px = to_points(x, "x"), py_ = to_points(y, "y");
        const EnsembleConfig c =
            ensemble_config(mode, px.dim(), px.size(), l_values, delta, nu, eta, solver, k_min);
        return inference_dict(two_sample_test(px, py_, c, functional(name, alpha), null_value, level, reps, seed,
                                              density_mode(strict), threads));
      },
      py::arg("x"), py::arg("y"), py::arg("functional") = "kl", py::arg("alpha") = 0.5,
      py::arg("null_value") = py::none(), py::arg("level") = 0.05, py::arg("reps") = 200, py::arg("seed") = 1,
      ENSEMBLE_ARGS, py::arg("strict") = false, py::arg("threads") = 1,
      "Two-sided test that the functional equals its no-difference value. The standard error comes from random relabellings of the pooled sample.");

  m.def(
      "sample_truncated_gaussian",
      [](std::size_t d, std::size_t n, double mean, double variance, std::uint64_t seed, unsigned threads) {
        return to_array(sample_truncated_gaussian(TruncatedGaussianSpec::isotropic(d, mean, variance), n, seed, threads));
      },
      py::arg("d"), py::arg("n"), py::arg("mean") = 0.5, py::arg("variance") = 0.1, py::arg("seed") = 1,
      py::arg("threads") = 1, "Draws from N(mean, variance I) truncated to the unit cube.");

  m.def(
      "true_renyi_integral",
      [](std::size_t d, double mean1, double mean2, double variance, double alpha) {
        return true_renyi_integral(TruncatedGaussianSpec::isotropic(d, mean1, variance),
                                   TruncatedGaussianSpec::isotropic(d, mean2, variance), alpha);
      },
      py::arg("d"), py::arg("mean1") = 0.7, py::arg("mean2") = 0.3, py::arg("variance") = 0.1,
      py::arg("alpha") = 0.5, "Quadrature value of the Renyi-alpha integral for two truncated Gaussians.");

  m.def(
      "run_experiment",
      [](std::vector<std::size_t> dims, std::vector<std::size_t> n_grid, int trials,
         std::vector<std::string> estimators, const std::string& name, double alpha, std::uint64_t seed,
         unsigned threads) {
        ExperimentConfig c;
        c.dims = std::move(dims);
        c.n_grid = std::move(n_grid);
        c.trials = trials;
        c.estimators = std::move(estimators);
        c.functional = functional(name, alpha);
        c.seed = seed;
        c.threads = threads;
        py::list rows;
        for (const auto& r : run_experiment(c)) {
          py::dict d;
          d["d"] = r.d;
          d["n"] = r.n;
          d["estimator"] = r.estimator;
          d["trials"] = r.trials;
          d["mean_estimate"] = r.mean_estimate;
          d["true_value"] = r.true_value;
          d["bias"] = r.bias;
          d["variance"] = r.variance;
          d["mse"] = r.mse;
          d["wall_time_ms"] = r.wall_time_ms;
          d["error"] = r.error;
          rows.append(d);
        }
        return rows;
      },
      py::arg("dims") = std::vector<std::size_t>{7},
      py::arg("n_grid") = std::vector<std::size_t>{100, 200, 400, 800, 1600}, py::arg("trials") = 200,
      py::arg("estimators") = std::vector<std::string>{"plugin", "odin1", "odin2"},
      py::arg("functional") = "renyi_integral", py::arg("alpha") = 0.5, py::arg("seed") = 1, py::arg("threads") = 1,
      "Monte Carlo bias/variance/MSE table over (d, N, estimator).");
}
