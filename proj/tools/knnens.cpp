// knnens: command-line front end for k-NN ensemble divergence estimation.
//
//   knnens estimate --x f2.csv --y f1.csv [--functional kl] [--level 0.95]
//   knnens bench    --dims 7 --n-grid 100,200,400 --trials 200 --out mse.csv
//   knnens weights  --mode odin1 --d 7 --n 1600
//   knnens truth    --dims 7 --alpha 0.5

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "knnens/bench.hpp"
#include "knnens/ensemble.hpp"
#include "knnens/functionals.hpp"
#include "knnens/inference.hpp"
#include "knnens/synth.hpp"

namespace {

using namespace knnens;

struct Options {
  // functional
  std::string functional = "renyi_integral";
  double alpha = 0.5;
  // ensemble
  std::string mode = "odin1";
  std::optional<double> l_min, l_max;
  std::optional<std::size_t> l_count;
  std::vector<double> l_list;
  double delta = 0.5;
  int nu = 2;
  double eta = 1.0;
  std::string solver = "relaxed";
  std::size_t k_min = 3;
  std::size_t plugin_k = 0;
  bool strict = false;
  // densities
  double mean1 = 0.7, mean2 = 0.3, variance = 0.1;
  // run
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string format = "csv";
  std::string out = "-";
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FunctionalSpec functional_from(const Options& o) {
  if (o.functional == "renyi_integral") return make_functional(o.functional, std::vector<double>{o.alpha});
  return make_functional(o.functional);
}

EnsembleConfig ensemble_from(const Options& o, EnsembleMode mode, std::size_t d, std::size_t n,
                             bool apply_l_flags) {
  EnsembleConfig c = mode == EnsembleMode::odin1 ? EnsembleConfig::odin1_defaults(d, n)
                                                 : EnsembleConfig::odin2_defaults(d, n);
  if (apply_l_flags) {
    if (!o.l_list.empty()) {
      c.l_values = o.l_list;
    } else if (o.l_min || o.l_max || o.l_count) {
      const double lo = o.l_min.value_or(c.l_values.front());
      const double hi = o.l_max.value_or(c.l_values.back());
      c.l_values = linspace(lo, hi, o.l_count.value_or(c.l_values.size()));
    }
  }
  c.delta = o.delta;
  c.nu = o.nu;
  c.eta = o.eta;
  c.solver = o.solver == "exact" ? WeightSolver::exact : WeightSolver::relaxed;
  c.k_min = o.k_min;
  return c;
}

EnsembleMode mode_from(const Options& o) {
  return o.mode == "odin2" ? EnsembleMode::odin2 : EnsembleMode::odin1;
}

void add_functional_options(CLI::App& app, Options& o) {
  app.add_option("--functional", o.functional, "renyi_integral, kl, reverse_kl, l2, shannon_entropy")
      ->check(CLI::IsMember({"renyi_integral", "kl", "reverse_kl", "l2", "shannon_entropy"}))
      ->capture_default_str();
  app.add_option("--alpha", o.alpha, "Renyi alpha")->capture_default_str();
}

void add_ensemble_options(CLI::App& app, Options& o) {
  app.add_option("--mode", o.mode, "Ensemble construction the l flags apply to")
      ->check(CLI::IsMember({"odin1", "odin2"}))
      ->capture_default_str();
  auto* lmin = app.add_option("--l-min", o.l_min, "Smallest l (linear grid)");
  auto* lmax = app.add_option("--l-max", o.l_max, "Largest l (linear grid)");
  auto* lcount = app.add_option("--l-count", o.l_count, "Number of l values (linear grid)");
  app.add_option("--l-list", o.l_list, "Explicit l values")
      ->delimiter(',')
      ->excludes(lmin)
      ->excludes(lmax)
      ->excludes(lcount);
  app.add_option("--delta", o.delta, "odin2 schedule exponent")->capture_default_str();
  app.add_option("--nu", o.nu, "odin2 order nu")->capture_default_str();
  app.add_option("--eta", o.eta, "Relaxed-program bias/variance trade-off")->capture_default_str();
  app.add_option("--solver", o.solver, "Weight program")
      ->check(CLI::IsMember({"exact", "relaxed"}))
      ->capture_default_str();
  app.add_option("--k-min", o.k_min, "Smallest k after rounding")->capture_default_str();
  app.add_flag("--strict", o.strict, "Fail on degenerate neighbor distances instead of clamping");
}

void add_density_options(CLI::App& app, Options& o) {
  app.add_option("--mean1", o.mean1, "Per-coordinate mean of f1")->capture_default_str();
  app.add_option("--mean2", o.mean2, "Per-coordinate mean of f2")->capture_default_str();
  app.add_option("--variance", o.variance, "Isotropic variance of both densities")->capture_default_str();
}

void add_run_options(CLI::App& app, Options& o) {
  app.add_option("--seed", o.seed, "RNG seed")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_option("--out", o.out, "Output path, - for stdout")->capture_default_str();
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

template <typename Write>
void with_output(const std::string& path, Write&& write) {
  if (path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
  write(file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-NN plug-in and weighted ensemble estimators of divergence functionals"};
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
  app.require_subcommand(1);
  Options o;

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate a functional from two CSV samples, with a bootstrap interval");
  std::string x_path, y_path;
  bool header = false;
  double level = 0.95;
  int reps = 200;
  std::optional<double> null_value;
  est->add_option("--x", x_path, "Sample of f2 (outer average, leave-one-out density)")->required();
  est->add_option("--y", y_path, "Sample of f1")->required();
  est->add_flag("--header", header, "Skip the first line of each file");
  est->add_option("--level", level, "Interval coverage")->capture_default_str();
  est->add_option("--reps", reps, "Bootstrap replicates (0 disables the interval)")->capture_default_str();
  est->add_option("--null", null_value, "Null value for the z test (default: g(t,t) of the functional, else 0)");
  est->add_option("--k", o.plugin_k, "Use the plug-in estimator with this k instead of the ensemble");
  add_functional_options(*est, o);
  add_ensemble_options(*est, o);
  add_run_options(*est, o);

  // bench
  auto* bench = app.add_subcommand("bench", "Monte Carlo MSE experiment over a (d, N, estimator) grid");
  ExperimentConfig exp;
  bool no_timing = false;
  bench->add_option("--dims", exp.dims, "Dimensions")->delimiter(',');
  bench->add_option("--n-grid", exp.n_grid, "Sample sizes, strictly increasing")->delimiter(',');
  bench->add_option("--trials", exp.trials, "Trials per cell")->capture_default_str();
  bench->add_option("--estimators", exp.estimators, "plugin, odin1, odin2")->delimiter(',');
  bench->add_option("--k", o.plugin_k, "Plug-in k (default round(sqrt(N)))");
  bench->add_option("--mc-samples", exp.mc_samples, "Monte Carlo size for non-Renyi truths")->capture_default_str();
  bench->add_flag("--no-timing", no_timing, "Write wall_time_ms as 0");
  add_functional_options(*bench, o);
  add_ensemble_options(*bench, o);
  add_density_options(*bench, o);
  add_run_options(*bench, o);

  // weights
  auto* weights = app.add_subcommand("weights", "Print the solved ensemble weights for a configuration");
  std::size_t wd = 7, wn = 1600;
  weights->add_option("--d", wd, "Dimension")->capture_default_str();
  weights->add_option("--n", wn, "Sample size N")->capture_default_str();
  add_ensemble_options(*weights, o);
  add_run_options(*weights, o);

  // truth
  auto* truth = app.add_subcommand("truth", "Print the oracle value for the truncated Gaussian pair");
  std::vector<std::size_t> tdims = {7};
  std::size_t mc_samples = 0;
  truth->add_option("--dims", tdims, "Dimensions")->delimiter(',');
  truth->add_option("--mc-samples", mc_samples, "Also run the Monte Carlo oracle with this many samples");
  add_functional_options(*truth, o);
  add_density_options(*truth, o);
  truth->add_option("--seed", o.seed, "RNG seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const DensityMode dmode = o.strict ? DensityMode::strict : DensityMode::robust;

    if (est->parsed()) {
      const PointSet x = read_points_csv(x_path, header);
      const PointSet y = read_points_csv(y_path, header);
      const FunctionalSpec spec = functional_from(o);
      if (o.plugin_k != 0) {
        const PluginEstimate p = plugin_estimate(x, y, o.plugin_k, o.plugin_k, spec, dmode, o.threads);
        with_output(o.out, [&](std::ostream& os) {
          if (o.format == "json") {
            os << "{\"estimator\": \"plugin\", \"k\": " << p.k1 << ", \"value\": " << g17(p.value)
               << ", \"n1\": " << p.n1 << ", \"n2\": " << p.n2
               << ", \"degeneracy_count\": " << p.degeneracy_count << "}\n";
          } else {
            os << "estimator plugin\nk " << p.k1 << "\nvalue " << g17(p.value) << "\n";
          }
        });
        return 0;
      }
      const EnsembleConfig cfg = ensemble_from(o, mode_from(o), x.dim(), x.size(), true);
      const EstimateReport report = ensemble_estimate(x, y, cfg, spec, dmode, o.threads);
      std::optional<InferenceResult> inf;
      if (reps > 0) {
        const double null = null_value.value_or(spec.diagonal_value.value_or(0.0));
        const double se = bootstrap_std(x, y, cfg, spec, reps, o.seed, dmode, o.threads);
        inf = normal_inference(report.value, se, level, null);
        inf->bootstrap_reps = reps;
      }
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      with_output(o.out, [&](std::ostream& os) {
        if (o.format == "json") {
          os << "{\"estimator\": \"" << o.mode << "\", \"value\": " << g17(report.value)
             << ", \"objective\": " << g17(report.weights.objective) << ", \"per_k\": [";
          for (std::size_t i = 0; i < report.per_k.size(); ++i) {
            const auto& pk = report.per_k[i];
            os << (i ? ", " : "") << "{\"l\": " << g17(pk.l) << ", \"k\": " << pk.k
               << ", \"value\": " << g17(pk.value)
               << ", \"weight\": " << g17(report.weights.weights[i]) << '}';
          }
          os << ']';
          if (inf) {
            os << ", \"std_error\": " << g17(inf->std_error) << ", \"ci_low\": " << g17(inf->ci_low)
               << ", \"ci_high\": " << g17(inf->ci_high) << ", \"level\": " << g17(inf->level)
               << ", \"null_value\": " << g17(inf->null_value) << ", \"z_score\": " << g17(inf->z_score)
               << ", \"p_value\": " << g17(inf->p_value) << ", \"bootstrap_reps\": " << inf->bootstrap_reps;
          }
          os << "}\n";
        } else {
          os << "estimator " << o.mode << "\nvalue " << g17(report.value) << '\n';
          if (inf) {
            os << "std_error " << g17(inf->std_error) << "\nci " << g17(inf->ci_low) << ' '
               << g17(inf->ci_high) << " (level " << inf->level << ")\nz " << g17(inf->z_score)
               << " (null " << inf->null_value << ")\np " << g17(inf->p_value) << '\n';
          }
          os << "l,k,estimate,weight\n";
          for (std::size_t i = 0; i < report.per_k.size(); ++i) {
            const auto& pk = report.per_k[i];
            os << g17(pk.l) << ',' << pk.k << ',' << g17(pk.value) << ','
               << g17(report.weights.weights[i]) << '\n';
          }
        }
      });
      return 0;
    }

    if (bench->parsed()) {
      exp.functional = functional_from(o);
      exp.mean1 = o.mean1;
      exp.mean2 = o.mean2;
      exp.variance = o.variance;
      exp.odin1 = ensemble_from(o, EnsembleMode::odin1, 1, 2, o.mode == "odin1");
      exp.odin2 = ensemble_from(o, EnsembleMode::odin2, 1, 2, o.mode == "odin2");
      exp.plugin_k = o.plugin_k;
      exp.mode = dmode;
      exp.seed = o.seed;
      exp.threads = o.threads;
      exp.timing = !no_timing;
      std::cerr << "# " << command_line(argc, argv) << '\n';
      const auto rows = run_experiment(exp);
      emit(rows, o.format == "json" ? OutputFormat::json : OutputFormat::csv, o.out);
      for (const auto& r : rows) {
        if (!r.error.empty()) std::cerr << "error: d=" << r.d << " n=" << r.n << ' ' << r.estimator << ": " << r.error << '\n';
      }
      for (std::size_t d : exp.dims) {
        for (const auto& e : exp.estimators) {
          try {
            const double slope = fit_loglog_slope(rows, e, d);
            std::cerr << "# slope d=" << d << ' ' << e << ' ' << slope << '\n';
          } catch (const std::exception&) {
            // fewer than three usable rows
          }
        }
      }
      return 0;
    }

    if (weights->parsed()) {
      const EnsembleConfig cfg = ensemble_from(o, mode_from(o), wd, wn, true);
      const EnsemblePlan plan = plan_ensemble(cfg, wn, wn);
      for (const auto& w : plan.warnings) std::cerr << "warning: " << w << '\n';
      with_output(o.out, [&](std::ostream& os) {
        if (o.format == "json") {
          os << "{\"mode\": \"" << o.mode << "\", \"objective\": " << g17(plan.weights.objective)
             << ", \"iterations\": " << plan.weights.solver_iterations << ", \"weights\": [";
          for (std::size_t i = 0; i < plan.schedule.entries.size(); ++i) {
            const auto& e = plan.schedule.entries[i];
            os << (i ? ", " : "") << "{\"l\": " << g17(e.l) << ", \"k\": " << e.k
               << ", \"w\": " << g17(plan.weights.weights[i]) << '}';
          }
          os << "], \"residuals\": [";
          for (std::size_t i = 0; i < plan.basis.size(); ++i) {
            os << (i ? ", " : "") << "{\"basis\": \"" << plan.basis.entries[i].label
               << "\", \"gamma\": " << g17(plan.weights.residuals[i]) << '}';
          }
          os << "]}\n";
        } else {
          os << "# objective " << g17(plan.weights.objective) << " iterations "
             << plan.weights.solver_iterations << '\n';
          for (std::size_t i = 0; i < plan.basis.size(); ++i) {
            os << "# gamma[" << plan.basis.entries[i].label << "] " << g17(plan.weights.residuals[i]) << '\n';
          }
          os << "l,k,w\n";
          for (std::size_t i = 0; i < plan.schedule.entries.size(); ++i) {
            const auto& e = plan.schedule.entries[i];
            os << g17(e.l) << ',' << e.k << ',' << g17(plan.weights.weights[i]) << '\n';
          }
        }
      });
      return 0;
    }

    if (truth->parsed()) {
      const FunctionalSpec spec = functional_from(o);
      for (std::size_t d : tdims) {
        const auto f1 = TruncatedGaussianSpec::isotropic(d, o.mean1, o.variance);
        const auto f2 = TruncatedGaussianSpec::isotropic(d, o.mean2, o.variance);
        std::cout << "d " << d;
        if (spec.name == "renyi_integral") {
          std::cout << " quadrature " << g17(true_renyi_integral(f1, f2, o.alpha));
        }
        if (mc_samples > 0 || spec.name != "renyi_integral") {
          const McTruth mc = mc_truth(f1, f2, spec, mc_samples > 0 ? mc_samples : 1000000, o.seed);
          std::cout << " monte_carlo " << g17(mc.value) << " std_error " << g17(mc.std_error);
        }
        std::cout << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
