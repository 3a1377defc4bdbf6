// Acceptance suite: one [PASS]/[FAIL] line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "knnens/bench.hpp"
#include "knnens/ensemble.hpp"
#include "knnens/inference.hpp"
#include "knnens/neighbors.hpp"
#include "knnens/rng.hpp"
#include "knnens/stats.hpp"
#include "knnens/synth.hpp"

using namespace knnens;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
double ks_p_value(double statistic, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * statistic;
  if (lambda < 0.2) return 1.0;
  double p = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    p += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

double ks_statistic_normal(std::vector<double> z) {
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.timing = false;
  return c;
}

// 1. kd-tree exactness against brute force, including tie-breaks.
Outcome criterion_index() {
  std::mt19937_64 gen(101);
  const std::size_t dims[] = {1, 3, 7};
  std::size_t checks = 0;
  for (int set = 0; set < 50; ++set) {
    const std::size_t d = dims[set % 3];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(50, 2000)(gen);
    const bool lattice = set % 5 == 4;  // coarse grid forces exact ties
    std::vector<double> coords(n * d);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cell(0, 4);
    for (auto& c : coords) c = lattice ? cell(gen) * 0.25 : unit(gen);
    const PointSet points(coords, d);
    const NeighborIndex index = build_index(points);

    for (int q = 0; q < 100; ++q) {
      const bool member = q % 2 == 1;
      const std::size_t row = std::uniform_int_distribution<std::size_t>(0, n - 1)(gen);
      std::vector<double> query(d);
      for (std::size_t j = 0; j < d; ++j) {
        query[j] = member ? points(row, j) : (lattice ? cell(gen) * 0.25 + 0.125 * (q % 4 == 0) : unit(gen));
      }
      std::vector<std::pair<double, std::size_t>> brute;
      bool dropped = false;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (points(i, j) - query[j]) * (points(i, j) - query[j]);
        if (member && !dropped && s == 0.0) {
          dropped = true;  // lowest-index zero-distance row is the query itself
          continue;
        }
        brute.emplace_back(s, i);
      }
      std::sort(brute.begin(), brute.end());
      const std::size_t m = brute.size();
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(m, 40))(gen);
      const double got = kth_nn_distance(index, query, k, member);
      const double want = std::sqrt(brute[k - 1].first);
      if (std::abs(got - want) > 1e-12) {
        return {false, fmt("set %d query %d: distance %.17g vs brute force %.17g", set, q, got, want)};
      }
      // Identity: the index's k nearest rows equal brute force under (distance, row).
      std::vector<Neighbor> nn;
      if (member) {
        std::size_t self = 0;
        for (std::size_t i = 0; i < n; ++i) {
          bool same = true;
          for (std::size_t j = 0; j < d && same; ++j) same = points(i, j) == query[j];
          if (same) {
            self = i;
            break;
          }
        }
        nn = index.nearest(query, k, self);
      } else {
        nn = index.nearest(query, k);
      }
      for (std::size_t r = 0; r < k; ++r) {
        if (nn[r].row != brute[r].second) {
          return {false, fmt("set %d query %d: neighbor %zu is row %zu, brute force says %zu", set, q, r,
                             nn[r].row, brute[r].second)};
        }
      }
      ++checks;
    }
  }
  return {true, fmt("%zu queries over 50 point sets match brute force", checks)};
}

// 2. Weight solvers.
Outcome criterion_weights() {
  BasisSystem linear;
  linear.entries.push_back({"l", 1.0, -0.5});
  const std::vector<double> l3{1.0, 2.0, 3.0};
  const WeightSolution hand = solve_weights_exact(linear, l3);
  const double expect[] = {4.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(hand.weights[i] - expect[i]) > 1e-9) {
      return {false, fmt("hand instance weight %d = %.17g", i, hand.weights[i])};
    }
  }

  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_residual = 0.0, worst_sum = 0.0, worst_gap = 0.0;
  double worst_objective = 0.0;
  int instances = 0, compared = 0, bounded = 0;
  while (instances < 100) {
    // Bias-basis-like instances: up to four distinct exponents from a
    // separated grid, l spread over roughly [0.3, 3].
    static const std::vector<double> pool = {-1.0, -0.5, 0.5, 1.0, 1.5, 2.0};
    const std::size_t L = std::uniform_int_distribution<std::size_t>(2, 50)(gen);
    const std::size_t I = std::uniform_int_distribution<std::size_t>(0, std::min<std::size_t>(L - 1, 4))(gen);
    std::vector<double> exps = pool;
    std::shuffle(exps.begin(), exps.end(), gen);
    BasisSystem basis;
    for (std::size_t i = 0; i < I; ++i) basis.entries.push_back({"e", exps[i], -0.5 * unit(gen)});
    const std::vector<double> l = linspace(0.3 + 0.2 * unit(gen), 2.8 + 0.4 * unit(gen), L);
    {
      // Numerically full rank: condition number of the row-normalized
      // constraint matrix at most 1e8.
      Eigen::MatrixXd A(static_cast<Eigen::Index>(basis.size()) + 1, static_cast<Eigen::Index>(L));
      for (std::size_t j = 0; j < L; ++j) {
        A(0, j) = 1.0;
        for (std::size_t i = 0; i < basis.size(); ++i) A(i + 1, j) = basis.psi(i, l[j]);
      }
      for (Eigen::Index r = 0; r < A.rows(); ++r) A.row(r).normalize();
      const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues();
      if (sv(sv.size() - 1) < 1e-8 * sv(0)) continue;
    }
    WeightSolution exact;
    try {
      exact = solve_weights_exact(basis, l);
    } catch (const WeightSolverError&) {
      continue;  // not full rank; draw again
    }
    ++instances;
    double s = 0.0;
    for (double w : exact.weights) s += w;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    for (double r : exact.residuals) worst_residual = std::max(worst_residual, std::abs(r));

    // The exact weights are feasible for the relaxed program with objective
    // |w|^2 / eta, which bounds the relaxed optimum. The relaxed optimum moves
    // away from the exact weights by about that bound times the conditioning,
    // so weights are compared where |w|^2 <= 10.
    const WeightSolution relaxed = solve_weights_relaxed(basis, l, 100, 1e6);
    double norm2 = 0.0;
    for (double w : exact.weights) norm2 += w * w;
    if (norm2 / 1e6 <= 1e-4) {
      ++bounded;
      worst_objective = std::max(worst_objective, relaxed.objective);
    }
    if (norm2 <= 10.0) {
      ++compared;
      for (std::size_t j = 0; j < L; ++j) {
        worst_gap = std::max(worst_gap, std::abs(relaxed.weights[j] - exact.weights[j]));
      }
    }
  }
  const bool ok = worst_residual <= 1e-8 && worst_sum <= 1e-10 && worst_objective <= 1e-4 && worst_gap <= 1e-4;
  return {ok, fmt("hand weights exact; 100 instances: max residual %.2g, max |sum-1| %.2g; relaxed "
                  "objective max %.2g over %d instances, weight gap max %.2g over %d instances",
                  worst_residual, worst_sum, worst_objective, bounded, worst_gap, compared)};
}

// 3. Quadrature truth vs Monte Carlo truth, and the product identity.
Outcome criterion_oracle() {
  const auto f1 = TruncatedGaussianSpec::isotropic(1, 0.7, 0.1);
  const auto f2 = TruncatedGaussianSpec::isotropic(1, 0.3, 0.1);
  const double quad = true_renyi_integral(f1, f2, 0.5);
  const McTruth mc = mc_truth(f1, f2, make_functional("renyi_integral", std::vector<double>{0.5}), 10000000, 303);
  const double v7 = true_renyi_integral(TruncatedGaussianSpec::isotropic(7, 0.7, 0.1),
                                        TruncatedGaussianSpec::isotropic(7, 0.3, 0.1), 0.5);
  const double power_gap = std::abs(v7 - std::pow(quad, 7));
  const bool ok = std::abs(quad - mc.value) <= 1e-3 && power_gap <= 1e-9;
  return {ok, fmt("quadrature %.10f, Monte Carlo %.10f (se %.2g); |value(7) - value(1)^7| = %.2g", quad,
                  mc.value, mc.std_error, power_gap)};
}

// 4. Consistency at d=1, N=5000, with the bias terms cancelled exactly.
Outcome criterion_consistency() {
  ExperimentConfig c = default_experiment();
  c.dims = {1};
  c.n_grid = {5000};
  c.trials = 100;
  c.estimators = {"odin1"};
  c.odin1.solver = WeightSolver::exact;
  c.seed = 404;
  const ResultRow r = run_experiment(c).at(0);
  if (!r.error.empty()) return {false, r.error};
  const double se = std::sqrt(r.variance) / std::sqrt(100.0);
  const double gap = std::abs(r.mean_estimate - r.true_value);
  return {gap <= 3.0 * se,
          fmt("mean %.6f vs truth %.6f: |gap| %.2g, 3 standard errors %.2g", r.mean_estimate, r.true_value, gap,
              3.0 * se)};
}

// 5. Plug-in vs ensembles at d=7.
Outcome criterion_figure() {
  ExperimentConfig c = default_experiment();
  c.seed = 505;
  const auto rows = run_experiment(c);
  std::string table;
  for (const auto& r : rows) {
    if (!r.error.empty()) return {false, r.estimator + " N=" + std::to_string(r.n) + ": " + r.error};
  }
  auto mse_at = [&](const std::string& e) {
    for (const auto& r : rows) {
      if (r.estimator == e && r.n == 1600) return r.mse;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double plugin = mse_at("plugin"), odin1 = mse_at("odin1"), odin2 = mse_at("odin2");
  const double s_plugin = fit_loglog_slope(rows, "plugin", 7);
  const double s_odin1 = fit_loglog_slope(rows, "odin1", 7);
  const double s_odin2 = fit_loglog_slope(rows, "odin2", 7);
  const bool ok = odin1 < plugin && odin2 < plugin && s_odin1 <= s_plugin - 0.2;
  return {ok, fmt("MSE at N=1600: plugin %.3g, odin1 %.3g, odin2 %.3g; slopes plugin %.2f, odin1 %.2f, odin2 %.2f",
                  plugin, odin1, odin2, s_plugin, s_odin1, s_odin2)};
}

// 6. Normality of the standardized ensemble estimate.
Outcome criterion_clt() {
  ExperimentConfig c = default_experiment();
  c.dims = {3};
  c.n_grid = {1000};
  c.trials = 200;
  c.estimators = {"odin1"};
  c.seed = 606;
  const ResultRow r = run_experiment(c).at(0);
  if (!r.error.empty()) return {false, r.error};
  const double mean = stable_mean(r.estimates);
  const double sd = sample_std(r.estimates);
  std::vector<double> z;
  for (double v : r.estimates) z.push_back((v - mean) / sd);
  const double stat = ks_statistic_normal(z);
  const double p = ks_p_value(stat, z.size());
  return {p > 0.01, fmt("Kolmogorov-Smirnov D = %.4f, p = %.3f over 200 trials", stat, p)};
}

// 7. Size and power of the two-sample test.
constexpr int kNullReps = 50;
constexpr int kPowerReps = 20;

EnsembleConfig test_config(std::size_t n) {
  EnsembleConfig c = EnsembleConfig::odin1_defaults(2, n);
  c.eta = 5.0;
  return c;
}

Outcome criterion_calibration() {
  const auto f = TruncatedGaussianSpec::isotropic(2, 0.5, 0.1);
  const auto kl = make_functional("kl");
  int null_rejects = 0;
  for (int t = 0; t < 200; ++t) {
    const PointSet x = sample_truncated_gaussian(f, 800, derive_seed(707, {std::uint64_t(t), 2}));
    const PointSet y = sample_truncated_gaussian(f, 800, derive_seed(707, {std::uint64_t(t), 1}));
    const InferenceResult r = two_sample_test(x, y, test_config(800), kl, 0.0, 0.05,
                                              kNullReps, derive_seed(707, {std::uint64_t(t), 3}));
    null_rejects += r.reject;
  }
  const auto f1 = TruncatedGaussianSpec::isotropic(2, 0.7, 0.1);
  const auto f2 = TruncatedGaussianSpec::isotropic(2, 0.3, 0.1);
  const auto renyi = make_functional("renyi_integral", std::vector<double>{0.5});
  int power_rejects = 0;
  for (int t = 0; t < 100; ++t) {
    const PointSet x = sample_truncated_gaussian(f2, 2000, derive_seed(717, {std::uint64_t(t), 2}));
    const PointSet y = sample_truncated_gaussian(f1, 2000, derive_seed(717, {std::uint64_t(t), 1}));
    const InferenceResult r = two_sample_test(x, y, test_config(2000), renyi, 1.0, 0.05,
                                              kPowerReps, derive_seed(717, {std::uint64_t(t), 3}));
    power_rejects += r.reject;
  }
  const double size = null_rejects / 200.0;
  const double power = power_rejects / 100.0;
  const bool ok = size >= 0.01 && size <= 0.15 && power >= 0.9;
  return {ok, fmt("null rejection rate %.3f (%d reps), power %.2f (%d reps)", size, kNullReps, power, kPowerReps)};
}

// 8. The CLI is reproducible and thread independent.
std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

Outcome criterion_determinism() {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string base = std::string(KNNENS_CLI) +
                           " bench --dims 2 3 --n-grid 100 200 400 --trials 30 --seed 808 --no-timing";
  const auto a = dir / "knnens_acceptance_a.csv", b = dir / "knnens_acceptance_b.csv",
             c = dir / "knnens_acceptance_c.csv";
  auto run = [&](const std::string& extra, const std::filesystem::path& out) {
    const std::string cmd = base + " " + extra + " --out " + out.string() + " 2>/dev/null";
    return std::system(cmd.c_str());
  };
  if (run("--threads 1", a) != 0 || run("--threads 1", b) != 0 || run("--threads 4", c) != 0) {
    return {false, "bench command failed"};
  }
  const std::string sa = read_file(a), sb = read_file(b), sc = read_file(c);
  for (const auto& p : {a, b, c}) std::filesystem::remove(p);
  if (sa.empty() || sa != sb) return {false, "single-threaded runs differ"};
  const auto ra = parse_csv(sa), rc = parse_csv(sc);
  if (ra.size() != rc.size()) return {false, "threaded run has a different row count"};
  double worst = 0.0;
  for (std::size_t i = 1; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < ra[i].size(); ++j) {
      if (j <= 3) {
        if (ra[i][j] != rc[i][j]) return {false, "row keys differ at line " + std::to_string(i + 1)};
        continue;
      }
      const double x = std::stod(ra[i][j]), y = std::stod(rc[i][j]);
      worst = std::max(worst, std::abs(x - y));
    }
  }
  return {worst <= 1e-12, fmt("%zu rows byte-identical across runs; threaded max difference %.2g", ra.size() - 1,
                              worst)};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "index exactness", criterion_index},
      {2, "weight solvers", criterion_weights},
      {3, "oracle agreement", criterion_oracle},
      {4, "consistency", criterion_consistency},
      {5, "plug-in vs ensemble MSE", criterion_figure},
      {6, "normality of the ensemble estimate", criterion_clt},
      {7, "two-sample test calibration", criterion_calibration},
      {8, "determinism", criterion_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
