#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "knnens/errors.hpp"
#include "knnens/functionals.hpp"
#include "knnens/point_set.hpp"

namespace knnens {

enum class EnsembleMode { odin1, odin2 };
enum class WeightSolver { exact, relaxed };

/// Parameters of a weighted k-NN ensemble.
///
/// odin1 uses k(l) = l sqrt(N); odin2 uses k(l) = l N^delta and needs
/// nu >= ceil(1/delta) for the parametric rate. `eta` only affects the
/// relaxed solver.
struct EnsembleConfig {
  EnsembleMode mode = EnsembleMode::odin1;
  std::vector<double> l_values;
  std::size_t d = 1;
  std::size_t n = 0;
  double delta = 0.5;
  int nu = 2;
  double eta = 1.0;
  WeightSolver solver = WeightSolver::relaxed;
  std::size_t k_min = 3;

  /// l in linspace(0.3, 3, 50).
  static EnsembleConfig odin1_defaults(std::size_t d, std::size_t n);
  /// l = 1.4 + 0.1 i for i = 0..24.
  static EnsembleConfig odin2_defaults(std::size_t d, std::size_t n);

  /// Throws ConfigurationError on invalid settings; returns soft warnings.
  std::vector<std::string> validate() const;
};

std::vector<double> linspace(double lo, double hi, std::size_t count);

struct KChoice {
  double l = 0.0;
  std::size_t k = 0;
};

struct KSchedule {
  std::vector<KChoice> entries;
  std::vector<std::string> warnings;
  std::size_t max_k() const;
};

/// k(l) rounded half away from zero and clamped to [max(k_min, 1), k_cap].
/// `k_cap` defaults to M2 = n - 1. Colliding k values are kept and reported.
/// Throws ConfigurationError when L > 1 and every k collapses to one value.
KSchedule k_schedule(const EnsembleConfig& config, std::size_t k_cap = 0);

/// One bias term psi(l) phi(N) = l^l_exponent * N^n_exponent.
struct BasisEntry {
  std::string label;
  double l_exponent = 0.0;
  double n_exponent = 0.0;
};

struct BasisSystem {
  std::vector<BasisEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  double psi(std::size_t i, double l) const;
  double phi(std::size_t i, double n) const;
};

/// Bias basis for the ensemble mode. Throws ConfigurationError unless I < L.
///
/// odin1: psi_i = l^(i/d), phi_i = N^(-i/(2d)) for i = 1..d, plus
///        psi = l^(-1), phi = N^(-1/2).
/// odin2: every (j, q) with q <= nu, j + q/2 > 1/2 and
///        0 < (1 - delta) j / d + q delta / 2 < 1/2 gives
///        psi = l^(j/d - q/2), phi = N^(-(1 - delta) j / d - q delta / 2),
///        the l and N parts of (k/N)^(j/d) k^(-q/2) at k = l N^delta.
BasisSystem build_basis(const EnsembleConfig& config);

struct WeightSolution {
  std::vector<double> weights;
  /// gamma_w(i) = sum_l w(l) psi_i(l), per basis entry.
  std::vector<double> residuals;
  /// ||w||_2 for the exact program, achieved epsilon for the relaxed one.
  double objective = 0.0;
  int solver_iterations = 0;
};

/// Solver failure carrying the best iterate found.
class WeightSolverError : public SolverError {
 public:
  WeightSolverError(const std::string& what, WeightSolution best)
      : SolverError(what), best_(std::move(best)) {}
  const WeightSolution& best() const noexcept { return best_; }

 private:
  WeightSolution best_;
};

/// Minimum-norm weights with sum(w) = 1 and gamma_w(i) = 0 for every entry,
/// from the KKT system [2I A^T; A 0][w; lambda] = [0; b].
/// Throws WeightSolverError naming the dependent rows if A lacks full row rank.
WeightSolution solve_weights_exact(const BasisSystem& basis, std::span<const double> l_values);

/// min epsilon  s.t.  sum(w) = 1,
///                    |gamma_w(i) N^(1/2) phi_i(N)| <= epsilon,
///                    ||w||^2 <= eta epsilon,
/// solved in epigraph form by a primal log-barrier method with equality
/// constrained Newton steps (iterates stay on the sum(w) = 1 hyperplane).
WeightSolution solve_weights_relaxed(const BasisSystem& basis, std::span<const double> l_values,
                                     std::size_t n, double eta);

/// Schedule, basis and weights for one configuration. Depends only on the
/// configuration and the sample sizes, so it can be reused across trials.
struct EnsemblePlan {
  EnsembleConfig config;
  KSchedule schedule;
  BasisSystem basis;
  WeightSolution weights;
  std::vector<std::string> warnings;
};

/// `n2` is the f2 sample size used for k(l) and phi(N); `n1` caps k at M1.
EnsemblePlan plan_ensemble(const EnsembleConfig& config, std::size_t n2, std::size_t n1);

struct PerKEstimate {
  double l = 0.0;
  std::size_t k = 0;
  double value = 0.0;
};

struct EstimateReport {
  double value = 0.0;
  std::vector<PerKEstimate> per_k;
  WeightSolution weights;
  std::vector<std::string> warnings;
  std::size_t degeneracy_count = 0;
  std::size_t clamp_count = 0;
};

/// Weighted sum of per-k plug-in estimates for a precomputed plan. The table
/// must cover k up to plan.schedule.max_k().
EstimateReport evaluate_plan(const EnsemblePlan& plan, const NeighborTable& table,
                             const FunctionalSpec& spec, DensityMode mode = DensityMode::robust);

/// Ensemble estimate with k1 = k2 = k(l). `x` is the f2 sample, `y` the f1 sample.
EstimateReport ensemble_estimate(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                                 const FunctionalSpec& spec,
                                 DensityMode mode = DensityMode::robust, unsigned threads = 1);

}  // namespace knnens
