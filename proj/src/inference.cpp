#include "knnens/inference.hpp"

#include <cmath>
#include <numeric>
#include <limits>
#include <string>

#include "knnens/errors.hpp"
#include "knnens/parallel.hpp"
#include "knnens/rng.hpp"
#include "knnens/stats.hpp"

namespace knnens {
namespace {

PointSet resample(const PointSet& points, std::uint64_t key) {
  CounterRng rng(key);
  std::vector<std::size_t> rows(points.size());
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(points.size()));
  return points.select(rows);
}

PointSet pooled(const PointSet& x, const PointSet& y) {
  if (x.dim() != y.dim()) throw ParameterError("x and y differ in dimension");
  std::vector<double> coords(x.data().begin(), x.data().end());
  coords.insert(coords.end(), y.data().begin(), y.data().end());
  return PointSet(std::move(coords), x.dim());
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ParameterError("level must lie in (0, 1), got " + std::to_string(level));
  }
}

}  // namespace

InferenceResult normal_inference(double estimate, double std_error, double level,
                                 double null_value) {
  check_level(level);
  if (!(std_error >= 0.0) || !std::isfinite(std_error)) {
    throw ParameterError("standard error must be finite and nonnegative");
  }
  InferenceResult r;
  r.estimate = estimate;
  r.std_error = std_error;
  r.level = level;
  r.null_value = null_value;
  const double half = normal_quantile(0.5 * (1.0 + level)) * std_error;
  r.ci_low = estimate - half;
  r.ci_high = estimate + half;
  const double diff = estimate - null_value;
  if (std_error > 0.0) {
    r.z_score = diff / std_error;
  } else if (diff == 0.0) {
    r.z_score = 0.0;
  } else {
    r.z_score = std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  r.p_value = two_sided_p_value(r.z_score);
  r.reject = r.p_value < 1.0 - level;
  return r;
}

double bootstrap_replicate(const PointSet& x, const PointSet& y, const EnsemblePlan& plan,
                           const FunctionalSpec& spec, std::uint64_t replicate_seed,
                           DensityMode mode) {
  const PointSet xb = resample(x, derive_seed(replicate_seed, {0}));
  const PointSet yb = resample(y, derive_seed(replicate_seed, {1}));
  const std::size_t kmax = plan.schedule.max_k();
  const NeighborTable table(xb, yb, kmax, kmax);
  return evaluate_plan(plan, table, spec, mode).value;
}

std::vector<double> bootstrap_replicates(const PointSet& x, const PointSet& y,
                                         const EnsembleConfig& config, const FunctionalSpec& spec,
                                         int reps, std::uint64_t seed, DensityMode mode,
                                         unsigned threads) {
  if (reps < 10) throw ParameterError("bootstrap needs reps >= 10, got " + std::to_string(reps));
  const EnsemblePlan plan = plan_ensemble(config, x.size(), y.size());
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), threads, [&](std::size_t r) {
    values[r] = bootstrap_replicate(x, y, plan, spec, derive_seed(seed, {r}), mode);
  });
  return values;
}

double bootstrap_std(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                     const FunctionalSpec& spec, int reps, std::uint64_t seed, DensityMode mode,
                     unsigned threads) {
  return sample_std(bootstrap_replicates(x, y, config, spec, reps, seed, mode, threads));
}

double permutation_replicate(const PointSet& pool, std::size_t n_x, const EnsemblePlan& plan,
                             const FunctionalSpec& spec, std::uint64_t replicate_seed,
                             DensityMode mode) {
  CounterRng rng(replicate_seed);
  std::vector<std::size_t> rows(pool.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t i = rows.size() - 1; i > 0; --i) {
    std::swap(rows[i], rows[static_cast<std::size_t>(rng.below(i + 1))]);
  }
  const std::span<const std::size_t> all(rows);
  const std::size_t kmax = plan.schedule.max_k();
  const NeighborTable table(pool.select(all.first(n_x)), pool.select(all.subspan(n_x)), kmax, kmax);
  return evaluate_plan(plan, table, spec, mode).value;
}

std::vector<double> permutation_replicates(const PointSet& x, const PointSet& y,
                                           const EnsembleConfig& config, const FunctionalSpec& spec,
                                           int reps, std::uint64_t seed, DensityMode mode,
                                           unsigned threads) {
  if (reps < 10) throw ParameterError("permutation needs reps >= 10, got " + std::to_string(reps));
  const PointSet pool = pooled(x, y);
  const EnsemblePlan plan = plan_ensemble(config, x.size(), y.size());
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), threads, [&](std::size_t r) {
    values[r] = permutation_replicate(pool, x.size(), plan, spec, derive_seed(seed, {r}), mode);
  });
  return values;
}

double permutation_std(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                       const FunctionalSpec& spec, int reps, std::uint64_t seed, DensityMode mode,
                       unsigned threads) {
  return sample_std(permutation_replicates(x, y, config, spec, reps, seed, mode, threads));
}

InferenceResult confidence_interval(const PointSet& x, const PointSet& y,
                                    const EnsembleConfig& config, const FunctionalSpec& spec,
                                    double level, int reps, std::uint64_t seed, double null_value,
                                    DensityMode mode, unsigned threads) {
  check_level(level);
  const double estimate = ensemble_estimate(x, y, config, spec, mode, threads).value;
  const double se = bootstrap_std(x, y, config, spec, reps, seed, mode, threads);
  InferenceResult r = normal_inference(estimate, se, level, null_value);
  r.bootstrap_reps = reps;
  return r;
}

InferenceResult two_sample_test(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                                const FunctionalSpec& spec, std::optional<double> null_value,
                                double level, int reps, std::uint64_t seed, DensityMode mode,
                                unsigned threads) {
  check_level(level);
  if (!null_value) null_value = spec.diagonal_value;
  if (!null_value) {
    throw ParameterError("functional '" + spec.name +
                         "' has no constant g(t, t); pass an explicit null value");
  }
  const double estimate = ensemble_estimate(x, y, config, spec, mode, threads).value;
  const double se = permutation_std(x, y, config, spec, reps, seed, mode, threads);
  if (se == 0.0 && estimate != *null_value) {
    throw DegeneracyError("two_sample_test: zero standard error with estimate != null value");
  }
  InferenceResult r = normal_inference(estimate, se, 1.0 - level, *null_value);
  r.bootstrap_reps = reps;
  return r;
}

}  // namespace knnens
