#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "knnens/ensemble.hpp"
#include "knnens/functionals.hpp"
#include "knnens/point_set.hpp"

namespace knnens {

struct InferenceResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z_score = 0.0;
  double p_value = 1.0;
  double null_value = 0.0;
  /// Coverage of [ci_low, ci_high].
  double level = 0.95;
  bool reject = false;
  /// Bootstrap or relabelling replicates behind std_error.
  int bootstrap_reps = 0;
};

/// Normal-theory interval estimate +/- z_{(1+level)/2} * std_error and the
/// two-sided z test of `null_value`. `reject` is set when p < 1 - level.
InferenceResult normal_inference(double estimate, double std_error, double level,
                                 double null_value = 0.0);

/// One bootstrap replicate: x and y resampled with replacement from the
/// streams derive_seed(replicate_seed, {0}) and derive_seed(replicate_seed, {1}).
double bootstrap_replicate(const PointSet& x, const PointSet& y, const EnsemblePlan& plan,
                           const FunctionalSpec& spec, std::uint64_t replicate_seed,
                           DensityMode mode = DensityMode::robust);

/// Ensemble estimates on `reps` bootstrap resamples. Replicate r uses
/// derive_seed(seed, {r}), so results do not depend on execution order.
std::vector<double> bootstrap_replicates(const PointSet& x, const PointSet& y,
                                         const EnsembleConfig& config, const FunctionalSpec& spec,
                                         int reps, std::uint64_t seed,
                                         DensityMode mode = DensityMode::robust,
                                         unsigned threads = 1);

/// Sample standard deviation of bootstrap replicates. Requires reps >= 10.
double bootstrap_std(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                     const FunctionalSpec& spec, int reps, std::uint64_t seed,
                     DensityMode mode = DensityMode::robust, unsigned threads = 1);

/// One relabelling replicate: the rows of `pool` are shuffled from the stream
/// `replicate_seed`; the first `n_x` become x and the rest y.
double permutation_replicate(const PointSet& pool, std::size_t n_x, const EnsemblePlan& plan,
                             const FunctionalSpec& spec, std::uint64_t replicate_seed,
                             DensityMode mode = DensityMode::robust);

/// Ensemble estimates after `reps` random relabellings of the pooled sample
/// x ∪ y, keeping the group sizes. Replicate r uses derive_seed(seed, {r}).
std::vector<double> permutation_replicates(const PointSet& x, const PointSet& y,
                                           const EnsembleConfig& config, const FunctionalSpec& spec,
                                           int reps, std::uint64_t seed,
                                           DensityMode mode = DensityMode::robust,
                                           unsigned threads = 1);

/// Sample standard deviation of relabelling replicates: the spread of the
/// estimate when f1 = f2. Requires reps >= 10.
double permutation_std(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                       const FunctionalSpec& spec, int reps, std::uint64_t seed,
                       DensityMode mode = DensityMode::robust, unsigned threads = 1);

/// Ensemble estimate with a bootstrap normal interval at coverage `level`.
InferenceResult confidence_interval(const PointSet& x, const PointSet& y,
                                    const EnsembleConfig& config, const FunctionalSpec& spec,
                                    double level, int reps, std::uint64_t seed,
                                    double null_value = 0.0,
                                    DensityMode mode = DensityMode::robust, unsigned threads = 1);

/// Two-sided test of G(f1, f2) = null_value at significance `level`
/// (reject when p < level). The null defaults to g(t, t) of the functional.
/// The standard error is permutation_std.
/// Throws DegeneracyError when the standard error is 0 and the estimate
/// differs from the null.
InferenceResult two_sample_test(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                                const FunctionalSpec& spec, std::optional<double> null_value,
                                double level, int reps, std::uint64_t seed,
                                DensityMode mode = DensityMode::robust, unsigned threads = 1);

}  // namespace knnens
