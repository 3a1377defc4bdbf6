#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knnens/ensemble.hpp"
#include "knnens/functionals.hpp"
#include "knnens/point_set.hpp"

namespace knnens {

/// Grid of (d, N, estimator) cells, each run for `trials` fresh draws of
/// f1 = TG(mean1, variance) and f2 = TG(mean2, variance) on the unit cube.
struct ExperimentConfig {
  std::vector<std::size_t> dims = {7};
  std::vector<std::size_t> n_grid = {100, 200, 400, 800, 1600};
  int trials = 200;
  /// Subset of {"plugin", "odin1", "odin2"}.
  std::vector<std::string> estimators = {"plugin", "odin1", "odin2"};
  FunctionalSpec functional = make_functional("renyi_integral", std::vector<double>{0.5});

  double mean1 = 0.7;
  double mean2 = 0.3;
  double variance = 0.1;

  /// Templates for the ensembles; d and n are filled per cell.
  EnsembleConfig odin1 = EnsembleConfig::odin1_defaults(1, 2);
  EnsembleConfig odin2 = EnsembleConfig::odin2_defaults(1, 2);
  /// Plug-in k; 0 means round(sqrt(N)).
  std::size_t plugin_k = 0;

  DensityMode mode = DensityMode::robust;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// When false, wall_time_ms is written as 0 so output is reproducible byte for byte.
  bool timing = true;
  /// Monte Carlo sample count for truths without a quadrature oracle.
  std::size_t mc_samples = 1000000;

  void validate() const;
};

struct ResultRow {
  std::size_t d = 0;
  std::size_t n = 0;
  std::string estimator;
  int trials = 0;
  double mean_estimate = 0.0;
  double true_value = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double wall_time_ms = 0.0;
  /// Empty unless the cell failed; statistics are NaN then.
  std::string error;
  /// Per-trial estimates in trial order (not serialized).
  std::vector<double> estimates;
};

/// Ground truth for the configured densities and functional: product
/// quadrature for renyi_integral, mc_truth otherwise.
double experiment_truth(const ExperimentConfig& config, std::size_t d);

/// Rows ordered by d, then N, then the order of `config.estimators`.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

/// Ordinary least-squares slope of log(mse) against log(n). Needs at least
/// three rows, all with positive mse.
double fit_loglog_slope(const std::vector<ResultRow>& rows);

/// The rows of one estimator and dimension, then fit_loglog_slope.
double fit_loglog_slope(const std::vector<ResultRow>& rows, const std::string& estimator,
                        std::size_t d);

enum class OutputFormat { csv, json };

inline constexpr const char* kCsvHeader =
    "d,n,estimator,trials,mean_estimate,true_value,bias,variance,mse,wall_time_ms";

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_json(std::ostream& out, const std::vector<ResultRow>& rows);

/// Writes rows to `path` ("-" for stdout). Throws std::runtime_error on I/O failure.
void emit(const std::vector<ResultRow>& rows, OutputFormat format, const std::string& path);

/// Points from a headerless CSV file, one point per line.
PointSet read_points_csv(const std::string& path, bool skip_header = false);

}  // namespace knnens
