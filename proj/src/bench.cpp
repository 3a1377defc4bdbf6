#include "knnens/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "knnens/errors.hpp"
#include "knnens/parallel.hpp"
#include "knnens/rng.hpp"
#include "knnens/stats.hpp"
#include "knnens/synth.hpp"

namespace knnens {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string num17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_num(double v) { return std::isfinite(v) ? num17(v) : "null"; }

std::size_t plugin_k_for(const ExperimentConfig& config, std::size_t n) {
  const std::size_t k = config.plugin_k != 0
                            ? config.plugin_k
                            : static_cast<std::size_t>(std::round(std::sqrt(static_cast<double>(n))));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dims.empty()) throw ConfigurationError("experiment needs at least one dimension");
  for (auto d : dims) {
    if (d == 0) throw ConfigurationError("dimensions must be >= 1");
  }
  if (n_grid.empty()) throw ConfigurationError("experiment needs at least one sample size");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw ConfigurationError("sample sizes must be >= 2");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) {
      throw ConfigurationError("n grid must be strictly increasing");
    }
  }
  if (trials < 1) throw ConfigurationError("trials must be >= 1");
  if (estimators.empty()) throw ConfigurationError("experiment needs at least one estimator");
  for (const auto& e : estimators) {
    if (e != "plugin" && e != "odin1" && e != "odin2") {
      throw ConfigurationError("unknown estimator '" + e + "' (plugin, odin1, odin2)");
    }
  }
  if (!functional.eval) throw ConfigurationError("experiment functional has no evaluator");
  if (!(variance > 0.0)) throw ConfigurationError("variance must be positive");
}

double experiment_truth(const ExperimentConfig& config, std::size_t d) {
  const auto f1 = TruncatedGaussianSpec::isotropic(d, config.mean1, config.variance);
  const auto f2 = TruncatedGaussianSpec::isotropic(d, config.mean2, config.variance);
  if (config.functional.name == "renyi_integral") {
    return true_renyi_integral(f1, f2, config.functional.params.at(0));
  }
  return mc_truth(f1, f2, config.functional, config.mc_samples, derive_seed(config.seed, {d, 0xC0FFEE}))
      .value;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<ResultRow> rows;
  const auto trials = static_cast<std::size_t>(config.trials);

  for (std::size_t d : config.dims) {
    const auto f1 = TruncatedGaussianSpec::isotropic(d, config.mean1, config.variance);
    const auto f2 = TruncatedGaussianSpec::isotropic(d, config.mean2, config.variance);
    const double truth = experiment_truth(config, d);

    for (std::size_t n : config.n_grid) {
      const std::size_t n_est = config.estimators.size();
      std::vector<ResultRow> cell(n_est);
      std::vector<std::optional<EnsemblePlan>> plans(n_est);
      std::size_t kmax = 0;
      for (std::size_t e = 0; e < n_est; ++e) {
        ResultRow& row = cell[e];
        row.d = d;
        row.n = n;
        row.estimator = config.estimators[e];
        row.trials = config.trials;
        row.true_value = truth;
        try {
          if (row.estimator == "plugin") {
            kmax = std::max(kmax, plugin_k_for(config, n));
          } else {
            EnsembleConfig ec = row.estimator == "odin1" ? config.odin1 : config.odin2;
            ec.d = d;
            ec.n = n;
            plans[e] = plan_ensemble(ec, n, n);
            kmax = std::max(kmax, plans[e]->schedule.max_k());
          }
        } catch (const std::exception& ex) {
          row.error = ex.what();
        }
      }

      // values[e][t]; per-trial times so the reduction is independent of scheduling.
      std::vector<std::vector<double>> values(n_est, std::vector<double>(trials, 0.0));
      std::vector<std::vector<double>> times(n_est, std::vector<double>(trials, 0.0));
      std::vector<std::vector<std::string>> errors(n_est, std::vector<std::string>(trials));
      if (kmax > 0) {
        parallel_for(trials, config.threads, [&](std::size_t t) {
          const auto start = Clock::now();
          const PointSet y = sample_truncated_gaussian(f1, n, derive_seed(config.seed, {d, n, t, 1}));
          const PointSet x = sample_truncated_gaussian(f2, n, derive_seed(config.seed, {d, n, t, 2}));
          const NeighborTable table(x, y, kmax, kmax);
          const double shared_ms = ms_since(start);
          for (std::size_t e = 0; e < n_est; ++e) {
            if (!cell[e].error.empty()) continue;
            const auto est_start = Clock::now();
            try {
              if (plans[e]) {
                values[e][t] = evaluate_plan(*plans[e], table, config.functional, config.mode).value;
              } else {
                const std::size_t k = plugin_k_for(config, n);
                values[e][t] = plugin_estimate(table, k, k, config.functional, config.mode).value;
              }
            } catch (const std::exception& ex) {
              errors[e][t] = ex.what();
            }
            times[e][t] = shared_ms + ms_since(est_start);
          }
        });
      }

      for (std::size_t e = 0; e < n_est; ++e) {
        ResultRow& row = cell[e];
        if (row.error.empty()) {
          for (std::size_t t = 0; t < trials; ++t) {
            if (!errors[e][t].empty()) {
              row.error = "trial " + std::to_string(t) + ": " + errors[e][t];
              break;
            }
          }
        }
        if (!row.error.empty()) {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          row.mean_estimate = row.bias = row.variance = row.mse = nan;
          rows.push_back(std::move(row));
          continue;
        }
        const Moments m = population_moments(values[e]);
        std::vector<double> sq(trials);
        for (std::size_t t = 0; t < trials; ++t) {
          const double err = values[e][t] - truth;
          sq[t] = err * err;
        }
        row.mean_estimate = m.mean;
        row.bias = m.mean - truth;
        row.variance = m.variance;
        row.mse = stable_mean(sq);
        if (config.timing) {
          double total = 0.0;
          for (double v : times[e]) total += v;
          row.wall_time_ms = total;
        }
        row.estimates = std::move(values[e]);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

double fit_loglog_slope(const std::vector<ResultRow>& rows) {
  if (rows.size() < 3) {
    throw ParameterError("fit_loglog_slope: need at least 3 rows, got " + std::to_string(rows.size()));
  }
  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    if (!(r.mse > 0.0) || r.n == 0) {
      throw ParameterError("fit_loglog_slope: mse must be positive (n=" + std::to_string(r.n) + ")");
    }
    lx.push_back(std::log(static_cast<double>(r.n)));
    ly.push_back(std::log(r.mse));
  }
  const double mx = stable_mean(lx), my = stable_mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw ParameterError("fit_loglog_slope: all rows share one n");
  return sxy / sxx;
}

double fit_loglog_slope(const std::vector<ResultRow>& rows, const std::string& estimator,
                        std::size_t d) {
  std::vector<ResultRow> picked;
  for (const auto& r : rows) {
    if (r.estimator == estimator && r.d == d) picked.push_back(r);
  }
  return fit_loglog_slope(picked);
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.d << ',' << r.n << ',' << r.estimator << ',' << r.trials << ','
        << num17(r.mean_estimate) << ',' << num17(r.true_value) << ',' << num17(r.bias) << ','
        << num17(r.variance) << ',' << num17(r.mse) << ',' << num17(r.wall_time_ms) << '\n';
  }
}

void write_json(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << '[';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << (i ? ",\n " : "\n ") << "{\"d\": " << r.d << ", \"n\": " << r.n
        << ", \"estimator\": \"" << r.estimator << "\", \"trials\": " << r.trials
        << ", \"mean_estimate\": " << json_num(r.mean_estimate)
        << ", \"true_value\": " << json_num(r.true_value) << ", \"bias\": " << json_num(r.bias)
        << ", \"variance\": " << json_num(r.variance) << ", \"mse\": " << json_num(r.mse)
        << ", \"wall_time_ms\": " << json_num(r.wall_time_ms) << '}';
  }
  out << (rows.empty() ? "]\n" : "\n]\n");
}

void emit(const std::vector<ResultRow>& rows, OutputFormat format, const std::string& path) {
  auto write = [&](std::ostream& os) {
    if (format == OutputFormat::csv) {
      write_csv(os, rows);
    } else {
      write_json(os, rows);
    }
  };
  if (path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
  write(file);
  file.flush();
  if (!file) throw std::runtime_error("write to '" + path + "' failed");
}

PointSet read_points_csv(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<double> coords;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  if (skip_header && std::getline(in, line)) ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        throw ParameterError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      if (field.find_first_not_of(" \t", used) != std::string::npos) {
        throw ParameterError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      coords.push_back(v);
      ++count;
    }
    if (dim == 0) dim = count;
    if (count != dim) {
      throw ParameterError(path + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(dim) + " columns, got " + std::to_string(count));
    }
  }
  if (coords.empty()) throw ParameterError(path + ": no points");
  return PointSet(std::move(coords), dim);
}

}  // namespace knnens
