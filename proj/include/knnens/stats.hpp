#pragma once

#include <cstddef>
#include <span>

namespace knnens {

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile, p in (0, 1).
///
/// Acklam's rational approximation (relative error below 1.15e-9) followed by
/// one Halley refinement step against normal_cdf.
double normal_quantile(double p);

/// Two-sided p-value 2 * (1 - Phi(|z|)).
double two_sided_p_value(double z);

/// Mean accumulated in index order with Neumaier compensation around the
/// first element, so a constant sequence returns that constant exactly.
double stable_mean(std::span<const double> values);

/// Population mean and variance (divide by n).
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};
Moments population_moments(std::span<const double> values);

/// Sample standard deviation (divide by n - 1); 0 for fewer than 2 values.
double sample_std(std::span<const double> values);

}  // namespace knnens
