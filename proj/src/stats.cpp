#include "knnens/stats.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "knnens/errors.hpp"

namespace knnens {
namespace {

double neumaier_sum(std::span<const double> values, double shift) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double x = v - shift;
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal_quantile: p must lie in (0, 1)");

  // Coefficients from P. J. Acklam, "An algorithm for computing the inverse
  // normal cumulative distribution function".
  static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                              -2.759285104469687e+02, 1.383577518672690e+02,
                                              -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                              -1.556989798598866e+02, 6.680131188771972e+01,
                                              -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                              -2.400758277161838e+00, -2.549732539343734e+00,
                                              4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley step.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double two_sided_p_value(double z) {
  return std::erfc(std::abs(z) / std::numbers::sqrt2);
}

double stable_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double shift = values.front();
  return shift + neumaier_sum(values, shift) / static_cast<double>(values.size());
}

Moments population_moments(std::span<const double> values) {
  Moments m;
  if (values.empty()) return m;
  m.mean = stable_mean(values);
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double x = (v - m.mean) * (v - m.mean);
    const double t = sum + x;
    comp += (sum >= x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  m.variance = (sum + comp) / static_cast<double>(values.size());
  return m;
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const Moments m = population_moments(values);
  const double n = static_cast<double>(values.size());
  return std::sqrt(m.variance * n / (n - 1.0));
}

}  // namespace knnens
