#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "knnens/functionals.hpp"
#include "knnens/point_set.hpp"

namespace knnens {

/// Isotropic Gaussian N(mean, variance * I) truncated to the unit cube [0,1]^d.
struct TruncatedGaussianSpec {
  std::vector<double> mean;
  double variance = 0.1;

  std::size_t dim() const noexcept { return mean.size(); }
  double sigma() const;

  static TruncatedGaussianSpec isotropic(std::size_t d, double mean, double variance);
  void validate() const;
};

/// Probability mass of N(mu, sigma^2) on [0, 1].
double truncation_mass(double mu, double sigma);

/// Density of N(mu, sigma^2) truncated to [0, 1]; zero outside.
double truncated_normal_pdf(double x, double mu, double sigma);

/// Product density of a TruncatedGaussianSpec at `point`.
double truncated_gaussian_density(const TruncatedGaussianSpec& spec, std::span<const double> point);

/// n i.i.d. draws. Point i uses its own CounterRng stream derive_seed(seed, {i});
/// each coordinate is a normal draw rejected until it lands in [0, 1].
/// Throws ConfigurationError when a coordinate's acceptance probability is
/// below 1e-6.
PointSet sample_truncated_gaussian(const TruncatedGaussianSpec& spec, std::size_t n,
                                   std::uint64_t seed, unsigned threads = 1);

/// Adaptive Gauss-Legendre quadrature of f on [a, b] to absolute tolerance
/// `tol`. Panels are bisected until a 16-point rule on the panel agrees with
/// the rule on its two halves. Throws SolverError past 2^20 panels.
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-10);

/// Integral of f1^alpha f2^(1-alpha) over the cube, using the product
/// structure: one 1-d quadrature per coordinate, multiplied together.
double true_renyi_integral(const TruncatedGaussianSpec& spec1, const TruncatedGaussianSpec& spec2,
                           double alpha);

struct McTruth {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Monte Carlo estimate of the mean of g(f1(X), f2(X)) with X ~ f2, using
/// the closed-form truncated densities. Requires n_mc >= 10^4.
McTruth mc_truth(const TruncatedGaussianSpec& spec1, const TruncatedGaussianSpec& spec2,
                 const FunctionalSpec& functional, std::size_t n_mc, std::uint64_t seed);

namespace detail {
struct GaussLegendre16 {
  double nodes[16];
  double weights[16];
};
const GaussLegendre16& gauss_legendre16();
double integrate_impl(double (*fn)(const void*, double), const void* ctx, double a, double b,
                      double tol);
}  // namespace detail

template <typename F>
double integrate(F&& f, double a, double b, double tol) {
  using Fn = std::remove_reference_t<F>;
  return detail::integrate_impl(
      [](const void* ctx, double x) { return (*static_cast<const Fn*>(ctx))(x); }, &f, a, b, tol);
}

}  // namespace knnens
