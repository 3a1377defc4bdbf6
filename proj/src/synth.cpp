#include "knnens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "knnens/errors.hpp"
#include "knnens/parallel.hpp"
#include "knnens/rng.hpp"
#include "knnens/stats.hpp"

namespace knnens {
namespace detail {

const GaussLegendre16& gauss_legendre16() {
  static const GaussLegendre16 rule = [] {
    GaussLegendre16 r{};
    constexpr int n = 16;
    for (int i = 0; i < n; ++i) {
      // Newton iteration on P_n from the Chebyshev-like initial guess.
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      r.nodes[i] = x;
      r.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
  }();
  return rule;
}

namespace {

double panel(double (*fn)(const void*, double), const void* ctx, double a, double b) {
  const auto& rule = gauss_legendre16();
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 16; ++i) s += rule.weights[i] * fn(ctx, mid + half * rule.nodes[i]);
  return s * half;
}

constexpr std::size_t kMaxPanels = std::size_t{1} << 20;

struct Panel {
  double a, b, value, error;
};

bool smaller_error(const Panel& x, const Panel& y) { return x.error < y.error; }

}  // namespace

// Global refinement: the panel with the largest error estimate is split until
// the summed estimate meets tol. A panel's estimate compares the rule on the
// panel with the rule on its two halves.
double integrate_impl(double (*fn)(const void*, double), const void* ctx, double a, double b,
                      double tol) {
  auto make = [&](double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    const double whole = panel(fn, ctx, lo, hi);
    const double halves = panel(fn, ctx, lo, mid) + panel(fn, ctx, mid, hi);
    return Panel{lo, hi, halves, std::abs(halves - whole)};
  };
  auto total_error = [](const std::vector<Panel>& ps) {
    double e = 0.0;
    for (const auto& p : ps) e += p.error;
    return e;
  };
  std::vector<Panel> heap{make(a, b)};
  double error = heap.front().error;
  while (!(error <= tol)) {
    if (!std::isfinite(error)) throw SolverError("integrate: non-finite integrand");
    if (heap.size() >= kMaxPanels) {
      throw SolverError("integrate: tolerance not reached at 2^20 panels");
    }
    std::pop_heap(heap.begin(), heap.end(), smaller_error);
    const Panel worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw SolverError("integrate: tolerance not reached before panels became unsplittable");
    }
    error -= worst.error;
    for (const Panel& half : {make(worst.a, mid), make(mid, worst.b)}) {
      heap.push_back(half);
      std::push_heap(heap.begin(), heap.end(), smaller_error);
      error += half.error;
    }
    if (error <= tol) error = total_error(heap);  // confirm without running-sum drift
  }
  double total = 0.0;
  for (const auto& p : heap) total += p.value;
  return total;
}

}  // namespace detail

double TruncatedGaussianSpec::sigma() const { return std::sqrt(variance); }

TruncatedGaussianSpec TruncatedGaussianSpec::isotropic(std::size_t d, double mean,
                                                       double variance) {
  TruncatedGaussianSpec spec{std::vector<double>(d, mean), variance};
  spec.validate();
  return spec;
}

void TruncatedGaussianSpec::validate() const {
  if (mean.empty()) throw ConfigurationError("truncated Gaussian needs d >= 1");
  for (double m : mean) {
    if (!std::isfinite(m)) throw ConfigurationError("truncated Gaussian mean must be finite");
  }
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw ConfigurationError("truncated Gaussian variance must be positive");
  }
}

double truncation_mass(double mu, double sigma) {
  return normal_cdf((1.0 - mu) / sigma) - normal_cdf(-mu / sigma);
}

double truncated_normal_pdf(double x, double mu, double sigma) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi) * truncation_mass(mu, sigma));
}

double truncated_gaussian_density(const TruncatedGaussianSpec& spec, std::span<const double> point) {
  if (point.size() != spec.dim()) throw ParameterError("density: dimension mismatch");
  const double sigma = spec.sigma();
  double p = 1.0;
  for (std::size_t j = 0; j < point.size(); ++j) p *= truncated_normal_pdf(point[j], spec.mean[j], sigma);
  return p;
}

PointSet sample_truncated_gaussian(const TruncatedGaussianSpec& spec, std::size_t n,
                                   std::uint64_t seed, unsigned threads) {
  spec.validate();
  if (n == 0) throw ParameterError("sample_truncated_gaussian: n must be >= 1");
  const double sigma = spec.sigma();
  for (double mu : spec.mean) {
    const double mass = truncation_mass(mu, sigma);
    if (mass < 1e-6) {
      throw ConfigurationError("acceptance probability " + std::to_string(mass) +
                               " below 1e-6 for mean " + std::to_string(mu));
    }
  }
  const std::size_t d = spec.dim();
  std::vector<double> coords(n * d);
  parallel_for(n, threads, [&](std::size_t i) {
    CounterRng rng(derive_seed(seed, {i}));
    for (std::size_t j = 0; j < d; ++j) {
      double v;
      do {
        v = spec.mean[j] + sigma * rng.normal();
      } while (v < 0.0 || v > 1.0);
      coords[i * d + j] = v;
    }
  });
  return PointSet(std::move(coords), d);
}

double true_renyi_integral(const TruncatedGaussianSpec& spec1, const TruncatedGaussianSpec& spec2,
                           double alpha) {
  spec1.validate();
  spec2.validate();
  if (spec1.dim() != spec2.dim()) throw ParameterError("true_renyi_integral: dimension mismatch");
  if (!std::isfinite(alpha) || alpha == 0.0 || alpha == 1.0) {
    throw ParameterError("true_renyi_integral: alpha must be finite and not 0 or 1");
  }
  const double s1 = spec1.sigma(), s2 = spec2.sigma();

  auto factor = [&](double mu1, double mu2) {
    if (mu1 == mu2 && s1 == s2) return 1.0;  // integrand is the normalized f2
    return integrate(
        [&](double x) {
          return std::pow(truncated_normal_pdf(x, mu1, s1), alpha) *
                 std::pow(truncated_normal_pdf(x, mu2, s2), 1.0 - alpha);
        },
        0.0, 1.0, 1e-10);
  };

  bool homogeneous = true;
  for (std::size_t j = 1; j < spec1.dim(); ++j) {
    homogeneous = homogeneous && spec1.mean[j] == spec1.mean[0] && spec2.mean[j] == spec2.mean[0];
  }
  if (homogeneous) {
    return std::pow(factor(spec1.mean[0], spec2.mean[0]), static_cast<double>(spec1.dim()));
  }
  double value = 1.0;
  for (std::size_t j = 0; j < spec1.dim(); ++j) value *= factor(spec1.mean[j], spec2.mean[j]);
  return value;
}

McTruth mc_truth(const TruncatedGaussianSpec& spec1, const TruncatedGaussianSpec& spec2,
                 const FunctionalSpec& functional, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 10000) throw ParameterError("mc_truth: n_mc must be >= 10^4");
  if (spec1.dim() != spec2.dim()) throw ParameterError("mc_truth: dimension mismatch");
  spec1.validate();
  spec2.validate();

  // Streamed in chunks; point i is drawn exactly as sample_truncated_gaussian would.
  constexpr std::size_t kChunk = 1 << 16;
  double shift = 0.0;
  double sum = 0.0, comp = 0.0, sum_sq = 0.0;
  for (std::size_t start = 0; start < n_mc; start += kChunk) {
    const std::size_t count = std::min(kChunk, n_mc - start);
    const PointSet pts = sample_truncated_gaussian(spec2, count, derive_seed(seed, {start}));
    for (std::size_t i = 0; i < count; ++i) {
      const auto p = pts.row(i);
      const double v = functional(truncated_gaussian_density(spec1, p),
                                  truncated_gaussian_density(spec2, p));
      if (start == 0 && i == 0) shift = v;
      const double x = v - shift;
      const double t = sum + x;
      comp += (std::abs(sum) >= std::abs(x)) ? (sum - t) + x : (x - t) + sum;
      sum = t;
      sum_sq += x * x;
    }
  }
  const double n = static_cast<double>(n_mc);
  const double mean_shifted = (sum + comp) / n;
  const double var = std::max(0.0, sum_sq / n - mean_shifted * mean_shifted);
  McTruth out;
  out.value = shift + mean_shifted;
  out.std_error = std::sqrt(var * n / (n - 1.0) / n);
  out.samples = n_mc;
  return out;
}

}  // namespace knnens
