#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knnens/neighbors.hpp"
#include "knnens/point_set.hpp"

namespace knnens {

/// A divergence functional G(f1, f2) = integral of g(f1(x), f2(x)) f2(x) dx,
/// represented by its integrand g(t1, t2).
struct FunctionalSpec {
  std::string name;
  std::vector<double> params;
  std::function<double(double, double)> eval;
  /// g is plausibly Lipschitz once densities are bounded away from 0 and infinity.
  bool lipschitz_hint = false;
  /// Value of g(t, t) when it does not depend on t; the no-difference null.
  std::optional<double> diagonal_value;

  double operator()(double t1, double t2) const { return eval(t1, t2); }
};

/// Built-in functionals:
///   renyi_integral (params {alpha}, alpha not 0 or 1): (t1/t2)^alpha
///   kl:              (t1/t2) ln(t1/t2)
///   reverse_kl:      ln(t2/t1)
///   l2:              (t1 - t2)^2 / t2
///   shannon_entropy: -ln(t2)
/// "custom" must go through custom_functional().
FunctionalSpec make_functional(std::string_view name, std::span<const double> params = {});

FunctionalSpec custom_functional(std::string name, std::function<double(double, double)> g,
                                 bool lipschitz_hint = false,
                                 std::optional<double> diagonal_value = std::nullopt);

/// Density arguments of g are clamped into [kMinDensity, kMaxDensity] in robust mode.
inline constexpr double kMinDensity = 1e-12;
inline constexpr double kMaxDensity = 1e12;

struct PluginEstimate {
  double value = 0.0;
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  /// Neighbor radii clamped to kMinRadius.
  std::size_t degeneracy_count = 0;
  /// Density arguments clamped into [kMinDensity, kMaxDensity].
  std::size_t clamp_count = 0;
};

/// Sorted neighbor distances for every point of the f2 sample `x`:
/// the first `k1_max` distances into the f1 sample `y`, and the first
/// `k2_max` distances into `x` with the point itself left out.
///
/// One table serves plug-in estimates for every k1 <= k1_max, k2 <= k2_max.
class NeighborTable {
 public:
  NeighborTable(const PointSet& x, const PointSet& y, std::size_t k1_max, std::size_t k2_max,
                unsigned threads = 1);

  std::size_t n1() const noexcept { return n1_; }
  std::size_t n2() const noexcept { return n2_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t k1_max() const noexcept { return k1_max_; }
  std::size_t k2_max() const noexcept { return k2_max_; }

  /// k-th (1-based) neighbor distance of x_i into y.
  double cross(std::size_t i, std::size_t k) const noexcept {
    return cross_[i * k1_max_ + (k - 1)];
  }
  /// k-th (1-based) leave-one-out neighbor distance of x_i within x.
  double self(std::size_t i, std::size_t k) const noexcept {
    return self_[i * k2_max_ + (k - 1)];
  }

 private:
  std::size_t n1_, n2_, dim_, k1_max_, k2_max_;
  std::vector<double> cross_;
  std::vector<double> self_;
};

/// Plug-in estimate from a precomputed table.
PluginEstimate plugin_estimate(const NeighborTable& table, std::size_t k1, std::size_t k2,
                               const FunctionalSpec& spec, DensityMode mode = DensityMode::robust);

/// Leave-one-out k-NN plug-in estimate of G(f1, f2).
///
/// Roles are asymmetric: `x` holds the N2 samples of f2 (the outer average and
/// the leave-one-out density, M2 = N2 - 1) and `y` holds the N1 samples of f1
/// (M1 = N1).
PluginEstimate plugin_estimate(const PointSet& x, const PointSet& y, std::size_t k1,
                               std::size_t k2, const FunctionalSpec& spec,
                               DensityMode mode = DensityMode::robust, unsigned threads = 1);

}  // namespace knnens
