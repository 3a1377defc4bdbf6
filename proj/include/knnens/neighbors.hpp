#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "knnens/point_set.hpp"

namespace knnens {

struct Neighbor {
  double distance = 0.0;
  std::size_t row = 0;
};

/// Exact Euclidean k-nearest-neighbor index over one PointSet.
///
/// A static kd-tree (median splits on the widest axis, leaf buckets). Sets
/// smaller than `kBruteForceBelow` points are kept in a single leaf, which
/// makes every query a linear scan. Neighbors are ordered by (distance, row),
/// so equal distances resolve to the lower row index.
///
/// Immutable after construction; concurrent queries are safe.
class NeighborIndex {
 public:
  static constexpr std::size_t kBruteForceBelow = 64;
  static constexpr std::size_t kLeafSize = 16;

  explicit NeighborIndex(PointSet points);

  std::size_t size() const noexcept { return points_.size(); }
  std::size_t dim() const noexcept { return points_.dim(); }
  const PointSet& points() const noexcept { return points_; }

  /// The k nearest reference rows to `query`, sorted by (distance, row).
  /// `exclude_row`, when set, is never reported.
  std::vector<Neighbor> nearest(std::span<const double> query, std::size_t k,
                                std::optional<std::size_t> exclude_row = std::nullopt) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t split_dim = 0;
    double split_value = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  PointSet points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

NeighborIndex build_index(PointSet points);

/// Distance from `query` to its k-th nearest reference point (k is 1-based).
///
/// With `exclude_self`, the query must be a member of the indexed set: the
/// lowest-index row at distance zero is dropped and k is checked against
/// M = size - 1. Throws ParameterError when k is outside [1, M].
double kth_nn_distance(const NeighborIndex& index, std::span<const double> query, std::size_t k,
                       bool exclude_self);

/// Leave-one-out k-th neighbor distance of indexed row `row` (M = size - 1).
double kth_nn_distance_of_member(const NeighborIndex& index, std::size_t row, std::size_t k);

/// Volume of the d-dimensional Euclidean unit ball, pi^(d/2) / Gamma(d/2 + 1).
double unit_ball_volume(std::size_t d);

enum class DensityMode { robust, strict };

/// Radii at or below this are treated as degenerate.
inline constexpr double kMinRadius = 1e-12;

/// k / (m * c_d * rho^d).
///
/// Robust mode clamps rho to kMinRadius and increments `*degeneracies` (when
/// non-null); strict mode throws DegeneracyError instead.
double knn_density(double rho, std::size_t k, std::size_t m, std::size_t d, DensityMode mode,
                   std::size_t* degeneracies = nullptr);

}  // namespace knnens
