#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace knnens {

/// A batch of N samples in d dimensions, stored row-major.
///
/// Construction validates N >= 1, d >= 1 and that every coordinate is finite.
class PointSet {
 public:
  PointSet(std::vector<double> coords, std::size_t dim);

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {coords_.data() + i * dim_, dim_};
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return coords_[i * dim_ + j];
  }

  std::span<const double> data() const noexcept { return coords_; }

  /// Rows picked by index (with repetition allowed); used for resampling.
  PointSet select(std::span<const std::size_t> rows) const;

 private:
  std::vector<double> coords_;
  std::size_t dim_ = 0;
  std::size_t n_ = 0;
};

}  // namespace knnens
