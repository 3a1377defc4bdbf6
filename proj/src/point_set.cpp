#include "knnens/point_set.hpp"

#include <cmath>
#include <string>

#include "knnens/errors.hpp"

namespace knnens {

PointSet::PointSet(std::vector<double> coords, std::size_t dim)
    : coords_(std::move(coords)), dim_(dim) {
  if (dim_ == 0) throw ParameterError("PointSet: dimension must be >= 1");
  if (coords_.empty()) throw ParameterError("PointSet: empty point set");
  if (coords_.size() % dim_ != 0) {
    throw ParameterError("PointSet: coordinate count " + std::to_string(coords_.size()) +
                         " is not a multiple of dimension " + std::to_string(dim_));
  }
  for (double v : coords_) {
    if (!std::isfinite(v)) throw ParameterError("PointSet: non-finite coordinate");
  }
  n_ = coords_.size() / dim_;
}

PointSet PointSet::select(std::span<const std::size_t> rows) const {
  std::vector<double> out;
  out.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    if (r >= n_) throw ParameterError("PointSet::select: row out of range");
    auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return PointSet(std::move(out), dim_);
}

}  // namespace knnens
