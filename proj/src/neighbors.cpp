#include "knnens/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <string>

#include "knnens/errors.hpp"

namespace knnens {
namespace {

struct Candidate {
  double dist2;
  std::size_t row;
  bool operator<(const Candidate& o) const noexcept {
    return dist2 < o.dist2 || (dist2 == o.dist2 && row < o.row);
  }
};

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

// Bounded max-heap of the best k candidates seen so far.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  bool full() const noexcept { return heap_.size() == k_; }
  double worst() const noexcept { return heap_.front().dist2; }

  void offer(Candidate c) {
    if (!full()) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Candidate> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

}  // namespace

NeighborIndex::NeighborIndex(PointSet points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * (points_.size() / kLeafSize + 1));
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t NeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  const std::size_t count = end - begin;
  const bool leaf = (id == 0 && points_.size() < kBruteForceBelow) || count <= kLeafSize;
  if (leaf) return id;

  // Split on the axis with the widest spread.
  const std::size_t d = points_.dim();
  std::size_t best_dim = 0;
  double best_spread = -1.0;
  for (std::size_t j = 0; j < d; ++j) {
    double lo = points_(order_[begin], j), hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      const double v = points_(order_[i], j);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = j;
    }
  }
  if (best_spread <= 0.0) return id;  // all points identical

  const std::uint32_t mid = begin + static_cast<std::uint32_t>(count / 2);
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double va = points_(a, best_dim), vb = points_(b, best_dim);
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_(order_[mid], best_dim);
  nodes_[id].split_dim = static_cast<std::uint32_t>(best_dim);
  nodes_[id].split_value = split;
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<Neighbor> NeighborIndex::nearest(std::span<const double> query, std::size_t k,
                                             std::optional<std::size_t> exclude_row) const {
  if (query.size() != dim()) {
    throw ParameterError("nearest: query has dimension " + std::to_string(query.size()) +
                         ", index has " + std::to_string(dim()));
  }
  const std::size_t available = size() - (exclude_row && *exclude_row < size() ? 1 : 0);
  if (k == 0 || k > available) {
    throw ParameterError("nearest: k=" + std::to_string(k) + " outside [1, M=" +
                         std::to_string(available) + "]");
  }

  KBest best(k);
  std::vector<double> offsets(dim(), 0.0);

  // Recursive descent with an incremental lower bound on the squared distance
  // from the query to each child's cell.
  auto visit = [&](auto&& self, std::int32_t id, double bound) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t r = order_[i];
        if (exclude_row && r == *exclude_row) continue;
        best.offer({squared_distance(query, points_.row(r)), r});
      }
      return;
    }
    const std::size_t j = node.split_dim;
    const double diff = query[j] - node.split_value;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    self(self, near, bound);

    const double old = offsets[j];
    const double far_bound = bound - old + diff * diff;
    // Ties with lower row indices may sit exactly on the bound, hence <=.
    if (!best.full() || far_bound <= best.worst()) {
      offsets[j] = diff * diff;
      self(self, far, far_bound);
      offsets[j] = old;
    }
  };
  visit(visit, 0, 0.0);

  std::vector<Neighbor> out;
  out.reserve(k);
  for (const Candidate& c : std::move(best).sorted()) out.push_back({std::sqrt(c.dist2), c.row});
  return out;
}

NeighborIndex build_index(PointSet points) { return NeighborIndex(std::move(points)); }

double kth_nn_distance(const NeighborIndex& index, std::span<const double> query, std::size_t k,
                       bool exclude_self) {
  if (!exclude_self) {
    if (k == 0 || k > index.size()) {
      throw ParameterError("kth_nn_distance: k=" + std::to_string(k) + " outside [1, M=" +
                           std::to_string(index.size()) + "]");
    }
    return index.nearest(query, k).back().distance;
  }
  const std::size_t m = index.size() - 1;
  if (k == 0 || k > m) {
    throw ParameterError("kth_nn_distance: k=" + std::to_string(k) + " outside [1, M=" +
                         std::to_string(m) + "]");
  }
  const auto self = index.nearest(query, 1);
  if (self.front().distance != 0.0) {
    throw ParameterError("kth_nn_distance: exclude_self requires the query to be an indexed point");
  }
  return index.nearest(query, k, self.front().row).back().distance;
}

double kth_nn_distance_of_member(const NeighborIndex& index, std::size_t row, std::size_t k) {
  if (row >= index.size()) throw ParameterError("kth_nn_distance_of_member: row out of range");
  return index.nearest(index.points().row(row), k, row).back().distance;
}

double unit_ball_volume(std::size_t d) {
  if (d == 0) throw ParameterError("unit_ball_volume: d must be >= 1");
  // V_d = V_{d-2} * 2 pi / d, starting from V_1 = 2 and V_2 = pi.
  double v = (d % 2 == 1) ? 2.0 : std::numbers::pi;
  for (std::size_t j = (d % 2 == 1) ? 3 : 4; j <= d; j += 2) {
    v *= 2.0 * std::numbers::pi / static_cast<double>(j);
  }
  return v;
}

double knn_density(double rho, std::size_t k, std::size_t m, std::size_t d, DensityMode mode,
                   std::size_t* degeneracies) {
  if (k == 0 || m == 0 || k > m) {
    throw ParameterError("knn_density: need 1 <= k <= m, got k=" + std::to_string(k) +
                         ", m=" + std::to_string(m));
  }
  if (!std::isfinite(rho) || rho < 0.0) throw ParameterError("knn_density: invalid radius");
  if (rho <= kMinRadius) {
    if (mode == DensityMode::strict) throw DegeneracyError("degenerate neighbor distance");
    rho = kMinRadius;
    if (degeneracies) ++*degeneracies;
  }
  const double dd = static_cast<double>(d);
  return static_cast<double>(k) /
         (static_cast<double>(m) * unit_ball_volume(d) * std::pow(rho, dd));
}

}  // namespace knnens
