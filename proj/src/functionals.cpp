#include "knnens/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "knnens/errors.hpp"
#include "knnens/parallel.hpp"
#include "knnens/stats.hpp"

namespace knnens {

FunctionalSpec make_functional(std::string_view name, std::span<const double> params) {
  FunctionalSpec spec;
  spec.name = std::string(name);
  spec.params.assign(params.begin(), params.end());

  if (name == "renyi_integral") {
    if (spec.params.empty()) spec.params.push_back(0.5);
    if (spec.params.size() != 1) {
      throw ParameterError("renyi_integral takes exactly one parameter (alpha)");
    }
    const double alpha = spec.params[0];
    if (!std::isfinite(alpha) || alpha == 0.0 || alpha == 1.0) {
      throw ParameterError("renyi_integral: alpha must be finite and not 0 or 1, got " +
                           std::to_string(alpha));
    }
    spec.eval = [alpha](double t1, double t2) { return std::pow(t1 / t2, alpha); };
    spec.lipschitz_hint = true;
    spec.diagonal_value = 1.0;
  } else if (name == "kl") {
    spec.eval = [](double t1, double t2) {
      const double r = t1 / t2;
      return r * std::log(r);
    };
    spec.lipschitz_hint = true;
    spec.diagonal_value = 0.0;
  } else if (name == "reverse_kl") {
    spec.eval = [](double t1, double t2) { return std::log(t2 / t1); };
    spec.lipschitz_hint = true;
    spec.diagonal_value = 0.0;
  } else if (name == "l2") {
    spec.eval = [](double t1, double t2) {
      const double diff = t1 - t2;
      return diff * diff / t2;
    };
    spec.lipschitz_hint = true;
    spec.diagonal_value = 0.0;
  } else if (name == "shannon_entropy") {
    spec.eval = [](double, double t2) { return -std::log(t2); };
    spec.lipschitz_hint = true;
  } else if (name == "custom") {
    throw ParameterError("custom functionals need an evaluator; use custom_functional()");
  } else {
    throw ParameterError("unknown functional '" + std::string(name) + "'");
  }
  if (name != "renyi_integral" && !spec.params.empty()) {
    throw ParameterError("functional '" + spec.name + "' takes no parameters");
  }
  return spec;
}

FunctionalSpec custom_functional(std::string name, std::function<double(double, double)> g,
                                 bool lipschitz_hint, std::optional<double> diagonal_value) {
  if (!g) throw ParameterError("custom_functional: empty evaluator");
  FunctionalSpec spec;
  spec.name = std::move(name);
  spec.eval = std::move(g);
  spec.lipschitz_hint = lipschitz_hint;
  spec.diagonal_value = diagonal_value;
  return spec;
}

NeighborTable::NeighborTable(const PointSet& x, const PointSet& y, std::size_t k1_max,
                             std::size_t k2_max, unsigned threads)
    : n1_(y.size()), n2_(x.size()), dim_(x.dim()), k1_max_(k1_max), k2_max_(k2_max) {
  if (x.dim() != y.dim()) {
    throw ParameterError("dimension mismatch: x has d=" + std::to_string(x.dim()) +
                         ", y has d=" + std::to_string(y.dim()));
  }
  if (n2_ < 2) throw ParameterError("the f2 sample needs at least 2 points (N2 >= 2)");
  if (k1_max_ == 0 || k1_max_ > n1_) {
    throw ParameterError("k1=" + std::to_string(k1_max_) + " outside [1, M1=" +
                         std::to_string(n1_) + "]");
  }
  if (k2_max_ == 0 || k2_max_ > n2_ - 1) {
    throw ParameterError("k2=" + std::to_string(k2_max_) + " outside [1, M2=" +
                         std::to_string(n2_ - 1) + "]");
  }

  const NeighborIndex y_index(y);
  const NeighborIndex x_index(x);
  cross_.resize(n2_ * k1_max_);
  self_.resize(n2_ * k2_max_);
  parallel_for(n2_, threads, [&](std::size_t i) {
    const auto q = x.row(i);
    const auto c = y_index.nearest(q, k1_max_);
    for (std::size_t k = 0; k < k1_max_; ++k) cross_[i * k1_max_ + k] = c[k].distance;
    const auto s = x_index.nearest(q, k2_max_, i);
    for (std::size_t k = 0; k < k2_max_; ++k) self_[i * k2_max_ + k] = s[k].distance;
  });
}

PluginEstimate plugin_estimate(const NeighborTable& table, std::size_t k1, std::size_t k2,
                               const FunctionalSpec& spec, DensityMode mode) {
  if (!spec.eval) throw ParameterError("plugin_estimate: functional has no evaluator");
  if (k1 == 0 || k1 > table.k1_max()) {
    throw ParameterError("k1=" + std::to_string(k1) + " outside [1, " +
                         std::to_string(table.k1_max()) + "]");
  }
  if (k2 == 0 || k2 > table.k2_max()) {
    throw ParameterError("k2=" + std::to_string(k2) + " outside [1, " +
                         std::to_string(table.k2_max()) + "]");
  }

  PluginEstimate est;
  est.k1 = k1;
  est.k2 = k2;
  est.n1 = table.n1();
  est.n2 = table.n2();

  const std::size_t m1 = table.n1();
  const std::size_t m2 = table.n2() - 1;
  auto clamp = [&](double t) {
    if (mode == DensityMode::robust && (t < kMinDensity || t > kMaxDensity)) {
      ++est.clamp_count;
      return std::clamp(t, kMinDensity, kMaxDensity);
    }
    return t;
  };

  std::vector<double> terms(table.n2());
  for (std::size_t i = 0; i < table.n2(); ++i) {
    const double f1 =
        knn_density(table.cross(i, k1), k1, m1, table.dim(), mode, &est.degeneracy_count);
    const double f2 =
        knn_density(table.self(i, k2), k2, m2, table.dim(), mode, &est.degeneracy_count);
    terms[i] = spec(clamp(f1), clamp(f2));
  }
  est.value = stable_mean(terms);
  if (!std::isfinite(est.value)) {
    throw SolverError("plugin_estimate: functional '" + spec.name + "' produced a non-finite mean");
  }
  return est;
}

PluginEstimate plugin_estimate(const PointSet& x, const PointSet& y, std::size_t k1,
                               std::size_t k2, const FunctionalSpec& spec, DensityMode mode,
                               unsigned threads) {
  const NeighborTable table(x, y, k1, k2, threads);
  return plugin_estimate(table, k1, k2, spec, mode);
}

}  // namespace knnens
