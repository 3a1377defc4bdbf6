#include "knnens/ensemble.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace knnens {
namespace {

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Eigen::MatrixXd basis_matrix(const BasisSystem& basis, std::span<const double> l_values) {
  Eigen::MatrixXd psi(static_cast<Eigen::Index>(basis.size()),
                      static_cast<Eigen::Index>(l_values.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = 0; j < l_values.size(); ++j) {
      psi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = basis.psi(i, l_values[j]);
    }
  }
  return psi;
}

std::vector<double> residuals_of(const Eigen::MatrixXd& psi, const Eigen::VectorXd& w) {
  const Eigen::VectorXd r = psi * w;
  return {r.data(), r.data() + r.size()};
}

void check_l_values(std::span<const double> l_values) {
  if (l_values.empty()) throw ConfigurationError("ensemble needs at least one l value");
  for (double l : l_values) {
    if (!std::isfinite(l) || l <= 0.0) {
      throw ConfigurationError("l values must be finite and positive, got " + fmt_num(l));
    }
  }
}

}  // namespace

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

EnsembleConfig EnsembleConfig::odin1_defaults(std::size_t d, std::size_t n) {
  EnsembleConfig c;
  c.mode = EnsembleMode::odin1;
  c.l_values = linspace(0.3, 3.0, 50);
  c.d = d;
  c.n = n;
  return c;
}

EnsembleConfig EnsembleConfig::odin2_defaults(std::size_t d, std::size_t n) {
  EnsembleConfig c;
  c.mode = EnsembleMode::odin2;
  c.l_values.resize(25);
  for (std::size_t i = 0; i < c.l_values.size(); ++i) {
    c.l_values[i] = 1.4 + 0.1 * static_cast<double>(i);
  }
  c.d = d;
  c.n = n;
  return c;
}

std::vector<std::string> EnsembleConfig::validate() const {
  std::vector<std::string> warnings;
  check_l_values(l_values);
  std::vector<double> sorted = l_values;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigurationError("l values must be distinct");
  }
  if (d == 0) throw ConfigurationError("dimension d must be >= 1");
  if (n < 2) throw ConfigurationError("sample size n must be >= 2");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigurationError("eta must be positive");
  if (mode == EnsembleMode::odin2) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigurationError("delta must lie in (0, 1)");
    if (nu < 1) throw ConfigurationError("nu must be a positive integer");
    if (nu < static_cast<int>(std::ceil(1.0 / delta - 1e-12))) {
      warnings.push_back("nu=" + std::to_string(nu) + " < ceil(1/delta); the parametric rate is not guaranteed");
    }
  }
  return warnings;
}

std::size_t KSchedule::max_k() const {
  std::size_t m = 0;
  for (const auto& e : entries) m = std::max(m, e.k);
  return m;
}

KSchedule k_schedule(const EnsembleConfig& config, std::size_t k_cap) {
  check_l_values(config.l_values);
  if (config.n < 2) throw ConfigurationError("sample size n must be >= 2");
  const std::size_t cap = k_cap == 0 ? config.n - 1 : k_cap;
  const std::size_t floor_k = std::max<std::size_t>(config.k_min, 1);
  if (floor_k > cap) {
    throw ConfigurationError("k_min=" + std::to_string(floor_k) + " exceeds the largest usable k=" +
                             std::to_string(cap));
  }
  const double n = static_cast<double>(config.n);
  const double scale = config.mode == EnsembleMode::odin1 ? std::sqrt(n) : std::pow(n, config.delta);

  KSchedule schedule;
  std::size_t clamped = 0;
  for (double l : config.l_values) {
    const double raw = std::round(l * scale);  // half away from zero
    std::size_t k = raw < 1.0 ? 0 : static_cast<std::size_t>(raw);
    if (k < floor_k || k > cap) ++clamped;
    k = std::clamp(k, floor_k, cap);
    schedule.entries.push_back({l, k});
  }
  if (clamped > 0) {
    schedule.warnings.push_back(std::to_string(clamped) + " k value(s) clamped to [" +
                                std::to_string(floor_k) + ", " + std::to_string(cap) + "]");
  }
  std::set<std::size_t> distinct;
  for (const auto& e : schedule.entries) distinct.insert(e.k);
  if (schedule.entries.size() > 1 && distinct.size() == 1) {
    throw ConfigurationError("all l values map to k=" + std::to_string(*distinct.begin()) +
                             "; the ensemble is degenerate");
  }
  if (distinct.size() < schedule.entries.size()) {
    schedule.warnings.push_back(std::to_string(schedule.entries.size() - distinct.size()) +
                                " k collision(s): distinct l values share a k");
  }
  return schedule;
}

double BasisSystem::psi(std::size_t i, double l) const {
  return std::pow(l, entries.at(i).l_exponent);
}

double BasisSystem::phi(std::size_t i, double n) const {
  return std::pow(n, entries.at(i).n_exponent);
}

BasisSystem build_basis(const EnsembleConfig& config) {
  if (config.d == 0) throw ConfigurationError("dimension d must be >= 1");
  BasisSystem basis;
  const double d = static_cast<double>(config.d);
  if (config.mode == EnsembleMode::odin1) {
    for (std::size_t i = 1; i <= config.d; ++i) {
      const double e = static_cast<double>(i) / d;
      basis.entries.push_back({"l^(" + std::to_string(i) + "/" + std::to_string(config.d) + ")",
                               e, -0.5 * e});
    }
    basis.entries.push_back({"l^(-1)", -1.0, -0.5});
  } else {
    const double delta = config.delta;
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigurationError("delta must lie in (0, 1)");
    // Larger j push (1 - delta) j / d past the upper edge of the window.
    const int j_max = static_cast<int>(std::ceil(d / (2.0 * (1.0 - delta))));
    constexpr double tol = 1e-12;
    for (int q = 0; q <= config.nu; ++q) {
      for (int j = 0; j <= j_max; ++j) {
        const double rate = (1.0 - delta) * j / d + q * delta / 2.0;
        if (!(rate > tol && rate < 0.5 - tol)) continue;
        if (!(j + q / 2.0 > 0.5)) continue;
        const BasisEntry entry{"j=" + std::to_string(j) + ",q=" + std::to_string(q),
                               j / d - q / 2.0, -rate};
        const bool duplicate = std::any_of(
            basis.entries.begin(), basis.entries.end(), [&](const BasisEntry& e) {
              return std::abs(e.l_exponent - entry.l_exponent) < tol &&
                     std::abs(e.n_exponent - entry.n_exponent) < tol;
            });
        if (!duplicate) basis.entries.push_back(entry);
      }
    }
  }
  if (basis.size() >= config.l_values.size()) {
    throw ConfigurationError("bias basis has I=" + std::to_string(basis.size()) +
                             " terms but L=" + std::to_string(config.l_values.size()) +
                             "; use more l values (need L > I)");
  }
  return basis;
}

WeightSolution solve_weights_exact(const BasisSystem& basis, std::span<const double> l_values) {
  check_l_values(l_values);
  const auto L = static_cast<Eigen::Index>(l_values.size());
  const auto rows = static_cast<Eigen::Index>(basis.size()) + 1;
  if (rows > L) {
    throw ConfigurationError("exact weights need I + 1 <= L, got I=" +
                             std::to_string(basis.size()) + ", L=" + std::to_string(L));
  }
  const Eigen::MatrixXd psi = basis_matrix(basis, l_values);
  Eigen::MatrixXd A(rows, L);
  A.row(0).setOnes();
  A.bottomRows(rows - 1) = psi;

  // Rank test on row-normalized A; pivots past the rank name the dependent rows.
  Eigen::MatrixXd scaled = A;
  for (Eigen::Index r = 0; r < rows; ++r) scaled.row(r) /= scaled.row(r).norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled.transpose());
  qr.setThreshold(1e-12);
  if (qr.rank() < rows) {
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index p = qr.rank(); p < rows; ++p) {
      const Eigen::Index r = perm(p);
      if (!names.empty()) names += ", ";
      names += r == 0 ? std::string("sum(w)=1")
                      : basis.entries[static_cast<std::size_t>(r - 1)].label;
    }
    WeightSolution none;
    none.weights.assign(l_values.size(), 1.0 / static_cast<double>(L));
    none.residuals = residuals_of(psi, Eigen::Map<const Eigen::VectorXd>(none.weights.data(), L));
    throw WeightSolverError("constraint matrix is rank deficient (rank " +
                                std::to_string(qr.rank()) + " of " + std::to_string(rows) +
                                "); dependent rows: " + names,
                            std::move(none));
  }

  // Minimum-norm solution of scaled w = b from scaled^T P = Q R:
  // w = Q1 z with R1^T z = P^T b, then a few steps of iterative refinement.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  b(0) = 1.0 / std::sqrt(static_cast<double>(L));
  const Eigen::MatrixXd q1 = qr.householderQ() * Eigen::MatrixXd::Identity(L, rows);
  const auto r1 = qr.matrixR().topLeftCorner(rows, rows).triangularView<Eigen::Upper>();
  auto min_norm = [&](const Eigen::VectorXd& target) {
    const Eigen::VectorXd permuted = qr.colsPermutation().transpose() * target;
    return Eigen::VectorXd(q1 * r1.transpose().solve(permuted));
  };
  Eigen::VectorXd sol = min_norm(b);
  int steps = 1;
  for (; steps < 4; ++steps) {  // iterative refinement
    const Eigen::VectorXd r = b - scaled * sol;
    if (r.lpNorm<Eigen::Infinity>() < 1e-16) break;
    sol += min_norm(r);
  }

  WeightSolution out;
  const Eigen::VectorXd& w = sol;
  out.weights.assign(w.data(), w.data() + L);
  out.residuals = residuals_of(psi, w);
  out.objective = w.norm();
  out.solver_iterations = steps;
  return out;
}

WeightSolution solve_weights_relaxed(const BasisSystem& basis, std::span<const double> l_values,
                                     std::size_t n, double eta) {
  check_l_values(l_values);
  if (l_values.size() < 2) throw ConfigurationError("relaxed weights need L >= 2");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigurationError("eta must be positive");
  if (n < 1) throw ConfigurationError("sample size must be positive");

  const auto L = static_cast<Eigen::Index>(l_values.size());
  const auto I = static_cast<Eigen::Index>(basis.size());
  const Eigen::MatrixXd psi = basis_matrix(basis, l_values);
  Eigen::MatrixXd scaled = psi;
  const double nd = static_cast<double>(n);
  for (Eigen::Index i = 0; i < I; ++i) {
    scaled.row(i) *= std::sqrt(nd) * basis.phi(static_cast<std::size_t>(i), nd);
  }

  auto epsilon_of = [&](const Eigen::VectorXd& w) {
    double e = w.squaredNorm() / eta;
    if (I > 0) e = std::max(e, (scaled * w).lpNorm<Eigen::Infinity>());
    return e;
  };
  auto finish = [&](Eigen::VectorXd w, int iterations) {
    w.array() += (1.0 - w.sum()) / static_cast<double>(L);
    WeightSolution out;
    out.weights.assign(w.data(), w.data() + L);
    out.residuals = residuals_of(psi, w);
    out.objective = epsilon_of(w);
    out.solver_iterations = iterations;
    return out;
  };

  // Epigraph variables x = (w, t); 2I linear slacks t -/+ a_i.w and one
  // quadratic slack eta t - ||w||^2, all kept strictly positive.
  const Eigen::Index nv = L + 1;
  const double m = static_cast<double>(2 * I + 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(L, 1.0 / static_cast<double>(L));
  double t = 2.0 * epsilon_of(w);

  struct Slacks {
    Eigen::VectorXd r, lo, hi;
    double quad = 0.0;
    bool positive = false;
  };
  auto slacks = [&](const Eigen::VectorXd& wv, double tv) {
    Slacks s;
    s.r = scaled * wv;
    s.lo = tv - s.r.array();
    s.hi = tv + s.r.array();
    s.quad = eta * tv - wv.squaredNorm();
    s.positive = s.quad > 0.0 && (I == 0 || (s.lo.minCoeff() > 0.0 && s.hi.minCoeff() > 0.0));
    return s;
  };
  auto barrier = [&](double tau, double tv, const Slacks& s) {
    double f = tau * tv - std::log(s.quad);
    for (Eigen::Index i = 0; i < I; ++i) f -= std::log(s.lo(i)) + std::log(s.hi(i));
    return f;
  };

  constexpr int kMaxIterations = 100000;
  constexpr double kGapTol = 1e-11;
  double tau = m / t;
  int iterations = 0;
  Eigen::VectorXd grad(nv);
  // T maps (z, t) to (w, t) with z spanning the complement of the ones vector.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(nv, L);
  {
    const Eigen::MatrixXd q =
        Eigen::VectorXd::Ones(L).householderQr().householderQ() * Eigen::MatrixXd::Identity(L, L);
    T.topLeftCorner(L, L - 1) = q.rightCols(L - 1);
    T(L, L - 1) = 1.0;
  }

  while (true) {
    // Centering: equality-constrained Newton on tau t + barrier.
    for (int inner = 0; inner < 200; ++inner) {
      if (++iterations > kMaxIterations) {
        throw WeightSolverError("relaxed weight solver hit the iteration cap", finish(w, iterations));
      }
      const Slacks s = slacks(w, t);
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
      grad.setZero();
      grad(L) = tau;
      for (Eigen::Index i = 0; i < I; ++i) {
        // s_lo = t - a.w with gradient (-a, 1); s_hi = t + a.w with gradient (a, 1).
        const double ilo = 1.0 / s.lo(i), ihi = 1.0 / s.hi(i);
        const auto a = scaled.row(i).transpose();
        grad.head(L) += (ilo - ihi) * a;
        grad(L) -= ilo + ihi;
        const double c2 = ilo * ilo + ihi * ihi;
        const double cross = ihi * ihi - ilo * ilo;
        H.topLeftCorner(L, L).noalias() += c2 * a * a.transpose();
        H.topRightCorner(L, 1) += cross * a;
        H(L, L) += c2;
      }
      {
        const double iq = 1.0 / s.quad;
        Eigen::VectorXd g(nv);
        g.head(L) = -2.0 * w;
        g(L) = eta;
        grad -= iq * g;
        H.noalias() += iq * iq * g * g.transpose();
        H.topLeftCorner(L, L).diagonal().array() += 2.0 * iq;
      }
      H.bottomLeftCorner(1, L) = H.topRightCorner(L, 1).transpose();

      // Newton step restricted to the sum-preserving subspace.
      const Eigen::MatrixXd reduced_h = T.transpose() * H * T;
      const Eigen::VectorXd reduced_g = T.transpose() * grad;
      const Eigen::VectorXd step = T * reduced_h.ldlt().solve(-reduced_g);
      const double decrement = -grad.dot(step);
      if (!std::isfinite(decrement)) {
        throw WeightSolverError("relaxed weight solver produced a non-finite Newton step",
                                finish(w, iterations));
      }
      if (decrement / 2.0 <= 1e-10) break;

      const double f0 = barrier(tau, t, s);
      const double lambda = std::sqrt(std::max(decrement, 0.0));
      double alpha = lambda > 0.25 ? 1.0 / (1.0 + lambda) : 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd wn = w + alpha * step.head(L);
        const double tn = t + alpha * step(L);
        const Slacks sn = slacks(wn, tn);
        if (!sn.positive) continue;
        if (barrier(tau, tn, sn) <= f0 - 0.25 * alpha * decrement) {
          w = wn;
          t = tn;
          moved = true;
          break;
        }
      }
      if (!moved) break;  // no further progress at this precision
    }
    if (m / tau <= kGapTol * std::max(t, std::numeric_limits<double>::min())) break;
    tau *= 20.0;
  }
  return finish(w, iterations);
}

EnsemblePlan plan_ensemble(const EnsembleConfig& config, std::size_t n2, std::size_t n1) {
  EnsemblePlan plan;
  plan.config = config;
  if (config.n != n2) {
    if (config.n != 0) {
      plan.warnings.push_back("config n=" + std::to_string(config.n) +
                              " differs from the f2 sample size " + std::to_string(n2) +
                              "; using " + std::to_string(n2));
    }
    plan.config.n = n2;
  }
  if (n1 != n2) {
    plan.warnings.push_back("N1=" + std::to_string(n1) + " differs from N2=" + std::to_string(n2) +
                            "; rate factors use N2");
  }
  for (auto& w : plan.config.validate()) plan.warnings.push_back(std::move(w));
  plan.schedule = k_schedule(plan.config, std::min(n2 - 1, n1));
  plan.warnings.insert(plan.warnings.end(), plan.schedule.warnings.begin(),
                       plan.schedule.warnings.end());

  const auto& l = plan.config.l_values;
  if (l.size() == 1) {
    plan.warnings.push_back("L=1: no bias cancellation, the ensemble is a single plug-in estimate");
    plan.weights.weights = {1.0};
    plan.weights.objective = 1.0;
    return plan;
  }
  plan.basis = build_basis(plan.config);
  plan.weights = plan.config.solver == WeightSolver::exact
                     ? solve_weights_exact(plan.basis, l)
                     : solve_weights_relaxed(plan.basis, l, n2, plan.config.eta);
  return plan;
}

EstimateReport evaluate_plan(const EnsemblePlan& plan, const NeighborTable& table,
                             const FunctionalSpec& spec, DensityMode mode) {
  EstimateReport report;
  report.weights = plan.weights;
  report.warnings = plan.warnings;
  const auto& entries = plan.schedule.entries;
  report.per_k.reserve(entries.size());
  for (const auto& e : entries) {
    const PluginEstimate est = plugin_estimate(table, e.k, e.k, spec, mode);
    report.per_k.push_back({e.l, e.k, est.value});
    report.degeneracy_count += est.degeneracy_count;
    report.clamp_count += est.clamp_count;
  }
  double value = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    value += plan.weights.weights[i] * report.per_k[i].value;
  }
  report.value = value;
  if (report.degeneracy_count > 0) {
    report.warnings.push_back(std::to_string(report.degeneracy_count) +
                              " degenerate neighbor radii clamped");
  }
  if (report.clamp_count > 0) {
    report.warnings.push_back(std::to_string(report.clamp_count) +
                              " density values clamped into [1e-12, 1e12]");
  }
  return report;
}

EstimateReport ensemble_estimate(const PointSet& x, const PointSet& y, const EnsembleConfig& config,
                                 const FunctionalSpec& spec, DensityMode mode, unsigned threads) {
  if (x.dim() != y.dim()) {
    throw ParameterError("dimension mismatch: x has d=" + std::to_string(x.dim()) +
                         ", y has d=" + std::to_string(y.dim()));
  }
  if (x.size() < 2) throw ParameterError("the f2 sample needs at least 2 points (N2 >= 2)");
  if (config.d != x.dim()) {
    throw ParameterError("config d=" + std::to_string(config.d) + " but samples have d=" +
                         std::to_string(x.dim()));
  }
  const EnsemblePlan plan = plan_ensemble(config, x.size(), y.size());
  const std::size_t kmax = plan.schedule.max_k();
  const NeighborTable table(x, y, kmax, kmax, threads);
  return evaluate_plan(plan, table, spec, mode);
}

}  // namespace knnens
