#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "knnens/ensemble.hpp"
#include "knnens/errors.hpp"
#include "knnens/synth.hpp"

using namespace knnens;

namespace {

BasisSystem basis_of(std::initializer_list<std::pair<double, double>> exps) {
  BasisSystem b;
  for (auto [le, ne] : exps) b.entries.push_back({"t", le, ne});
  return b;
}

double sum(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

double norm2(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return s;
}

// Random well-separated instance: I exponents from a fixed pool, L spread l values.
struct Instance {
  BasisSystem basis;
  std::vector<double> l;
};

Instance random_instance(std::mt19937_64& gen) {
  static const std::vector<double> pool = {-1.0, -0.5, 0.5, 1.0, 1.5, 2.0};
  std::uniform_int_distribution<int> pick_l(2, 8);
  Instance in;
  const int L = pick_l(gen);
  const int I = std::uniform_int_distribution<int>(0, std::min(6, L - 1))(gen);
  std::vector<double> exps = pool;
  std::shuffle(exps.begin(), exps.end(), gen);
  for (int i = 0; i < I; ++i) in.basis.entries.push_back({"e", exps[i], -0.25});
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (int j = 0; j < L; ++j) in.l.push_back(0.4 + 2.6 * j / std::max(1, L - 1) + jitter(gen));
  return in;
}

}  // namespace

TEST_CASE("k schedule") {
  EnsembleConfig c = EnsembleConfig::odin1_defaults(7, 400);
  c.l_values = {1.0, 2.0};
  CHECK(k_schedule(c).entries[0].k == 20);

  c = EnsembleConfig::odin1_defaults(7, 1000);
  const KSchedule s = k_schedule(c);
  REQUIRE(s.entries.size() == 50);
  CHECK(s.entries.front().k == 9);
  CHECK(s.entries.back().k == 95);

  c = EnsembleConfig::odin2_defaults(4, 256);
  c.l_values = {1.4, 2.0};
  CHECK(k_schedule(c).entries[0].k == 22);

  SUBCASE("collisions are kept and reported") {
    EnsembleConfig small = EnsembleConfig::odin1_defaults(2, 100);
    const KSchedule ks = k_schedule(small);
    CHECK(ks.entries.size() == 50);
    CHECK_FALSE(ks.warnings.empty());
    CHECK(ks.entries.front().k == 3);
    CHECK(ks.entries.back().k == 30);
  }
  SUBCASE("clamping to k_min and M2") {
    EnsembleConfig e = EnsembleConfig::odin1_defaults(2, 16);
    e.l_values = {0.1, 1.0, 10.0};
    const KSchedule ks = k_schedule(e);
    CHECK(ks.entries[0].k == 3);
    CHECK(ks.entries[1].k == 4);
    CHECK(ks.entries[2].k == 15);
  }
  SUBCASE("all k collapse") {
    EnsembleConfig e = EnsembleConfig::odin1_defaults(2, 16);
    e.l_values = {0.01, 0.02};
    CHECK_THROWS_AS(k_schedule(e), ConfigurationError);
  }
}

TEST_CASE("config validation") {
  EnsembleConfig c = EnsembleConfig::odin2_defaults(3, 100);
  CHECK(c.validate().empty());
  c.nu = 1;
  CHECK(c.validate().size() == 1);
  c.l_values = {1.0, 1.0};
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = EnsembleConfig::odin2_defaults(3, 100);
  c.delta = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = EnsembleConfig::odin1_defaults(3, 100);
  c.l_values = {-1.0, 1.0};
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
}

TEST_CASE("odin1 basis") {
  EnsembleConfig c = EnsembleConfig::odin1_defaults(2, 100);
  const BasisSystem b = build_basis(c);
  REQUIRE(b.size() == 3);
  CHECK(b.entries[0].l_exponent == 0.5);
  CHECK(b.entries[0].n_exponent == -0.25);
  CHECK(b.entries[1].l_exponent == 1.0);
  CHECK(b.entries[1].n_exponent == -0.5);
  CHECK(b.entries[2].l_exponent == -1.0);
  CHECK(b.entries[2].n_exponent == -0.5);

  c.l_values = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(build_basis(c), ConfigurationError);
}

TEST_CASE("odin2 basis") {
  EnsembleConfig c = EnsembleConfig::odin2_defaults(4, 100);
  c.delta = 0.5;
  c.nu = 2;
  const BasisSystem b = build_basis(c);
  std::set<std::string> labels;
  for (const auto& e : b.entries) labels.insert(e.label);
  CHECK(labels == std::set<std::string>{"j=1,q=0", "j=2,q=0", "j=3,q=0", "j=1,q=1"});
  for (const auto& e : b.entries) {
    if (e.label == "j=1,q=1") {
      CHECK(e.l_exponent == doctest::Approx(0.25 - 0.5));
      CHECK(e.n_exponent == doctest::Approx(-0.125 - 0.25));
    }
  }

  c.d = 1;
  CHECK(build_basis(c).size() == 0);

  SUBCASE("every n exponent lies strictly inside (-1/2, 0)") {
    for (std::size_t d = 1; d <= 10; ++d) {
      for (double delta : {0.1, 0.25, 0.5, 0.7, 0.9}) {
        EnsembleConfig e = EnsembleConfig::odin2_defaults(d, 100);
        e.l_values = linspace(1.0, 5.0, 200);
        e.delta = delta;
        e.nu = static_cast<int>(std::ceil(1.0 / delta));
        for (const auto& entry : build_basis(e).entries) {
          CHECK(entry.n_exponent > -0.5);
          CHECK(entry.n_exponent < 0.0);
        }
      }
    }
  }
}

TEST_CASE("exact weights: hand examples") {
  const std::vector<double> one{1.0};
  CHECK(solve_weights_exact(BasisSystem{}, one).weights == std::vector<double>{1.0});

  const auto linear = basis_of({{1.0, 0.0}});
  const std::vector<double> l2{1.0, 2.0};
  const WeightSolution w2 = solve_weights_exact(linear, l2);
  CHECK(w2.weights[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(w2.weights[1] == doctest::Approx(-1.0).epsilon(1e-12));

  const std::vector<double> l3{1.0, 2.0, 3.0};
  const WeightSolution w3 = solve_weights_exact(linear, l3);
  CHECK(std::abs(w3.weights[0] - 4.0 / 3.0) < 1e-12);
  CHECK(std::abs(w3.weights[1] - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(w3.weights[2] + 2.0 / 3.0) < 1e-12);
  CHECK(norm2(w3.weights) == doctest::Approx(21.0 / 9.0).epsilon(1e-12));
  CHECK(std::abs(w3.residuals[0]) < 1e-12);
}

TEST_CASE("exact weights: rank deficiency names rows") {
  const auto b = basis_of({{0.0, 0.0}});  // psi = 1 duplicates the sum row
  const std::vector<double> l{1.0, 2.0, 3.0};
  try {
    solve_weights_exact(b, l);
    FAIL("expected WeightSolverError");
  } catch (const WeightSolverError& e) {
    CHECK(std::string(e.what()).find("rank deficient") != std::string::npos);
    CHECK(e.best().weights.size() == 3);
  }
  const auto dup = basis_of({{1.0, 0.0}, {1.0, -0.5}});
  CHECK_THROWS_AS(solve_weights_exact(dup, l), WeightSolverError);
  CHECK_THROWS_AS(solve_weights_exact(basis_of({{1.0, 0.0}, {2.0, 0.0}}), std::vector<double>{1.0, 2.0}),
                  ConfigurationError);
}

TEST_CASE("exact weights are the minimum-norm feasible point") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 40; ++trial) {
    const Instance in = random_instance(gen);
    const WeightSolution sol = solve_weights_exact(in.basis, in.l);
    CHECK(std::abs(sum(sol.weights) - 1.0) < 1e-10);
    for (double r : sol.residuals) CHECK(std::abs(r) < 1e-8);

    // Oracle: particular solution plus random null-space directions, via LU.
    const auto L = static_cast<Eigen::Index>(in.l.size());
    const auto rows = static_cast<Eigen::Index>(in.basis.size()) + 1;
    Eigen::MatrixXd A(rows, L);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    b(0) = 1.0;
    for (Eigen::Index j = 0; j < L; ++j) {
      A(0, j) = 1.0;
      for (Eigen::Index i = 1; i < rows; ++i) A(i, j) = std::pow(in.l[j], in.basis.entries[i - 1].l_exponent);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    const Eigen::VectorXd particular = lu.solve(b);
    const Eigen::MatrixXd kernel = lu.kernel();
    const double best = norm2(sol.weights);
    const bool has_kernel = lu.rank() < L;
    for (int s = 0; s < 10000; ++s) {
      Eigen::VectorXd w = particular;
      if (has_kernel) {
        Eigen::VectorXd z(kernel.cols());
        for (Eigen::Index c = 0; c < z.size(); ++c) z(c) = normal(gen);
        w += kernel * z;
      }
      REQUIRE((A * w - b).norm() < 1e-6);
      CHECK(best <= w.squaredNorm() * (1.0 + 1e-9) + 1e-9);
    }
  }
}

TEST_CASE("relaxed weights: closed-form cases") {
  SUBCASE("empty basis gives uniform weights") {
    for (double eta : {0.5, 1.0, 10.0}) {
      const std::vector<double> l{1.0, 1.5, 2.0, 2.5};
      const WeightSolution w = solve_weights_relaxed(BasisSystem{}, l, 100, eta);
      for (double v : w.weights) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
      CHECK(w.objective == doctest::Approx(1.0 / (4.0 * eta)).epsilon(1e-8));
    }
  }
  SUBCASE("constant constraint row") {
    // psi = l^0 and sqrt(N) phi(N) = a with N = 100.
    for (double a : {0.3, 2.0}) {
      for (double eta : {1.0, 4.0}) {
        const double n_exp = std::log(a) / std::log(100.0) - 0.5;
        const BasisSystem b = basis_of({{0.0, n_exp}});
        const std::vector<double> l{1.0, 2.0};
        const WeightSolution w = solve_weights_relaxed(b, l, 100, eta);
        CHECK(w.weights[0] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(w.weights[1] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(w.objective == doctest::Approx(std::max(a, 1.0 / (2.0 * eta))).epsilon(1e-8));
      }
    }
  }
  SUBCASE("large eta recovers the exact solution") {
    const auto linear = basis_of({{1.0, -0.5}});
    const std::vector<double> l{1.0, 2.0, 3.0};
    const double eta = 1e6;
    const WeightSolution w = solve_weights_relaxed(linear, l, 100, eta);
    // w = alpha + beta l with (1/3 + 2 beta^2) / eta = 2 + 2 beta, beta near -1.
    const double b = (1.0 / 3.0 - 2.0 * eta) / (eta + std::sqrt(eta * eta - 2.0 * (1.0 / 3.0 - 2.0 * eta)));
    const double alpha = (1.0 - 6.0 * b) / 3.0;
    CHECK(std::abs(w.weights[0] - (alpha + b)) < 1e-8);
    CHECK(std::abs(w.weights[1] - (alpha + 2.0 * b)) < 1e-8);
    CHECK(std::abs(w.weights[2] - (alpha + 3.0 * b)) < 1e-8);
    CHECK(std::abs(w.weights[0] - 4.0 / 3.0) < 1e-4);
    CHECK(std::abs(w.weights[2] + 2.0 / 3.0) < 1e-4);
    CHECK(w.objective == doctest::Approx(2.0 + 2.0 * b).epsilon(1e-6));
  }
  CHECK_THROWS_AS(solve_weights_relaxed(BasisSystem{}, std::vector<double>{1.0}, 10, 1.0),
                  ConfigurationError);
  CHECK_THROWS_AS(solve_weights_relaxed(BasisSystem{}, std::vector<double>{1.0, 2.0}, 10, 0.0),
                  ConfigurationError);
}

TEST_CASE("relaxed weights satisfy their invariants") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 60; ++trial) {
    const Instance in = random_instance(gen);
    if (in.l.size() < 2) continue;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(50, 5000)(gen);
    const double eta = std::pow(10.0, std::uniform_real_distribution<double>(-1.0, 6.0)(gen));
    const WeightSolution w = solve_weights_relaxed(in.basis, in.l, n, eta);
    CHECK(std::abs(sum(w.weights) - 1.0) < 1e-10);
    CHECK(norm2(w.weights) <= eta * w.objective + 1e-8);
    for (std::size_t i = 0; i < in.basis.size(); ++i) {
      const double scale = std::sqrt(double(n)) * in.basis.phi(i, double(n));
      CHECK(std::abs(w.residuals[i] * scale) <= w.objective + 1e-8);
    }
    if (eta == 1e6) continue;
    // Large eta: near-exact whenever the exact program is feasible.
    const WeightSolution ex = solve_weights_exact(in.basis, in.l);
    const WeightSolution big = solve_weights_relaxed(in.basis, in.l, n, 1e6);
    if (norm2(ex.weights) < 50.0) {
      CHECK(big.objective <= 1e-4);
      for (std::size_t j = 0; j < in.l.size(); ++j) CHECK(std::abs(big.weights[j] - ex.weights[j]) < 1e-4);
    }
  }
}

TEST_CASE("full-size weight programs solve") {
  for (std::size_t n : {100u, 400u, 1600u}) {
    const EnsemblePlan p1 = plan_ensemble(EnsembleConfig::odin1_defaults(7, n), n, n);
    CHECK(std::abs(sum(p1.weights.weights) - 1.0) < 1e-10);
    const EnsemblePlan p2 = plan_ensemble(EnsembleConfig::odin2_defaults(7, n), n, n);
    CHECK(std::abs(sum(p2.weights.weights) - 1.0) < 1e-10);
    CHECK(p2.basis.size() == 9);
  }
}

TEST_CASE("ensemble estimate") {
  const auto f1 = TruncatedGaussianSpec::isotropic(2, 0.7, 0.1);
  const auto f2 = TruncatedGaussianSpec::isotropic(2, 0.3, 0.1);
  const PointSet x = sample_truncated_gaussian(f2, 400, 21);
  const PointSet y = sample_truncated_gaussian(f1, 400, 22);
  const auto renyi = make_functional("renyi_integral", std::vector<double>{0.5});

  SUBCASE("L = 1 is the plug-in estimate") {
    EnsembleConfig c = EnsembleConfig::odin1_defaults(2, 400);
    c.l_values = {1.3};
    const EstimateReport r = ensemble_estimate(x, y, c, renyi);
    const std::size_t k = 26;  // round(1.3 * 20)
    REQUIRE(r.per_k.size() == 1);
    CHECK(r.per_k[0].k == k);
    CHECK(r.value == plugin_estimate(x, y, k, k, renyi).value);
  }
  SUBCASE("value is the weight dot product") {
    for (auto cfg : {EnsembleConfig::odin1_defaults(2, 400), EnsembleConfig::odin2_defaults(2, 400)}) {
      const EstimateReport r = ensemble_estimate(x, y, cfg, renyi);
      double dot = 0.0;
      for (std::size_t i = 0; i < r.per_k.size(); ++i) dot += r.weights.weights[i] * r.per_k[i].value;
      CHECK(r.value == dot);
      for (const auto& pk : r.per_k) {
        CHECK(pk.value == plugin_estimate(x, y, pk.k, pk.k, renyi).value);
      }
    }
  }
  SUBCASE("linear in the functional") {
    const auto kl = make_functional("kl");
    const auto l2 = make_functional("l2");
    const double a = 0.7, b = -2.5;
    const auto mix = custom_functional("mix", [&](double t1, double t2) { return a * kl(t1, t2) + b * l2(t1, t2); });
    const auto cfg = EnsembleConfig::odin1_defaults(2, 400);
    const double lhs = ensemble_estimate(x, y, cfg, mix).value;
    const double rhs = a * ensemble_estimate(x, y, cfg, kl).value + b * ensemble_estimate(x, y, cfg, l2).value;
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
  SUBCASE("errors and warnings") {
    EnsembleConfig c = EnsembleConfig::odin1_defaults(3, 400);
    CHECK_THROWS_AS(ensemble_estimate(x, y, c, renyi), ParameterError);
    c = EnsembleConfig::odin1_defaults(2, 300);
    const EstimateReport r = ensemble_estimate(x, y, c, renyi);
    CHECK(std::any_of(r.warnings.begin(), r.warnings.end(),
                      [](const std::string& w) { return w.find("differs") != std::string::npos; }));
  }
  SUBCASE("threads do not change the value") {
    const auto cfg = EnsembleConfig::odin1_defaults(2, 400);
    CHECK(ensemble_estimate(x, y, cfg, renyi, DensityMode::robust, 3).value ==
          ensemble_estimate(x, y, cfg, renyi).value);
  }
}

TEST_CASE("default experiment configuration gives a finite estimate near the truth") {
  const auto f1 = TruncatedGaussianSpec::isotropic(7, 0.7, 0.1);
  const auto f2 = TruncatedGaussianSpec::isotropic(7, 0.3, 0.1);
  const PointSet x = sample_truncated_gaussian(f2, 1600, 31);
  const PointSet y = sample_truncated_gaussian(f1, 1600, 32);
  const auto renyi = make_functional("renyi_integral", std::vector<double>{0.5});
  const EstimateReport r = ensemble_estimate(x, y, EnsembleConfig::odin1_defaults(7, 1600), renyi);
  CHECK(std::isfinite(r.value));
  CHECK(std::abs(r.value - true_renyi_integral(f1, f2, 0.5)) < 0.1);
}
