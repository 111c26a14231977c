#include "doctest.h"

#include "incentive/aggregative.hpp"
#include "incentive/game.hpp"

#include <cmath>
#include <random>

using namespace incentive;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Two parallel links with l(w) = w and unit demand.
NonAtomicGame two_link_game() {
  NonAtomicGame g;
  g.layout = PopulationLayout({1.0}, {2});
  g.action_costs = [](const Vector& x) { return x; };
  g.social_cost = [](const Vector& x) { return x.squaredNorm(); };
  g.social_gradient = [](const Vector& x) { return Vector(2.0 * x); };
  g.finalize();
  return g;
}

AtomicGame small_aggregative(const Vector& zeta) {
  Matrix A(2, 2);
  A << 0, 1, 1, 0;
  return aggregative::QuadraticAggregativeGame(Vector::Ones(2), A, 0.5, zeta).to_atomic_game();
}

AtomicGame zero_cost_game(std::size_t n) {
  AtomicGame g;
  g.bounds.assign(n, Interval{});
  g.player_costs = [](const Vector& x) { return Vector::Zero(x.size()).eval(); };
  g.social_cost = [](const Vector&) { return 0.0; };
  g.finalize();
  return g;
}

}  // namespace

TEST_CASE("total cost adds the linear incentive") {
  CHECK(total_cost_atomic(zero_cost_game(1), vec({3}), vec({2}), 0) == doctest::Approx(6.0));

  const auto agg = small_aggregative(vec({0, 0}));
  CHECK(total_cost_atomic(agg, vec({1, 2}), vec({0.1, 0}), 0) == doctest::Approx(1.6));

  const auto tl = two_link_game();
  CHECK(total_cost_nonatomic(tl, vec({0.5, 0.5}), vec({0, 0}), 0, 0) == doctest::Approx(0.5));
  CHECK(total_cost_nonatomic(tl, vec({1, 0}), vec({0, 0}), 0, 0) == doctest::Approx(1.0));
  CHECK(total_cost_nonatomic(tl, vec({1, 0}), vec({0, 0}), 0, 1) == doctest::Approx(0.0));
  CHECK(total_cost_nonatomic(tl, vec({0.5, 0.5}), vec({0.5, 0.5}), 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("total cost rejects bad dimensions and indices") {
  CHECK_THROWS_AS(total_cost_atomic(zero_cost_game(2), vec({1, 2}), vec({1}), 0), InvalidArgument);
  CHECK_THROWS_AS(total_cost_atomic(zero_cost_game(2), vec({1, 2}), vec({1, 1}), 5), InvalidArgument);
  const auto tl = two_link_game();
  CHECK_THROWS_AS(total_cost_nonatomic(tl, vec({0.5, 0.5}), vec({0, 0}), 0, 2), InvalidArgument);
  CHECK_THROWS_AS(total_cost_nonatomic(tl, vec({0.5, 0.5}), vec({0, 0}), 1, 0), InvalidArgument);
}

TEST_CASE("atomic externality") {
  SUBCASE("separable costs summing to the social cost") {
    AtomicGame g;
    g.bounds.assign(3, Interval{});
    g.player_costs = [](const Vector& x) { return Vector(x.array().square()); };
    g.social_cost = [](const Vector& x) { return x.squaredNorm(); };
    g.finalize();
    CHECK(norm_inf(externality_atomic(g, vec({0.3, -1.0, 2.0}))) < 1e-8);
  }
  SUBCASE("aggregative closed form") {
    const auto g = small_aggregative(vec({0, 0}));
    const Vector e = externality_atomic(g, vec({1, 1}));
    CHECK(e[0] == doctest::Approx(-0.5));
    CHECK(e[1] == doctest::Approx(-0.5));
  }
  SUBCASE("matches finite differences of the oracles") {
    AtomicGame g;
    g.bounds.assign(3, Interval{-5, 5});
    g.player_costs = [](const Vector& x) {
      Vector c(3);
      c << x[0] * x[0] * x[1], std::sin(x[1]) + x[1] * x[2], std::exp(0.3 * x[2]) + x[0] * x[2];
      return c;
    };
    g.social_cost = [](const Vector& x) { return x.squaredNorm() + x[0] * x[1] * x[2]; };
    g.finalize();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int t = 0; t < 20; ++t) {
      const Vector x = vec({u(rng), u(rng), u(rng)});
      Vector expected(3);
      expected << 2 * x[0] + x[1] * x[2] - 2 * x[0] * x[1],
          2 * x[1] + x[0] * x[2] - (std::cos(x[1]) + x[2]),
          2 * x[2] + x[0] * x[1] - (0.3 * std::exp(0.3 * x[2]) + x[0]);
      CHECK(norm_inf(externality_atomic(g, x) - expected) < 1e-5 * (1 + norm_inf(expected)));
    }
  }
}

TEST_CASE("non-atomic externality") {
  const auto tl = two_link_game();
  const Vector e = externality_nonatomic(tl, vec({0.5, 0.5}));
  CHECK(e[0] == doctest::Approx(0.5));
  CHECK(e[1] == doctest::Approx(0.5));

  NonAtomicGame constant;
  constant.layout = PopulationLayout({1.0}, {3});
  constant.action_costs = [](const Vector& x) { return Vector::Constant(x.size(), 2.0).eval(); };
  constant.social_cost = [](const Vector& x) { return 2.0 * x.sum(); };
  constant.finalize();
  CHECK(norm_inf(externality_nonatomic(constant, vec({0.2, 0.3, 0.5}))) < 1e-8);

  // Two populations; gradient supplied by finite differences only.
  NonAtomicGame two;
  two.layout = PopulationLayout({1.0, 2.0}, {2, 3});
  two.action_costs = [](const Vector& x) {
    Vector c(5);
    c << x[0] + x[2], x[1] * x[1], x[2] + x[0], 1 + x[3], x[4] * x[1];
    return c;
  };
  two.social_cost = [](const Vector& x) {
    return x[0] * x[0] + x[1] * x[1] * x[1] + x[2] * x[2] + x[0] * x[2] + x[3] + 0.5 * x[4] * x[4];
  };
  two.finalize();
  const Vector x = vec({0.4, 0.6, 0.5, 1.0, 0.5});
  Vector expected(5);
  expected << 2 * 0.4 + 0.5 - (0.4 + 0.5), 3 * 0.36 - 0.36, 2 * 0.5 + 0.4 - (0.5 + 0.4), 1 - 2.0,
      0.5 - 0.5 * 0.6;
  CHECK(norm_inf(externality_nonatomic(two, x) - expected) < 1e-5);
}

TEST_CASE("atomic Nash certificate") {
  const auto g = small_aggregative(vec({0, 0}));
  CHECK(certify_nash_atomic(g, vec({0, 0}), vec({0, 0})).passed);
  CHECK(certify_nash_atomic(g, vec({0, 0}), vec({0, 0})).residual == doctest::Approx(0.0));

  const Vector x = vec({-2.0 / 3.0, -2.0 / 3.0});
  const auto ok = certify_nash_atomic(g, x, vec({1, 1}), 1e-8);
  CHECK(ok.passed);
  const auto bad = certify_nash_atomic(g, x + vec({1e-7, 0}), vec({1, 1}), 1e-8);
  CHECK_FALSE(bad.passed);
  CHECK(bad.residual == doctest::Approx(1e-7).epsilon(1e-3));
}

TEST_CASE("atomic Nash certificate respects bounds") {
  AtomicGame g;
  g.bounds.assign(1, Interval{0.0, 1.0});
  g.player_costs = [](const Vector& x) { return Vector(x.array().square()); };
  g.social_cost = [](const Vector& x) { return x.squaredNorm(); };
  g.finalize();
  // Incentive pushes below the lower bound: the corner is an equilibrium.
  CHECK(certify_nash_atomic(g, vec({0.0}), vec({3.0})).passed);
  CHECK_FALSE(certify_nash_atomic(g, vec({0.5}), vec({3.0})).passed);
}

TEST_CASE("non-atomic Nash certificate") {
  const auto tl = two_link_game();
  CHECK(certify_nash_nonatomic(tl, vec({0.5, 0.5}), vec({0, 0})).passed);
  CHECK(certify_nash_nonatomic(tl, vec({0, 1}), vec({2, 0})).passed);
  CHECK_FALSE(certify_nash_nonatomic(tl, vec({1, 0}), vec({0, 0})).passed);

  NonAtomicGame single;
  single.layout = PopulationLayout({2.0, 1.0}, {1, 1});
  single.action_costs = [](const Vector& x) { return Vector(x * 7.0); };
  single.social_cost = [](const Vector& x) { return x.sum(); };
  single.finalize();
  CHECK(certify_nash_nonatomic(single, vec({2, 1}), vec({5, -3})).passed);
}

TEST_CASE("social optimum") {
  const auto agg = small_aggregative(vec({1, 2}));
  const Vector x = social_optimum(agg);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(2.0));
  CHECK(optimality_residual(agg, x) <= 1e-9);

  const auto tl = two_link_game();
  const Vector w = social_optimum(tl);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(tl.social_cost(w) == doctest::Approx(0.5));

  NonAtomicGame pigou;
  pigou.layout = PopulationLayout({1.0}, {2});
  pigou.action_costs = [](const Vector& x) { return vec({x[0], 1.0}); };
  pigou.social_cost = [](const Vector& x) { return x[0] * x[0] + x[1]; };
  pigou.finalize();
  const Vector wp = social_optimum(pigou);
  CHECK(wp[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(wp[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(optimality_residual(pigou, wp) <= 1e-8);
}

TEST_CASE("iterative Nash solvers pass their own certificates") {
  AtomicGame g;
  g.bounds = {Interval{0, 5}, Interval{0, 5}, Interval{-1, 1}};
  g.player_costs = [](const Vector& x) {
    const double s = x.sum();
    return Vector(x.array() * (0.5 * x.array() + 0.3 * (s - x.array()) - 2.0));
  };
  g.social_cost = [](const Vector& x) { return x.squaredNorm(); };
  g.finalize();
  const Vector p = vec({0.1, -0.4, 0.2});
  const Vector x = nash_equilibrium(g, p, g.project(Vector::Zero(3)));
  CHECK(certify_nash_atomic(g, x, p, 1e-8).passed);

  const auto tl = two_link_game();
  const Vector y = nash_equilibrium(tl, vec({0.4, 0.0}), tl.layout.uniform());
  CHECK(y[0] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(certify_nash_nonatomic(tl, y, vec({0.4, 0.0}), 1e-8).passed);
}

TEST_CASE("best response by bisection matches the closed form") {
  Matrix A(3, 3);
  A << 0, 1, 0.5, 1, 0, 0.2, 0.5, 0.2, 0;
  const aggregative::QuadraticAggregativeGame agg(vec({1.0, 2.0, 1.5}), A, 0.4, vec({0, 0, 0}));
  AtomicGame oracle_only = agg.to_atomic_game();
  oracle_only.best_response = nullptr;
  oracle_only.equilibrium = nullptr;
  const Vector x = vec({0.3, -0.7, 1.1});
  const Vector p = vec({0.5, -0.2, 0.1});
  CHECK(norm_inf(best_response_atomic(oracle_only, x, p) - agg.best_response(x, p)) < 1e-9);
}

TEST_CASE("simplex projection and layout") {
  const Vector y = project_simplex(vec({0.9, 0.8, -3.0}), 1.0);
  CHECK(y[0] == doctest::Approx(0.55));
  CHECK(y[1] == doctest::Approx(0.45));
  CHECK(y[2] == doctest::Approx(0.0));

  PopulationLayout layout({1.0, 2.0}, {2, 3});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 3);
  for (int t = 0; t < 50; ++t) {
    Vector v(5);
    for (int i = 0; i < 5; ++i) v[i] = n(rng);
    const Vector z = layout.project(v);
    CHECK(layout.feasible(z, 1e-9));
    CHECK(z.head(2).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(z.tail(3).sum() == doctest::Approx(2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(PopulationLayout({0.0}, {2}), InvalidArgument);
  CHECK_THROWS_AS(PopulationLayout({1.0}, {0}), InvalidArgument);
}

TEST_CASE("atomic game validation") {
  AtomicGame g;
  g.bounds = {Interval{1.0, 0.0}};
  g.player_costs = [](const Vector& x) { return x; };
  g.social_cost = [](const Vector&) { return 0.0; };
  CHECK_THROWS_AS(g.finalize(), InvalidArgument);
}
