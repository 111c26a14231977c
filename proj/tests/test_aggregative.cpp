#include "doctest.h"

#include "incentive/aggregative.hpp"

#include <cmath>
#include <random>

using namespace incentive;
using namespace incentive::aggregative;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix swap2() {
  Matrix A(2, 2);
  A << 0, 1, 1, 0;
  return A;
}

QuadraticAggregativeGame random_pd_game(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0, 1);
  for (;;) {
    Vector q(n);
    Matrix A = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = 1.0 + u(rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) A(i, j) = A(j, i) = 2.0 * u(rng) - 1.0;
    }
    Vector zeta(n);
    for (Eigen::Index i = 0; i < n; ++i) zeta[i] = 4.0 * u(rng) - 2.0;
    QuadraticAggregativeGame g(q, A, 0.3, zeta);
    if (g.check_global_conditions().min_eigenvalue >= 0.3) return g;
  }
}

}  // namespace

TEST_CASE("closed-form Nash equilibrium") {
  const QuadraticAggregativeGame g(Vector::Ones(2), swap2(), 0.5, vec({0, 0}));
  CHECK(norm_inf(g.nash_closed_form(vec({0, 0}))) == 0.0);
  const Vector x = g.nash_closed_form(vec({1, 1}));
  CHECK(x[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(x[1] == doctest::Approx(-2.0 / 3.0));
  CHECK(certify_nash_atomic(g.to_atomic_game(), x, vec({1, 1}), 1e-8).passed);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 2);
  const auto big = random_pd_game(rng, 5);
  const AtomicGame atomic = big.to_atomic_game();
  for (int t = 0; t < 20; ++t) {
    Vector p(5);
    for (int i = 0; i < 5; ++i) p[i] = n(rng);
    CHECK(certify_nash_atomic(atomic, big.nash_closed_form(p), p, 1e-8).passed);
  }
}

TEST_CASE("optimal incentive") {
  const QuadraticAggregativeGame zero(Vector::Ones(2), swap2(), 0.5, vec({0, 0}));
  CHECK(norm_inf(zero.optimal_incentive()) == 0.0);

  const QuadraticAggregativeGame g(Vector::Ones(2), swap2(), 0.5, vec({1, 2}));
  const Vector p = g.optimal_incentive();
  CHECK(p[0] == doctest::Approx(-2.0));
  CHECK(p[1] == doctest::Approx(-2.5));
  CHECK(norm_inf(g.externality(g.nash_closed_form(p)) - p) < 1e-10);

  const QuadraticAggregativeGame h(Vector::Ones(2), swap2(), 0.5,
                                   std::vector<ScalarConvex>{ScalarConvex::quadratic(1.0), ScalarConvex::quadratic(2.0)});
  CHECK(norm_inf(h.optimal_incentive() - p) < 1e-9);
}

TEST_CASE("general social-cost terms") {
  SUBCASE("quartic") {
    const auto t = ScalarConvex::quartic(0.5, 2.0);
    CHECK(t.value(1.5) == doctest::Approx(0.25 + 1.0));
    CHECK(t.gradient(1.5) == doctest::Approx(1.0 + 2.0));
    CHECK(t.curvature(1.5) == doctest::Approx(3.0 + 2.0));
  }
  SUBCASE("table") {
    const auto t = ScalarConvex::table({-1.0, 0.0, 2.0}, {-2.0, 0.0, 1.0});
    CHECK(t.gradient(-0.5) == doctest::Approx(-1.0));
    CHECK(t.gradient(1.0) == doctest::Approx(0.5));
    CHECK(t.gradient(3.0) == doctest::Approx(1.5));
    CHECK(t.value(-1.0) == doctest::Approx(0.0));
    CHECK(t.value(0.0) == doctest::Approx(-1.0));
    CHECK(t.value(2.0) == doctest::Approx(-1.0 + 1.0));
    CHECK_THROWS_AS(ScalarConvex::table({0.0, 1.0}, {1.0, 0.0}), InvalidArgument);
  }
  SUBCASE("roots and fixed point") {
    Matrix A(3, 3);
    A << 0, 1, 0, 1, 0, 1, 0, 1, 0;
    const QuadraticAggregativeGame g(
        vec({1.0, 1.5, 2.0}), A, 0.2,
        std::vector<ScalarConvex>{ScalarConvex::quartic(-0.7, 0.5), ScalarConvex::quadratic(0.3, 2.0),
         ScalarConvex::table({-2.0, 0.0, 1.0}, {-1.0, 0.5, 2.0})});
    CHECK(g.social_target()[0] == doctest::Approx(-0.7));
    CHECK(g.social_target()[1] == doctest::Approx(0.3));
    CHECK(g.social_target()[2] == doctest::Approx(-2.0 + 4.0 / 3.0));
    const Vector p = g.optimal_incentive();
    CHECK(norm_inf(g.externality(g.nash_closed_form(p)) - p) < 1e-9);
    CHECK(norm_inf(g.social_gradient(g.nash_closed_form(p))) < 1e-9);
  }
  SUBCASE("gradient without a root") {
    CHECK_THROWS_AS(QuadraticAggregativeGame(Vector::Ones(1), Matrix::Zero(1, 1), 1.0,
                                             std::vector<ScalarConvex>{ScalarConvex::table({0.0, 1.0}, {1.0, 1.0 + 1e-9})}),
                    InvalidSpec);
  }
}

TEST_CASE("construction validation") {
  CHECK_THROWS_AS(QuadraticAggregativeGame(vec({1, -1}), swap2(), 0.5, vec({0, 0})), InvalidArgument);
  CHECK_THROWS_AS(QuadraticAggregativeGame(Vector::Ones(2), Matrix::Identity(2, 2), 0.5, vec({0, 0})),
                  InvalidArgument);
  CHECK_THROWS_AS(QuadraticAggregativeGame(Vector::Ones(2), swap2(), 0.0, vec({0, 0})), InvalidArgument);
  try {
    QuadraticAggregativeGame(Vector::Ones(2), swap2(), 1.0, vec({0, 0}));
    FAIL("singular M accepted");
  } catch (const InvalidSpec& e) {
    CHECK(std::string(e.what()).find("M invertibility") != std::string::npos);
  }
}

TEST_CASE("global conditions") {
  const QuadraticAggregativeGame g(Vector::Ones(2), swap2(), 0.5, vec({0, 0}));
  const auto r = g.check_global_conditions();
  CHECK(r.symmetric);
  CHECK(r.positive_definite);
  CHECK(r.min_eigenvalue == doctest::Approx(0.5));
  CHECK(r.passed);

  Matrix M1(2, 2);
  M1 << 1, 0.1, 1, 1;
  CHECK_FALSE(check_global_conditions(M1).symmetric);
  CHECK_FALSE(check_global_conditions(M1).passed);
  CHECK(check_global_conditions(Matrix::Identity(3, 3)).passed);
}

TEST_CASE("local conditions") {
  Matrix M1(2, 2), M2(2, 2);
  M1 << 1, 0.1, 1, 1;
  M2 << 1, -0.1, -0.1, 1;
  const auto r1 = check_local_conditions(M1, vec({-1, -0.5}));
  CHECK(r1.nonnegative_entries);
  CHECK(r1.inverse_offdiag_negative);
  CHECK(r1.passed);
  const auto r2 = check_local_conditions(M2, vec({-1, -0.5}));
  CHECK_FALSE(r2.nonnegative_entries);
  CHECK_FALSE(r2.passed);
  CHECK(check_global_conditions(M2).passed);

  // Zero off-diagonals of a diagonal inverse are not strictly negative.
  CHECK_FALSE(check_local_conditions(Matrix::Identity(2, 2) * 2.0, vec({0, 0})).passed);
  CHECK_FALSE(check_local_conditions(M1, vec({0.5, -1})).passed);
}

TEST_CASE("Lyapunov certificate") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 3);
  for (int s = 0; s < 5; ++s) {
    const auto g = random_pd_game(rng, 4);
    const Vector pd = g.optimal_incentive();
    CHECK(g.lyapunov_value(pd) == doctest::Approx(0.0));
    CHECK(g.lyapunov_decrement(pd) == doctest::Approx(0.0));
    for (int t = 0; t < 200; ++t) {
      Vector p(4);
      for (int i = 0; i < 4; ++i) p[i] = n(rng);
      const double expected = -2.0 * (g.nash_closed_form(p) - *g.zeta()).squaredNorm();
      CHECK(g.lyapunov_decrement(p) == doctest::Approx(expected).epsilon(1e-8));
      CHECK(g.lyapunov_decrement(p) < 0.0);
      CHECK(g.lyapunov_value(p) > 0.0);
    }
  }
}

TEST_CASE("closed form agrees with the best-response iteration") {
  std::mt19937_64 rng(9);
  const auto g = random_pd_game(rng, 5);
  const Vector p = vec({0.3, -1.0, 0.5, 2.0, -0.2});
  // Gauss-Seidel sweeps of the scalar best responses converge for SPD M.
  Vector x = Vector::Zero(5);
  for (int sweep = 0; sweep < 2000; ++sweep) {
    for (Eigen::Index i = 0; i < 5; ++i) x[i] = g.best_response(x, p)[i];
  }
  CHECK(norm_inf(x - g.nash_closed_form(p)) < 1e-6);
}

TEST_CASE("scaled-limit check") {
  std::mt19937_64 rng(2);
  const auto g = random_pd_game(rng, 3);
  for (auto variant : {RuleVariant::equilibrium, RuleVariant::best_response, RuleVariant::gradient}) {
    const auto r = check_scaled_limit(g, StrategyUpdateRule{variant, 0.1});
    CHECK(r.verifiable);
    CHECK(r.passed);
  }
  const auto e = check_scaled_limit(g, StrategyUpdateRule{RuleVariant::gradient, 0.1, Regularizer::entropy});
  CHECK_FALSE(e.verifiable);
  CHECK_FALSE(e.passed);
  CHECK(e.note.find("not verifiable") != std::string::npos);
}
