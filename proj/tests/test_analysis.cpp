#include "doctest.h"

#include "incentive/aggregative.hpp"
#include "incentive/analysis.hpp"

#include <sstream>

using namespace incentive;
using namespace incentive::analysis;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

aggregative::QuadraticAggregativeGame pd_game() {
  Matrix A(3, 3);
  A << 0, 1, 0.5, 1, 0, 1, 0.5, 1, 0;
  return {vec({1.5, 1.2, 1.8}), A, 0.3, vec({1.0, -0.5, 0.4})};
}

aggregative::QuadraticAggregativeGame coupled_pair(double a12, double a21) {
  Matrix A(2, 2);
  A << 0, a12, a21, 0;
  return {Vector::Ones(2), A, 1.0, vec({-1.0, -0.5})};
}

std::vector<Vector> random_points(std::size_t n, std::size_t count, std::uint64_t seed) {
  return sample_ball(Vector::Zero(static_cast<Eigen::Index>(n)), 2.0, count, seed);
}

}  // namespace

TEST_CASE("fixed-point optimality on the two-link game") {
  const routing::TollSystem sys(routing::two_link());
  const auto ok = verify_fixed_point_optimality(sys, vec({0.5, 0.5}), 1e-6);
  CHECK(ok.passed());
  CHECK(ok.externality_gap < 1e-6);
  CHECK(ok.x_star[0] == doctest::Approx(0.5));

  const auto off = verify_fixed_point_optimality(sys, vec({0.6, 0.5}), 1e-6);
  CHECK_FALSE(off.externality_ok);
  CHECK_FALSE(off.passed());

  const Json j = ok.to_json();
  REQUIRE(j["checks"].size() == 3);
  CHECK(j["checks"][0]["name"] == "externality_matches_incentive");
  CHECK(j["checks"][1]["name"] == "social_optimum_certificate");
  CHECK(j["checks"][2]["name"] == "distance_to_social_optimum");
  CHECK(j["passed"] == true);
  CHECK(off.to_json()["checks"][0]["passed"] == false);
}

TEST_CASE("fixed-point optimality on an aggregative game") {
  const auto g = pd_game();
  const AtomicSystem sys(g.to_atomic_game());
  const Vector pd = g.optimal_incentive();
  CHECK(verify_fixed_point_optimality(sys, pd, 1e-8).passed());
  Vector bumped = pd;
  bumped[1] += 0.1;
  const auto r = verify_fixed_point_optimality(sys, bumped, 1e-8);
  CHECK_FALSE(r.externality_ok);
  CHECK(r.externality_gap > 1e-3);
}

TEST_CASE("slow ODE probe") {
  const routing::TollSystem sys(routing::two_link());
  OdeProbeConfig cfg;
  cfg.start_points = {vec({0, 0}), vec({0.5, 0.5}), vec({2, -1})};
  const auto rep = ode_probe_slow_dynamics(sys, cfg, vec({0.5, 0.5}));
  REQUIRE(rep.starts.size() == 3);
  CHECK(rep.starts[0].terminal_distance <= 1e-3);
  CHECK(rep.starts[1].terminal_distance <= 1e-9);
  CHECK(rep.max_terminal_distance() <= 1e-3);
  for (const auto& s : rep.starts) {
    CHECK(s.error.empty());
    CHECK(s.tail_monotone);
    for (double d : s.decrement_samples) CHECK(d <= 1e-12);
  }
  CHECK(rep.to_json()["starts"].size() == 3);

  const auto g = pd_game();
  const AtomicSystem agg(g.to_atomic_game());
  OdeProbeConfig many;
  many.horizon = 40.0;
  many.start_points = sample_ball(Vector::Zero(3), 5.0, 20, 31);
  many.start_points.push_back(g.optimal_incentive());
  const auto arep = ode_probe_slow_dynamics(agg, many, g.optimal_incentive());
  CHECK(arep.max_terminal_distance() <= 1e-4);
  CHECK(arep.starts.back().terminal_distance <= 10 * many.step);

  OdeProbeConfig bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("cooperative condition") {
  SUBCASE("nonnegative coupling pair") {
    const auto g = coupled_pair(0.1, 1.0);
    const AtomicSystem sys(g.to_atomic_game());
    const auto r = check_condition_C1(sys, random_points(2, 10, 3), g.optimal_incentive());
    CHECK(r.samples == 10);
    CHECK(r.offdiagonal_positive);
    CHECK(r.min_offdiagonal > 0.0);
  }
  SUBCASE("negative coupling pair") {
    const auto g = coupled_pair(-0.1, -0.1);
    const AtomicSystem sys(g.to_atomic_game());
    const auto r = check_condition_C1(sys, random_points(2, 10, 3), g.optimal_incentive());
    CHECK_FALSE(r.offdiagonal_positive);
    CHECK_FALSE(r.passed);
  }
  SUBCASE("no coupling") {
    const aggregative::QuadraticAggregativeGame g(Vector::Ones(2), Matrix::Zero(2, 2), 1.0, vec({0.5, 0.5}));
    const AtomicSystem sys(g.to_atomic_game());
    const auto r = check_condition_C1(sys, random_points(2, 10, 5), g.optimal_incentive());
    CHECK(std::abs(r.min_offdiagonal) < 1e-6);
    CHECK_FALSE(r.offdiagonal_positive);
    CHECK_FALSE(r.passed);
  }
}

TEST_CASE("Lyapunov condition") {
  SUBCASE("aggregative") {
    const auto g = pd_game();
    const AtomicSystem sys(g.to_atomic_game());
    const Vector pd = g.optimal_incentive();
    const QuadraticForm V{pd, g.M().inverse().transpose()};
    auto samples = sample_ball(pd, 2.0, 200, 7);
    samples.push_back(pd);
    const auto r = check_condition_C2(sys, V, samples);
    CHECK(r.passed);
    CHECK(r.samples == 201);
    CHECK(r.at_center == 1);
    CHECK(r.violations == 0);
    CHECK(r.max_decrement <= 0.0);

    // Centered away from the fixed point the decrement changes sign somewhere.
    const QuadraticForm wrong{Vector(pd + vec({1.0, 1.0, 1.0})), Matrix::Identity(3, 3)};
    const auto w = check_condition_C2(sys, wrong, sample_ball(pd, 0.5, 200, 8));
    CHECK_FALSE(w.passed);
    CHECK(w.violations > 0);
  }
  SUBCASE("routing with rate 2") {
    const auto net = routing::two_link();
    const routing::TollSystem sys(net);
    const Vector pd = routing::optimal_edge_tolls(net).tolls;
    const Vector delta = routing::delta_matrix(net, pd);
    const QuadraticForm V{pd, delta.asDiagonal()};
    const auto r = check_condition_C2(sys, V, sample_ball(pd, 0.1 * pd.norm() + 0.01, 100, 9), 2.0, 1e-8);
    CHECK(r.passed);
    CHECK(r.max_margin < 0.0);
  }
  SUBCASE("quadratic form") {
    const QuadraticForm q{vec({1, 0}), Matrix::Identity(2, 2) * 2.0};
    CHECK(q.value(vec({1, 0})) == 0.0);
    CHECK(q.value(vec({2, 1})) == doctest::Approx(4.0));
    CHECK(norm_inf(q.gradient(vec({2, 1})) - vec({4, 4})) < 1e-15);
  }
}

TEST_CASE("ball sampling") {
  const Vector c = vec({1, -1, 2});
  const auto a = sample_ball(c, 0.5, 300, 42);
  const auto b = sample_ball(c, 0.5, 300, 42);
  REQUIRE(a.size() == 300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i] - c).norm() <= 0.5 + 1e-12);
    CHECK(a[i] == b[i]);
  }
}

TEST_CASE("gradient baseline") {
  CHECK(norm_inf(two_link_clarke_gradient(vec({0.3, 0.1})) - vec({0.2, -0.2})) < 1e-15);
  CHECK(norm_inf(two_link_clarke_gradient(vec({3, 0}))) == 0.0);
  CHECK(norm_inf(two_link_clarke_gradient(vec({0, 2}))) == 0.0);

  const routing::TollSystem sys(routing::two_link());
  CHECK(norm_inf(baseline_gradient_fd(sys, vec({0.3, 0.1}), 0.0) - vec({0.2, -0.2})) < 1e-6);
  CHECK(norm_inf(gradient_baseline_step(sys, vec({0.3, 0.1}), 1.0) - vec({0.1, 0.3})) < 1e-6);
  // Flat region: the incentive does not move.
  CHECK(norm_inf(gradient_baseline_step(sys, vec({3, 0}), 1.0) - vec({3, 0})) < 1e-12);
  const IncentiveGradient clarke = [](const Vector& p, const Vector&) { return two_link_clarke_gradient(p); };
  CHECK(norm_inf(gradient_baseline_step(sys, vec({1.5, 0}), 0.5, 0.0, clarke) - vec({1.5, 0})) == 0.0);
}

TEST_CASE("two-link counterexample") {
  const auto r = reproduce_counterexample();
  CHECK(r.formula_ok);
  CHECK(r.cost_ok);
  CHECK(r.baseline_stuck);
  CHECK(r.externality_ok);
  CHECK(r.passed());
  CHECK(r.max_flow_error <= 1e-6);
  CHECK(r.max_cost_error <= 1e-6);
  REQUIRE(r.baseline_runs.size() == 3);
  for (const auto& run : r.baseline_runs) {
    CHECK(norm_inf(run.final_p - run.start) < 1e-12);
    CHECK(run.final_social_cost == doctest::Approx(1.0));
  }
  for (const auto& run : r.externality_runs) {
    CHECK(norm_inf(run.final_p - vec({0.5, 0.5})) <= 1e-3);
    CHECK(run.final_social_cost == doctest::Approx(0.5).epsilon(1e-4));
  }
  std::istringstream csv(r.grid_csv);
  std::string line;
  std::size_t lines = 0;
  std::getline(csv, line);
  CHECK(line == "p1,p2,x1_solver,x1_formula,cost_solver,cost_formula");
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 41 * 41);
}

TEST_CASE("multistart uniqueness") {
  const routing::TollSystem sys(routing::braess());
  const auto r = multistart_uniqueness_probe(sys, vec({0.1, 0, 0.2, 0, 0.05}), 16, 1);
  CHECK(r.starts == 16);
  CHECK_FALSE(r.flagged);
  CHECK(r.max_distance < 1e-6);

  const auto g = pd_game();
  const AtomicSystem agg(g.to_atomic_game());
  CHECK_FALSE(multistart_uniqueness_probe(agg, vec({0.2, 0.1, -0.3}), 8, 2).flagged);
}
