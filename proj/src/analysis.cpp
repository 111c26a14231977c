#include "incentive/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace incentive::analysis {

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

namespace {

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Vector unit(Eigen::Index n, Eigen::Index i) {
  Vector u = Vector::Zero(n);
  u[i] = 1.0;
  return u;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fixed-point certification

FixedPointReport verify_fixed_point_optimality(const CoupledSystem& system, const Vector& p,
                                               double tol) {
  require(tol > 0.0, "tolerance must be positive");
  require(static_cast<std::size_t>(p.size()) == system.incentive_size(),
          "incentive vector has the wrong length");
  FixedPointReport report;
  report.p = p;
  report.tol = tol;
  try {
    report.x_star = system.equilibrium(p, {});
    report.externality_gap = norm_inf(system.externality(report.x_star) - p);
    report.optimality_residual = system.optimality_residual(report.x_star);
    report.optimum_distance = system.strategy_gap(report.x_star, system.social_optimum());
  } catch (const std::exception& e) {
    report.error = e.what();
    return report;
  }
  report.externality_ok = report.externality_gap <= tol;
  report.optimality_ok = report.optimality_residual <= tol;
  report.optimum_ok = report.optimum_distance <= 10.0 * tol;
  return report;
}

Json FixedPointReport::to_json() const {
  Json j;
  j["p"] = analysis::to_json(p);
  j["x_star"] = analysis::to_json(x_star);
  j["tol"] = tol;
  j["checks"] = {
      {{"name", "externality_matches_incentive"},
       {"value", finite_or_null(externality_gap)},
       {"limit", tol},
       {"passed", externality_ok}},
      {{"name", "social_optimum_certificate"},
       {"value", finite_or_null(optimality_residual)},
       {"limit", tol},
       {"passed", optimality_ok}},
      {{"name", "distance_to_social_optimum"},
       {"value", finite_or_null(optimum_distance)},
       {"limit", 10.0 * tol},
       {"passed", optimum_ok}},
  };
  if (!error.empty()) j["error"] = error;
  j["passed"] = passed();
  return j;
}

// ---------------------------------------------------------------------------
// Slow-ODE probe

double QuadraticForm::value(const Vector& p) const {
  const Vector d = p - center;
  return d.dot(matrix * d);
}

Vector QuadraticForm::gradient(const Vector& p) const {
  const Vector d = p - center;
  return (matrix + matrix.transpose()) * d;
}

void OdeProbeConfig::validate() const {
  require(step > 0.0 && std::isfinite(step), "ODE probe step must be positive");
  require(horizon >= step && std::isfinite(horizon), "ODE probe horizon must be at least one step");
  require(!start_points.empty(), "ODE probe needs at least one start point");
}

double StabilityReport::max_terminal_distance() const {
  double worst = 0.0;
  for (const auto& s : starts) worst = std::max(worst, s.terminal_distance);
  return worst;
}

Json StabilityReport::to_json() const {
  Json j;
  j["target"] = analysis::to_json(target);
  Json arr = Json::array();
  for (const auto& s : starts) {
    Json e;
    e["start"] = analysis::to_json(s.start);
    e["terminal"] = analysis::to_json(s.terminal);
    e["terminal_distance"] = finite_or_null(s.terminal_distance);
    e["tail_monotone"] = s.tail_monotone;
    e["decrement_samples"] = s.decrement_samples;
    if (!s.error.empty()) e["error"] = s.error;
    arr.push_back(e);
  }
  j["starts"] = arr;
  j["max_terminal_distance"] = finite_or_null(max_terminal_distance());
  return j;
}

StabilityReport ode_probe_slow_dynamics(const CoupledSystem& system, const OdeProbeConfig& config,
                                        const Vector& target, const QuadraticForm& lyapunov) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(system.incentive_size());
  require(target.size() == n, "ODE probe target has the wrong length");
  QuadraticForm v = lyapunov;
  if (v.matrix.size() == 0) v = {target, Matrix::Identity(n, n)};

  const long steps = static_cast<long>(std::ceil(config.horizon / config.step - 1e-9));
  const long sample_stride = std::max(1L, steps / 10);

  StabilityReport report;
  report.target = target;
  for (const auto& start : config.start_points) {
    require(start.size() == n, "ODE probe start point has the wrong length");
    StartPointReport s;
    s.start = start;
    Vector p = start;
    Vector warm;
    double previous = kInf;
    bool monotone = true;
    try {
      for (long k = 0; k <= steps; ++k) {
        const Vector x = system.equilibrium(p, warm);
        warm = x;
        const Vector drift = system.externality(x) - p;
        const double dist = (p - target).norm();
        if (2 * k >= steps) {
          // Below 1e-10 the distance is equilibrium-solver noise.
          if (dist > previous * (1.0 + 1e-9) + 1e-10) monotone = false;
          previous = dist;
        }
        if (k % sample_stride == 0) s.decrement_samples.push_back(v.gradient(p).dot(drift));
        if (k == steps) break;
        p += config.step * drift;
        if (!p.allFinite()) throw std::runtime_error("ODE probe diverged");
      }
      s.terminal = p;
      s.terminal_distance = (p - target).norm();
      s.tail_monotone = monotone;
    } catch (const std::exception& e) {
      s.error = e.what();
      s.terminal = p;
    }
    report.starts.push_back(std::move(s));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Condition C1

Json C1Report::to_json() const {
  Json j;
  j["samples"] = samples;
  j["min_offdiagonal"] = finite_or_null(min_offdiagonal);
  j["offdiagonal_positive"] = offdiagonal_positive;
  j["e_at_zero"] = analysis::to_json(e_at_zero);
  j["p_dagger"] = analysis::to_json(p_dagger);
  j["branch_nonnegative"] = branch_nonnegative;
  j["branch_nonpositive"] = branch_nonpositive;
  j["dominating_epsilon"] = dominating_epsilon;
  j["passed"] = passed;
  return j;
}

C1Report check_condition_C1(const CoupledSystem& system, const std::vector<Vector>& samples,
                            const Vector& p_dagger) {
  const auto n = static_cast<Eigen::Index>(system.incentive_size());
  require(p_dagger.size() == n, "p-dagger has the wrong length");
  constexpr double kSlack = 1e-9;

  C1Report report;
  report.samples = samples.size();
  report.p_dagger = p_dagger;
  auto slow = [&](const Vector& p) { return system.slow_target(p, {}); };

  for (const auto& p : samples) {
    require(p.size() == n, "C1 sample has the wrong length");
    const Matrix jac = finite_difference_jacobian(slow, p, 1e-5);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (i != k) report.min_offdiagonal = std::min(report.min_offdiagonal, jac(i, k));
      }
    }
  }
  report.offdiagonal_positive = !samples.empty() && n > 1 && report.min_offdiagonal > kSlack;

  report.e_at_zero = slow(Vector::Zero(n));
  const bool zero_nonneg = (report.e_at_zero.array() >= -kSlack).all();
  const bool zero_nonpos = (report.e_at_zero.array() <= kSlack).all();
  const bool dagger_nonneg = (p_dagger.array() >= -kSlack).all();
  const bool dagger_nonpos = (p_dagger.array() <= kSlack).all();

  // p' = (1 + ε)p† dominates any bounded p once ε is large; the drift sign
  // must hold along the whole ray.
  const std::vector<double> eps_grid{0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  bool ray_nonpos = true;
  bool ray_nonneg = true;
  for (double eps : eps_grid) {
    const Vector q = (1.0 + eps) * p_dagger;
    const Vector drift = slow(q) - q;
    const double scale = kSlack * (1.0 + norm_inf(q));
    if ((drift.array() > scale).any()) ray_nonpos = false;
    if ((drift.array() < -scale).any()) ray_nonneg = false;
  }
  const bool strictly_nonzero = norm_inf(p_dagger) > kSlack;
  report.branch_nonnegative = zero_nonneg && dagger_nonneg && ray_nonpos && strictly_nonzero;
  report.branch_nonpositive = zero_nonpos && dagger_nonpos && ray_nonneg && strictly_nonzero;
  report.dominating_epsilon =
      (report.branch_nonnegative || report.branch_nonpositive) ? eps_grid.front() : 0.0;
  report.passed =
      report.offdiagonal_positive && (report.branch_nonnegative || report.branch_nonpositive);
  return report;
}

// ---------------------------------------------------------------------------
// Condition C2

Json C2Report::to_json() const {
  return {{"samples", samples},
          {"at_center", at_center},
          {"max_decrement", finite_or_null(max_decrement)},
          {"max_margin", finite_or_null(max_margin)},
          {"violations", violations},
          {"passed", passed}};
}

C2Report check_condition_C2(const CoupledSystem& system, const QuadraticForm& lyapunov,
                            const std::vector<Vector>& samples, double rate, double slack) {
  const auto n = static_cast<Eigen::Index>(system.incentive_size());
  require(lyapunov.center.size() == n && lyapunov.matrix.rows() == n &&
              lyapunov.matrix.cols() == n,
          "Lyapunov form has the wrong dimensions");
  C2Report report;
  report.samples = samples.size();
  Vector warm;
  for (const auto& p : samples) {
    require(p.size() == n, "C2 sample has the wrong length");
    const double v = lyapunov.value(p);
    const Vector x = system.equilibrium(p, warm);
    warm = x;
    const double dec = lyapunov.gradient(p).dot(system.externality(x) - p);
    if (v <= 1e-14) {
      ++report.at_center;
      continue;
    }
    report.max_decrement = std::max(report.max_decrement, dec);
    const double margin = dec + rate * v - slack;
    report.max_margin = std::max(report.max_margin, margin);
    if (!(margin < 0.0)) ++report.violations;
  }
  report.passed = report.violations == 0 && report.samples > report.at_center;
  return report;
}

std::vector<Vector> sample_ball(const Vector& center, double radius, std::size_t count,
                                std::uint64_t seed) {
  require(radius >= 0.0, "ball radius must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const auto n = center.size();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Vector dir(n);
    for (Eigen::Index i = 0; i < n; ++i) dir[i] = normal(rng);
    const double norm = dir.norm();
    dir = norm > 0.0 ? Vector(dir / norm) : unit(n, 0);
    const double r = radius * std::pow(uniform(rng), 1.0 / static_cast<double>(n));
    out.push_back(center + r * dir);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient baseline

Vector baseline_gradient_fd(const CoupledSystem& system, const Vector& p, double fd_step,
                            const Vector& warm) {
  const double h = fd_step > 0.0 ? fd_step : 1e-4 * (1.0 + p.norm());
  Vector g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Vector e = unit(p.size(), i);
    const double up = system.social_cost(system.equilibrium(p + h * e, warm));
    const double down = system.social_cost(system.equilibrium(p - h * e, warm));
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Vector two_link_clarke_gradient(const Vector& p) {
  require(p.size() == 2, "two-link gradient needs a length-2 toll vector");
  const double d = p[0] - p[1];
  Vector g = Vector::Zero(2);
  if (std::abs(d) < 1.0) {
    g << d, -d;
  }
  return g;
}

IncentiveGradient make_baseline_gradient(const CoupledSystem& system, double fd_step,
                                         IncentiveGradient closed_form) {
  return [&system, fd_step, closed_form](const Vector& p, const Vector& warm) -> Vector {
    const double h = fd_step > 0.0 ? fd_step : 1e-4 * (1.0 + p.norm());
    if (closed_form && p.size() == 2 && std::abs(std::abs(p[0] - p[1]) - 1.0) <= 10.0 * h) {
      return closed_form(p, warm);
    }
    Vector start = warm;
    if (static_cast<std::size_t>(start.size()) != system.strategy_size()) start = Vector();
    return baseline_gradient_fd(system, p, h, start);
  };
}

Vector gradient_baseline_step(const CoupledSystem& system, const Vector& p, double beta,
                              double fd_step, const IncentiveGradient& closed_form) {
  require(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1]");
  const auto gradient = make_baseline_gradient(system, fd_step, closed_form);
  return p - beta * gradient(p, {});
}

// ---------------------------------------------------------------------------
// Two-link counterexample

Json CounterexampleReport::to_json() const {
  auto runs = [](const std::vector<RunOutcome>& v) {
    Json arr = Json::array();
    for (const auto& r : v) {
      arr.push_back({{"start", analysis::to_json(r.start)},
                     {"final_p", analysis::to_json(r.final_p)},
                     {"final_social_cost", r.final_social_cost},
                     {"converged", r.converged},
                     {"iterations", r.iterations}});
    }
    return arr;
  };
  Json j;
  j["checks"] = {
      {{"name", "equilibrium_formula"},
       {"max_error", max_flow_error},
       {"worst_point", analysis::to_json(worst_flow_point)},
       {"passed", formula_ok}},
      {{"name", "equilibrium_cost_formula"},
       {"max_error", max_cost_error},
       {"worst_point", analysis::to_json(worst_cost_point)},
       {"passed", cost_ok}},
      {{"name", "gradient_baseline_inefficient"}, {"runs", runs(baseline_runs)}, {"passed", baseline_stuck}},
      {{"name", "externality_update_optimal"}, {"runs", runs(externality_runs)}, {"passed", externality_ok}},
  };
  j["passed"] = passed();
  return j;
}

namespace {

RunOutcome outcome_of(const TrajectoryRecord& rec, const Vector& start) {
  const auto& last = rec.final_point();
  return {start, last.p, last.social_cost, rec.converged, rec.iterations};
}

}  // namespace

CounterexampleReport reproduce_counterexample(const CounterexampleOptions& options) {
  require(options.grid_points >= 2, "counterexample grid needs at least two points per axis");
  const routing::TollSystem system(routing::two_link());
  const auto& net = system.network();
  CounterexampleReport report;

  std::ostringstream csv;
  csv << "p1,p2,x1_solver,x1_formula,cost_solver,cost_formula\n" << std::setprecision(17);
  const double span = options.grid_upper - options.grid_lower;
  const auto g = options.grid_points;
  Vector warm;
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t k = 0; k < g; ++k) {
      Vector p(2);
      p << options.grid_lower + span * static_cast<double>(i) / static_cast<double>(g - 1),
          options.grid_lower + span * static_cast<double>(k) / static_cast<double>(g - 1);
      const auto eq = routing::wardrop_equilibrium(net, p, {}, warm);
      warm = eq.route_flow;
      const double d = p[0] - p[1];
      const double x1 = std::clamp((p[1] - p[0] + 1.0) / 2.0, 0.0, 1.0);
      const double cost = std::abs(d) <= 1.0 ? (d * d + 1.0) / 2.0 : 1.0;
      const double solver_cost = net.social_cost(eq.edge_flow);
      const double flow_err = std::abs(eq.route_flow[0] - x1);
      const double cost_err = std::abs(solver_cost - cost);
      if (flow_err >= report.max_flow_error) {
        report.max_flow_error = flow_err;
        report.worst_flow_point = p;
      }
      if (cost_err >= report.max_cost_error) {
        report.max_cost_error = cost_err;
        report.worst_cost_point = p;
      }
      csv << p[0] << ',' << p[1] << ',' << eq.route_flow[0] << ',' << x1 << ',' << solver_cost
          << ',' << cost << '\n';
    }
  }
  report.grid_csv = csv.str();
  report.formula_ok = report.max_flow_error <= options.grid_tol;
  report.cost_ok = report.max_cost_error <= options.grid_tol;

  std::vector<Vector> starts = options.inefficient_starts;
  if (starts.empty()) {
    starts = {Vector(2), Vector(2), Vector(2)};
    starts[0] << 1.5, 0.0;
    starts[1] << 0.0, 2.0;
    starts[2] << 3.0, 0.0;
  }
  const Vector x0 = net.layout().uniform();

  RunConfig baseline_cfg = options.run;
  baseline_cfg.incentive_update = IncentiveUpdate::gradient_baseline;
  const auto clarke = [](const Vector& p, const Vector&) { return two_link_clarke_gradient(p); };
  const auto baseline = make_baseline_gradient(system, baseline_cfg.fd_step, clarke);
  report.baseline_stuck = true;
  for (const auto& s : starts) {
    require(s.size() == 2, "counterexample start must have length 2");
    TrajectoryRecord rec;
    try {
      rec = run_coupled(system, x0, s, baseline_cfg, baseline);
    } catch (const RunFailure& f) {
      rec = f.trajectory();
    }
    const auto out = outcome_of(rec, s);
    report.baseline_runs.push_back(out);
    const bool stuck = std::abs(out.final_p[0] - out.final_p[1]) >= 1.0 - 1e-12 &&
                       std::abs(out.final_social_cost - 1.0) <= options.final_tol;
    report.baseline_stuck = report.baseline_stuck && stuck;
  }

  RunConfig ext_cfg = options.run;
  ext_cfg.incentive_update = IncentiveUpdate::externality;
  std::vector<Vector> ext_starts{Vector::Zero(2)};
  ext_starts.insert(ext_starts.end(), starts.begin(), starts.end());
  report.externality_ok = true;
  for (const auto& s : ext_starts) {
    TrajectoryRecord rec;
    try {
      rec = run_coupled(system, x0, s, ext_cfg);
    } catch (const RunFailure& f) {
      rec = f.trajectory();
    }
    const auto out = outcome_of(rec, s);
    report.externality_runs.push_back(out);
    const bool ok = out.converged && norm_inf(out.final_p - Vector::Constant(2, 0.5)) <= options.final_tol &&
                    std::abs(out.final_social_cost - 0.5) <= options.final_tol;
    report.externality_ok = report.externality_ok && ok;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Multistart uniqueness

Json UniquenessReport::to_json() const {
  return {{"starts", starts},
          {"max_distance", finite_or_null(max_distance)},
          {"threshold", threshold},
          {"flagged", flagged}};
}

UniquenessReport multistart_uniqueness_probe(const CoupledSystem& system, const Vector& p,
                                             std::size_t n_starts, std::uint64_t seed,
                                             double threshold) {
  require(n_starts >= 1, "multistart probe needs at least one start");
  std::mt19937_64 rng(seed);
  std::vector<Vector> results;
  results.reserve(n_starts);
  for (std::size_t s = 0; s < n_starts; ++s) {
    results.push_back(system.equilibrium(p, system.random_strategy(rng)));
  }
  UniquenessReport report;
  report.starts = n_starts;
  report.threshold = threshold;
  for (std::size_t a = 0; a < results.size(); ++a) {
    for (std::size_t b = a + 1; b < results.size(); ++b) {
      report.max_distance = std::max(report.max_distance, system.strategy_gap(results[a], results[b]));
    }
  }
  report.flagged = report.max_distance > threshold;
  return report;
}

}  // namespace incentive::analysis
