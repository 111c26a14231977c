#include "incentive/dynamics.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace incentive {

StepSchedule::StepSchedule(double a, double b, double gamma0, double beta0, long offset)
    : a_(a), b_(b), gamma0_(gamma0), beta0_(beta0), offset_(offset) {
  require(a > 0.5 && a < b && b <= 1.0, "step exponents must satisfy 0.5 < a < b <= 1");
  require(gamma0 > 0.0 && beta0 > 0.0, "step scale factors must be positive");
  require(offset >= 1, "step offset k0 must be a positive integer");
  // Both sequences are decreasing in k, so checking k = 0 covers every k.
  require(gamma(0) < 1.0, "gamma0·k0^(-a) must be below 1");
  require(beta(0) < 1.0, "beta0·k0^(-b) must be below 1");
}

double StepSchedule::gamma(long k) const {
  return gamma0_ * std::pow(static_cast<double>(k + offset_), -a_);
}

double StepSchedule::beta(long k) const {
  return beta0_ * std::pow(static_cast<double>(k + offset_), -b_);
}

void RunConfig::validate() const {
  require(max_iterations >= 1, "max_iterations must be at least 1");
  require(convergence_tol > 0.0, "convergence_tol must be positive");
  require(record_every >= 1, "record_every must be at least 1");
  require(rule.eta >= 0.0, "gradient step eta must be positive (0 selects the default)");
  require(fd_step >= 0.0, "fd_step must be nonnegative");
}

void TrajectoryRecord::write_csv(std::ostream& out) const {
  out << "k,residual,social_cost";
  if (!points.empty()) {
    for (Eigen::Index i = 0; i < points.front().x.size(); ++i) out << ",x" << i;
    for (Eigen::Index i = 0; i < points.front().p.size(); ++i) out << ",p" << i;
  }
  out << '\n';
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  for (const auto& pt : points) {
    out << pt.k << ',' << pt.residual << ',' << pt.social_cost;
    for (double v : pt.x) out << ',' << v;
    for (double v : pt.p) out << ',' << v;
    out << '\n';
  }
  out.precision(old_precision);
}

std::string TrajectoryRecord::summary_json() const {
  nlohmann::json j;
  j["converged"] = converged;
  j["iterations"] = iterations;
  if (!points.empty()) {
    const auto& last = points.back();
    j["final_k"] = last.k;
    j["final_x"] = std::vector<double>(last.x.begin(), last.x.end());
    j["final_p"] = std::vector<double>(last.p.begin(), last.p.end());
    j["final_residual"] = last.residual;
    j["final_social_cost"] = last.social_cost;
  }
  return j.dump(2);
}

Vector CoupledSystem::logit_response(const Vector&, const Vector&, double) const {
  throw InvalidArgument("entropy regularizer is only defined for simplex (non-atomic) strategies");
}

// ---------------------------------------------------------------------------
// Simplex helpers

Vector simplex_best_response(const PopulationLayout& layout, const Vector& costs) {
  Vector y = Vector::Zero(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t i = 0; i < layout.populations(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < layout.actions(i); ++j) {
      // Strict comparison keeps the lowest index on ties.
      if (costs[layout.offset(i) + j] < costs[layout.offset(i) + best]) best = j;
    }
    y[layout.offset(i) + best] = layout.mass(i);
  }
  return y;
}

Vector simplex_logit(const PopulationLayout& layout, const Vector& costs, double eta) {
  Vector y(layout.size());
  for (std::size_t i = 0; i < layout.populations(); ++i) {
    const auto seg = costs.segment(layout.offset(i), layout.actions(i));
    const double shift = seg.minCoeff();
    Vector w = (-eta * (seg.array() - shift)).exp().matrix();
    y.segment(layout.offset(i), layout.actions(i)) = layout.mass(i) * w / w.sum();
  }
  return y;
}

Vector random_simplex_point(const PopulationLayout& layout, std::mt19937_64& rng) {
  std::exponential_distribution<double> draw(1.0);
  Vector y(layout.size());
  for (std::size_t i = 0; i < layout.populations(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < layout.actions(i); ++j) {
      y[layout.offset(i) + j] = draw(rng);
      total += y[layout.offset(i) + j];
    }
    y.segment(layout.offset(i), layout.actions(i)) *= layout.mass(i) / total;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Atomic

AtomicSystem::AtomicSystem(AtomicGame game, SolverOptions solver)
    : game_(std::move(game)), solver_(solver) {
  game_.finalize();
}

Vector AtomicSystem::random_strategy(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector x(game_.n_players());
  for (std::size_t i = 0; i < game_.n_players(); ++i) {
    const auto& b = game_.bounds[i];
    double lo = std::isfinite(b.lower) ? b.lower : (std::isfinite(b.upper) ? b.upper - 2.0 : -1.0);
    double hi = std::isfinite(b.upper) ? b.upper : lo + 2.0;
    x[i] = lo + (hi - lo) * unit(rng);
  }
  return x;
}

Vector AtomicSystem::equilibrium(const Vector& p, const Vector& warm) const {
  return nash_equilibrium(game_, p, warm, solver_);
}

Vector AtomicSystem::best_response(const Vector& x, const Vector& p) const {
  return best_response_atomic(game_, x, p);
}

Vector AtomicSystem::pseudo_gradient(const Vector& x, const Vector& p) const {
  return game_.own_gradients(x) + p;
}

Vector AtomicSystem::externality(const Vector& x) const { return externality_atomic(game_, x); }

Vector AtomicSystem::social_optimum() const { return incentive::social_optimum(game_, solver_); }

double AtomicSystem::optimality_residual(const Vector& x) const {
  return incentive::optimality_residual(game_, x);
}

double AtomicSystem::nash_residual(const Vector& x, const Vector& p) const {
  return certify_nash_atomic(game_, x, p, kInf).residual;
}

// ---------------------------------------------------------------------------
// Non-atomic

NonAtomicSystem::NonAtomicSystem(NonAtomicGame game, SolverOptions solver)
    : game_(std::move(game)), solver_(solver) {
  game_.finalize();
}

Vector NonAtomicSystem::random_strategy(std::mt19937_64& rng) const {
  return random_simplex_point(game_.layout, rng);
}

Vector NonAtomicSystem::equilibrium(const Vector& p, const Vector& warm) const {
  return nash_equilibrium(game_, p, warm, solver_);
}

Vector NonAtomicSystem::best_response(const Vector& x, const Vector& p) const {
  return simplex_best_response(game_.layout, game_.action_costs(x) + p);
}

Vector NonAtomicSystem::pseudo_gradient(const Vector& x, const Vector& p) const {
  return game_.action_costs(x) + p;
}

Vector NonAtomicSystem::logit_response(const Vector& x, const Vector& p, double eta) const {
  return simplex_logit(game_.layout, game_.action_costs(x) + p, eta);
}

Vector NonAtomicSystem::externality(const Vector& x) const {
  return externality_nonatomic(game_, x);
}

Vector NonAtomicSystem::social_optimum() const {
  return incentive::social_optimum(game_, solver_);
}

double NonAtomicSystem::optimality_residual(const Vector& x) const {
  return incentive::optimality_residual(game_, x, 1e-9);
}

double NonAtomicSystem::nash_residual(const Vector& x, const Vector& p) const {
  return simplex_gap_residual(game_.layout, x, game_.action_costs(x) + p, 1e-9);
}

// ---------------------------------------------------------------------------
// Updates

Vector strategy_target(const CoupledSystem& system, const Vector& x, const Vector& p,
                       const StrategyUpdateRule& rule) {
  switch (rule.variant) {
    case RuleVariant::equilibrium:
      return system.equilibrium(p, x);
    case RuleVariant::best_response:
      return system.best_response(x, p);
    case RuleVariant::gradient: {
      require(rule.eta > 0.0, "gradient rule needs a positive step (resolve_rule fills the default)");
      if (rule.regularizer == Regularizer::entropy) {
        return system.logit_response(x, p, rule.eta);
      }
      return system.project(x - rule.eta * system.pseudo_gradient(x, p));
    }
  }
  throw InvalidArgument("unknown strategy update rule");
}

double default_gradient_step(const CoupledSystem& system, const Vector& x, const Vector& p) {
  const Matrix jac = finite_difference_jacobian(
      [&](const Vector& y) { return system.pseudo_gradient(y, p); }, x);
  Eigen::JacobiSVD<Matrix> svd(jac);
  const double lipschitz = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return lipschitz > 1e-12 ? 0.9 / lipschitz : 1.0;
}

StrategyUpdateRule resolve_rule(const CoupledSystem& system, StrategyUpdateRule rule,
                                const Vector& x, const Vector& p) {
  if (rule.regularizer == Regularizer::entropy) {
    require(system.simplex_strategies(),
            "entropy regularizer is only allowed for non-atomic (simplex) games");
  }
  if (rule.variant == RuleVariant::gradient && rule.eta == 0.0) {
    rule.eta = rule.lipschitz > 0.0 ? 0.9 / rule.lipschitz : default_gradient_step(system, x, p);
  }
  return rule;
}

Vector step_strategy(const CoupledSystem& system, const Vector& x, const Vector& p,
                     const StrategyUpdateRule& rule, double gamma) {
  require(gamma > 0.0 && gamma <= 1.0, "strategy step must lie in (0, 1]");
  return (1.0 - gamma) * x + gamma * strategy_target(system, x, p, rule);
}

Vector step_incentive(const CoupledSystem& system, const Vector& x, const Vector& p,
                      double beta) {
  require(beta > 0.0 && beta <= 1.0, "incentive step must lie in (0, 1]");
  require(static_cast<std::size_t>(p.size()) == system.incentive_size(),
          "incentive length mismatch");
  return (1.0 - beta) * p + beta * system.externality(x);
}

double fixed_point_residual(const CoupledSystem& system, const Vector& x, const Vector& p,
                            const StrategyUpdateRule& rule) {
  return norm_inf(strategy_target(system, x, p, rule) - x) + norm_inf(system.externality(x) - p);
}

RunFailure::RunFailure(TrajectoryRecord record)
    : ConvergenceFailure("coupled dynamics did not converge within the iteration budget",
                         record.points.empty() ? Vector() : record.points.back().p,
                         record.points.empty() ? kInf : record.points.back().residual),
      record_(std::move(record)) {}

TrajectoryRecord run_coupled(const CoupledSystem& system, const Vector& x0, const Vector& p0,
                             const RunConfig& config, const IncentiveGradient& baseline_gradient) {
  config.validate();
  require(static_cast<std::size_t>(x0.size()) == system.strategy_size(),
          "initial strategy has the wrong length");
  require(static_cast<std::size_t>(p0.size()) == system.incentive_size(),
          "initial incentive has the wrong length");
  require(system.feasible(x0), "initial strategy is infeasible");
  const bool baseline = config.incentive_update == IncentiveUpdate::gradient_baseline;
  require(!baseline || static_cast<bool>(baseline_gradient),
          "gradient baseline run needs an incentive gradient");

  const StrategyUpdateRule rule = resolve_rule(system, config.rule, x0, p0);
  constexpr int kConsecutive = 10;

  TrajectoryRecord record;
  Vector x = x0;
  Vector p = p0;
  int below = 0;
  for (long k = 0;; ++k) {
    const Vector target = strategy_target(system, x, p, rule);
    const Vector drive = baseline ? baseline_gradient(p, x) : system.externality(x);
    const double residual =
        norm_inf(target - x) + (baseline ? norm_inf(drive) : norm_inf(drive - p));
    const bool finite = std::isfinite(residual) && x.allFinite() && p.allFinite();
    const bool last = k == config.max_iterations || !finite || x.norm() + p.norm() > 1e12;

    if (k % config.record_every == 0 || last) {
      record.points.push_back({k, x, p, residual, system.social_cost(x)});
      below = residual <= config.convergence_tol ? below + 1 : 0;
      if (below >= kConsecutive) {
        record.converged = true;
        record.iterations = k;
        return record;
      }
    }
    if (last) break;

    const double gamma = config.schedule.gamma(k);
    const double beta = config.schedule.beta(k);
    x = (1.0 - gamma) * x + gamma * target;
    p = baseline ? Vector(p - beta * drive) : Vector((1.0 - beta) * p + beta * drive);
    record.iterations = k + 1;
  }
  throw RunFailure(std::move(record));
}

}  // namespace incentive
