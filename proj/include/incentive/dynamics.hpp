#pragma once

// Coupled two-timescale strategy/incentive updates:
//   x_{k+1} = (1 − γ_k) x_k + γ_k f(x_k, p_k)
//   p_{k+1} = (1 − β_k) p_k + β_k e(x_k)

#include "incentive/game.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace incentive {

/// γ_k = gamma0·(k + k₀)^(−a), β_k = beta0·(k + k₀)^(−b) with 0.5 < a < b <= 1.
class StepSchedule {
 public:
  StepSchedule() : StepSchedule(0.6, 0.9, 1.0, 1.0, 2) {}
  StepSchedule(double a, double b, double gamma0, double beta0, long offset);

  double gamma(long k) const;
  double beta(long k) const;

  double a() const { return a_; }
  double b() const { return b_; }
  double gamma0() const { return gamma0_; }
  double beta0() const { return beta0_; }
  long offset() const { return offset_; }

  // Closed-form properties of the power-law family.
  bool fast_sum_diverges() const { return a_ <= 1.0; }
  bool slow_sum_diverges() const { return b_ <= 1.0; }
  bool square_sums_converge() const { return a_ > 0.5 && b_ > 0.5; }
  /// β_k/γ_k = (beta0/gamma0)(k + k₀)^(a − b) → 0 and is nonincreasing.
  bool ratio_vanishes() const { return b_ > a_; }

  friend bool operator==(const StepSchedule&, const StepSchedule&) = default;

 private:
  double a_, b_, gamma0_, beta0_;
  long offset_;
};

enum class RuleVariant { equilibrium, best_response, gradient };
enum class Regularizer { quadratic, entropy };
enum class IncentiveUpdate { externality, gradient_baseline };

struct StrategyUpdateRule {
  RuleVariant variant = RuleVariant::equilibrium;
  /// Inner step for the gradient rule; 0 selects 0.9/L with L estimated at x₀.
  double eta = 0.0;
  Regularizer regularizer = Regularizer::quadratic;
  /// Optional user bound on the pseudo-gradient Lipschitz constant.
  double lipschitz = 0.0;

  friend bool operator==(const StrategyUpdateRule&, const StrategyUpdateRule&) = default;
};

struct RunConfig {
  StepSchedule schedule;
  StrategyUpdateRule rule;
  long max_iterations = 100000;
  double convergence_tol = 1e-6;
  long record_every = 1;
  std::uint64_t seed = 0;
  IncentiveUpdate incentive_update = IncentiveUpdate::externality;
  /// Finite-difference step for the gradient baseline; 0 selects 1e-4·(1+‖p‖).
  double fd_step = 0.0;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct TrajectoryPoint {
  long k = 0;
  Vector x;
  Vector p;
  double residual = 0.0;
  double social_cost = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryPoint> points;
  bool converged = false;
  long iterations = 0;

  const TrajectoryPoint& final_point() const { return points.back(); }
  /// Header `k,residual,social_cost,x0..,p0..`; 17 significant digits.
  void write_csv(std::ostream& out) const;
  /// Final iterate, iterations used, converged flag.
  std::string summary_json() const;
};

/// A game seen through the coupled dynamics: strategies, incentives, the
/// equilibrium map and the externality.
class CoupledSystem {
 public:
  virtual ~CoupledSystem() = default;

  virtual std::size_t strategy_size() const = 0;
  virtual std::size_t incentive_size() const = 0;

  virtual Vector project(const Vector& x) const = 0;
  virtual bool feasible(const Vector& x) const = 0;
  virtual Vector random_strategy(std::mt19937_64& rng) const = 0;

  /// x*(p), warm-started from `warm` when the solver is iterative.
  virtual Vector equilibrium(const Vector& p, const Vector& warm) const = 0;
  virtual Vector best_response(const Vector& x, const Vector& p) const = 0;
  /// Marginal total cost of each strategy coordinate (∂c_i/∂x_i, or action costs).
  virtual Vector pseudo_gradient(const Vector& x, const Vector& p) const = 0;
  /// Logit choice with temperature 1/eta; only defined on simplex strategy sets.
  virtual Vector logit_response(const Vector& x, const Vector& p, double eta) const;

  virtual Vector externality(const Vector& x) const = 0;
  virtual double social_cost(const Vector& x) const = 0;
  virtual Vector social_optimum() const = 0;
  /// First-order residual of the social optimum at x.
  virtual double optimality_residual(const Vector& x) const = 0;
  /// Equilibrium certificate residual of x under incentives p.
  virtual double nash_residual(const Vector& x, const Vector& p) const = 0;
  /// Distance in the representation that is unique at equilibrium.
  virtual double strategy_gap(const Vector& x, const Vector& y) const { return norm_inf(x - y); }

  virtual bool simplex_strategies() const { return false; }

  /// p† = e(x†) for the social optimum x†.
  virtual Vector optimal_incentive() const { return externality(social_optimum()); }
  /// p ↦ e(x*(p)), the drift target of the slow dynamics.
  Vector slow_target(const Vector& p, const Vector& warm) const {
    return externality(equilibrium(p, warm));
  }
};

class AtomicSystem : public CoupledSystem {
 public:
  explicit AtomicSystem(AtomicGame game, SolverOptions solver = {});

  const AtomicGame& game() const { return game_; }

  std::size_t strategy_size() const override { return game_.n_players(); }
  std::size_t incentive_size() const override { return game_.n_players(); }
  Vector project(const Vector& x) const override { return game_.project(x); }
  bool feasible(const Vector& x) const override { return game_.feasible(x); }
  Vector random_strategy(std::mt19937_64& rng) const override;
  Vector equilibrium(const Vector& p, const Vector& warm) const override;
  Vector best_response(const Vector& x, const Vector& p) const override;
  Vector pseudo_gradient(const Vector& x, const Vector& p) const override;
  Vector externality(const Vector& x) const override;
  double social_cost(const Vector& x) const override { return game_.social_cost(x); }
  Vector social_optimum() const override;
  double optimality_residual(const Vector& x) const override;
  double nash_residual(const Vector& x, const Vector& p) const override;

 private:
  AtomicGame game_;
  SolverOptions solver_;
};

class NonAtomicSystem : public CoupledSystem {
 public:
  explicit NonAtomicSystem(NonAtomicGame game, SolverOptions solver = {});

  const NonAtomicGame& game() const { return game_; }

  std::size_t strategy_size() const override { return game_.layout.size(); }
  std::size_t incentive_size() const override { return game_.layout.size(); }
  Vector project(const Vector& x) const override { return game_.layout.project(x); }
  bool feasible(const Vector& x) const override { return game_.layout.feasible(x); }
  Vector random_strategy(std::mt19937_64& rng) const override;
  Vector equilibrium(const Vector& p, const Vector& warm) const override;
  Vector best_response(const Vector& x, const Vector& p) const override;
  Vector pseudo_gradient(const Vector& x, const Vector& p) const override;
  Vector logit_response(const Vector& x, const Vector& p, double eta) const override;
  Vector externality(const Vector& x) const override;
  double social_cost(const Vector& x) const override { return game_.social_cost(x); }
  Vector social_optimum() const override;
  double optimality_residual(const Vector& x) const override;
  double nash_residual(const Vector& x, const Vector& p) const override;
  bool simplex_strategies() const override { return true; }

 private:
  NonAtomicGame game_;
  SolverOptions solver_;
};

// Helpers shared by simplex-strategy systems (non-atomic games, routing).
Vector simplex_best_response(const PopulationLayout& layout, const Vector& costs);
Vector simplex_logit(const PopulationLayout& layout, const Vector& costs, double eta);
Vector random_simplex_point(const PopulationLayout& layout, std::mt19937_64& rng);

/// f(x, p) under the configured rule.
Vector strategy_target(const CoupledSystem& system, const Vector& x, const Vector& p,
                       const StrategyUpdateRule& rule);
/// 0.9/L with L the spectral norm of a finite-difference Jacobian of the pseudo-gradient at x.
double default_gradient_step(const CoupledSystem& system, const Vector& x, const Vector& p);
/// Returns the rule with eta filled in when it was left at 0.
StrategyUpdateRule resolve_rule(const CoupledSystem& system, StrategyUpdateRule rule,
                                const Vector& x, const Vector& p);

Vector step_strategy(const CoupledSystem& system, const Vector& x, const Vector& p,
                     const StrategyUpdateRule& rule, double gamma);
Vector step_incentive(const CoupledSystem& system, const Vector& x, const Vector& p,
                      double beta);
/// ‖f(x, p) − x‖∞ + ‖e(x) − p‖∞.
double fixed_point_residual(const CoupledSystem& system, const Vector& x, const Vector& p,
                            const StrategyUpdateRule& rule);

/// Gradient of p ↦ Φ(x*(p)) used by the baseline incentive update.
using IncentiveGradient = std::function<Vector(const Vector& p, const Vector& warm)>;

/// Thrown by run_coupled when the budget runs out; carries the whole trajectory.
class RunFailure : public ConvergenceFailure {
 public:
  explicit RunFailure(TrajectoryRecord record);
  const TrajectoryRecord& trajectory() const { return record_; }

 private:
  TrajectoryRecord record_;
};

/// Iterates the coupled updates until the fixed-point residual stays below
/// convergence_tol for 10 consecutive recorded iterations.
/// When config.incentive_update is gradient_baseline, `baseline_gradient`
/// drives p_{k+1} = p_k − β_k g(p_k) and the residual uses ‖g‖∞ in place of ‖e(x) − p‖∞.
TrajectoryRecord run_coupled(const CoupledSystem& system, const Vector& x0, const Vector& p0,
                             const RunConfig& config,
                             const IncentiveGradient& baseline_gradient = {});

}  // namespace incentive
