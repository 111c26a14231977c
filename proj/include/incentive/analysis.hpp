#pragma once

// Numerical verification of the coupled dynamics: fixed-point certification,
// slow-ODE probes, cooperative/Lyapunov condition checks, the gradient-based
// incentive baseline and the two-link counterexample.

#include "incentive/dynamics.hpp"
#include "incentive/routing.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace incentive::analysis {

using Json = nlohmann::json;

Json to_json(const Vector& v);

struct FixedPointReport {
  Vector p;
  Vector x_star;
  double tol = 0.0;
  /// (a) ‖e(x*(p)) − p‖∞
  double externality_gap = 0.0;
  /// (b) social-optimum first-order residual at x*(p)
  double optimality_residual = 0.0;
  /// (c) distance from x*(p) to the computed social optimum
  double optimum_distance = 0.0;
  bool externality_ok = false;
  bool optimality_ok = false;
  bool optimum_ok = false;
  std::string error;

  bool passed() const { return externality_ok && optimality_ok && optimum_ok; }
  Json to_json() const;
};

/// Checks that p is a fixed point of e∘x* and that x*(p) is socially optimal.
FixedPointReport verify_fixed_point_optimality(const CoupledSystem& system, const Vector& p,
                                               double tol);

/// V(p) = (p − center)ᵀ P (p − center).
struct QuadraticForm {
  Vector center;
  Matrix matrix;

  double value(const Vector& p) const;
  Vector gradient(const Vector& p) const;
};

struct OdeProbeConfig {
  double step = 0.01;
  double horizon = 20.0;
  std::vector<Vector> start_points;

  void validate() const;
};

struct StartPointReport {
  Vector start;
  Vector terminal;
  double terminal_distance = kInf;
  /// ‖p(t) − p†‖ nonincreasing over the second half of the horizon.
  bool tail_monotone = false;
  /// ∇V(p(t))ᵀ(e(x*(p(t))) − p(t)) at evenly spaced times.
  std::vector<double> decrement_samples;
  std::string error;
};

struct StabilityReport {
  Vector target;
  std::vector<StartPointReport> starts;

  double max_terminal_distance() const;
  Json to_json() const;
};

/// Forward Euler on ṗ = e(x*(p)) − p from every start point. Decrements use
/// `lyapunov` when its matrix is non-empty, ‖p − p†‖² otherwise.
StabilityReport ode_probe_slow_dynamics(const CoupledSystem& system, const OdeProbeConfig& config,
                                        const Vector& target, const QuadraticForm& lyapunov = {});

struct C1Report {
  std::size_t samples = 0;
  double min_offdiagonal = kInf;
  bool offdiagonal_positive = false;
  Vector e_at_zero;
  Vector p_dagger;
  bool branch_nonnegative = false;  // (i): e(x*(0)) ≥ 0, p† ≥ 0, dominating p' found
  bool branch_nonpositive = false;  // (ii): mirror image
  double dominating_epsilon = 0.0;
  bool passed = false;

  Json to_json() const;
};

/// Finite-difference Jacobian of p ↦ e(x*(p)) at each sample plus the
/// orthant boundary conditions; p' is searched along (1 + ε)p†.
C1Report check_condition_C1(const CoupledSystem& system, const std::vector<Vector>& samples,
                            const Vector& p_dagger);

struct C2Report {
  std::size_t samples = 0;
  std::size_t at_center = 0;
  double max_decrement = -kInf;
  /// max over samples of decrement + rate·V − slack; negative means satisfied.
  double max_margin = -kInf;
  std::size_t violations = 0;
  bool passed = false;

  Json to_json() const;
};

/// Checks ∇V(p)ᵀ(e(x*(p)) − p) < −rate·V(p) + slack at every sample with
/// V(p) > 1e-14; samples at the center are counted separately.
C2Report check_condition_C2(const CoupledSystem& system, const QuadraticForm& lyapunov,
                            const std::vector<Vector>& samples, double rate = 0.0,
                            double slack = 0.0);

/// Uniform samples in the Euclidean ball of the given radius.
std::vector<Vector> sample_ball(const Vector& center, double radius, std::size_t count,
                                std::uint64_t seed);

/// Central finite difference of p ↦ Φ(x*(p)); step 0 selects 1e-4·(1 + ‖p‖).
Vector baseline_gradient_fd(const CoupledSystem& system, const Vector& p, double fd_step,
                            const Vector& warm = {});
/// Minimum-norm Clarke element of the two-link equilibrium social cost.
Vector two_link_clarke_gradient(const Vector& p);
/// Finite differences away from kinks; `closed_form` within 10 steps of |p₁ − p₂| = 1
/// when given (two-link game).
IncentiveGradient make_baseline_gradient(const CoupledSystem& system, double fd_step,
                                         IncentiveGradient closed_form = {});
/// p − β g(p).
Vector gradient_baseline_step(const CoupledSystem& system, const Vector& p, double beta,
                              double fd_step = 0.0, const IncentiveGradient& closed_form = {});

struct CounterexampleOptions {
  std::size_t grid_points = 41;
  double grid_lower = -2.0;
  double grid_upper = 2.0;
  double grid_tol = 1e-6;
  std::vector<Vector> inefficient_starts;  // empty: (1.5, 0), (0, 2), (3, 0)
  double final_tol = 1e-3;
  RunConfig run;
};

struct RunOutcome {
  Vector start;
  Vector final_p;
  double final_social_cost = 0.0;
  bool converged = false;
  long iterations = 0;
};

struct CounterexampleReport {
  double max_flow_error = 0.0;
  double max_cost_error = 0.0;
  Vector worst_flow_point;
  Vector worst_cost_point;
  bool formula_ok = false;     // (a)
  bool cost_ok = false;        // (b)
  bool baseline_stuck = false; // (c)
  bool externality_ok = false; // (d)
  std::vector<RunOutcome> baseline_runs;
  std::vector<RunOutcome> externality_runs;
  /// p1,p2,x1_solver,x1_formula,cost_solver,cost_formula
  std::string grid_csv;

  bool passed() const { return formula_ok && cost_ok && baseline_stuck && externality_ok; }
  Json to_json() const;
};

/// Two-link tolled routing game: equilibrium formula, cost formula, baseline
/// trapped at inefficient points, externality update reaching (0.5, 0.5).
CounterexampleReport reproduce_counterexample(const CounterexampleOptions& options = {});

struct UniquenessReport {
  std::size_t starts = 0;
  double max_distance = 0.0;
  double threshold = 1e-3;
  bool flagged = false;

  Json to_json() const;
};

/// Solves x*(p) from n_starts random feasible points and compares results
/// in the system's strategy_gap metric.
UniquenessReport multistart_uniqueness_probe(const CoupledSystem& system, const Vector& p,
                                             std::size_t n_starts, std::uint64_t seed,
                                             double threshold = 1e-3);

}  // namespace incentive::analysis
