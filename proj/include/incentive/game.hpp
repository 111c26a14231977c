#pragma once

// Atomic and non-atomic games with oracle-backed costs, externalities and
// first-order certificates for equilibria and social optima.

#include "incentive/core.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace incentive {

/// Closed strategy interval; either side may be infinite.
struct Interval {
  double lower = -kInf;
  double upper = kInf;

  double project(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
  bool contains(double v, double slack = 0.0) const {
    return v >= lower - slack && v <= upper + slack;
  }
};

using VectorField = std::function<Vector(const Vector&)>;
using ScalarField = std::function<double(const Vector&)>;

struct AtomicGame {
  std::vector<Interval> bounds;
  /// ℓ_i(x) for every player.
  VectorField player_costs;
  /// ∂ℓ_i/∂x_i evaluated at x, for every player. Filled by finite differences when empty.
  VectorField own_gradients;
  ScalarField social_cost;
  /// ∇Φ(x). Filled by finite differences when empty.
  VectorField social_gradient;

  /// Optional closed-form Nash equilibrium x*(p).
  std::function<Vector(const Vector& p)> equilibrium;
  /// Optional closed-form best response profile (argmin_y c_i(y, x_-i, p))_i.
  std::function<Vector(const Vector& x, const Vector& p)> best_response;

  std::size_t n_players() const { return bounds.size(); }
  /// Checks interval ordering and that the required oracles are present; fills
  /// missing gradients with central differences.
  void finalize();
  bool feasible(const Vector& x, double slack = 1e-12) const;
  Vector project(const Vector& x) const;
};

/// Index layout of the flat vector holding every population's action distribution.
class PopulationLayout {
 public:
  PopulationLayout() = default;
  /// masses[i] > 0, actions[i] >= 1.
  PopulationLayout(std::vector<double> masses, const std::vector<std::size_t>& actions);

  std::size_t populations() const { return masses_.size(); }
  std::size_t actions(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  std::size_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.back(); }
  double mass(std::size_t i) const { return masses_[i]; }
  const std::vector<double>& masses() const { return masses_; }

  /// Euclidean projection onto the product of scaled simplices.
  Vector project(const Vector& x) const;
  /// Mass split evenly across actions.
  Vector uniform() const;
  /// Nonnegativity and per-population mass within tol.
  bool feasible(const Vector& x, double tol = 1e-8) const;

 private:
  std::vector<double> masses_;
  std::vector<std::size_t> offsets_;
};

struct NonAtomicGame {
  PopulationLayout layout;
  /// ℓ̃_i^j(x̃), flat over (i, j).
  VectorField action_costs;
  ScalarField social_cost;
  VectorField social_gradient;
  /// Optional equilibrium oracle x̃*(p̃) warm-started from the second argument.
  std::function<Vector(const Vector& p, const Vector& warm)> equilibrium;

  void finalize();
};

/// Euclidean projection of v onto {y >= 0, sum y = mass}.
Vector project_simplex(const Vector& v, double mass);

/// Central-difference gradient with per-coordinate step 1e-6·(1+|x_i|).
Vector finite_difference_gradient(const ScalarField& f, const Vector& x, double rel_step = 1e-6);
/// Central-difference Jacobian of a vector field, same step rule.
Matrix finite_difference_jacobian(const VectorField& f, const Vector& x, double rel_step = 1e-6);

double total_cost_atomic(const AtomicGame& game, const Vector& x, const Vector& p, std::size_t i);
double total_cost_nonatomic(const NonAtomicGame& game, const Vector& x, const Vector& p,
                            std::size_t population, std::size_t action);

/// e_i(x) = ∂Φ/∂x_i − ∂ℓ_i/∂x_i.
Vector externality_atomic(const AtomicGame& game, const Vector& x);
/// ẽ_i^j(x̃) = ∂Φ̃/∂x̃_i^j − ℓ̃_i^j(x̃).
Vector externality_nonatomic(const NonAtomicGame& game, const Vector& x);

struct Certificate {
  bool passed = false;
  double residual = 0.0;
};

/// Projected-gradient residual of the Nash variational inequality.
Certificate certify_nash_atomic(const AtomicGame& game, const Vector& x, const Vector& p,
                                double tol = 1e-6);
/// Every action used by more than tol·m_i must be within tol of the cheapest.
Certificate certify_nash_nonatomic(const NonAtomicGame& game, const Vector& x, const Vector& p,
                                   double tol = 1e-6);

/// First-order residual of the social optimum: ‖x − Proj(x − ∇Φ(x))‖∞.
double optimality_residual(const AtomicGame& game, const Vector& x);
/// Largest cost gap over used actions, using ∂Φ̃ as the marginal cost.
double optimality_residual(const NonAtomicGame& game, const Vector& x, double support_tol = 1e-9);
/// Same support/gap rule with an arbitrary per-action cost vector.
double simplex_gap_residual(const PopulationLayout& layout, const Vector& x, const Vector& costs,
                            double support_tol);

struct SolverOptions {
  double tol = 1e-10;
  long max_iterations = 200000;
};

/// Projected gradient with Armijo backtracking on Φ.
Vector social_optimum(const AtomicGame& game, const SolverOptions& opts = {});
Vector social_optimum(const NonAtomicGame& game, const SolverOptions& opts = {});

/// Nash equilibrium under incentives p. Uses the closed form when the game has
/// one, otherwise projected extragradient on the pseudo-gradient.
Vector nash_equilibrium(const AtomicGame& game, const Vector& p, const Vector& warm,
                        const SolverOptions& opts = {});
Vector nash_equilibrium(const NonAtomicGame& game, const Vector& p, const Vector& warm,
                        const SolverOptions& opts = {});

/// Per-player scalar best response; closed form when available, otherwise
/// bisection on the (monotone) own-gradient over the strategy interval.
Vector best_response_atomic(const AtomicGame& game, const Vector& x, const Vector& p);

}  // namespace incentive
