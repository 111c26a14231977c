#pragma once

// Networked quadratic aggregative game:
//   ℓ_i(x) = ½ q_i x_i² + α x_i (Ax)_i,   Φ(x) = Σ_i h_i(x_i)
// with h_i(x) = ½(x − ζ_i)² in the plain form.

#include "incentive/dynamics.hpp"
#include "incentive/game.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace incentive::aggregative {

/// Strictly convex scalar term of the social cost.
class ScalarConvex {
 public:
  enum class Kind { quadratic, quartic, table };

  /// ½·curvature·(x − center)².
  static ScalarConvex quadratic(double center, double curvature = 1.0);
  /// ¼(x − center)⁴ + ½·curvature·(x − center)².
  static ScalarConvex quartic(double center, double curvature = 1.0);
  /// Gradient given by linear interpolation through (x_k, g_k), extended
  /// linearly beyond the end points; h(x_0) = 0.
  static ScalarConvex table(std::vector<double> xs, std::vector<double> grads);

  Kind kind() const { return kind_; }
  double value(double x) const;
  double gradient(double x) const;
  double curvature(double x) const;

  double center() const { return center_; }
  double curvature_coefficient() const { return curv_; }
  const std::vector<double>& table_x() const { return xs_; }
  const std::vector<double>& table_grad() const { return gs_; }

 private:
  Kind kind_ = Kind::quadratic;
  double center_ = 0.0;
  double curv_ = 1.0;
  std::vector<double> xs_, gs_;
};

struct ConditionReport {
  bool symmetric = false;
  bool positive_definite = false;
  double min_eigenvalue = 0.0;
  bool passed = false;
};

struct LocalConditionReport {
  bool nonnegative_entries = false;
  bool inverse_offdiag_negative = false;
  bool target_nonpositive = false;
  bool passed = false;
};

class QuadraticAggregativeGame {
 public:
  /// Plain form Φ(x) = Σ ½(x_i − ζ_i)².
  QuadraticAggregativeGame(Vector q, Matrix A, double alpha, Vector zeta);
  /// General form Φ(x) = Σ h_i(x_i).
  QuadraticAggregativeGame(Vector q, Matrix A, double alpha, std::vector<ScalarConvex> h);

  std::size_t n() const { return static_cast<std::size_t>(q_.size()); }
  const Vector& q() const { return q_; }
  const Matrix& A() const { return A_; }
  double alpha() const { return alpha_; }
  /// M = Q + αA.
  const Matrix& M() const { return M_; }
  double condition_number() const { return condition_; }
  bool plain_form() const { return zeta_.has_value(); }
  const std::optional<Vector>& zeta() const { return zeta_; }
  const std::vector<ScalarConvex>& h() const { return h_; }

  Vector player_costs(const Vector& x) const;
  Vector own_gradients(const Vector& x) const;
  double social_cost(const Vector& x) const;
  Vector social_gradient(const Vector& x) const;
  Vector social_curvature(const Vector& x) const;
  /// e_i(x) = ∇h_i(x_i) − q_i x_i − α(Ax)_i.
  Vector externality(const Vector& x) const;

  /// x*(p) solving M x = −p.
  Vector nash_closed_form(const Vector& p) const;
  /// f_i = −(α(Ax)_i + p_i)/q_i.
  Vector best_response(const Vector& x, const Vector& p) const;
  /// Root y† of ∇h (ζ in the plain form).
  const Vector& social_target() const { return target_; }
  /// p† = −M y†.
  Vector optimal_incentive() const;

  ConditionReport check_global_conditions() const;
  LocalConditionReport check_local_conditions() const;

  /// V(p) = (p − p†)ᵀ M⁻ᵀ (p − p†).
  double lyapunov_value(const Vector& p) const;
  /// ∇V(p)ᵀ (e(x*(p)) − p).
  double lyapunov_decrement(const Vector& p) const;

  /// Oracle-backed atomic game with the closed-form equilibrium and best response attached.
  AtomicGame to_atomic_game() const;

 private:
  void initialize();

  Vector q_;
  Matrix A_;
  double alpha_;
  std::optional<Vector> zeta_;
  std::vector<ScalarConvex> h_;
  Matrix M_;
  Eigen::PartialPivLU<Matrix> lu_;
  Matrix M_inv_;
  double condition_ = 0.0;
  Vector target_;
};

/// Plain check on an arbitrary matrix; used for M directly.
ConditionReport check_global_conditions(const Matrix& M);
LocalConditionReport check_local_conditions(const Matrix& M, const Vector& target);

/// Affine rules have f_c = f_∞; the scaled-limit condition reduces to the
/// spectrum of the rule's linear part. Non-affine rules are not verifiable.
struct ScaledLimitReport {
  bool verifiable = false;
  bool passed = false;
  std::string note;
};
ScaledLimitReport check_scaled_limit(const QuadraticAggregativeGame& game,
                                     const StrategyUpdateRule& rule);

}  // namespace incentive::aggregative
