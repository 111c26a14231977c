#include "incentive/aggregative.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace incentive::aggregative {

// ---------------------------------------------------------------------------
// ScalarConvex

ScalarConvex ScalarConvex::quadratic(double center, double curvature) {
  require(curvature > 0.0, "quadratic social-cost term needs positive curvature");
  ScalarConvex h;
  h.kind_ = Kind::quadratic;
  h.center_ = center;
  h.curv_ = curvature;
  return h;
}

ScalarConvex ScalarConvex::quartic(double center, double curvature) {
  require(curvature >= 0.0, "quartic social-cost term needs nonnegative curvature");
  ScalarConvex h;
  h.kind_ = Kind::quartic;
  h.center_ = center;
  h.curv_ = curvature;
  return h;
}

ScalarConvex ScalarConvex::table(std::vector<double> xs, std::vector<double> grads) {
  require(xs.size() == grads.size() && xs.size() >= 2,
          "table social-cost term needs at least two (x, gradient) points");
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require(xs[k] > xs[k - 1], "table abscissae must be strictly increasing");
    require(grads[k] > grads[k - 1], "table gradient must be strictly increasing");
  }
  ScalarConvex h;
  h.kind_ = Kind::table;
  h.xs_ = std::move(xs);
  h.gs_ = std::move(grads);
  return h;
}

namespace {

// Index of the table segment used for x (end segments extend to infinity).
std::size_t segment_of(const std::vector<double>& xs, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t k = static_cast<std::size_t>(std::distance(xs.begin(), it));
  if (k == 0) return 0;
  return std::min(k - 1, xs.size() - 2);
}

}  // namespace

double ScalarConvex::gradient(double x) const {
  const double d = x - center_;
  switch (kind_) {
    case Kind::quadratic:
      return curv_ * d;
    case Kind::quartic:
      return d * d * d + curv_ * d;
    case Kind::table: {
      const std::size_t k = segment_of(xs_, x);
      const double slope = (gs_[k + 1] - gs_[k]) / (xs_[k + 1] - xs_[k]);
      return gs_[k] + slope * (x - xs_[k]);
    }
  }
  return 0.0;
}

double ScalarConvex::curvature(double x) const {
  const double d = x - center_;
  switch (kind_) {
    case Kind::quadratic:
      return curv_;
    case Kind::quartic:
      return 3.0 * d * d + curv_;
    case Kind::table: {
      const std::size_t k = segment_of(xs_, x);
      return (gs_[k + 1] - gs_[k]) / (xs_[k + 1] - xs_[k]);
    }
  }
  return 0.0;
}

double ScalarConvex::value(double x) const {
  const double d = x - center_;
  switch (kind_) {
    case Kind::quadratic:
      return 0.5 * curv_ * d * d;
    case Kind::quartic:
      return 0.25 * d * d * d * d + 0.5 * curv_ * d * d;
    case Kind::table: {
      // Exact integral of the piecewise-linear gradient from xs_[0].
      auto integrate = [&](double from, double to) {
        return 0.5 * (gradient(from) + gradient(to)) * (to - from);
      };
      if (x <= xs_[0]) return integrate(xs_[0], x);
      double total = 0.0;
      double at = xs_[0];
      for (std::size_t k = 1; k + 1 < xs_.size() && xs_[k] < x; ++k) {
        total += integrate(at, xs_[k]);
        at = xs_[k];
      }
      return total + integrate(at, x);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Game

QuadraticAggregativeGame::QuadraticAggregativeGame(Vector q, Matrix A, double alpha, Vector zeta)
    : q_(std::move(q)), A_(std::move(A)), alpha_(alpha), zeta_(std::move(zeta)) {
  require(zeta_->size() == q_.size(), "zeta must have one entry per player");
  for (Eigen::Index i = 0; i < q_.size(); ++i) h_.push_back(ScalarConvex::quadratic((*zeta_)[i]));
  initialize();
}

QuadraticAggregativeGame::QuadraticAggregativeGame(Vector q, Matrix A, double alpha,
                                                   std::vector<ScalarConvex> h)
    : q_(std::move(q)), A_(std::move(A)), alpha_(alpha), h_(std::move(h)) {
  require(h_.size() == static_cast<std::size_t>(q_.size()), "h must have one entry per player");
  initialize();
}

void QuadraticAggregativeGame::initialize() {
  const auto n = q_.size();
  require(n >= 1, "aggregative game needs at least one player");
  require(A_.rows() == n && A_.cols() == n, "network matrix A must be n×n");
  require(alpha_ > 0.0, "alpha must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    require(q_[i] > 0.0, "every q_i must be positive");
    require(A_(i, i) == 0.0, "network matrix A must have a zero diagonal");
  }
  M_ = Matrix(q_.asDiagonal()) + alpha_ * A_;

  Eigen::JacobiSVD<Matrix> svd(M_);
  const auto& sv = svd.singularValues();
  const double smallest = sv[sv.size() - 1];
  condition_ = smallest > 0.0 ? sv[0] / smallest : kInf;
  if (!(condition_ <= 1e12)) {
    std::ostringstream msg;
    msg << "M invertibility: M = Q + alpha·A is singular or ill-conditioned (condition number "
        << condition_ << ")";
    throw InvalidSpec(msg.str());
  }
  lu_.compute(M_);
  M_inv_ = lu_.inverse();

  // Root of each ∇h_i by bisection on a doubling bracket.
  target_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& h = h_[static_cast<std::size_t>(i)];
    double radius = 1.0;
    while (!(h.gradient(-radius) <= 0.0 && h.gradient(radius) >= 0.0)) {
      radius *= 2.0;
      if (radius > 1e6) {
        throw InvalidSpec("social-cost term " + std::to_string(i) +
                          " has no gradient root in [-1e6, 1e6]");
      }
    }
    // Strict increase on a sampled grid over the bracket.
    double previous = h.gradient(-radius);
    for (int s = 1; s <= 200; ++s) {
      const double g = h.gradient(-radius + 2.0 * radius * s / 200.0);
      if (!(g > previous)) {
        throw InvalidSpec("gradient of social-cost term " + std::to_string(i) +
                          " is not strictly increasing");
      }
      previous = g;
    }
    double lo = -radius, hi = radius;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (h.gradient(mid) > 0.0 ? hi : lo) = mid;
    }
    target_[i] = 0.5 * (lo + hi);
    if (zeta_) target_[i] = (*zeta_)[i];
  }
}

Vector QuadraticAggregativeGame::player_costs(const Vector& x) const {
  return (0.5 * q_.array() * x.array().square() + alpha_ * x.array() * (A_ * x).array()).matrix();
}

Vector QuadraticAggregativeGame::own_gradients(const Vector& x) const {
  return (q_.array() * x.array()).matrix() + alpha_ * (A_ * x);
}

double QuadraticAggregativeGame::social_cost(const Vector& x) const {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) total += h_[static_cast<std::size_t>(i)].value(x[i]);
  return total;
}

Vector QuadraticAggregativeGame::social_gradient(const Vector& x) const {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = h_[static_cast<std::size_t>(i)].gradient(x[i]);
  return g;
}

Vector QuadraticAggregativeGame::social_curvature(const Vector& x) const {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = h_[static_cast<std::size_t>(i)].curvature(x[i]);
  }
  return g;
}

Vector QuadraticAggregativeGame::externality(const Vector& x) const {
  return social_gradient(x) - own_gradients(x);
}

Vector QuadraticAggregativeGame::nash_closed_form(const Vector& p) const {
  require(static_cast<std::size_t>(p.size()) == n(), "incentive length mismatch");
  return lu_.solve(-p);
}

Vector QuadraticAggregativeGame::best_response(const Vector& x, const Vector& p) const {
  return (-(alpha_ * (A_ * x) + p).array() / q_.array()).matrix();
}

Vector QuadraticAggregativeGame::optimal_incentive() const { return -M_ * target_; }

ConditionReport check_global_conditions(const Matrix& M) {
  ConditionReport report;
  report.symmetric = (M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (M + M.transpose()));
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.positive_definite = report.min_eigenvalue > 0.0;
  report.passed = report.symmetric && report.positive_definite;
  return report;
}

LocalConditionReport check_local_conditions(const Matrix& M, const Vector& target) {
  LocalConditionReport report;
  report.nonnegative_entries = M.minCoeff() >= 0.0;
  const Matrix inv = M.inverse();
  report.inverse_offdiag_negative = true;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (i != j && !(inv(i, j) < 0.0)) report.inverse_offdiag_negative = false;
    }
  }
  report.target_nonpositive = target.size() == 0 || target.maxCoeff() <= 0.0;
  report.passed =
      report.nonnegative_entries && report.inverse_offdiag_negative && report.target_nonpositive;
  return report;
}

ConditionReport QuadraticAggregativeGame::check_global_conditions() const {
  return aggregative::check_global_conditions(M_);
}

LocalConditionReport QuadraticAggregativeGame::check_local_conditions() const {
  return aggregative::check_local_conditions(M_, target_);
}

double QuadraticAggregativeGame::lyapunov_value(const Vector& p) const {
  const Vector d = p - optimal_incentive();
  return d.dot(M_inv_.transpose() * d);
}

double QuadraticAggregativeGame::lyapunov_decrement(const Vector& p) const {
  const Vector d = p - optimal_incentive();
  const Vector grad = (M_inv_.transpose() + M_inv_) * d;
  return grad.dot(externality(nash_closed_form(p)) - p);
}

AtomicGame QuadraticAggregativeGame::to_atomic_game() const {
  // The oracles share one immutable copy of the game.
  auto self = std::make_shared<const QuadraticAggregativeGame>(*this);
  AtomicGame game;
  game.bounds.assign(n(), Interval{});
  game.player_costs = [self](const Vector& x) { return self->player_costs(x); };
  game.own_gradients = [self](const Vector& x) { return self->own_gradients(x); };
  game.social_cost = [self](const Vector& x) { return self->social_cost(x); };
  game.social_gradient = [self](const Vector& x) { return self->social_gradient(x); };
  game.equilibrium = [self](const Vector& p) { return self->nash_closed_form(p); };
  game.best_response = [self](const Vector& x, const Vector& p) {
    return self->best_response(x, p);
  };
  game.finalize();
  return game;
}

ScaledLimitReport check_scaled_limit(const QuadraticAggregativeGame& game,
                                     const StrategyUpdateRule& rule) {
  ScaledLimitReport report;
  const auto n = static_cast<Eigen::Index>(game.n());
  Matrix linear;
  switch (rule.variant) {
    case RuleVariant::equilibrium:
      linear = -Matrix::Identity(n, n);
      break;
    case RuleVariant::best_response:
      linear = -(game.q().cwiseInverse().asDiagonal() * game.M());
      break;
    case RuleVariant::gradient:
      if (rule.regularizer != Regularizer::quadratic) {
        report.note = "not verifiable: non-affine strategy rule";
        return report;
      }
      // The step size only rescales time; stability depends on −M.
      linear = -game.M();
      break;
  }
  report.verifiable = true;
  Eigen::EigenSolver<Matrix> eig(linear);
  const double abscissa = eig.eigenvalues().real().maxCoeff();
  report.passed = abscissa < 0.0;
  std::ostringstream msg;
  msg << "affine rule: spectral abscissa of the scaled limit = " << abscissa;
  report.note = msg.str();
  return report;
}

}  // namespace incentive::aggregative
