#include "incentive/game.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace incentive {

namespace {

using Projector = std::function<Vector(const Vector&)>;

// Projected gradient with backtracking on a smooth objective over a convex set
// described by its Euclidean projection.
Vector projected_gradient_descent(const ScalarField& f, const VectorField& grad,
                                  const Projector& project, Vector x, const SolverOptions& opts,
                                  const char* what) {
  double step = 1.0;
  double residual = kInf;
  for (long it = 0; it < opts.max_iterations; ++it) {
    const Vector g = grad(x);
    residual = norm_inf(x - project(x - g));
    if (residual <= opts.tol) return x;
    const double fx = f(x);
    step = std::min(step * 2.0, 1e8);
    Vector candidate;
    while (true) {
      candidate = project(x - step * g);
      const Vector d = candidate - x;
      const double bound = fx + g.dot(d) + d.squaredNorm() / (2.0 * step) +
                           1e-15 * (1.0 + std::abs(fx));
      if (f(candidate) <= bound || step < 1e-18) break;
      step *= 0.5;
    }
    if ((candidate - x).lpNorm<Eigen::Infinity>() == 0.0) break;
    x = std::move(candidate);
  }
  if (residual <= opts.tol) return x;
  throw ConvergenceFailure(std::string(what) + " did not reach tolerance", x, residual);
}

// Extragradient for a monotone variational inequality VI(F, K) with an
// adaptive step satisfying step·‖F(y) − F(x)‖ <= 0.9‖y − x‖.
Vector extragradient(const VectorField& field, const Projector& project, Vector x,
                     const SolverOptions& opts, const char* what) {
  double step = 1.0;
  double residual = kInf;
  for (long it = 0; it < opts.max_iterations; ++it) {
    const Vector fx = field(x);
    residual = norm_inf(x - project(x - fx));
    if (residual <= opts.tol) return x;
    const Vector y = project(x - step * fx);
    const Vector fy = field(y);
    const double dy = (y - x).norm();
    if (step * (fy - fx).norm() > 0.9 * dy && step > 1e-14) {
      step *= 0.5;
      continue;
    }
    x = project(x - step * fy);
    step *= 1.1;
  }
  if (residual <= opts.tol) return x;
  throw ConvergenceFailure(std::string(what) + " did not reach tolerance", x, residual);
}

}  // namespace

Vector social_optimum(const AtomicGame& game, const SolverOptions& opts) {
  const Vector start = game.project(Vector::Zero(static_cast<Eigen::Index>(game.n_players())));
  return projected_gradient_descent(
      game.social_cost, game.social_gradient, [&](const Vector& v) { return game.project(v); },
      start, opts, "social optimum (atomic)");
}

Vector social_optimum(const NonAtomicGame& game, const SolverOptions& opts) {
  return projected_gradient_descent(
      game.social_cost, game.social_gradient,
      [&](const Vector& v) { return game.layout.project(v); }, game.layout.uniform(), opts,
      "social optimum (non-atomic)");
}

Vector nash_equilibrium(const AtomicGame& game, const Vector& p, const Vector& warm,
                        const SolverOptions& opts) {
  require(static_cast<std::size_t>(p.size()) == game.n_players(),
          "incentive length does not match the number of players");
  if (game.equilibrium) return game.equilibrium(p);
  const Vector start = warm.size() == p.size()
                           ? game.project(warm)
                           : game.project(Vector::Zero(p.size()));
  return extragradient([&](const Vector& x) { return Vector(game.own_gradients(x) + p); },
                       [&](const Vector& v) { return game.project(v); }, start, opts,
                       "atomic Nash equilibrium");
}

Vector nash_equilibrium(const NonAtomicGame& game, const Vector& p, const Vector& warm,
                        const SolverOptions& opts) {
  require(static_cast<std::size_t>(p.size()) == game.layout.size(),
          "incentive length does not match the population layout");
  const Vector start = warm.size() == p.size() ? game.layout.project(warm) : game.layout.uniform();
  if (game.equilibrium) return game.equilibrium(p, start);
  return extragradient([&](const Vector& x) { return Vector(game.action_costs(x) + p); },
                       [&](const Vector& v) { return game.layout.project(v); }, start, opts,
                       "non-atomic Nash equilibrium");
}

Vector best_response_atomic(const AtomicGame& game, const Vector& x, const Vector& p) {
  if (game.best_response) return game.best_response(x, p);
  Vector response(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Interval bounds = game.bounds[i];
    auto slope = [&](double y) {
      probe[i] = y;
      return game.own_gradients(probe)[i] + p[i];
    };
    double lo = bounds.lower;
    double hi = bounds.upper;
    // Grow an unbounded side until the derivative changes sign.
    double width = 1.0;
    if (!std::isfinite(lo)) {
      lo = std::min(x[i], std::isfinite(hi) ? hi : x[i]) - width;
      while (slope(lo) > 0.0) {
        width *= 2.0;
        lo -= width;
        if (width > 1e12) throw ConvergenceFailure("best response bracket not found", x, kInf);
      }
    }
    width = 1.0;
    if (!std::isfinite(hi)) {
      hi = std::max(x[i], lo) + width;
      while (slope(hi) < 0.0) {
        width *= 2.0;
        hi += width;
        if (width > 1e12) throw ConvergenceFailure("best response bracket not found", x, kInf);
      }
    }
    double value;
    if (slope(lo) >= 0.0) {
      value = lo;
    } else if (slope(hi) <= 0.0) {
      value = hi;
    } else {
      for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? hi : lo) = mid;
      }
      value = 0.5 * (lo + hi);
    }
    response[i] = value;
    probe[i] = x[i];
  }
  return response;
}

}  // namespace incentive
