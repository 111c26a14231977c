#include "incentive/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace incentive {

void AtomicGame::finalize() {
  require(!bounds.empty(), "atomic game needs at least one player");
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    require(bounds[i].lower <= bounds[i].upper,
            "strategy interval of player " + std::to_string(i) + " has lower > upper");
  }
  require(static_cast<bool>(social_cost), "atomic game needs a social cost oracle");
  if (!own_gradients) {
    require(static_cast<bool>(player_costs), "atomic game needs player cost or gradient oracle");
    auto costs = player_costs;
    own_gradients = [costs](const Vector& x) {
      Vector g(x.size());
      Vector xp = x;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x[i]));
        xp[i] = x[i] + h;
        const double up = costs(xp)[i];
        xp[i] = x[i] - h;
        const double down = costs(xp)[i];
        xp[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
      }
      return g;
    };
  }
  if (!social_gradient) {
    auto phi = social_cost;
    social_gradient = [phi](const Vector& x) { return finite_difference_gradient(phi, x); };
  }
}

bool AtomicGame::feasible(const Vector& x, double slack) const {
  if (static_cast<std::size_t>(x.size()) != bounds.size()) return false;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!bounds[i].contains(x[i], slack)) return false;
  }
  return true;
}

Vector AtomicGame::project(const Vector& x) const {
  Vector y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = bounds[i].project(x[i]);
  return y;
}

PopulationLayout::PopulationLayout(std::vector<double> masses,
                                   const std::vector<std::size_t>& actions)
    : masses_(std::move(masses)) {
  require(masses_.size() == actions.size(), "population masses and action counts differ in length");
  require(!masses_.empty(), "at least one population is required");
  offsets_.assign(1, 0);
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    require(masses_[i] > 0.0 && std::isfinite(masses_[i]), "population masses must be positive");
    require(actions[i] >= 1, "every population needs at least one action");
    offsets_.push_back(offsets_.back() + actions[i]);
  }
}

Vector PopulationLayout::project(const Vector& x) const {
  Vector y(x.size());
  for (std::size_t i = 0; i < populations(); ++i) {
    y.segment(offset(i), actions(i)) = project_simplex(x.segment(offset(i), actions(i)), mass(i));
  }
  return y;
}

Vector PopulationLayout::uniform() const {
  Vector y(size());
  for (std::size_t i = 0; i < populations(); ++i) {
    y.segment(offset(i), actions(i)).setConstant(mass(i) / static_cast<double>(actions(i)));
  }
  return y;
}

bool PopulationLayout::feasible(const Vector& x, double tol) const {
  if (static_cast<std::size_t>(x.size()) != size()) return false;
  for (std::size_t i = 0; i < populations(); ++i) {
    auto seg = x.segment(offset(i), actions(i));
    if (seg.minCoeff() < -tol) return false;
    if (std::abs(seg.sum() - mass(i)) > tol) return false;
  }
  return true;
}

void NonAtomicGame::finalize() {
  require(layout.size() > 0, "non-atomic game needs a population layout");
  require(static_cast<bool>(action_costs), "non-atomic game needs an action cost oracle");
  require(static_cast<bool>(social_cost), "non-atomic game needs a social cost oracle");
  if (!social_gradient) {
    auto phi = social_cost;
    social_gradient = [phi](const Vector& x) { return finite_difference_gradient(phi, x); };
  }
}

Vector project_simplex(const Vector& v, double mass) {
  const auto n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - mass) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

Vector finite_difference_gradient(const ScalarField& f, const Vector& x, double rel_step) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    const double up = f(xp);
    xp[i] = x[i] - h;
    const double down = f(xp);
    xp[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Matrix finite_difference_jacobian(const VectorField& f, const Vector& x, double rel_step) {
  Matrix jac;
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    const Vector up = f(xp);
    xp[j] = x[j] - h;
    const Vector down = f(xp);
    xp[j] = x[j];
    if (jac.size() == 0) jac.resize(up.size(), x.size());
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

namespace {

void check_atomic_dims(const AtomicGame& game, const Vector& x, const Vector& p) {
  if (static_cast<std::size_t>(x.size()) != game.n_players() ||
      static_cast<std::size_t>(p.size()) != game.n_players()) {
    throw InvalidArgument("strategy/incentive length does not match the number of players");
  }
}

void check_nonatomic_dims(const NonAtomicGame& game, const Vector& x, const Vector& p) {
  if (static_cast<std::size_t>(x.size()) != game.layout.size() ||
      static_cast<std::size_t>(p.size()) != game.layout.size()) {
    throw InvalidArgument("distribution/incentive length does not match the population layout");
  }
}

}  // namespace

double total_cost_atomic(const AtomicGame& game, const Vector& x, const Vector& p, std::size_t i) {
  check_atomic_dims(game, x, p);
  require(i < game.n_players(), "player index out of range");
  return game.player_costs(x)[static_cast<Eigen::Index>(i)] + p[i] * x[i];
}

double total_cost_nonatomic(const NonAtomicGame& game, const Vector& x, const Vector& p,
                            std::size_t population, std::size_t action) {
  check_nonatomic_dims(game, x, p);
  require(population < game.layout.populations(), "population index out of range");
  require(action < game.layout.actions(population), "action index out of range");
  const auto k = static_cast<Eigen::Index>(game.layout.offset(population) + action);
  return game.action_costs(x)[k] + p[k];
}

Vector externality_atomic(const AtomicGame& game, const Vector& x) {
  require(static_cast<std::size_t>(x.size()) == game.n_players(),
          "strategy length does not match the number of players");
  return game.social_gradient(x) - game.own_gradients(x);
}

Vector externality_nonatomic(const NonAtomicGame& game, const Vector& x) {
  require(static_cast<std::size_t>(x.size()) == game.layout.size(),
          "distribution length does not match the population layout");
  return game.social_gradient(x) - game.action_costs(x);
}

Certificate certify_nash_atomic(const AtomicGame& game, const Vector& x, const Vector& p,
                                double tol) {
  check_atomic_dims(game, x, p);
  const Vector g = game.own_gradients(x) + p;
  double residual = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    residual = std::max(residual, std::abs(x[i] - game.bounds[i].project(x[i] - g[i])));
  }
  return {residual <= tol, residual};
}

double simplex_gap_residual(const PopulationLayout& layout, const Vector& x, const Vector& costs,
                            double support_tol) {
  double residual = 0.0;
  for (std::size_t i = 0; i < layout.populations(); ++i) {
    const auto seg = costs.segment(layout.offset(i), layout.actions(i));
    const double best = seg.minCoeff();
    for (std::size_t j = 0; j < layout.actions(i); ++j) {
      const auto k = static_cast<Eigen::Index>(layout.offset(i) + j);
      if (x[k] > support_tol * layout.mass(i)) residual = std::max(residual, costs[k] - best);
    }
  }
  return residual;
}

Certificate certify_nash_nonatomic(const NonAtomicGame& game, const Vector& x, const Vector& p,
                                   double tol) {
  check_nonatomic_dims(game, x, p);
  const double residual = simplex_gap_residual(game.layout, x, game.action_costs(x) + p, tol);
  return {residual <= tol, residual};
}

double optimality_residual(const AtomicGame& game, const Vector& x) {
  const Vector g = game.social_gradient(x);
  double residual = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    residual = std::max(residual, std::abs(x[i] - game.bounds[i].project(x[i] - g[i])));
  }
  return residual;
}

double optimality_residual(const NonAtomicGame& game, const Vector& x, double support_tol) {
  return simplex_gap_residual(game.layout, x, game.social_gradient(x), support_tol);
}

}  // namespace incentive
