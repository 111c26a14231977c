#pragma once

// Non-atomic routing games on directed networks with edge tolls.

#include "incentive/dynamics.hpp"
#include "incentive/game.hpp"

#include <string>
#include <vector>

namespace incentive::routing {

/// Polynomial latency l(w) = Σ_k c_k w^k with nonnegative coefficients.
class Latency {
 public:
  Latency() = default;
  explicit Latency(std::vector<double> coefficients);

  double value(double w) const;
  double derivative(double w) const;
  double second_derivative(double w) const;
  /// ∫₀^w l(τ) dτ.
  double integral(double w) const;
  const std::vector<double>& coefficients() const { return coeffs_; }

 private:
  std::vector<double> coeffs_{0.0};
};

struct Edge {
  std::size_t tail = 0;
  std::size_t head = 0;
  Latency latency;
};

struct OdPair {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double demand = 1.0;
  /// Each route is a sequence of edge indices.
  std::vector<std::vector<std::size_t>> routes;
};

/// strict: l' > 0 and l'' >= 0 on [0, total demand]. relaxed: l' >= 0 (allows
/// constant-latency links such as the Pigou and Braess fixtures).
enum class LatencyCheck { strict, relaxed };

class RoutingNetwork {
 public:
  RoutingNetwork(std::vector<std::string> nodes, std::vector<Edge> edges,
                 std::vector<OdPair> od_pairs, LatencyCheck check = LatencyCheck::strict);

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<OdPair>& od_pairs() const { return od_; }
  LatencyCheck latency_check() const { return check_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t route_count() const { return layout_.size(); }
  /// Populations are OD pairs, actions are their routes.
  const PopulationLayout& layout() const { return layout_; }
  /// Edge indices of route r (flat route index).
  const std::vector<std::size_t>& route_edges(std::size_t r) const { return route_edges_[r]; }
  /// Edge-by-route 0/1 incidence matrix.
  const Matrix& incidence() const { return incidence_; }
  double total_demand() const;

  /// w_a = Σ x_r·1(a ∈ r). Throws InvalidArgument for infeasible route flows.
  Vector route_to_edge_flow(const Vector& route_flow) const;
  /// Induced route tolls: Σ_{a ∈ r} p_a.
  Vector route_tolls(const Vector& edge_tolls) const;
  Vector edge_latencies(const Vector& edge_flow) const;
  /// Σ_{a ∈ r} l_a(w_a) for every route.
  Vector route_latencies(const Vector& edge_flow) const;
  /// Σ_a w_a l_a(w_a).
  double social_cost(const Vector& edge_flow) const;
  /// Σ_r x_r Σ_{a ∈ r} l_a(w_a), evaluated in route form.
  double route_social_cost(const Vector& route_flow) const;
  /// Σ_a ∫₀^{w_a} l_a + Σ_a p_a w_a.
  double beckmann(const Vector& edge_flow, const Vector& edge_tolls) const;

 private:
  std::vector<std::string> nodes_;
  std::vector<Edge> edges_;
  std::vector<OdPair> od_;
  LatencyCheck check_;
  PopulationLayout layout_;
  std::vector<std::vector<std::size_t>> route_edges_;
  Matrix incidence_;
};

struct AssignmentOptions {
  /// Relative duality gap at which the solver stops.
  double tol = 1e-12;
  long max_sweeps = 200000;
};

struct Assignment {
  Vector route_flow;
  Vector edge_flow;
  double relative_gap = 0.0;
  long sweeps = 0;
};

/// Tolled Wardrop equilibrium: minimizer of the Beckmann potential over route
/// flows. `warm` (route flow) seeds the solver when non-empty.
Assignment wardrop_equilibrium(const RoutingNetwork& net, const Vector& edge_tolls,
                               const AssignmentOptions& opts = {}, const Vector& warm = {});
/// Same program with route-level tolls added on top of edge tolls.
Assignment wardrop_equilibrium_route_tolls(const RoutingNetwork& net, const Vector& route_tolls,
                                           const AssignmentOptions& opts = {},
                                           const Vector& warm = {});
/// Minimizer of Σ_a w_a l_a(w_a).
Assignment system_optimum(const RoutingNetwork& net, const AssignmentOptions& opts = {});

/// ẽ_a = w_a ∇l_a(w_a).
Vector edge_externality(const RoutingNetwork& net, const Vector& edge_flow);
/// Marginal social cost of each edge: l_a(w) + w ∇l_a(w).
Vector marginal_edge_costs(const RoutingNetwork& net, const Vector& edge_flow);

struct OptimalTolls {
  Vector tolls;
  Vector optimal_flow;
  Vector tolled_flow;
};

/// p†_a = w†_a ∇l_a(w†_a); verifies that the tolled equilibrium reproduces w†
/// within verify_tol, otherwise throws InconsistencyError.
OptimalTolls optimal_edge_tolls(const RoutingNetwork& net, double verify_tol = 1e-6,
                                const AssignmentOptions& opts = {});

enum class Verdict { pass, fail, indeterminate };
std::string to_string(Verdict v);

struct NondegeneracyReport {
  Verdict verdict = Verdict::indeterminate;
  /// Flat indices of minimum-cost routes that carry no flow in any equilibrium found.
  std::vector<std::size_t> unused_min_cost_routes;
  std::string detail;
};

/// Every route whose tolled cost is within tol of its OD minimum must carry
/// flow > tol in some equilibrium route flow.
NondegeneracyReport nondegeneracy_check(const RoutingNetwork& net, const Vector& optimal_tolls,
                                        double tol = 1e-6);

/// Δ_aa = (∇l_a(w_a) + w_a ∇²l_a(w_a))⁻¹ at the given edge flow.
Vector delta_diagonal(const RoutingNetwork& net, const Vector& edge_flow);
/// Δ at the equilibrium flow induced by p†.
Vector delta_matrix(const RoutingNetwork& net, const Vector& optimal_tolls,
                    const AssignmentOptions& opts = {});

/// Σ_a (p_a − p'_a)(w*_a(p) − w*_a(p')); nonpositive up to solver accuracy.
double flow_monotonicity_check(const RoutingNetwork& net, const Vector& p, const Vector& p_prime,
                               const AssignmentOptions& opts = {});

/// The routing game as a coupled system: route-flow strategies, edge-toll incentives.
class TollSystem : public CoupledSystem {
 public:
  explicit TollSystem(RoutingNetwork net, AssignmentOptions opts = {});

  const RoutingNetwork& network() const { return net_; }

  std::size_t strategy_size() const override { return net_.route_count(); }
  std::size_t incentive_size() const override { return net_.edge_count(); }
  Vector project(const Vector& x) const override { return net_.layout().project(x); }
  bool feasible(const Vector& x) const override { return net_.layout().feasible(x); }
  Vector random_strategy(std::mt19937_64& rng) const override;
  Vector equilibrium(const Vector& p, const Vector& warm) const override;
  Vector best_response(const Vector& x, const Vector& p) const override;
  Vector pseudo_gradient(const Vector& x, const Vector& p) const override;
  Vector logit_response(const Vector& x, const Vector& p, double eta) const override;
  Vector externality(const Vector& x) const override;
  double social_cost(const Vector& x) const override;
  Vector social_optimum() const override;
  double optimality_residual(const Vector& x) const override;
  double nash_residual(const Vector& x, const Vector& p) const override;
  double strategy_gap(const Vector& x, const Vector& y) const override;
  bool simplex_strategies() const override { return true; }
  Vector optimal_incentive() const override;

 private:
  RoutingNetwork net_;
  AssignmentOptions opts_;
};

/// Coupled route-flow / edge-toll updates with p_{a,k+1} = (1−β_k)p_{a,k} + β_k w_{a,k}∇l_a(w_{a,k}).
TrajectoryRecord run_toll_adaptation(const RoutingNetwork& net, const Vector& x0,
                                     const Vector& p0, const RunConfig& config,
                                     const AssignmentOptions& opts = {});

/// The routing game as a generic non-atomic game with route-level incentives.
NonAtomicGame as_nonatomic_game(const RoutingNetwork& net, const AssignmentOptions& opts = {});

/// All simple directed paths from origin to destination (networks up to 12 nodes).
std::vector<std::vector<std::size_t>> enumerate_simple_paths(std::size_t node_count,
                                                             const std::vector<Edge>& edges,
                                                             std::size_t origin,
                                                             std::size_t destination);

// Built-in fixtures.
RoutingNetwork two_link();
RoutingNetwork pigou();
RoutingNetwork braess();

struct FixtureInfo {
  std::string name;
  std::string description;
};
const std::vector<FixtureInfo>& fixture_catalog();
/// Throws InvalidArgument for unknown names.
RoutingNetwork fixture(const std::string& name);

}  // namespace incentive::routing
