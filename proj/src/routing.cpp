#include "incentive/routing.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>

namespace incentive::routing {

// ---------------------------------------------------------------------------
// Latency

Latency::Latency(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) {
  require(!coeffs_.empty(), "latency polynomial needs at least one coefficient");
  for (double c : coeffs_) {
    require(std::isfinite(c) && c >= 0.0, "latency coefficients must be finite and nonnegative");
  }
}

double Latency::value(double w) const {
  double v = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) v = v * w + *it;
  return v;
}

double Latency::derivative(double w) const {
  double v = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 1;) v = v * w + static_cast<double>(k) * coeffs_[k];
  return v;
}

double Latency::second_derivative(double w) const {
  double v = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 2;) {
    v = v * w + static_cast<double>(k * (k - 1)) * coeffs_[k];
  }
  return v;
}

double Latency::integral(double w) const {
  double v = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 0;) v = v * w + coeffs_[k] / static_cast<double>(k + 1);
  return v * w;
}

// ---------------------------------------------------------------------------
// Network

RoutingNetwork::RoutingNetwork(std::vector<std::string> nodes, std::vector<Edge> edges,
                               std::vector<OdPair> od_pairs, LatencyCheck check)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), od_(std::move(od_pairs)), check_(check) {
  require(!nodes_.empty(), "network needs at least one node");
  require(!edges_.empty(), "network needs at least one edge");
  require(!od_.empty(), "network needs at least one OD pair");
  for (std::size_t a = 0; a < edges_.size(); ++a) {
    require(edges_[a].tail < nodes_.size() && edges_[a].head < nodes_.size(),
            "edge " + std::to_string(a) + " references an unknown node");
  }

  std::vector<double> masses;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < od_.size(); ++i) {
    const auto& od = od_[i];
    const std::string tag = "OD pair " + std::to_string(i);
    require(od.origin < nodes_.size() && od.destination < nodes_.size(),
            tag + " references an unknown node");
    require(od.demand > 0.0 && std::isfinite(od.demand), tag + " needs a positive demand");
    require(!od.routes.empty(), tag + " needs at least one route");
    for (const auto& route : od.routes) {
      require(!route.empty(), tag + " has an empty route");
      std::size_t at = od.origin;
      for (std::size_t a : route) {
        require(a < edges_.size(), tag + " route uses an unknown edge");
        require(edges_[a].tail == at, tag + " route is not a contiguous path");
        at = edges_[a].head;
      }
      require(at == od.destination, tag + " route does not end at the destination");
      route_edges_.push_back(route);
    }
    masses.push_back(od.demand);
    counts.push_back(od.routes.size());
  }
  layout_ = PopulationLayout(masses, counts);

  incidence_ = Matrix::Zero(static_cast<Eigen::Index>(edges_.size()),
                            static_cast<Eigen::Index>(route_edges_.size()));
  for (std::size_t r = 0; r < route_edges_.size(); ++r) {
    for (std::size_t a : route_edges_[r]) incidence_(a, r) = 1.0;
  }

  const double total = total_demand();
  for (std::size_t a = 0; a < edges_.size(); ++a) {
    const auto& l = edges_[a].latency;
    for (int s = 0; s <= 100; ++s) {
      const double w = total * s / 100.0;
      const double slope = l.derivative(w);
      const bool increasing = check_ == LatencyCheck::strict ? slope > 0.0 : slope >= 0.0;
      if (!increasing || l.second_derivative(w) < 0.0) {
        throw InvalidSpec("latency of edge " + std::to_string(a) +
                          " is not strictly increasing and convex on [0, total demand]");
      }
    }
  }
}

double RoutingNetwork::total_demand() const {
  double total = 0.0;
  for (const auto& od : od_) total += od.demand;
  return total;
}

Vector RoutingNetwork::route_to_edge_flow(const Vector& route_flow) const {
  require(static_cast<std::size_t>(route_flow.size()) == route_count(),
          "route flow length does not match the number of routes");
  require(layout_.feasible(route_flow, 1e-8 * (1.0 + total_demand())),
          "route flow is infeasible for the OD demands");
  return incidence_ * route_flow;
}

Vector RoutingNetwork::route_tolls(const Vector& edge_tolls) const {
  require(static_cast<std::size_t>(edge_tolls.size()) == edge_count(),
          "edge toll length does not match the number of edges");
  return incidence_.transpose() * edge_tolls;
}

Vector RoutingNetwork::edge_latencies(const Vector& edge_flow) const {
  Vector l(edge_flow.size());
  for (Eigen::Index a = 0; a < edge_flow.size(); ++a) l[a] = edges_[a].latency.value(edge_flow[a]);
  return l;
}

Vector RoutingNetwork::route_latencies(const Vector& edge_flow) const {
  return incidence_.transpose() * edge_latencies(edge_flow);
}

double RoutingNetwork::social_cost(const Vector& edge_flow) const {
  return edge_flow.dot(edge_latencies(edge_flow));
}

double RoutingNetwork::route_social_cost(const Vector& route_flow) const {
  return route_flow.dot(route_latencies(incidence_ * route_flow));
}

double RoutingNetwork::beckmann(const Vector& edge_flow, const Vector& edge_tolls) const {
  double total = 0.0;
  for (Eigen::Index a = 0; a < edge_flow.size(); ++a) {
    total += edges_[a].latency.integral(edge_flow[a]) + edge_tolls[a] * edge_flow[a];
  }
  return total;
}

// ---------------------------------------------------------------------------
// Path-based Frank-Wolfe (pairwise variant)
//
// Each sweep moves flow, per OD pair, from the costliest used route toward the
// cheapest route (lowest index on ties), with an exact line search on the
// directional derivative of the convex potential. The potential's gradient in
// edge space is the edge cost vector c_a(w_a), which is nondecreasing.

namespace {

struct EdgeCosts {
  std::function<double(std::size_t, double)> cost;
  std::function<double(std::size_t, double)> slope;
};

Assignment solve_assignment(const RoutingNetwork& net, const EdgeCosts& costs,
                            const Vector& route_offsets, const AssignmentOptions& opts,
                            const Vector& warm) {
  const auto& layout = net.layout();
  const auto n_edges = static_cast<Eigen::Index>(net.edge_count());
  const Matrix& inc = net.incidence();

  auto route_cost = [&](std::size_t r, const Vector& w) {
    double c = route_offsets[static_cast<Eigen::Index>(r)];
    for (std::size_t a : net.route_edges(r)) c += costs.cost(a, w[static_cast<Eigen::Index>(a)]);
    return c;
  };

  Vector x;
  if (warm.size() == static_cast<Eigen::Index>(net.route_count())) {
    x = layout.project(warm);
  } else {
    // All-or-nothing on empty-network costs.
    const Vector zero = Vector::Zero(n_edges);
    x = Vector::Zero(static_cast<Eigen::Index>(net.route_count()));
    for (std::size_t i = 0; i < layout.populations(); ++i) {
      std::size_t best = layout.offset(i);
      for (std::size_t r = layout.offset(i) + 1; r < layout.offset(i) + layout.actions(i); ++r) {
        if (route_cost(r, zero) < route_cost(best, zero)) best = r;
      }
      x[static_cast<Eigen::Index>(best)] = layout.mass(i);
    }
  }

  Vector w = inc * x;
  Vector delta = Vector::Zero(n_edges);
  std::vector<std::size_t> touched;
  double relative_gap = kInf;

  for (long sweep = 0; sweep <= opts.max_sweeps; ++sweep) {
    w = inc * x;
    double gap = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < layout.populations(); ++i) {
      double cmin = kInf;
      for (std::size_t r = layout.offset(i); r < layout.offset(i) + layout.actions(i); ++r) {
        cmin = std::min(cmin, route_cost(r, w));
      }
      for (std::size_t r = layout.offset(i); r < layout.offset(i) + layout.actions(i); ++r) {
        gap += x[static_cast<Eigen::Index>(r)] * (route_cost(r, w) - cmin);
      }
      scale += layout.mass(i) * std::max(std::abs(cmin), 1.0);
    }
    relative_gap = gap / scale;
    if (relative_gap <= opts.tol) {
      return {x, w, relative_gap, sweep};
    }
    if (sweep == opts.max_sweeps) break;

    for (std::size_t i = 0; i < layout.populations(); ++i) {
      const std::size_t begin = layout.offset(i);
      const std::size_t end = begin + layout.actions(i);
      for (std::size_t pass = 0; pass < layout.actions(i); ++pass) {
        std::size_t best = begin;
        double best_cost = route_cost(begin, w);
        std::size_t worst = end;
        double worst_cost = -kInf;
        for (std::size_t r = begin; r < end; ++r) {
          const double c = route_cost(r, w);
          if (c < best_cost) {
            best = r;
            best_cost = c;
          }
          if (x[static_cast<Eigen::Index>(r)] > 0.0 && c > worst_cost) {
            worst = r;
            worst_cost = c;
          }
        }
        if (worst == end || worst == best || worst_cost - best_cost <= 0.0) break;

        touched.clear();
        for (std::size_t a : net.route_edges(best)) {
          delta[static_cast<Eigen::Index>(a)] += 1.0;
          touched.push_back(a);
        }
        for (std::size_t a : net.route_edges(worst)) {
          delta[static_cast<Eigen::Index>(a)] -= 1.0;
          touched.push_back(a);
        }
        const double offset = route_offsets[static_cast<Eigen::Index>(best)] -
                              route_offsets[static_cast<Eigen::Index>(worst)];
        auto phi = [&](double t) {
          double v = offset;
          for (std::size_t a : touched) {
            const double d = delta[static_cast<Eigen::Index>(a)];
            if (d != 0.0) v += d * costs.cost(a, w[static_cast<Eigen::Index>(a)] + d * t);
          }
          return v;
        };
        auto dphi = [&](double t) {
          double v = 0.0;
          for (std::size_t a : touched) {
            const double d = delta[static_cast<Eigen::Index>(a)];
            if (d != 0.0) v += d * d * costs.slope(a, w[static_cast<Eigen::Index>(a)] + d * t);
          }
          return v;
        };
        // touched lists shared edges twice; phi/dphi count each edge once.
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

        const double limit = x[static_cast<Eigen::Index>(worst)];
        double t;
        if (phi(limit) <= 0.0) {
          t = limit;
        } else {
          double lo = 0.0, hi = limit;
          t = 0.5 * limit;
          for (int it = 0; it < 200; ++it) {
            const double v = phi(t);
            if (v == 0.0) break;
            (v > 0.0 ? hi : lo) = t;
            if (hi - lo <= 1e-17 * (1.0 + limit)) break;
            const double s = dphi(t);
            double next = s > 0.0 ? t - v / s : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            t = next;
          }
        }
        x[static_cast<Eigen::Index>(best)] += t;
        x[static_cast<Eigen::Index>(worst)] -= t;
        for (std::size_t a : touched) {
          w[static_cast<Eigen::Index>(a)] += delta[static_cast<Eigen::Index>(a)] * t;
          delta[static_cast<Eigen::Index>(a)] = 0.0;
        }
        if (t == 0.0) break;
      }
    }
  }
  std::ostringstream msg;
  msg << "route assignment did not reach relative gap " << opts.tol << " (gap " << relative_gap
      << ")";
  throw ConvergenceFailure(msg.str(), x, relative_gap);
}

}  // namespace

Assignment wardrop_equilibrium_route_tolls(const RoutingNetwork& net, const Vector& route_tolls,
                                           const AssignmentOptions& opts, const Vector& warm) {
  require(static_cast<std::size_t>(route_tolls.size()) == net.route_count(),
          "route toll length does not match the number of routes");
  const auto& edges = net.edges();
  EdgeCosts costs{[&](std::size_t a, double w) { return edges[a].latency.value(w); },
                  [&](std::size_t a, double w) { return edges[a].latency.derivative(w); }};
  return solve_assignment(net, costs, route_tolls, opts, warm);
}

Assignment wardrop_equilibrium(const RoutingNetwork& net, const Vector& edge_tolls,
                               const AssignmentOptions& opts, const Vector& warm) {
  return wardrop_equilibrium_route_tolls(net, net.route_tolls(edge_tolls), opts, warm);
}

Assignment system_optimum(const RoutingNetwork& net, const AssignmentOptions& opts) {
  const auto& edges = net.edges();
  EdgeCosts costs{
      [&](std::size_t a, double w) {
        return edges[a].latency.value(w) + w * edges[a].latency.derivative(w);
      },
      [&](std::size_t a, double w) {
        return 2.0 * edges[a].latency.derivative(w) + w * edges[a].latency.second_derivative(w);
      }};
  return solve_assignment(net, costs, Vector::Zero(static_cast<Eigen::Index>(net.route_count())),
                          opts, {});
}

Vector edge_externality(const RoutingNetwork& net, const Vector& edge_flow) {
  require(static_cast<std::size_t>(edge_flow.size()) == net.edge_count(),
          "edge flow length does not match the number of edges");
  Vector e(edge_flow.size());
  for (Eigen::Index a = 0; a < edge_flow.size(); ++a) {
    e[a] = edge_flow[a] * net.edges()[a].latency.derivative(edge_flow[a]);
  }
  return e;
}

Vector marginal_edge_costs(const RoutingNetwork& net, const Vector& edge_flow) {
  return net.edge_latencies(edge_flow) + edge_externality(net, edge_flow);
}

OptimalTolls optimal_edge_tolls(const RoutingNetwork& net, double verify_tol,
                                const AssignmentOptions& opts) {
  OptimalTolls result;
  result.optimal_flow = system_optimum(net, opts).edge_flow;
  result.tolls = edge_externality(net, result.optimal_flow);
  result.tolled_flow = wardrop_equilibrium(net, result.tolls, opts).edge_flow;
  const double mismatch = norm_inf(result.tolled_flow - result.optimal_flow);
  if (mismatch > verify_tol) {
    std::ostringstream msg;
    msg << "tolled equilibrium flow differs from the system optimum by " << mismatch
        << " (tolerance " << verify_tol << "); the latency model violates the assumptions";
    throw InconsistencyError(msg.str());
  }
  return result;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::indeterminate:
      return "indeterminate";
  }
  return "indeterminate";
}

NondegeneracyReport nondegeneracy_check(const RoutingNetwork& net, const Vector& optimal_tolls,
                                        double tol) {
  const AssignmentOptions tight{1e-14, 200000};
  const Vector base_tolls = net.route_tolls(optimal_tolls);
  const Assignment eq = wardrop_equilibrium_route_tolls(net, base_tolls, tight);
  const Vector cost = net.route_latencies(eq.edge_flow) + base_tolls;
  const auto& layout = net.layout();

  NondegeneracyReport report;
  bool any_fail = false;
  bool any_indeterminate = false;
  std::ostringstream detail;

  for (std::size_t i = 0; i < layout.populations(); ++i) {
    const auto seg = cost.segment(layout.offset(i), layout.actions(i));
    const double cmin = seg.minCoeff();
    for (std::size_t r = layout.offset(i); r < layout.offset(i) + layout.actions(i); ++r) {
      const double gap = cost[r] - cmin;
      if (gap > tol || eq.route_flow[r] > tol) continue;

      // Minimum-cost route without flow: make it slightly cheaper and watch
      // how much flow it attracts. A plateau means another equilibrium route
      // flow already uses it; a response linear in the perturbation means it
      // sits exactly on the support boundary.
      auto attracted = [&](double shift) {
        Vector tolls = base_tolls;
        tolls[static_cast<Eigen::Index>(r)] -= shift;
        return wardrop_equilibrium_route_tolls(net, tolls, tight, eq.route_flow)
            .route_flow[static_cast<Eigen::Index>(r)];
      };
      const double large = attracted(1e-3);
      const double small = attracted(1e-4);
      if (small > tol && large <= 2.0 * small) {
        detail << "route " << r << " carries flow in an alternative equilibrium; ";
        continue;
      }
      report.unused_min_cost_routes.push_back(r);
      const double ratio = small > 0.0 ? large / small : kInf;
      if (gap <= 0.01 * tol && ratio >= 5.0 && ratio <= 20.0) {
        any_fail = true;
        detail << "route " << r << " is tied at minimum cost but unused in every equilibrium; ";
      } else {
        any_indeterminate = true;
        detail << "route " << r << " is within " << gap
               << " of minimum cost with no flow; support cannot be resolved; ";
      }
    }
  }
  report.verdict = any_fail ? Verdict::fail
                            : (any_indeterminate ? Verdict::indeterminate : Verdict::pass);
  report.detail = detail.str();
  return report;
}

Vector delta_diagonal(const RoutingNetwork& net, const Vector& edge_flow) {
  Vector d(edge_flow.size());
  for (Eigen::Index a = 0; a < edge_flow.size(); ++a) {
    const auto& l = net.edges()[a].latency;
    const double denom = l.derivative(edge_flow[a]) + edge_flow[a] * l.second_derivative(edge_flow[a]);
    if (!(denom > 0.0)) {
      throw InvalidSpec("Delta matrix undefined: edge " + std::to_string(a) +
                        " has a nonpositive marginal-cost slope");
    }
    d[a] = 1.0 / denom;
  }
  return d;
}

Vector delta_matrix(const RoutingNetwork& net, const Vector& optimal_tolls,
                    const AssignmentOptions& opts) {
  return delta_diagonal(net, wardrop_equilibrium(net, optimal_tolls, opts).edge_flow);
}

double flow_monotonicity_check(const RoutingNetwork& net, const Vector& p, const Vector& p_prime,
                               const AssignmentOptions& opts) {
  const Vector w = wardrop_equilibrium(net, p, opts).edge_flow;
  const Vector w_prime = wardrop_equilibrium(net, p_prime, opts).edge_flow;
  return (p - p_prime).dot(w - w_prime);
}

// ---------------------------------------------------------------------------
// Coupled system

TollSystem::TollSystem(RoutingNetwork net, AssignmentOptions opts)
    : net_(std::move(net)), opts_(opts) {}

Vector TollSystem::random_strategy(std::mt19937_64& rng) const {
  return random_simplex_point(net_.layout(), rng);
}

Vector TollSystem::equilibrium(const Vector& p, const Vector& warm) const {
  return wardrop_equilibrium(net_, p, opts_, warm).route_flow;
}

Vector TollSystem::best_response(const Vector& x, const Vector& p) const {
  return simplex_best_response(net_.layout(), pseudo_gradient(x, p));
}

Vector TollSystem::pseudo_gradient(const Vector& x, const Vector& p) const {
  return net_.route_latencies(net_.incidence() * x) + net_.route_tolls(p);
}

Vector TollSystem::logit_response(const Vector& x, const Vector& p, double eta) const {
  return simplex_logit(net_.layout(), pseudo_gradient(x, p), eta);
}

Vector TollSystem::externality(const Vector& x) const {
  return edge_externality(net_, net_.incidence() * x);
}

double TollSystem::social_cost(const Vector& x) const {
  return net_.social_cost(net_.incidence() * x);
}

Vector TollSystem::social_optimum() const { return system_optimum(net_, opts_).route_flow; }

double TollSystem::optimality_residual(const Vector& x) const {
  const Vector marginal = net_.incidence().transpose() *
                          marginal_edge_costs(net_, net_.incidence() * x);
  return simplex_gap_residual(net_.layout(), x, marginal, 1e-9);
}

double TollSystem::nash_residual(const Vector& x, const Vector& p) const {
  return simplex_gap_residual(net_.layout(), x, pseudo_gradient(x, p), 1e-9);
}

double TollSystem::strategy_gap(const Vector& x, const Vector& y) const {
  return norm_inf(net_.incidence() * (x - y));
}

Vector TollSystem::optimal_incentive() const {
  return edge_externality(net_, system_optimum(net_, opts_).edge_flow);
}

TrajectoryRecord run_toll_adaptation(const RoutingNetwork& net, const Vector& x0,
                                     const Vector& p0, const RunConfig& config,
                                     const AssignmentOptions& opts) {
  return run_coupled(TollSystem(net, opts), x0, p0, config);
}

NonAtomicGame as_nonatomic_game(const RoutingNetwork& net, const AssignmentOptions& opts) {
  auto shared = std::make_shared<const RoutingNetwork>(net);
  NonAtomicGame game;
  game.layout = shared->layout();
  game.action_costs = [shared](const Vector& x) {
    return shared->route_latencies(shared->incidence() * x);
  };
  game.social_cost = [shared](const Vector& x) { return shared->route_social_cost(x); };
  game.social_gradient = [shared](const Vector& x) {
    return Vector(shared->incidence().transpose() *
                  marginal_edge_costs(*shared, shared->incidence() * x));
  };
  game.equilibrium = [shared, opts](const Vector& p, const Vector& warm) {
    return wardrop_equilibrium_route_tolls(*shared, p, opts, warm).route_flow;
  };
  game.finalize();
  return game;
}

std::vector<std::vector<std::size_t>> enumerate_simple_paths(std::size_t node_count,
                                                             const std::vector<Edge>& edges,
                                                             std::size_t origin,
                                                             std::size_t destination) {
  require(node_count <= 12, "path enumeration is limited to networks with at most 12 nodes");
  require(origin < node_count && destination < node_count, "unknown origin or destination");
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> current;
  std::vector<bool> visited(node_count, false);
  std::function<void(std::size_t)> dfs = [&](std::size_t node) {
    if (node == destination) {
      paths.push_back(current);
      return;
    }
    visited[node] = true;
    for (std::size_t a = 0; a < edges.size(); ++a) {
      if (edges[a].tail != node || visited[edges[a].head]) continue;
      current.push_back(a);
      dfs(edges[a].head);
      current.pop_back();
    }
    visited[node] = false;
  };
  dfs(origin);
  return paths;
}

// ---------------------------------------------------------------------------
// Fixtures

RoutingNetwork two_link() {
  std::vector<Edge> edges{{0, 1, Latency({0.0, 1.0})}, {0, 1, Latency({0.0, 1.0})}};
  std::vector<OdPair> od{{0, 1, 1.0, {{0}, {1}}}};
  return RoutingNetwork({"S", "D"}, std::move(edges), std::move(od));
}

RoutingNetwork pigou() {
  std::vector<Edge> edges{{0, 1, Latency({0.0, 1.0})}, {0, 1, Latency({1.0})}};
  std::vector<OdPair> od{{0, 1, 1.0, {{0}, {1}}}};
  return RoutingNetwork({"s", "t"}, std::move(edges), std::move(od), LatencyCheck::relaxed);
}

RoutingNetwork braess() {
  // Nodes: s=0, a=1, b=2, t=3.
  std::vector<Edge> edges{{0, 1, Latency({0.0, 1.0})},
                          {1, 3, Latency({1.0})},
                          {0, 2, Latency({1.0})},
                          {2, 3, Latency({0.0, 1.0})},
                          {1, 2, Latency({0.25, 0.01})}};
  std::vector<OdPair> od{{0, 3, 1.0, {{0, 1}, {2, 3}, {0, 4, 3}}}};
  return RoutingNetwork({"s", "a", "b", "t"}, std::move(edges), std::move(od),
                        LatencyCheck::relaxed);
}

const std::vector<FixtureInfo>& fixture_catalog() {
  static const std::vector<FixtureInfo> catalog{
      {"two_link", "two parallel links with l(w) = w, unit demand (gradient-baseline counterexample)"},
      {"pigou", "Pigou network: l1(w) = w, l2(w) = 1, unit demand"},
      {"braess", "4-node Braess network with a 0.25 + 0.01w bridge, unit demand"},
  };
  return catalog;
}

RoutingNetwork fixture(const std::string& name) {
  if (name == "two_link") return two_link();
  if (name == "pigou") return pigou();
  if (name == "braess") return braess();
  throw InvalidArgument("unknown fixture '" + name + "'");
}

}  // namespace incentive::routing
