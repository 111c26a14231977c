#include "incentive/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace incentive::experiment {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Catalogs

const std::vector<std::string>& analysis_operations() {
  static const std::vector<std::string> ops{
      "fixed_point",       "ode_probe",        "condition_c1",   "condition_c2",
      "counterexample",    "multistart_uniqueness", "optimal_tolls", "nondegeneracy",
      "global_conditions", "local_conditions", "scaled_limit"};
  return ops;
}

const std::vector<routing::FixtureInfo>& custom_catalog() {
  static const std::vector<routing::FixtureInfo> catalog{
      {"cournot_box", "3-player atomic game on [0, 5]^3 given only by cost oracles"},
      {"shared_resource", "2 populations sharing 2 resources, oracle-only non-atomic game"},
  };
  return catalog;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string location(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

void allow_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) fail(path, "unknown key '" + item.key() + "'");
  }
}

const Json& need(const Json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path, std::string("missing key '") + key + "'");
  return j.at(key);
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double number_or(const Json& j, const std::string& path, const char* key, double fallback) {
  return j.contains(key) ? as_number(j.at(key), path + "." + key) : fallback;
}

long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> number_list(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<std::vector<double>> matrix_list(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(number_list(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

template <typename E>
E enum_value(const Json& j, const std::string& path, const std::map<std::string, E>& names) {
  const std::string s = as_string(j, path);
  auto it = names.find(s);
  if (it == names.end()) fail(path, "unknown value '" + s + "'");
  return it->second;
}

template <typename E>
std::string enum_name(E value, const std::map<std::string, E>& names) {
  for (const auto& [k, v] : names) {
    if (v == value) return k;
  }
  return "";
}

const std::map<std::string, RuleVariant> kVariants{{"equilibrium", RuleVariant::equilibrium},
                                                   {"best_response", RuleVariant::best_response},
                                                   {"gradient", RuleVariant::gradient}};
const std::map<std::string, Regularizer> kRegularizers{{"quadratic", Regularizer::quadratic},
                                                       {"entropy", Regularizer::entropy}};
const std::map<std::string, IncentiveUpdate> kUpdates{
    {"externality", IncentiveUpdate::externality},
    {"gradient_baseline", IncentiveUpdate::gradient_baseline}};

ScalarTermSpec parse_term(const Json& j, const std::string& path) {
  allow_keys(j, path, {"kind", "center", "curvature", "xs", "grads"});
  ScalarTermSpec t;
  t.kind = as_string(need(j, path, "kind"), path + ".kind");
  if (t.kind == "quadratic" || t.kind == "quartic") {
    t.center = number_or(j, path, "center", 0.0);
    t.curvature = number_or(j, path, "curvature", 1.0);
  } else if (t.kind == "table") {
    t.xs = number_list(need(j, path, "xs"), path + ".xs");
    t.grads = number_list(need(j, path, "grads"), path + ".grads");
  } else {
    fail(path + ".kind", "expected quadratic, quartic or table");
  }
  return t;
}

AggregativeSpec parse_aggregative(const Json& j, const std::string& path) {
  allow_keys(j, path, {"q", "A", "alpha", "zeta", "h"});
  AggregativeSpec s;
  s.q = number_list(need(j, path, "q"), path + ".q");
  s.A = matrix_list(need(j, path, "A"), path + ".A");
  s.alpha = as_number(need(j, path, "alpha"), path + ".alpha");
  const bool has_zeta = j.contains("zeta");
  const bool has_h = j.contains("h");
  if (has_zeta == has_h) fail(path, "exactly one of 'zeta' and 'h' is required");
  if (has_zeta) s.zeta = number_list(j.at("zeta"), path + ".zeta");
  if (has_h) {
    const Json& h = j.at("h");
    if (!h.is_array()) fail(path + ".h", "expected an array");
    for (std::size_t i = 0; i < h.size(); ++i) {
      s.h.push_back(parse_term(h[i], path + ".h[" + std::to_string(i) + "]"));
    }
  }
  return s;
}

std::size_t node_ref(const Json& j, const std::string& path, const std::vector<std::string>& nodes) {
  if (j.is_string()) {
    const auto it = std::find(nodes.begin(), nodes.end(), j.get<std::string>());
    if (it == nodes.end()) fail(path, "unknown node '" + j.get<std::string>() + "'");
    return static_cast<std::size_t>(it - nodes.begin());
  }
  const long v = integer(j, path);
  if (v < 0 || static_cast<std::size_t>(v) >= nodes.size()) fail(path, "node index out of range");
  return static_cast<std::size_t>(v);
}

NetworkSpec parse_network(const Json& j, const std::string& path) {
  allow_keys(j, path, {"nodes", "edges", "od", "relaxed_latency"});
  NetworkSpec s;
  const Json& nodes = need(j, path, "nodes");
  if (!nodes.is_array() || nodes.empty()) fail(path + ".nodes", "expected a non-empty array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    s.nodes.push_back(as_string(nodes[i], path + ".nodes[" + std::to_string(i) + "]"));
  }
  const Json& edges = need(j, path, "edges");
  if (!edges.is_array()) fail(path + ".edges", "expected an array");
  for (std::size_t a = 0; a < edges.size(); ++a) {
    const std::string ep = path + ".edges[" + std::to_string(a) + "]";
    allow_keys(edges[a], ep, {"tail", "head", "poly"});
    s.edges.push_back({node_ref(need(edges[a], ep, "tail"), ep + ".tail", s.nodes),
                       node_ref(need(edges[a], ep, "head"), ep + ".head", s.nodes),
                       number_list(need(edges[a], ep, "poly"), ep + ".poly")});
  }
  const Json& od = need(j, path, "od");
  if (!od.is_array()) fail(path + ".od", "expected an array");
  for (std::size_t i = 0; i < od.size(); ++i) {
    const std::string op = path + ".od[" + std::to_string(i) + "]";
    allow_keys(od[i], op, {"o", "d", "demand", "routes"});
    OdSpec o;
    o.origin = node_ref(need(od[i], op, "o"), op + ".o", s.nodes);
    o.destination = node_ref(need(od[i], op, "d"), op + ".d", s.nodes);
    o.demand = as_number(need(od[i], op, "demand"), op + ".demand");
    if (od[i].contains("routes")) {
      const Json& routes = od[i].at("routes");
      if (!routes.is_array()) fail(op + ".routes", "expected an array of edge lists");
      for (std::size_t r = 0; r < routes.size(); ++r) {
        const std::string rp = op + ".routes[" + std::to_string(r) + "]";
        if (!routes[r].is_array()) fail(rp, "expected an array of edge indices");
        std::vector<std::size_t> route;
        for (std::size_t k = 0; k < routes[r].size(); ++k) {
          const long e = integer(routes[r][k], rp + "[" + std::to_string(k) + "]");
          if (e < 0) fail(rp, "edge index must be nonnegative");
          route.push_back(static_cast<std::size_t>(e));
        }
        o.routes.push_back(std::move(route));
      }
    } else {
      std::vector<routing::Edge> plain;
      for (const auto& e : s.edges) plain.push_back({e.tail, e.head, routing::Latency()});
      try {
        o.routes = routing::enumerate_simple_paths(s.nodes.size(), plain, o.origin, o.destination);
      } catch (const std::exception& e) {
        fail(op, e.what());
      }
    }
    s.od.push_back(std::move(o));
  }
  if (j.contains("relaxed_latency")) {
    if (!j.at("relaxed_latency").is_boolean()) fail(path + ".relaxed_latency", "expected a boolean");
    s.relaxed_latency = j.at("relaxed_latency").get<bool>();
  }
  return s;
}

GameSpec parse_game(const Json& j) {
  const std::string path = "game";
  GameSpec g;
  if (j.is_string()) {
    g.kind = GameSpec::Kind::builtin;
    g.name = j.get<std::string>();
  } else {
    allow_keys(j, path, {"builtin", "aggregative", "network", "custom"});
    if (j.size() != 1) fail(path, "expected exactly one of builtin, aggregative, network, custom");
    if (j.contains("builtin")) {
      g.kind = GameSpec::Kind::builtin;
      g.name = as_string(j.at("builtin"), path + ".builtin");
    } else if (j.contains("custom")) {
      g.kind = GameSpec::Kind::custom;
      g.name = as_string(j.at("custom"), path + ".custom");
    } else if (j.contains("aggregative")) {
      g.kind = GameSpec::Kind::aggregative;
      g.aggregative = parse_aggregative(j.at("aggregative"), path + ".aggregative");
    } else {
      g.kind = GameSpec::Kind::network;
      g.network = parse_network(j.at("network"), path + ".network");
    }
  }
  if (g.kind == GameSpec::Kind::builtin) {
    const auto& cat = routing::fixture_catalog();
    if (std::none_of(cat.begin(), cat.end(), [&](const auto& f) { return f.name == g.name; })) {
      fail(path, "unknown builtin fixture '" + g.name + "'");
    }
  }
  if (g.kind == GameSpec::Kind::custom) {
    const auto& cat = custom_catalog();
    if (std::none_of(cat.begin(), cat.end(), [&](const auto& f) { return f.name == g.name; })) {
      fail(path, "unknown custom game '" + g.name + "'");
    }
  }
  return g;
}

RunConfig parse_run(const Json& j, std::optional<std::vector<double>>& x0,
                    std::optional<std::vector<double>>& p0) {
  const std::string path = "run";
  allow_keys(j, path,
             {"schedule", "rule", "max_iterations", "convergence_tol", "record_every", "seed",
              "incentive_update", "fd_step", "x0", "p0"});
  RunConfig run;
  if (j.contains("schedule")) {
    const Json& s = j.at("schedule");
    allow_keys(s, path + ".schedule", {"a", "b", "gamma0", "beta0", "offset"});
    const StepSchedule d;
    const std::string sp = path + ".schedule";
    const long offset = s.contains("offset") ? integer(s.at("offset"), sp + ".offset") : d.offset();
    try {
      run.schedule = StepSchedule(number_or(s, sp, "a", d.a()), number_or(s, sp, "b", d.b()),
                                  number_or(s, sp, "gamma0", d.gamma0()),
                                  number_or(s, sp, "beta0", d.beta0()), offset);
    } catch (const InvalidArgument& e) {
      fail(sp, e.what());
    }
  }
  if (j.contains("rule")) {
    const Json& r = j.at("rule");
    const std::string rp = path + ".rule";
    allow_keys(r, rp, {"variant", "eta", "regularizer", "lipschitz"});
    if (r.contains("variant")) run.rule.variant = enum_value(r.at("variant"), rp + ".variant", kVariants);
    run.rule.eta = number_or(r, rp, "eta", 0.0);
    if (r.contains("regularizer")) {
      run.rule.regularizer = enum_value(r.at("regularizer"), rp + ".regularizer", kRegularizers);
    }
    run.rule.lipschitz = number_or(r, rp, "lipschitz", 0.0);
  }
  if (j.contains("max_iterations")) run.max_iterations = integer(j.at("max_iterations"), path + ".max_iterations");
  run.convergence_tol = number_or(j, path, "convergence_tol", run.convergence_tol);
  if (j.contains("record_every")) run.record_every = integer(j.at("record_every"), path + ".record_every");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) fail(path + ".seed", "expected a nonnegative integer");
    run.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("incentive_update")) {
    run.incentive_update = enum_value(j.at("incentive_update"), path + ".incentive_update", kUpdates);
  }
  run.fd_step = number_or(j, path, "fd_step", 0.0);
  if (j.contains("x0")) x0 = number_list(j.at("x0"), path + ".x0");
  if (j.contains("p0")) p0 = number_list(j.at("p0"), path + ".p0");
  try {
    run.validate();
  } catch (const InvalidArgument& e) {
    fail(path, e.what());
  }
  return run;
}

std::vector<AnalysisSpec> parse_analyses(const Json& j) {
  if (!j.is_array()) fail("analyses", "expected an array");
  std::vector<AnalysisSpec> out;
  const auto& ops = analysis_operations();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "analyses[" + std::to_string(i) + "]";
    AnalysisSpec a;
    if (j[i].is_string()) {
      a.op = j[i].get<std::string>();
    } else {
      if (!j[i].is_object()) fail(path, "expected an operation name or object");
      a.op = as_string(need(j[i], path, "op"), path + ".op");
      a.params = j[i];
      a.params.erase("op");
    }
    if (std::find(ops.begin(), ops.end(), a.op) == ops.end()) {
      fail(path, "unknown analysis operation '" + a.op + "'");
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed JSON at " + location(text, e.byte) + ": " + e.what());
  }
  allow_keys(j, "config", {"game", "run", "analyses", "output_dir"});
  ExperimentConfig c;
  c.game = parse_game(need(j, "config", "game"));
  if (j.contains("run")) c.run = parse_run(j.at("run"), c.x0, c.p0);
  if (j.contains("analyses")) c.analyses = parse_analyses(j.at("analyses"));
  if (j.contains("output_dir")) c.output_dir = as_string(j.at("output_dir"), "output_dir");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

Json to_json(const ExperimentConfig& c) {
  Json game;
  switch (c.game.kind) {
    case GameSpec::Kind::builtin:
      game["builtin"] = c.game.name;
      break;
    case GameSpec::Kind::custom:
      game["custom"] = c.game.name;
      break;
    case GameSpec::Kind::aggregative: {
      const auto& a = c.game.aggregative;
      Json s{{"q", a.q}, {"A", a.A}, {"alpha", a.alpha}};
      if (a.zeta) {
        s["zeta"] = *a.zeta;
      } else {
        Json h = Json::array();
        for (const auto& t : a.h) {
          if (t.kind == "table") {
            h.push_back({{"kind", t.kind}, {"xs", t.xs}, {"grads", t.grads}});
          } else {
            h.push_back({{"kind", t.kind}, {"center", t.center}, {"curvature", t.curvature}});
          }
        }
        s["h"] = h;
      }
      game["aggregative"] = s;
      break;
    }
    case GameSpec::Kind::network: {
      const auto& n = c.game.network;
      Json edges = Json::array();
      for (const auto& e : n.edges) edges.push_back({{"tail", e.tail}, {"head", e.head}, {"poly", e.poly}});
      Json od = Json::array();
      for (const auto& o : n.od) {
        od.push_back({{"o", o.origin}, {"d", o.destination}, {"demand", o.demand}, {"routes", o.routes}});
      }
      game["network"] = {{"nodes", n.nodes}, {"edges", edges}, {"od", od},
                         {"relaxed_latency", n.relaxed_latency}};
      break;
    }
  }
  const auto& r = c.run;
  Json run{
      {"schedule",
       {{"a", r.schedule.a()},
        {"b", r.schedule.b()},
        {"gamma0", r.schedule.gamma0()},
        {"beta0", r.schedule.beta0()},
        {"offset", r.schedule.offset()}}},
      {"rule",
       {{"variant", enum_name(r.rule.variant, kVariants)},
        {"eta", r.rule.eta},
        {"regularizer", enum_name(r.rule.regularizer, kRegularizers)},
        {"lipschitz", r.rule.lipschitz}}},
      {"max_iterations", r.max_iterations},
      {"convergence_tol", r.convergence_tol},
      {"record_every", r.record_every},
      {"seed", r.seed},
      {"incentive_update", enum_name(r.incentive_update, kUpdates)},
      {"fd_step", r.fd_step},
  };
  if (c.x0) run["x0"] = *c.x0;
  if (c.p0) run["p0"] = *c.p0;
  Json analyses = Json::array();
  for (const auto& a : c.analyses) {
    Json item = a.params;
    item["op"] = a.op;
    analyses.push_back(item);
  }
  return {{"game", game}, {"run", run}, {"analyses", analyses}, {"output_dir", c.output_dir}};
}

// ---------------------------------------------------------------------------
// Model construction

routing::RoutingNetwork build_network(const NetworkSpec& spec) {
  std::vector<routing::Edge> edges;
  for (const auto& e : spec.edges) edges.push_back({e.tail, e.head, routing::Latency(e.poly)});
  std::vector<routing::OdPair> od;
  for (const auto& o : spec.od) od.push_back({o.origin, o.destination, o.demand, o.routes});
  return routing::RoutingNetwork(spec.nodes, std::move(edges), std::move(od),
                                 spec.relaxed_latency ? routing::LatencyCheck::relaxed
                                                      : routing::LatencyCheck::strict);
}

aggregative::QuadraticAggregativeGame build_aggregative(const AggregativeSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.q.size());
  Vector q = Eigen::Map<const Vector>(spec.q.data(), n);
  require(static_cast<Eigen::Index>(spec.A.size()) == n, "A must have one row per player");
  Matrix A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(spec.A[i].size()) == n, "A must be square");
    for (Eigen::Index k = 0; k < n; ++k) A(i, k) = spec.A[i][k];
  }
  if (spec.zeta) {
    require(static_cast<Eigen::Index>(spec.zeta->size()) == n, "zeta must have one entry per player");
    return {q, A, spec.alpha, Vector(Eigen::Map<const Vector>(spec.zeta->data(), n))};
  }
  std::vector<aggregative::ScalarConvex> h;
  for (const auto& t : spec.h) {
    if (t.kind == "quadratic") h.push_back(aggregative::ScalarConvex::quadratic(t.center, t.curvature));
    else if (t.kind == "quartic") h.push_back(aggregative::ScalarConvex::quartic(t.center, t.curvature));
    else h.push_back(aggregative::ScalarConvex::table(t.xs, t.grads));
  }
  return {q, A, spec.alpha, std::move(h)};
}

namespace {

AtomicGame cournot_box() {
  AtomicGame g;
  g.bounds.assign(3, Interval{0.0, 5.0});
  g.player_costs = [](const Vector& x) {
    const double total = x.sum();
    Vector c(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      c[i] = x[i] * (0.5 * x[i] + 0.3 * (total - x[i]) - 2.0 + 0.5 * static_cast<double>(i));
    }
    return c;
  };
  g.social_cost = [](const Vector& x) {
    const double total = x.sum();
    return 0.5 * (x.array() - 1.0).square().sum() + 0.2 * total * total;
  };
  g.finalize();
  return g;
}

NonAtomicGame shared_resource() {
  NonAtomicGame g;
  g.layout = PopulationLayout({1.0, 0.5}, {2, 2});
  g.action_costs = [](const Vector& x) {
    const double load0 = x[0] + x[2];
    const double load1 = x[1] + x[3];
    Vector c(4);
    c << load0 + 0.5 * x[0], load1 + 0.5 * x[1] + 0.2, load0 + 0.5 * x[2] + 0.3,
        load1 + 0.5 * x[3];
    return c;
  };
  g.social_cost = [](const Vector& x) {
    const double load0 = x[0] + x[2];
    const double load1 = x[1] + x[3];
    return load0 * load0 + load1 * load1 + 0.1 * x.squaredNorm() + 0.2 * x[1] + 0.3 * x[2];
  };
  g.finalize();
  return g;
}

}  // namespace

Model build_model(const GameSpec& spec) {
  Model m;
  switch (spec.kind) {
    case GameSpec::Kind::builtin:
      m.network = routing::fixture(spec.name);
      m.two_link = spec.name == "two_link";
      m.system = std::make_unique<routing::TollSystem>(*m.network);
      break;
    case GameSpec::Kind::network:
      m.network = build_network(spec.network);
      m.system = std::make_unique<routing::TollSystem>(*m.network);
      break;
    case GameSpec::Kind::aggregative:
      m.aggregative = build_aggregative(spec.aggregative);
      m.system = std::make_unique<AtomicSystem>(m.aggregative->to_atomic_game());
      break;
    case GameSpec::Kind::custom:
      if (spec.name == "cournot_box") m.system = std::make_unique<AtomicSystem>(cournot_box());
      else if (spec.name == "shared_resource") m.system = std::make_unique<NonAtomicSystem>(shared_resource());
      else throw InvalidArgument("unknown custom game '" + spec.name + "'");
      break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Analyses

std::string to_string(Status s) {
  switch (s) {
    case Status::pass:
      return "pass";
    case Status::fail:
      return "fail";
    case Status::indeterminate:
      return "indeterminate";
  }
  return "fail";
}

namespace {

Status status_of(bool ok) { return ok ? Status::pass : Status::fail; }

Vector vector_param(const AnalysisSpec& a, const char* key, const Vector& fallback,
                    std::size_t expected) {
  if (!a.params.contains(key)) return fallback;
  const auto v = number_list(a.params.at(key), "analyses." + a.op + "." + key);
  if (v.size() != expected) fail("analyses." + a.op + "." + key, "has the wrong length");
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double param(const AnalysisSpec& a, const char* key, double fallback) {
  return number_or(a.params, "analyses." + a.op, key, fallback);
}

std::size_t count_param(const AnalysisSpec& a, const char* key, std::size_t fallback) {
  if (!a.params.contains(key)) return fallback;
  const long v = integer(a.params.at(key), "analyses." + a.op + "." + key);
  if (v < 0) fail("analyses." + a.op + "." + key, "must be nonnegative");
  return static_cast<std::size_t>(v);
}

void check_params(const AnalysisSpec& a, std::initializer_list<const char*> keys) {
  allow_keys(a.params, "analyses." + a.op, keys);
}

Vector optimal_incentive(const Model& m) {
  if (m.aggregative) return m.aggregative->optimal_incentive();
  return m.system->optimal_incentive();
}

const routing::RoutingNetwork& need_network(const Model& m, const std::string& op) {
  if (!m.network) throw ConfigError("analyses." + op + ": only defined for routing games");
  return *m.network;
}

const aggregative::QuadraticAggregativeGame& need_aggregative(const Model& m, const std::string& op) {
  if (!m.aggregative) throw ConfigError("analyses." + op + ": only defined for aggregative games");
  return *m.aggregative;
}

analysis::QuadraticForm lyapunov_form(const Model& m, const std::string& form, const Vector& center,
                                      double& rate, double& slack) {
  const auto n = center.size();
  if (form == "aggregative") {
    if (!m.aggregative) throw ConfigError("analyses.condition_c2: aggregative form needs an aggregative game");
    return {center, m.aggregative->M().inverse().transpose()};
  }
  if (form == "routing") {
    if (!m.network) throw ConfigError("analyses.condition_c2: routing form needs a routing game");
    rate = 2.0;
    slack = 1e-8;
    return {center, routing::delta_matrix(*m.network, center).asDiagonal()};
  }
  if (form == "identity") return {center, Matrix::Identity(n, n)};
  throw ConfigError("analyses.condition_c2.form: expected aggregative, routing or identity");
}

}  // namespace

AnalysisResult run_analysis(const Model& model, const AnalysisSpec& spec, const RunConfig& run) {
  const CoupledSystem& sys = *model.system;
  const std::size_t n = sys.incentive_size();
  AnalysisResult res;
  res.op = spec.op;
  const std::string& op = spec.op;

  if (op == "fixed_point") {
    check_params(spec, {"tol", "p"});
    const double tol = param(spec, "tol", model.aggregative ? 1e-8 : 1e-6);
    const Vector p = vector_param(spec, "p", optimal_incentive(model), n);
    const auto r = analysis::verify_fixed_point_optimality(sys, p, tol);
    res.status = status_of(r.passed());
    res.report = r.to_json();
  } else if (op == "ode_probe") {
    check_params(spec, {"step", "horizon", "starts", "random_starts", "radius", "seed", "tol"});
    const Vector target = optimal_incentive(model);
    analysis::OdeProbeConfig cfg;
    cfg.step = param(spec, "step", 0.01);
    cfg.horizon = param(spec, "horizon", 20.0);
    if (spec.params.contains("starts")) {
      const auto rows = matrix_list(spec.params.at("starts"), "analyses.ode_probe.starts");
      for (const auto& r : rows) {
        if (r.size() != n) fail("analyses.ode_probe.starts", "start point has the wrong length");
        cfg.start_points.push_back(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(n)));
      }
    }
    const std::size_t extra = count_param(spec, "random_starts", cfg.start_points.empty() ? 5 : 0);
    const auto random = analysis::sample_ball(target, param(spec, "radius", 1.0 + target.norm()), extra,
                                              count_param(spec, "seed", 0));
    cfg.start_points.insert(cfg.start_points.end(), random.begin(), random.end());
    try {
      cfg.validate();
    } catch (const InvalidArgument& e) {
      fail("analyses.ode_probe", e.what());
    }
    const auto r = analysis::ode_probe_slow_dynamics(sys, cfg, target);
    res.status = status_of(r.max_terminal_distance() <= param(spec, "tol", 1e-3));
    res.report = r.to_json();
  } else if (op == "condition_c1") {
    check_params(spec, {"samples", "radius", "seed"});
    const Vector target = optimal_incentive(model);
    const auto samples = analysis::sample_ball(target, param(spec, "radius", 1.0),
                                               count_param(spec, "samples", 10),
                                               count_param(spec, "seed", 0));
    const auto r = analysis::check_condition_C1(sys, samples, target);
    res.status = status_of(r.passed);
    res.report = r.to_json();
  } else if (op == "condition_c2") {
    check_params(spec, {"samples", "radius", "seed", "form", "rate", "slack"});
    const Vector target = optimal_incentive(model);
    std::string form = model.aggregative ? "aggregative" : (model.network ? "routing" : "identity");
    if (spec.params.contains("form")) form = as_string(spec.params.at("form"), "analyses.condition_c2.form");
    double rate = 0.0, slack = 0.0;
    const auto V = lyapunov_form(model, form, target, rate, slack);
    rate = param(spec, "rate", rate);
    slack = param(spec, "slack", slack);
    const auto samples = analysis::sample_ball(
        target, param(spec, "radius", 0.1 * target.norm() + 0.01), count_param(spec, "samples", 200),
        count_param(spec, "seed", 0));
    const auto r = analysis::check_condition_C2(sys, V, samples, rate, slack);
    res.status = status_of(r.passed);
    res.report = r.to_json();
    res.report["form"] = form;
  } else if (op == "counterexample") {
    check_params(spec, {"grid_points", "grid_tol", "final_tol"});
    analysis::CounterexampleOptions opts;
    opts.grid_points = count_param(spec, "grid_points", opts.grid_points);
    opts.grid_tol = param(spec, "grid_tol", opts.grid_tol);
    opts.final_tol = param(spec, "final_tol", opts.final_tol);
    opts.run = run;
    const auto r = analysis::reproduce_counterexample(opts);
    res.status = status_of(r.passed());
    res.report = r.to_json();
    res.attachments.push_back({"counterexample_grid.csv", r.grid_csv});
  } else if (op == "multistart_uniqueness") {
    check_params(spec, {"starts", "seed", "p", "threshold"});
    const Vector p = vector_param(spec, "p", optimal_incentive(model), n);
    const auto r = analysis::multistart_uniqueness_probe(sys, p, count_param(spec, "starts", 10),
                                                         count_param(spec, "seed", 0),
                                                         param(spec, "threshold", 1e-3));
    res.status = r.flagged ? Status::fail : Status::pass;
    res.report = r.to_json();
  } else if (op == "optimal_tolls") {
    check_params(spec, {"tol"});
    const auto& net = need_network(model, op);
    const auto t = routing::optimal_edge_tolls(net, param(spec, "tol", 1e-6));
    res.status = Status::pass;
    res.report = {{"tolls", analysis::to_json(t.tolls)},
                  {"optimal_flow", analysis::to_json(t.optimal_flow)},
                  {"tolled_flow", analysis::to_json(t.tolled_flow)},
                  {"passed", true}};
  } else if (op == "nondegeneracy") {
    check_params(spec, {"tol"});
    const auto& net = need_network(model, op);
    const auto r = routing::nondegeneracy_check(net, sys.optimal_incentive(), param(spec, "tol", 1e-6));
    res.status = r.verdict == routing::Verdict::pass
                     ? Status::pass
                     : (r.verdict == routing::Verdict::fail ? Status::fail : Status::indeterminate);
    res.report = {{"verdict", routing::to_string(r.verdict)},
                  {"unused_min_cost_routes", r.unused_min_cost_routes},
                  {"detail", r.detail}};
  } else if (op == "global_conditions") {
    check_params(spec, {});
    const auto r = need_aggregative(model, op).check_global_conditions();
    res.status = status_of(r.passed);
    res.report = {{"symmetric", r.symmetric},
                  {"positive_definite", r.positive_definite},
                  {"min_eigenvalue", r.min_eigenvalue},
                  {"passed", r.passed}};
  } else if (op == "local_conditions") {
    check_params(spec, {});
    const auto r = need_aggregative(model, op).check_local_conditions();
    res.status = status_of(r.passed);
    res.report = {{"nonnegative_entries", r.nonnegative_entries},
                  {"inverse_offdiag_negative", r.inverse_offdiag_negative},
                  {"target_nonpositive", r.target_nonpositive},
                  {"passed", r.passed}};
  } else if (op == "scaled_limit") {
    check_params(spec, {});
    const auto r = aggregative::check_scaled_limit(need_aggregative(model, op), run.rule);
    res.status = !r.verifiable ? Status::indeterminate : status_of(r.passed);
    res.report = {{"verifiable", r.verifiable}, {"passed", r.passed}, {"note", r.note}};
  } else {
    throw ConfigError("unknown analysis operation '" + op + "'");
  }
  res.report["status"] = to_string(res.status);
  return res;
}

std::vector<AnalysisSpec> default_analyses(const GameSpec& game) {
  auto ops = [](std::initializer_list<const char*> names) {
    std::vector<AnalysisSpec> out;
    for (const char* n : names) out.push_back({n, Json::object()});
    return out;
  };
  switch (game.kind) {
    case GameSpec::Kind::builtin:
      if (game.name == "two_link") return ops({"counterexample", "fixed_point", "nondegeneracy", "condition_c2"});
      return ops({"optimal_tolls", "fixed_point", "nondegeneracy", "multistart_uniqueness"});
    case GameSpec::Kind::network:
      return ops({"optimal_tolls", "fixed_point", "nondegeneracy", "multistart_uniqueness"});
    case GameSpec::Kind::aggregative:
      return ops({"global_conditions", "fixed_point", "condition_c2", "multistart_uniqueness"});
    case GameSpec::Kind::custom:
      return ops({"fixed_point", "multistart_uniqueness"});
  }
  return {};
}

// ---------------------------------------------------------------------------
// Entry points

namespace {

constexpr const char* kPlotScript = R"(import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "trajectory.csv")) as f:
    rows = list(csv.DictReader(f))
k = [int(r["k"]) for r in rows]
residual = [float(r["residual"]) for r in rows]
cost = [float(r["social_cost"]) for r in rows]

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.semilogy(k, residual)
ax1.set_xlabel("iteration")
ax1.set_ylabel("fixed-point residual")
ax2.plot(k, cost)
ax2.set_xlabel("iteration")
ax2.set_ylabel("social cost")
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "trajectory.png")
fig.savefig(out, dpi=120)
)";

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << contents;
}

Vector initial_vector(const std::optional<std::vector<double>>& given, const Vector& fallback,
                      const char* name) {
  if (!given) return fallback;
  if (given->size() != static_cast<std::size_t>(fallback.size())) {
    throw ConfigError(std::string("run.") + name + ": expected length " +
                      std::to_string(fallback.size()));
  }
  return Eigen::Map<const Vector>(given->data(), fallback.size());
}

struct Loaded {
  ExperimentConfig config;
  Model model;
};

// Returns false after logging when the config or model is unusable.
bool load(const fs::path& path, std::ostream& log, Loaded& out) {
  try {
    out.config = load_config(path);
    out.model = build_model(out.config.game);
    return true;
  } catch (const ConfigError& e) {
    log << "invalid config: " << e.what() << '\n';
  } catch (const InvalidSpec& e) {
    log << "invalid spec: " << e.what() << '\n';
  } catch (const InvalidArgument& e) {
    log << "invalid config: " << e.what() << '\n';
  }
  return false;
}

std::string unique_name(std::map<std::string, int>& seen, const std::string& op) {
  const int count = ++seen[op];
  return count == 1 ? op : op + "_" + std::to_string(count);
}

}  // namespace

int run_experiment(const fs::path& config_path, std::ostream& log, const fs::path& output_override) {
  Loaded loaded;
  if (!load(config_path, log, loaded)) return kExitInvalid;
  const auto& cfg = loaded.config;
  const auto& model = loaded.model;
  const CoupledSystem& sys = *model.system;
  const fs::path out_dir = output_override.empty() ? fs::path(cfg.output_dir) : output_override;

  Vector x0, p0;
  IncentiveGradient baseline;
  try {
    x0 = initial_vector(cfg.x0, sys.project(Vector::Zero(static_cast<Eigen::Index>(sys.strategy_size()))), "x0");
    p0 = initial_vector(cfg.p0, Vector::Zero(static_cast<Eigen::Index>(sys.incentive_size())), "p0");
    if (!sys.feasible(x0)) throw ConfigError("run.x0: initial strategy is infeasible");
    if (cfg.run.incentive_update == IncentiveUpdate::gradient_baseline) {
      IncentiveGradient closed;
      if (model.two_link) {
        closed = [](const Vector& p, const Vector&) { return analysis::two_link_clarke_gradient(p); };
      }
      baseline = analysis::make_baseline_gradient(sys, cfg.run.fd_step, closed);
    }
  } catch (const ConfigError& e) {
    log << "invalid config: " << e.what() << '\n';
    return kExitInvalid;
  }

  TrajectoryRecord record;
  bool converged = true;
  try {
    record = run_coupled(sys, x0, p0, cfg.run, baseline);
  } catch (const RunFailure& f) {
    record = f.trajectory();
    converged = false;
  } catch (const InvalidArgument& e) {
    log << "invalid config: " << e.what() << '\n';
    return kExitInvalid;
  }

  std::error_code ec;
  fs::create_directories(out_dir / "analysis", ec);
  if (ec) {
    log << "invalid config: output_dir '" << out_dir.string() << "' is not writable\n";
    return kExitInvalid;
  }
  {
    std::ofstream csv(out_dir / "trajectory.csv", std::ios::binary);
    record.write_csv(csv);
  }
  Json summary = Json::parse(record.summary_json());

  std::map<std::string, int> seen;
  Json analyses = Json::object();
  for (const auto& spec : cfg.analyses) {
    const std::string name = unique_name(seen, spec.op);
    AnalysisResult res;
    try {
      res = run_analysis(model, spec, cfg.run);
    } catch (const ConfigError& e) {
      log << "invalid config: " << e.what() << '\n';
      return kExitInvalid;
    } catch (const std::exception& e) {
      res.op = spec.op;
      res.status = Status::fail;
      res.report = {{"status", "fail"}, {"error", e.what()}};
    }
    write_file(out_dir / "analysis" / (name + ".json"), res.report.dump(2) + "\n");
    for (const auto& [file, contents] : res.attachments) write_file(out_dir / "analysis" / file, contents);
    analyses[name] = to_string(res.status);
  }
  summary["analyses"] = analyses;
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  write_file(out_dir / "plot.py", kPlotScript);

  log << config_path.string() << ": " << (converged ? "converged" : "did not converge") << " after "
      << record.iterations << " iterations; output in " << out_dir.string() << '\n';
  return converged ? kExitOk : kExitNoConvergence;
}

int verify(const fs::path& config_path, std::ostream& log) {
  Loaded loaded;
  if (!load(config_path, log, loaded)) return kExitInvalid;
  const auto& cfg = loaded.config;
  const auto specs = cfg.analyses.empty() ? default_analyses(cfg.game) : cfg.analyses;
  bool all_pass = true;
  std::map<std::string, int> seen;
  for (const auto& spec : specs) {
    const std::string name = unique_name(seen, spec.op);
    AnalysisResult res;
    try {
      res = run_analysis(loaded.model, spec, cfg.run);
    } catch (const ConfigError& e) {
      log << "invalid config: " << e.what() << '\n';
      return kExitInvalid;
    } catch (const std::exception& e) {
      res.status = Status::fail;
      res.report = {{"error", e.what()}};
    }
    all_pass = all_pass && res.status == Status::pass;
    log << to_string(res.status) << "  " << name;
    if (res.report.contains("error")) log << "  (" << res.report["error"].get<std::string>() << ")";
    log << '\n';
  }
  return all_pass ? kExitOk : kExitChecksFailed;
}

void list_fixtures(std::ostream& out) {
  for (const auto& f : routing::fixture_catalog()) out << f.name << "  " << f.description << '\n';
  for (const auto& f : custom_catalog()) out << f.name << " (custom)  " << f.description << '\n';
}

}  // namespace incentive::experiment
