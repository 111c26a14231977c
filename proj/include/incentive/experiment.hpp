#pragma once

// JSON experiment configs: game description, run settings, requested analyses.

#include "incentive/aggregative.hpp"
#include "incentive/analysis.hpp"
#include "incentive/dynamics.hpp"
#include "incentive/routing.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace incentive::experiment {

using Json = nlohmann::json;

/// Raised for malformed or inconsistent configs; maps to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScalarTermSpec {
  std::string kind = "quadratic";  // quadratic | quartic | table
  double center = 0.0;
  double curvature = 1.0;
  std::vector<double> xs;
  std::vector<double> grads;

  friend bool operator==(const ScalarTermSpec&, const ScalarTermSpec&) = default;
};

struct AggregativeSpec {
  std::vector<double> q;
  std::vector<std::vector<double>> A;
  double alpha = 1.0;
  std::optional<std::vector<double>> zeta;
  std::vector<ScalarTermSpec> h;

  friend bool operator==(const AggregativeSpec&, const AggregativeSpec&) = default;
};

struct EdgeSpec {
  std::size_t tail = 0;
  std::size_t head = 0;
  std::vector<double> poly;

  friend bool operator==(const EdgeSpec&, const EdgeSpec&) = default;
};

struct OdSpec {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double demand = 1.0;
  std::vector<std::vector<std::size_t>> routes;

  friend bool operator==(const OdSpec&, const OdSpec&) = default;
};

struct NetworkSpec {
  std::vector<std::string> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<OdSpec> od;
  /// Allow constant-latency edges (l' >= 0 instead of l' > 0).
  bool relaxed_latency = false;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct GameSpec {
  enum class Kind { builtin, aggregative, network, custom };
  Kind kind = Kind::builtin;
  /// Fixture name for builtin and custom games.
  std::string name;
  AggregativeSpec aggregative;
  NetworkSpec network;

  friend bool operator==(const GameSpec&, const GameSpec&) = default;
};

struct AnalysisSpec {
  std::string op;
  Json params = Json::object();

  friend bool operator==(const AnalysisSpec& a, const AnalysisSpec& b) {
    return a.op == b.op && a.params == b.params;
  }
};

struct ExperimentConfig {
  GameSpec game;
  RunConfig run;
  std::optional<std::vector<double>> x0;
  std::optional<std::vector<double>> p0;
  std::vector<AnalysisSpec> analyses;
  std::string output_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Analysis operations accepted in the "analyses" list.
const std::vector<std::string>& analysis_operations();
/// Custom oracle-backed games accepted as {"custom": name}.
const std::vector<routing::FixtureInfo>& custom_catalog();

/// Throws ConfigError with line/column for malformed JSON and a key path for
/// schema errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& config);

routing::RoutingNetwork build_network(const NetworkSpec& spec);
aggregative::QuadraticAggregativeGame build_aggregative(const AggregativeSpec& spec);

/// A ready-to-run system plus what the analyses need to know about it.
struct Model {
  std::unique_ptr<CoupledSystem> system;
  std::optional<aggregative::QuadraticAggregativeGame> aggregative;
  std::optional<routing::RoutingNetwork> network;
  bool two_link = false;
};
/// Throws InvalidSpec for unusable models (e.g. singular M).
Model build_model(const GameSpec& spec);

enum class Status { pass, fail, indeterminate };
std::string to_string(Status s);

struct AnalysisResult {
  std::string op;
  Status status = Status::fail;
  Json report;
  /// Extra files to write next to the report (name, contents).
  std::vector<std::pair<std::string, std::string>> attachments;
};

/// Runs one analysis operation against a model; config errors throw ConfigError.
AnalysisResult run_analysis(const Model& model, const AnalysisSpec& spec, const RunConfig& run);
/// The analyses verify falls back to when the config lists none.
std::vector<AnalysisSpec> default_analyses(const GameSpec& game);

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNoConvergence = 2;
inline constexpr int kExitChecksFailed = 3;

/// Runs the coupled dynamics and the analyses; writes trajectory.csv,
/// summary.json, analysis/*.json and plot.py into output_dir (or
/// `output_override` when non-empty).
int run_experiment(const std::filesystem::path& config_path, std::ostream& log,
                   const std::filesystem::path& output_override = {});
/// Runs only the analyses; kExitOk iff every check passes.
int verify(const std::filesystem::path& config_path, std::ostream& log);
void list_fixtures(std::ostream& out);

}  // namespace incentive::experiment
