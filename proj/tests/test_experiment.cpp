#include "doctest.h"

#include "incentive/experiment.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace incentive;
using namespace incentive::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("incentive_" + tag + "_" + std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

fs::path config(const std::string& name) { return fs::path(INCENTIVE_SOURCE_DIR) / "configs" / name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string("\"") + INCENTIVE_CLI + "\" " + args + " > \"" + capture.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST_CASE("config round trip") {
  for (const auto& entry : fs::directory_iterator(fs::path(INCENTIVE_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig c = load_config(entry.path());
    const ExperimentConfig again = parse_config(to_json(c).dump());
    CHECK(again == c);
    CHECK(to_json(again) == to_json(c));
  }

  const auto c = parse_config(R"({
    "game": {"aggregative": {"q": [1, 2], "A": [[0, 0.5], [0.5, 0]], "alpha": 0.4,
             "h": [{"kind": "quartic", "center": -1, "curvature": 2},
                   {"kind": "table", "xs": [-1, 1], "grads": [-1, 3]}]}},
    "run": {"rule": {"variant": "gradient", "regularizer": "quadratic", "eta": 0.1}, "seed": 7,
            "x0": [0, 0], "p0": [1, 1]},
    "analyses": ["fixed_point", {"op": "condition_c2", "samples": 20, "radius": 0.5}]
  })");
  CHECK(c.game.kind == GameSpec::Kind::aggregative);
  CHECK(c.run.seed == 7);
  CHECK(c.run.rule.variant == RuleVariant::gradient);
  REQUIRE(c.analyses.size() == 2);
  CHECK(c.analyses[1].params["samples"] == 20);
  CHECK(parse_config(to_json(c).dump()) == c);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config(R"({"run": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"game": "atlantis"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"game": "two_link", "rum": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"game": "two_link", "analyses": ["dance"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"game": "two_link", "run": {"schedule": {"a": 0.9, "b": 0.6}}})"),
                  ConfigError);
  try {
    parse_config("{\n  \"game\": \"two_link\",\n  \"run\": {,}\n}");
    FAIL("malformed JSON accepted");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column") != std::string::npos);
  }
}

TEST_CASE("models from configs") {
  GameSpec g;
  g.kind = GameSpec::Kind::aggregative;
  g.aggregative.q = {1, 1};
  g.aggregative.A = {{0, 1}, {1, 0}};
  g.aggregative.alpha = 1.0;
  g.aggregative.zeta = std::vector<double>{0, 0};
  CHECK_THROWS_AS(build_model(g), InvalidSpec);

  GameSpec net;
  net.kind = GameSpec::Kind::network;
  net.network.nodes = {"s", "t"};
  net.network.edges = {{0, 1, {0, 1}}, {0, 1, {1}}};
  net.network.od = {{0, 1, 1.0, {{0}, {1}}}};
  CHECK_THROWS_AS(build_model(net), InvalidSpec);
  net.network.relaxed_latency = true;
  const Model m = build_model(net);
  REQUIRE(m.network.has_value());
  CHECK(m.system->incentive_size() == 2);

  for (const auto& f : custom_catalog()) {
    GameSpec c;
    c.kind = GameSpec::Kind::custom;
    c.name = f.name;
    CHECK_NOTHROW(build_model(c));
  }
  for (const auto& op : analysis_operations()) CHECK_FALSE(op.empty());
}

TEST_CASE("run two-link externality config") {
  const fs::path out = scratch("two_link");
  std::ostringstream log;
  CHECK(run_experiment(config("two_link_externality.json"), log, out) == kExitOk);
  const Json s = Json::parse(slurp(out / "summary.json"));
  CHECK(s["converged"] == true);
  CHECK(s["final_p"][0].get<double>() == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(s["final_p"][1].get<double>() == doctest::Approx(0.5).epsilon(2e-3));
  for (const auto& [name, status] : s["analyses"].items()) {
    CAPTURE(name);
    CHECK(status == "pass");
  }
  CHECK(fs::exists(out / "trajectory.csv"));
  CHECK(fs::exists(out / "plot.py"));
  CHECK(fs::exists(out / "analysis" / "fixed_point.json"));

  // Byte-identical trajectories from identical configs.
  const fs::path again = scratch("two_link_again");
  CHECK(run_experiment(config("two_link_externality.json"), log, again) == kExitOk);
  CHECK(slurp(out / "trajectory.csv") == slurp(again / "trajectory.csv"));
  std::istringstream csv(slurp(out / "trajectory.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "k,residual,social_cost,x0,x1,p0,p1");
  fs::remove_all(out);
  fs::remove_all(again);
}

TEST_CASE("run gradient-baseline config") {
  const fs::path out = scratch("baseline");
  std::ostringstream log;
  run_experiment(config("two_link_gradient_baseline.json"), log, out);
  const Json s = Json::parse(slurp(out / "summary.json"));
  CHECK(s["final_social_cost"].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
  const double gap = s["final_p"][0].get<double>() - s["final_p"][1].get<double>();
  CHECK(std::abs(gap) >= 1.0);
  fs::remove_all(out);
}

TEST_CASE("invalid configs exit 1") {
  const fs::path dir = scratch("invalid");
  std::ostringstream log;
  spit(dir / "no_game.json", R"({"run": {"max_iterations": 10}})");
  CHECK(run_experiment(dir / "no_game.json", log, dir / "o1") == kExitInvalid);
  spit(dir / "broken.json", "{\"game\": \"two_link\",,}");
  CHECK(run_experiment(dir / "broken.json", log, dir / "o2") == kExitInvalid);
  CHECK(log.str().find("line 1") != std::string::npos);
  CHECK(run_experiment(dir / "missing.json", log, dir / "o3") == kExitInvalid);

  spit(dir / "singular.json",
       R"({"game": {"aggregative": {"q": [1, 1], "A": [[0, 1], [1, 0]], "alpha": 1, "zeta": [0, 0]}}})");
  std::ostringstream vlog;
  CHECK(verify(dir / "singular.json", vlog) == kExitInvalid);
  CHECK(vlog.str().find("M invertibility") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("non-convergence exits 2") {
  const fs::path dir = scratch("budget");
  spit(dir / "short.json", R"({"game": "two_link", "run": {"max_iterations": 5, "p0": [0, 0]}})");
  std::ostringstream log;
  CHECK(run_experiment(dir / "short.json", log, dir / "out") == kExitNoConvergence);
  CHECK(Json::parse(slurp(dir / "out" / "summary.json"))["converged"] == false);
  fs::remove_all(dir);
}

TEST_CASE("verify configs") {
  std::ostringstream log;
  CHECK(verify(config("aggregative_pd.json"), log) == kExitOk);
  CHECK(verify(config("counterexample.json"), log) == kExitOk);
  CHECK(log.str().find("pass  counterexample") != std::string::npos);
  CHECK(log.str().find("fail") == std::string::npos);
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cli");
  CHECK(cli("list-fixtures", dir / "fixtures.txt") == 0);
  const std::string listing = slurp(dir / "fixtures.txt");
  for (const char* name : {"two_link", "pigou", "braess"}) CHECK(listing.find(name) != std::string::npos);

  CHECK(cli("run --config \"" + config("two_link_externality.json").string() + "\" --out \"" +
                (dir / "single").string() + "\"",
            dir / "run.txt") == 0);
  CHECK(fs::exists(dir / "single" / "summary.json"));

  CHECK(cli("verify --config \"" + config("counterexample.json").string() + "\"", dir / "verify.txt") == 0);
  CHECK(cli("run", dir / "usage.txt") != 0);

  // Directory fan-out writes one output directory per config.
  fs::create_directories(dir / "batch");
  fs::copy_file(config("two_link_externality.json"), dir / "batch" / "a.json");
  fs::copy_file(config("two_link_gradient_baseline.json"), dir / "batch" / "b.json");
  CHECK(cli("run --config \"" + (dir / "batch").string() + "\" --jobs 2 --out \"" + (dir / "fan").string() + "\"",
            dir / "fan.txt") == 0);
  CHECK(fs::exists(dir / "fan" / "a" / "summary.json"));
  CHECK(fs::exists(dir / "fan" / "b" / "summary.json"));
  fs::remove_all(dir);
}
