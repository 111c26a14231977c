#include "incentive/experiment.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
namespace ex = incentive::experiment;

namespace {

int run_many(const std::vector<fs::path>& configs, unsigned jobs, const fs::path& out) {
  std::atomic<std::size_t> next{0};
  std::mutex print;
  std::vector<int> codes(configs.size(), ex::kExitOk);
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const fs::path dir = out.empty() ? fs::path() : out / configs[i].stem();
      std::ostringstream log;
      try {
        codes[i] = ex::run_experiment(configs[i], log, dir);
      } catch (const std::exception& e) {
        log << configs[i].string() << ": " << e.what() << '\n';
        codes[i] = ex::kExitInvalid;
      }
      std::lock_guard<std::mutex> lock(print);
      std::cerr << log.str();
    }
  };
  std::vector<std::thread> pool;
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  // Invalid configs dominate convergence failures.
  if (std::find(codes.begin(), codes.end(), ex::kExitInvalid) != codes.end()) return ex::kExitInvalid;
  return *std::max_element(codes.begin(), codes.end());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive externality-based incentives: coupled strategy/incentive dynamics"};
  app.require_subcommand(1);

  std::string run_config;
  unsigned jobs = 1;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "run an experiment config (or every *.json in a directory)");
  run->add_option("--config", run_config, "config file or directory")->required();
  run->add_option("--jobs", jobs, "worker threads for a config directory")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");

  std::string verify_config;
  auto* verify = app.add_subcommand("verify", "run the configured analysis checks only");
  verify->add_option("--config", verify_config, "config file")->required();

  auto* list = app.add_subcommand("list-fixtures", "list built-in games");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    const fs::path path(run_config);
    if (fs::is_directory(path)) {
      std::vector<fs::path> configs;
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") configs.push_back(entry.path());
      }
      std::sort(configs.begin(), configs.end());
      if (configs.empty()) {
        std::cerr << "no *.json configs in " << path.string() << '\n';
        return ex::kExitInvalid;
      }
      return run_many(configs, jobs, out_dir);
    }
    return ex::run_experiment(path, std::cerr, out_dir);
  }
  if (*verify) return ex::verify(verify_config, std::cout);
  if (*list) {
    ex::list_fixtures(std::cout);
    return 0;
  }
  return 0;
}
