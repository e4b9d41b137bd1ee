#include <CLI11.hpp>
#include <chrono>
#include <iostream>
#include <thread>

#include "config.hpp"
#include "experiments.hpp"
#include "report.hpp"
#include "rvmb/error.hpp"
#include "rvmb/parallel.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_criterion = 3;
constexpr int exit_numerical = 4;

struct Flags {
  std::string config;
  std::string out = "results";
  int threads = 0;
  long long seed = -1;
  bool assert_criteria = true;
  int stages = 0;
};

int run(const std::string& name, const Flags& f) {
  using namespace rvmb;
  using namespace rvmb::cli;
  Config cfg = f.config.empty() ? Config() : Config::load(f.config);
  if (f.seed >= 0) cfg.set("run.seed", std::to_string(f.seed));
  if (f.threads > 0) cfg.set("run.threads", std::to_string(f.threads));
  if (f.stages > 0) {
    cfg.set("hilbert.stages", std::to_string(f.stages));
    cfg.set("limit.stages", std::to_string(f.stages));
  }
  int threads = cfg.integer("run.threads");
  if (threads < 0) throw ConfigError("run.threads", "must be non-negative");
  set_default_threads(threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));

  auto start = std::chrono::steady_clock::now();
  Report rep = run_experiment(name, cfg, f.out);
  write_report(rep, f.out);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << summary_lines(rep);
  std::cerr << name << ": " << seconds << " s wall-clock, " << default_threads() << " threads, report in " << f.out
            << "\n";
  return f.assert_criteria && !rep.pass() ? exit_criterion : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relativistic Vlasov-Maxwell-Boltzmann verification experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const std::string& name : rvmb::cli::experiment_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", flags.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory for the CSV and JSON report");
    sub->add_option("--threads", flags.threads, "worker threads (default: hardware parallelism)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", flags.seed, "random seed (overrides run.seed)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--assert,!--no-assert", flags.assert_criteria, "exit 3 when a criterion fails (default on)");
    if (name == "hilbert" || name == "limit")
      sub->add_option("--stages", flags.stages, "highest stage of the expansion")->check(CLI::PositiveNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }
  CLI::App* keys = app.add_subcommand("keys", "print the configuration reference");
  keys->callback([&chosen] { chosen = "keys"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  if (chosen == "keys") {
    std::cout << rvmb::cli::config_reference();
    return 0;
  }
  try {
    return run(chosen, flags);
  } catch (const rvmb::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const rvmb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == rvmb::ErrorKind::input || e.kind() == rvmb::ErrorKind::config ? exit_config : exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  }
}
