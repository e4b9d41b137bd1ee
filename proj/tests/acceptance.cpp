#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "config.hpp"
#include "experiments.hpp"
#include "report.hpp"
#include "rvmb/error.hpp"
#include "rvmb/parallel.hpp"

using namespace rvmb;
using namespace rvmb::cli;

namespace {

/// Wall-clock budgets in seconds for the criteria that state one.
double runtime_budget(int id) {
  switch (id) {
    case 1: return 60;
    case 4: return 600;
    case 10: return 1200;
  }
  return 0;
}

/// Reduced resolution for the two-run comparison.
const char* kDeterminismConfig = R"([moments]
states = 2
[collision]
nodes = 8
p_max = 2.0
kinematic_samples = 10
operator_nodes = 6
roundtrip_samples = 1
gap_iterations = 20
determinism_nodes = 6
[kernel]
pairs = 100
fit_points = 12
route_samples = 1
route_radial = 12
route_theta = 8
route_phi = 12
[chars]
samples = 10
free_samples = 5
fit_points = 5
[fields]
divb_cells = 6
divb_steps = 50
energy_cells = 6
energy_refinements = 2
kernel_theta = 32
gs_nodes = 8
pulsed_cells = 24
[hilbert]
nx = 12
nodes = 6
p_max = 1.6
levels = 4
stages = 1
sweep_states = 5
oracle_nx = 16, 32
[limit]
stages = 1
epsilons = 1e-2, 3e-2, 1e-1
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void run_all(const Config& cfg, int threads, const std::filesystem::path& dir) {
  set_default_threads(threads);
  std::filesystem::remove_all(dir);
  for (const std::string& name : experiment_names()) {
    Report r = run_experiment(name, cfg, dir.string());
    write_report(r, dir.string());
  }
}

CriterionResult determinism(const std::filesystem::path& work) {
  std::istringstream in(kDeterminismConfig);
  Config cfg = Config::parse(in);
  int many = std::max(3, static_cast<int>(std::thread::hardware_concurrency()));
  run_all(cfg, 1, work / "threads_1");
  run_all(cfg, many, work / "threads_n");
  long long files = 0, differing = 0;
  for (const auto& entry : std::filesystem::directory_iterator(work / "threads_1")) {
    ++files;
    std::filesystem::path other = work / "threads_n" / entry.path().filename();
    if (!std::filesystem::exists(other) || slurp(entry.path()) != slurp(other)) {
      ++differing;
      std::cerr << "differs: " << entry.path().filename().string() << "\n";
    }
  }
  long long other_files = std::distance(std::filesystem::directory_iterator(work / "threads_n"), {});
  CriterionResult c{11, "byte-identical reports at 1 and " + std::to_string(many) + " threads", {}, false};
  c.add("report files compared", static_cast<double>(files), Relation::greater_equal, 14);
  c.add("file count difference", static_cast<double>(other_files - files), Relation::equal, 0);
  c.add("files differing", static_cast<double>(differing), Relation::equal, 0);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one pass/fail line each"};
  int id = 0;
  std::string work = "acceptance_work";
  app.add_option("--criterion", id, "criterion number 1..11")->required()->check(CLI::Range(1, 11));
  app.add_option("--work", work, "scratch directory for report files");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::path dir = std::filesystem::path(work) / ("criterion_" + std::to_string(id));
    CriterionResult result;
    auto start = std::chrono::steady_clock::now();
    if (id == 11) {
      result = determinism(dir);
    } else {
      set_default_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
      Report rep = run_experiment(experiment_for_criterion(id), Config(), dir.string(), {id});
      write_report(rep, dir.string());
      const CriterionResult* c = rep.find(id);
      require(c != nullptr, ErrorKind::consistency, "experiment did not report the criterion");
      result = *c;
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (runtime_budget(id) > 0) result.add("runtime seconds", seconds, Relation::less_equal, runtime_budget(id));
    Report line;
    line.criteria.push_back(result);
    std::cout << summary_lines(line);
    std::cerr << "criterion " << id << " took " << seconds << " s\n";
    return result.pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cout << "criterion " << id << " FAIL (error: " << e.what() << ")\n";
    return 1;
  }
}
