#pragma once

#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "report.hpp"

namespace rvmb::cli {

/// Subcommand names in the order they are documented.
const std::vector<std::string>& experiment_names();

/// Experiment whose report carries criterion `id` (1..11).
std::string experiment_for_criterion(int id);

/// Runs one experiment. With a non-empty `criteria` only the parts measuring those criteria run.
/// Extra files (stage dumps) are written into `out_dir` when it is non-empty and listed in the report.
Report run_experiment(const std::string& name, const Config& cfg, const std::string& out_dir = "",
                      const std::set<int>& criteria = {});

/// Config sections echoed in the report of an experiment.
std::vector<std::string> echoed_sections(const std::string& name);

}  // namespace rvmb::cli
