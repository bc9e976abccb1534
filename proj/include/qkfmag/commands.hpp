#pragma once

// The four run modes behind the CLI. Each writes its CSV tables and a
// summary.json into the output directory and reports named checks.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "qkfmag/config.hpp"

namespace qkfmag {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CommandReport {
  std::string command;
  std::vector<CheckResult> checks;
  std::vector<std::string> files;  // written paths, summary.json last
  std::string summary_json;

  bool passed() const;
  /// "name: detail" for each failed check.
  std::vector<std::string> failures() const;
};

CommandReport cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out_dir);
CommandReport cmd_ensemble(const RunConfig& cfg, const std::filesystem::path& out_dir);
CommandReport cmd_scaling(const RunConfig& cfg, const std::filesystem::path& out_dir);
CommandReport cmd_oracle_check(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Dispatch by name: simulate | ensemble | scaling | oracle-check.
CommandReport run_command(std::string_view name, const RunConfig& cfg,
                          const std::filesystem::path& out_dir);

}  // namespace qkfmag
