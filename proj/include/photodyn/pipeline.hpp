#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "photodyn/config.hpp"

namespace photodyn {

/// A run directory lacks a file a stage needs.
class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(const std::string& what) : std::runtime_error(what) {}
};

std::string sha256_hex(std::string_view data);

// Run directory layout:
//   run.json      manifest: tool, version, seed, config_sha256, protocol, files
//   config.toml   verbatim copy of the config
//   <raw files>   per protocol, see README
//   analysis/     stage outputs and analysis.json (status per stage)
//   report/       summary.json and plot-ready curve CSVs

/// Simulates the configured protocol into `dir` and writes the manifest.
/// `seed` overrides the config seed. Returns the file names written.
std::vector<std::string> simulate_run(const RunConfig& config, const std::filesystem::path& dir,
                                      std::optional<std::uint64_t> seed = std::nullopt);

struct StageResult {
  std::string stage;
  bool ok = false;
  bool missing_input = false;
  std::string error;
  std::vector<std::string> files;  // relative to the run directory
};

/// Runs the named stages (empty: the config's [[analysis]] list, else the
/// protocol defaults) in canonical order. A failing stage never stops the
/// others. Throws MissingInput when the directory holds no manifest and
/// std::invalid_argument for unknown stage names.
std::vector<StageResult> analyze_run(const std::filesystem::path& dir, const std::vector<std::string>& stages = {});

/// Collects analysis results into report/summary.json and writes fitted
/// curves next to their data as CSV. Returns the file names written.
std::vector<std::string> report_run(const std::filesystem::path& dir);

}  // namespace photodyn
