#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "photodyn/model.hpp"

namespace photodyn {

/// One recovered quantity compared against its generating truth.
struct Check {
  std::string criterion;  // e.g. "A1"
  std::string quantity;
  double truth = 0.0;
  double estimate = 0.0;
  double tolerance = 0.0;  // absolute, in the quantity's unit
  bool pass = false;
  std::string note;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double elapsed_s = 0.0;
  std::string error;  // non-empty when the suite aborted

  [[nodiscard]] bool passed() const;
};

struct ClosedLoopOptions {
  std::uint64_t seed = 20240611;
  // When set, each suite writes its simulated data and fits below this directory.
  std::optional<std::filesystem::path> output_dir;
};

/// Suite names in execution order, without the "all" alias.
const std::vector<std::string>& suite_names();
bool has_suite(const std::string& name);

/// Runs one suite; exceptions are caught and reported in SuiteReport::error.
SuiteReport run_suite(const std::string& name, const ClosedLoopOptions& options = {});

/// Runs a suite name or "all".
std::vector<SuiteReport> run_suites(const std::string& name, const ClosedLoopOptions& options = {});

std::string reports_to_json(const std::vector<SuiteReport>& reports);

// ---- generating scenarios -------------------------------------------------
// Models and detection chains used as truth by the suites; also the basis of
// the shipped example configs.

struct Scenario {
  EmitterModel model;
  DetectionModel detection;
  LaserDrive drive;
};

/// Resonance locked (no spectral diffusion), calibrated to the target ceiling.
Scenario saturation_scenario();
/// Slow Gaussian spectral jumps; each PLE scan sees a fixed detuning.
Scenario ple_scenario();
/// Telegraph spectral diffusion of both pathways at a given temperature.
Scenario offrate_scenario(double temperature_k);
/// Telegraph diffusion plus a long-lived shelf emptied by the blue laser.
Scenario mixture_scenario(double p_blue_uw);
/// Green pumped, full detection band, for photon-resolution runs.
Scenario g2_scenario();
/// Spin-selective shelf with field-dependent mixing.
Scenario shelf_scenario(bool resonant, double b_field_mt, double theta_deg);
Scenario odmr_scenario(double mw_power_dbm);

}  // namespace photodyn
