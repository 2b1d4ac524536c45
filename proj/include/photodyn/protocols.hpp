#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "photodyn/core.hpp"
#include "photodyn/fit.hpp"
#include "photodyn/model.hpp"
#include "photodyn/simulator.hpp"

namespace photodyn {

// Every protocol derives one RNG substream per sweep point (and repetition)
// from the master seed, so results do not depend on the worker count.

struct TraceProtocol {
  LaserDrive drive;
  double duration_s = 1.0;
  double bin_width_s = 1e-3;
  double burn_in_s = 0.0;
  double background_s = 0.0;  // > 0 also records a background-only reference trace
  std::optional<EnvState> initial;
};

struct TraceRecord {
  SimulatedTrace trace;
  std::optional<BinnedTrace> background;
};

TraceRecord run_trace(const EmitterModel& model, const DetectionModel& detection, const TraceProtocol& p,
                      std::uint64_t seed);

struct TimetagProtocol {
  LaserDrive drive;
  double duration_s = 0.01;
  double max_expected_events = 1e8;
  std::optional<EnvState> initial;
};

TimeTagStream run_timetags(const EmitterModel& model, const DetectionModel& detection, const TimetagProtocol& p,
                           std::uint64_t seed);

struct SaturationProtocol {
  std::vector<double> powers_uw;
  LaserDrive drive;  // p_res is replaced by each sweep power
  double dwell_s = 0.05;
  double bin_width_s = 1e-5;
  double background_s = 0.05;
  double n_sigma = 3.0;
  std::optional<EnvState> initial;
};

struct SaturationPoint {
  double power_uw = 0.0;
  double on_rate_cps = 0.0;  // background subtracted mean over ON bins
  double on_rate_err_cps = 0.0;
  double mean_rate_cps = 0.0;  // all bins, background included
  double on_fraction = 0.0;
};

struct SaturationRecord {
  std::vector<SaturationPoint> points;
  double bg_mean = 0.0;  // counts per bin
  double bg_sigma = 0.0;
  double bin_width_s = 0.0;
};

SaturationRecord run_saturation(const EmitterModel& model, const DetectionModel& detection,
                                const SaturationProtocol& p, std::uint64_t seed);

struct PleProtocol {
  double start_ghz = -100.0;
  double stop_ghz = 100.0;
  double step_ghz = 0.02;
  double dwell_s = 1e-6;
  int scans = 200;
  LaserDrive drive;  // detuning_laser is swept
  std::optional<EnvState> initial;  // default: a fresh environment per scan
};

struct PleRecord {
  std::vector<double> detunings_ghz;
  std::vector<std::vector<std::int64_t>> scans;
};

PleRecord run_ple(const EmitterModel& model, const DetectionModel& detection, const PleProtocol& p,
                  std::uint64_t seed);

/// Detuning of the count maximum of each scan; scans without counts are skipped.
std::vector<double> ple_peak_positions(const PleRecord& record);

/// Runs a pulse sequence `repeat` times on one engine and returns the mean
/// counts per bin of each recorded segment.
std::vector<std::vector<double>> run_sequence(const EmitterModel& model, const DetectionModel& detection,
                                              const PulseSequence& sequence, double bin_width_s, std::uint64_t seed,
                                              std::optional<EnvState> initial = std::nullopt);

struct PumpProbeProtocol {
  LaserDrive pump;
  double pump_s = 0.03;
  LaserDrive dark;  // all lasers off
  std::vector<double> delays_s;
  LaserDrive probe;
  double readout_s = 0.025;
  double bin_width_s = 2e-4;
  int repetitions = 400;
  std::optional<EnvState> initial;
};

std::vector<Transient> run_pump_probe(const EmitterModel& model, const DetectionModel& detection,
                                      const PumpProbeProtocol& p, std::uint64_t seed);

struct OdmrProtocol {
  std::vector<double> freqs_ghz;
  LaserDrive drive;  // mw.power_dbm is used, frequency swept, on/off interleaved
  double dwell_s = 1.0;  // per state and frequency
  int interleave = 10;   // on/off alternations per point
  std::optional<EnvState> initial;
};

struct OdmrRecord {
  std::vector<double> freqs_ghz;
  std::vector<double> counts_on;
  std::vector<double> counts_off;
  std::vector<double> signal;  // on / off
};

OdmrRecord run_odmr(const EmitterModel& model, const DetectionModel& detection, const OdmrProtocol& p,
                    std::uint64_t seed);

struct AngleProtocol {
  std::vector<double> angles_deg;
  LaserDrive drive;
  double dwell_s = 100.0;
  std::optional<EnvState> initial;
};

struct AngleRecord {
  std::vector<double> angles_deg;
  std::vector<double> rate_cps;
};

AngleRecord run_angle(const EmitterModel& model, const DetectionModel& detection, const AngleProtocol& p,
                      std::uint64_t seed);

/// Spectrometer frames under (typically off-resonant) excitation: each
/// frame integrates the emitter output per pathway and spreads it over the
/// two ZPLs and a fixed sideband shape, then adds shot noise.
struct SpectraProtocol {
  LaserDrive drive;
  int frames = 100;
  double frame_s = 1.0;
  double grid_start_nm = 580.0;
  double grid_stop_nm = 660.0;
  double grid_step_nm = 0.005;
  double zpl1_nm = 585.0;
  double zpl2_offset_nm = 0.12;
  double zpl_sigma_nm = 0.025;
  double acoustic_psb_thz = 2.0;  // first sideband, red of ZPL1
  double acoustic_psb_sigma_nm = 0.6;
  double acoustic_psb_fraction = 0.15;  // of the sideband emission
  std::vector<double> optical_psb_nm{631.6, 645.0};
  double optical_psb_sigma_nm = 6.0;
  double counts_scale = 1e-3;  // spectrometer counts per detected photon
  std::optional<EnvState> initial;
};

struct SpectraRecord {
  std::vector<Spectrum> frames;
  std::vector<std::array<double, 2>> pathway_counts;  // truth per frame
};

SpectraRecord run_spectra(const EmitterModel& model, const DetectionModel& detection, const SpectraProtocol& p,
                          std::uint64_t seed);

using Protocol = std::variant<TraceProtocol, TimetagProtocol, SaturationProtocol, PleProtocol, PumpProbeProtocol,
                              OdmrProtocol, AngleProtocol, SpectraProtocol>;

std::string protocol_name(const Protocol& p);

// Precondition checks run by the matching run_* function; throw
// std::invalid_argument.
void validate(const TraceProtocol& p);
void validate(const TimetagProtocol& p);
void validate(const SaturationProtocol& p);
void validate(const PleProtocol& p);
void validate(const PumpProbeProtocol& p);
void validate(const OdmrProtocol& p);
void validate(const AngleProtocol& p);
void validate(const SpectraProtocol& p);
void validate_protocol(const Protocol& protocol);

}  // namespace photodyn
