#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace photodyn {

constexpr double kBoltzmannMeVPerK = 8.617333262e-2;

enum class Band { zpl, psb, all };
enum class Pathway : int { p1 = 0, p2 = 1 };
enum class Shelf { none, up, down };
enum class Electronic { ground, excited };

/// How a spectral-diffusion jump chooses the new detuning.
///  - jump_gaussian: every jump draws a fresh detuning from Normal(0, sigma_inh).
///  - telegraph: two-state process, resonant (detuning 0) or off-resonant
///    (Normal(0, sigma_inh) conditioned on |detuning| >= telegraph_off_min).
///    The jump rate law is the resonant -> off rate; the return rate is
///    configured per pathway.
enum class SpectralMode { jump_gaussian, telegraph };

std::string_view to_string(Band b);
std::string_view to_string(SpectralMode m);
Band band_from_string(std::string_view s);
SpectralMode spectral_mode_from_string(std::string_view s);

/// gamma_sd = base + c_res * P_res + c_blue * P_blue + A * exp(-E_a / k_B T), in kHz.
struct JumpRateLaw {
  double base_khz = 0.0;
  double c_res_khz_per_uw = 0.0;
  double c_blue_khz_per_uw = 0.0;
  double arrhenius_khz = 0.0;
  double activation_mev = 0.0;

  [[nodiscard]] double rate_hz(double temperature_k, double p_res_uw, double p_blue_uw) const;
};

struct PathwaySwitch {
  double k12_hz = 0.0;  // P1 -> P2
  double k21_hz = 0.0;  // P2 -> P1
  double k12_blue_hz_per_uw = 0.0;
  double k21_blue_hz_per_uw = 0.0;
};

/// Metastable shelf with two spin sublevels.
struct Shelving {
  double kappa_up_hz = 0.0;  // ISC into `up`, scaled by s/(1+s)
  double kappa_down_hz = 0.0;
  double d_up_hz = 0.0;  // deshelving back to the optical cycle
  double d_down_hz = 0.0;
  double r_blue_hz_per_uw = 0.0;  // blue repump, applies to both sublevels
  double mix_m0_hz = 0.0;         // kappa_mix = m0 + m1 cos(2 (theta - theta_ref)) at finite field
  double mix_m1_hz = 0.0;
  double mix_theta_ref_deg = 140.0;
  double mix_zero_field_hz = 0.0;
  double zero_field_below_mt = 1e-6;  // |B| below this counts as zero field
};

/// Microwave spin-flip rate R0 (P/P_ref) g^2 / (g^2 + (f - f0)^2), g the HWHM.
struct MwResponse {
  double f0_ghz = 1.87;
  double hwhm_mhz = 100.0;
  double r0_hz = 0.0;
  double p_ref_dbm = 0.0;
};

struct EmitterModel {
  double gamma_rad_per_ns = 1.0 / 1.26;
  double debye_waller = 0.20;
  double p_sat_uw = 7.6;
  double p_sat_green_uw = 240.0;  // off-resonant (green) saturation power
  double i_inf_target_mcps = 12.5;
  double c_cal = 1.0;  // multiplier on the analytic saturation ceiling
  double gamma_h_ghz = 1.0 / (2.0 * std::numbers::pi * 1.26);
  double sigma_inh_ghz = 44.0 / 2.355;
  double pathway2_offset_ghz = -105.0;  // P2 line centre relative to P1 (0.12 nm red of 585 nm)

  SpectralMode spectral_mode = SpectralMode::jump_gaussian;
  std::array<JumpRateLaw, 2> jump{};
  std::array<double, 2> telegraph_return_khz{0.0, 0.0};
  double telegraph_off_min_ghz = 10.0;

  PathwaySwitch pathway{};
  Shelving shelving{};
  MwResponse mw{};

  [[nodiscard]] double gamma_max_hz() const { return gamma_rad_per_ns * 1e9; }
  [[nodiscard]] double lifetime_ns() const { return 1.0 / gamma_rad_per_ns; }
  [[nodiscard]] double line_center_ghz(Pathway p) const { return p == Pathway::p1 ? 0.0 : pathway2_offset_ghz; }
  void validate() const;
};

struct DetectionModel {
  double eta = 0.10;
  Band band = Band::psb;
  double background_cps = 0.0;

  [[nodiscard]] double band_efficiency(double debye_waller) const;
  void validate() const;
};

struct MicrowaveDrive {
  double freq_ghz = 1.87;
  double power_dbm = 0.0;
  bool on = false;
};

struct LaserDrive {
  double p_res_uw = 0.0;
  double detuning_laser_ghz = 0.0;  // relative to the P1 inhomogeneous centre
  double p_blue_uw = 0.0;
  double p_green_uw = 0.0;
  double temperature_k = 77.0;
  double b_field_mt = 0.0;
  double theta_deg = 0.0;
  MicrowaveDrive mw{};

  void validate() const;
};

struct PulseSegment {
  LaserDrive drive;
  double duration_s = 0.0;
  bool record = true;
};

struct PulseSequence {
  std::vector<PulseSegment> segments;
  int repeat = 1;
  void validate() const;
};

struct EnvState {
  Electronic electronic = Electronic::ground;
  Pathway pathway = Pathway::p1;
  Shelf shelf = Shelf::none;
  double detuning_ghz = 0.0;  // offset of the active line from its centre
  bool resonant = false;      // telegraph mode only

  bool operator==(const EnvState&) const = default;
};

/// Detuning of the active line from the resonant laser, GHz.
double effective_detuning_ghz(const EmitterModel& model, const LaserDrive& drive, const EnvState& env);

/// Power-broadened Lorentzian FWHM of the resonant line, GHz.
double broadened_fwhm_ghz(const EmitterModel& model, double p_res_uw);

/// Saturation parameter s: resonant term (p/p_sat) L(delta)/L(0) with L of the
/// natural width gamma_h, plus the detuning-independent green term
/// p_green/p_sat_green. The emitted line s/(1+s) is then power broadened.
double saturation_parameter(const EmitterModel& model, const LaserDrive& drive, const EnvState& env);

/// Detected emitter rate (counts/s, background excluded):
/// c_cal * eta_band * Gamma_max / 2 * s / (1 + s); zero while shelved.
double emission_rate(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                     const EnvState& env);

/// c_cal * eta_band * Gamma_max / 2, the detected rate at infinite power on resonance.
double saturation_ceiling_cps(const EmitterModel& model, const DetectionModel& detection);

/// Multiplier that maps the analytic ceiling onto i_inf_target_mcps.
double calibration_multiplier(const EmitterModel& model, const DetectionModel& detection);

double spectral_jump_rate_hz(const EmitterModel& model, const LaserDrive& drive, Pathway pathway);
double spin_mixing_rate_hz(const Shelving& shelving, const LaserDrive& drive);
double mw_flip_rate_hz(const MwResponse& mw, const MicrowaveDrive& drive);
double deshelving_rate_hz(const Shelving& shelving, const LaserDrive& drive, Shelf shelf);

}  // namespace photodyn
