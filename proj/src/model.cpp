#include "photodyn/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace photodyn {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool non_negative(const JumpRateLaw& j) {
  return j.base_khz >= 0 && j.c_res_khz_per_uw >= 0 && j.c_blue_khz_per_uw >= 0 && j.arrhenius_khz >= 0 &&
         j.activation_mev >= 0;
}

}  // namespace

std::string_view to_string(Band b) {
  switch (b) {
    case Band::zpl: return "zpl";
    case Band::psb: return "psb";
    case Band::all: return "all";
  }
  return "all";
}

std::string_view to_string(SpectralMode m) {
  return m == SpectralMode::telegraph ? "telegraph" : "jump_gaussian";
}

Band band_from_string(std::string_view s) {
  if (s == "zpl" || s == "ZPL") return Band::zpl;
  if (s == "psb" || s == "PSB") return Band::psb;
  if (s == "all" || s == "ALL") return Band::all;
  throw std::invalid_argument("unknown detection band '" + std::string(s) + "'");
}

SpectralMode spectral_mode_from_string(std::string_view s) {
  if (s == "jump_gaussian" || s == "gaussian") return SpectralMode::jump_gaussian;
  if (s == "telegraph") return SpectralMode::telegraph;
  throw std::invalid_argument("unknown spectral mode '" + std::string(s) + "'");
}

double JumpRateLaw::rate_hz(double temperature_k, double p_res_uw, double p_blue_uw) const {
  double khz = base_khz + c_res_khz_per_uw * p_res_uw + c_blue_khz_per_uw * p_blue_uw;
  if (arrhenius_khz > 0.0) khz += arrhenius_khz * std::exp(-activation_mev / (kBoltzmannMeVPerK * temperature_k));
  return 1e3 * khz;
}

void EmitterModel::validate() const {
  require(gamma_rad_per_ns > 0, "model: gamma_rad must be positive");
  require(debye_waller >= 0 && debye_waller <= 1, "model: debye_waller must lie in [0,1]");
  require(p_sat_uw > 0 && p_sat_green_uw > 0, "model: saturation powers must be positive");
  require(c_cal > 0, "model: c_cal must be positive");
  require(gamma_h_ghz > 0, "model: gamma_h must be positive");
  require(sigma_inh_ghz > 0, "model: sigma_inh must be positive");
  require(non_negative(jump[0]) && non_negative(jump[1]), "model: jump-rate coefficients must be >= 0");
  require(telegraph_return_khz[0] >= 0 && telegraph_return_khz[1] >= 0, "model: telegraph return rates must be >= 0");
  require(telegraph_off_min_ghz >= 0, "model: telegraph_off_min must be >= 0");
  require(pathway.k12_hz >= 0 && pathway.k21_hz >= 0 && pathway.k12_blue_hz_per_uw >= 0 &&
              pathway.k21_blue_hz_per_uw >= 0,
          "model: pathway rates must be >= 0");
  const auto& s = shelving;
  require(s.kappa_up_hz >= 0 && s.kappa_down_hz >= 0 && s.d_up_hz >= 0 && s.d_down_hz >= 0 &&
              s.r_blue_hz_per_uw >= 0 && s.mix_zero_field_hz >= 0,
          "model: shelving rates must be >= 0");
  require(s.mix_m0_hz >= std::abs(s.mix_m1_hz), "model: spin mixing m0 must be >= |m1| so the rate stays >= 0");
  require(mw.r0_hz >= 0 && mw.hwhm_mhz > 0, "model: microwave response must have r0 >= 0, hwhm > 0");
}

double DetectionModel::band_efficiency(double debye_waller) const {
  switch (band) {
    case Band::zpl: return eta * debye_waller;
    case Band::psb: return eta * (1.0 - debye_waller);
    case Band::all: return eta;
  }
  return eta;
}

void DetectionModel::validate() const {
  require(eta > 0 && eta <= 1, "detection: eta must lie in (0,1]");
  require(background_cps >= 0, "detection: background rate must be >= 0");
}

void LaserDrive::validate() const {
  require(p_res_uw >= 0 && p_blue_uw >= 0 && p_green_uw >= 0, "drive: powers must be >= 0");
  require(temperature_k > 0, "drive: temperature must be positive");
  require(std::isfinite(detuning_laser_ghz), "drive: laser detuning must be finite");
}

void PulseSequence::validate() const {
  require(!segments.empty(), "pulse sequence: at least one segment required");
  require(repeat >= 1, "pulse sequence: repeat must be >= 1");
  for (const auto& seg : segments) {
    require(seg.duration_s > 0, "pulse sequence: segment durations must be positive");
    seg.drive.validate();
  }
}

double effective_detuning_ghz(const EmitterModel& model, const LaserDrive& drive, const EnvState& env) {
  return model.line_center_ghz(env.pathway) + env.detuning_ghz - drive.detuning_laser_ghz;
}

double broadened_fwhm_ghz(const EmitterModel& model, double p_res_uw) {
  return model.gamma_h_ghz * std::sqrt(1.0 + p_res_uw / model.p_sat_uw);
}

double saturation_parameter(const EmitterModel& model, const LaserDrive& drive, const EnvState& env) {
  double s = 0.0;
  if (drive.p_res_uw > 0.0) {
    // Natural width here; s / (1 + s) then broadens the emission line to broadened_fwhm_ghz.
    const double half = 0.5 * model.gamma_h_ghz;
    const double d = effective_detuning_ghz(model, drive, env);
    s += (drive.p_res_uw / model.p_sat_uw) * (half * half) / (half * half + d * d);
  }
  if (drive.p_green_uw > 0.0) s += drive.p_green_uw / model.p_sat_green_uw;
  return s;
}

double saturation_ceiling_cps(const EmitterModel& model, const DetectionModel& detection) {
  return model.c_cal * detection.band_efficiency(model.debye_waller) * model.gamma_max_hz() / 2.0;
}

double calibration_multiplier(const EmitterModel& model, const DetectionModel& detection) {
  const double raw = detection.band_efficiency(model.debye_waller) * model.gamma_max_hz() / 2.0;
  return model.i_inf_target_mcps * 1e6 / raw;
}

double emission_rate(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                     const EnvState& env) {
  if (env.shelf != Shelf::none) return 0.0;
  const double s = saturation_parameter(model, drive, env);
  return saturation_ceiling_cps(model, detection) * s / (1.0 + s);
}

double spectral_jump_rate_hz(const EmitterModel& model, const LaserDrive& drive, Pathway pathway) {
  return model.jump[static_cast<int>(pathway)].rate_hz(drive.temperature_k, drive.p_res_uw, drive.p_blue_uw);
}

double spin_mixing_rate_hz(const Shelving& shelving, const LaserDrive& drive) {
  if (std::abs(drive.b_field_mt) < shelving.zero_field_below_mt) return shelving.mix_zero_field_hz;
  const double arg = 2.0 * (drive.theta_deg - shelving.mix_theta_ref_deg) * std::numbers::pi / 180.0;
  return shelving.mix_m0_hz + shelving.mix_m1_hz * std::cos(arg);
}

double mw_flip_rate_hz(const MwResponse& mw, const MicrowaveDrive& drive) {
  if (!drive.on || mw.r0_hz <= 0.0) return 0.0;
  const double g = mw.hwhm_mhz * 1e-3;
  const double df = drive.freq_ghz - mw.f0_ghz;
  const double power_ratio = std::pow(10.0, (drive.power_dbm - mw.p_ref_dbm) / 10.0);
  return mw.r0_hz * power_ratio * g * g / (g * g + df * df);
}

double deshelving_rate_hz(const Shelving& shelving, const LaserDrive& drive, Shelf shelf) {
  const double base = shelf == Shelf::up ? shelving.d_up_hz : shelf == Shelf::down ? shelving.d_down_hz : 0.0;
  if (shelf == Shelf::none) return 0.0;
  return base + shelving.r_blue_hz_per_uw * drive.p_blue_uw;
}

}  // namespace photodyn
