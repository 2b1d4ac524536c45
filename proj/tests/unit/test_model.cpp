#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "photodyn/model.hpp"

using namespace photodyn;

TEST_CASE("emission rate at s = 1 is a quarter of eta Gamma") {
  EmitterModel m;
  DetectionModel d;
  d.band = Band::all;
  d.eta = 0.1;
  LaserDrive drive;
  drive.p_res_uw = m.p_sat_uw;
  EnvState on;  // detuning 0, pathway 1
  CHECK(saturation_parameter(m, drive, on) == doctest::Approx(1.0));
  CHECK(emission_rate(m, d, drive, on) == doctest::Approx(0.1 * m.gamma_max_hz() / 4.0));
}

TEST_CASE("saturation ceiling and calibration") {
  EmitterModel m;
  m.gamma_rad_per_ns = 0.794;
  DetectionModel d;
  d.eta = 0.10;
  d.band = Band::all;
  CHECK(saturation_ceiling_cps(m, d) == doctest::Approx(39.7e6));
  d.band = Band::psb;
  m.debye_waller = 0.2;
  CHECK(saturation_ceiling_cps(m, d) == doctest::Approx(31.76e6));
  m.c_cal = calibration_multiplier(m, d);
  CHECK(m.c_cal == doctest::Approx(12.5 / 31.76));
  CHECK(saturation_ceiling_cps(m, d) == doctest::Approx(12.5e6));
}

TEST_CASE("shelved emitter is dark") {
  EmitterModel m;
  DetectionModel d;
  LaserDrive drive;
  drive.p_res_uw = 100.0;
  EnvState e;
  e.shelf = Shelf::down;
  CHECK(emission_rate(m, d, drive, e) == 0.0);
}

TEST_CASE("resonant excitation follows a natural-width Lorentzian") {
  EmitterModel m;
  LaserDrive drive;
  drive.p_res_uw = m.p_sat_uw;
  EnvState e;
  e.detuning_ghz = 0.5 * m.gamma_h_ghz;
  CHECK(saturation_parameter(m, drive, e) == doctest::Approx(0.5));
  CHECK(broadened_fwhm_ghz(m, 3.0 * m.p_sat_uw) == doctest::Approx(2.0 * m.gamma_h_ghz));
}

TEST_CASE("jump rate law") {
  JumpRateLaw j{3.0, 3.0, 1.0, 99.3, 10.0};
  const double expect = 3.0 + 3.0 * 20.0 + 1.0 * 5.0 + 99.3 * std::exp(-10.0 / (kBoltzmannMeVPerK * 77.0));
  CHECK(j.rate_hz(77.0, 20.0, 5.0) == doctest::Approx(expect * 1e3));
}

TEST_CASE("spin mixing depends on field angle and vanishing field") {
  Shelving s;
  s.mix_m0_hz = 18.75;
  s.mix_m1_hz = 8.75;
  s.mix_theta_ref_deg = 140.0;
  s.mix_zero_field_hz = 5000.0;
  LaserDrive d;
  d.b_field_mt = 30.0;
  d.theta_deg = 140.0;
  CHECK(spin_mixing_rate_hz(s, d) == doctest::Approx(27.5));
  d.theta_deg = 50.0;
  CHECK(spin_mixing_rate_hz(s, d) == doctest::Approx(10.0));
  d.b_field_mt = 0.0;
  CHECK(spin_mixing_rate_hz(s, d) == doctest::Approx(5000.0));
}

TEST_CASE("microwave flips follow power and a Lorentzian in frequency") {
  MwResponse mw{1.87, 100.0, 200.0, 0.0};
  MicrowaveDrive d{1.87, 0.0, true};
  CHECK(mw_flip_rate_hz(mw, d) == doctest::Approx(200.0));
  d.power_dbm = -3.0;
  CHECK(mw_flip_rate_hz(mw, d) == doctest::Approx(200.0 * std::pow(10.0, -0.3)));
  d.power_dbm = 0.0;
  d.freq_ghz = 1.97;
  CHECK(mw_flip_rate_hz(mw, d) == doctest::Approx(100.0));
  d.on = false;
  CHECK(mw_flip_rate_hz(mw, d) == 0.0);
}

TEST_CASE("deshelving adds the blue repump") {
  Shelving s;
  s.d_down_hz = 1.0 / 5.6e-3;
  s.r_blue_hz_per_uw = 2.0;
  LaserDrive d;
  d.p_blue_uw = 10.0;
  CHECK(deshelving_rate_hz(s, d, Shelf::down) == doctest::Approx(1.0 / 5.6e-3 + 20.0));
}

TEST_CASE("invalid models are rejected") {
  EmitterModel m;
  m.debye_waller = 1.5;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  DetectionModel d;
  d.eta = -0.1;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  CHECK_THROWS_AS(band_from_string("uv"), std::invalid_argument);
}
