#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "photodyn/simulator.hpp"

using namespace photodyn;

TEST_CASE("dwell times of a single slow channel are exponential") {
  EmitterModel m;
  m.jump[0].base_khz = 85.0;
  LaserDrive d;
  Rng rng(5);
  EnvState e;
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto step = step_slow_state(m, d, e, rng);
    sum += step.dwell_s;
    sum2 += step.dwell_s * step.dwell_s;
    e = step.next;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0 / 85e3) < 3 * se);
}

TEST_CASE("shelf residence time follows the deshelving rate") {
  EmitterModel m;
  m.shelving.d_down_hz = 1.0 / 5.6e-3;
  LaserDrive d;
  Rng rng(9);
  EnvState e;
  e.shelf = Shelf::down;
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto step = step_slow_state(m, d, e, rng);
    REQUIRE(step.event == SlowEvent::deshelve);
    sum += step.dwell_s;
  }
  CHECK(sum / n == doctest::Approx(5.6e-3).epsilon(3.0 / std::sqrt(n)));
}

TEST_CASE("symmetric pathway switching occupies both pathways equally") {
  EmitterModel m;
  m.pathway.k12_hz = 10.0;
  m.pathway.k21_hz = 10.0;
  LaserDrive d;
  Rng rng(13);
  EnvState e;
  double t1 = 0.0, t2 = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const auto step = step_slow_state(m, d, e, rng);
    (e.pathway == Pathway::p1 ? t1 : t2) += step.dwell_s;
    e = step.next;
  }
  CHECK(t1 / (t1 + t2) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("a state without active transitions is absorbing") {
  EmitterModel m;
  LaserDrive d;
  Rng rng(1);
  const auto step = step_slow_state(m, d, EnvState{}, rng);
  CHECK(std::isinf(step.dwell_s));
  CHECK_FALSE(step.event.has_value());
}

TEST_CASE("pure background trace has the background mean") {
  EmitterModel m;
  DetectionModel det;
  det.background_cps = 1000.0;
  const auto t = simulate_trace(m, det, LaserDrive{}, 10.0, 1e-3, 42);
  REQUIRE(t.size() == 10000);
  const double mean = static_cast<double>(t.total()) / 10000.0;
  CHECK(std::abs(mean - 1.0) < 3.0 * std::sqrt(1.0 / 10000.0));
}

TEST_CASE("identical seeds give identical traces and time tags") {
  EmitterModel m;
  m.spectral_mode = SpectralMode::telegraph;
  m.jump[0].base_khz = 50.0;
  m.telegraph_return_khz = {10.0, 10.0};
  DetectionModel det;
  det.background_cps = 100.0;
  LaserDrive d;
  d.p_res_uw = 5.0;
  CHECK(simulate_trace(m, det, d, 0.05, 1e-5, 7) == simulate_trace(m, det, d, 0.05, 1e-5, 7));
  CHECK_FALSE(simulate_trace(m, det, d, 0.05, 1e-5, 7) == simulate_trace(m, det, d, 0.05, 1e-5, 8));
  LaserDrive g;
  g.p_green_uw = 50.0;
  CHECK(simulate_timetags(m, det, g, 1e-3, 3) == simulate_timetags(m, det, g, 1e-3, 3));
}

TEST_CASE("two-tier and photon-resolved engines agree on the mean rate") {
  EmitterModel m;
  DetectionModel det;
  det.eta = 0.1;
  for (double s : {0.2, 1.0, 5.0}) {
    LaserDrive d;
    d.p_green_uw = s * m.p_sat_green_uw;
    const auto t = simulate_trace(m, det, d, 1.0, 1e-3, 100);
    const auto tags = simulate_timetags(m, det, d, 0.01, 200);
    const double r1 = static_cast<double>(t.total()), r2 = static_cast<double>(tags.size()) / 0.01;
    const double se = std::sqrt(r1 + r2 / 0.01);
    CHECK(std::abs(r1 - r2) < 3.0 * se);
    CHECK(r1 == doctest::Approx(emission_rate(m, det, d, EnvState{})).epsilon(0.01));
  }
}

TEST_CASE("photon-resolved stream exceeding the event cap is refused") {
  EmitterModel m;
  LaserDrive d;
  d.p_green_uw = 1000.0;
  TimetagOptions opt;
  opt.max_expected_events = 10.0;
  CHECK_THROWS(simulate_timetags(m, DetectionModel{}, d, 1.0, 1, opt));
}
