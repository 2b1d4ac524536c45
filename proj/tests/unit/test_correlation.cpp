#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

#include "photodyn/correlation.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/fit.hpp"
#include "photodyn/simulator.hpp"

using namespace photodyn;

namespace {

TimeTagStream poisson_stream(double rate, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate / kTicksPerSecond);
  std::vector<std::int64_t> ts;
  std::int64_t t = 0;
  while (ts.size() < n) {
    t += 1 + static_cast<std::int64_t>(gap(rng));
    ts.push_back(t);
  }
  return TimeTagStream(ts, t + 1);
}

}  // namespace

TEST_CASE("Poisson stream is flat and symmetric") {
  const auto s = poisson_stream(1e6, 1000000, 5);
  const auto c = g2_histogram(s, 100.0, 5.0);
  double mean = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(c.values[i] - 1.0) < 0.05);
    CHECK(c.values[i] == c.values[c.size() - 1 - i]);
    mean += c.values[i];
  }
  CHECK(std::abs(mean / static_cast<double>(c.size()) - 1.0) < 0.02);
  CHECK(c.lags_ns[c.zero_index()] == 0.0);
}

TEST_CASE("too few tags") {
  CHECK_THROWS_AS(g2_histogram(TimeTagStream({5}, 10), 10.0, 1.0), InsufficientData);
}

TEST_CASE("antibunching fit recovers a synthetic curve") {
  G2Curve c;
  c.bin_width_ns = 0.1;
  const auto spec = model_spec(ModelId::g2_antibunching);
  const std::vector<double> p{0.0, 1.26};
  for (int k = -200; k <= 200; ++k) {
    c.lags_ns.push_back(0.1 * k);
    c.values.push_back(spec.f(0.1 * k, p));
    c.raw.push_back(1000);
  }
  c.normalization = 1000.0;
  G2FitOptions o;
  o.fit_bunching = false;
  const auto f = fit_g2(c, o);
  CHECK(f.antibunching.value("g0") == doctest::Approx(0.0).epsilon(0.05));
  CHECK(f.antibunching.value("tau_a") == doctest::Approx(1.26).epsilon(0.05));
}

TEST_CASE("flat curve has no identifiable dip") {
  G2Curve c;
  c.bin_width_ns = 0.1;
  for (int k = -100; k <= 100; ++k) {
    c.lags_ns.push_back(0.1 * k);
    c.values.push_back(1.0);
    c.raw.push_back(1000);
  }
  c.normalization = 1000.0;
  G2FitOptions o;
  o.fit_bunching = false;
  const auto f = fit_g2(c, o);
  CHECK(f.antibunching.value("g0") == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::find(f.flags.begin(), f.flags.end(), "tau_unidentifiable") != f.flags.end());
}

TEST_CASE("simulated two-level emitter is antibunched") {
  EmitterModel m;
  m.c_cal = 1.0;
  DetectionModel d;
  d.eta = 1.0;
  d.band = Band::all;
  LaserDrive drive;
  drive.p_green_uw = 0.05 * m.p_sat_green_uw;
  const auto tags = simulate_timetags(m, d, drive, 0.05, 77);
  const auto c = g2_histogram(tags, 20.0, 0.1);
  CHECK(c.values[c.zero_index()] < 0.1);
  // Average over the bins near 5 tau on both sides.
  double far = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (std::abs(std::abs(c.lags_ns[i]) - 5.0 * 1.26) < 0.5) far += c.values[i], ++n;
  CHECK(far / n >= 0.9);
}

TEST_CASE("shelving shows up as bunching at long lags") {
  EmitterModel m;
  m.c_cal = 1.0;
  m.shelving.kappa_down_hz = 2e6;
  m.shelving.d_down_hz = 2e6;
  DetectionModel d;
  d.eta = 1.0;
  d.band = Band::all;
  LaserDrive drive;
  drive.p_green_uw = m.p_sat_green_uw;
  const auto tags = simulate_timetags(m, d, drive, 0.005, 78);
  const auto c = g2_histogram(tags, 2000.0, 0.25);
  const auto f = fit_g2(c, {true, 1.26, 300.0});
  INFO(f.antibunching.value("g0"), " ", f.antibunching.value("tau_a"));
  REQUIRE(f.bunching.has_value());
  CHECK(f.bunching->value("amp_b") > 0.1);
}
