#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

#include "photodyn/errors.hpp"
#include "photodyn/trace_analysis.hpp"

using namespace photodyn;

namespace {

std::vector<double> exp_samples(double rate, int n, std::uint64_t seed, double quantum = 0.0) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(rate);
  std::vector<double> v;
  for (int i = 0; i < n; ++i) {
    double x = e(rng);
    if (quantum > 0.0) x = quantum * std::ceil(x / quantum);
    v.push_back(x);
  }
  return v;
}

}  // namespace

TEST_CASE("all-zero trace has no interior runs") {
  BinnedTrace t{1e-3, std::vector<std::int64_t>(50, 0)};
  const auto r = classify_on_off(t, 0.0, 1.0, 3.0);
  CHECK(r.on_durations.empty());
  CHECK(r.off_durations.empty());
  CHECK(r.runs.size() == 1);
  CHECK(r.runs[0].truncated);
}

TEST_CASE("interior runs are read off directly") {
  BinnedTrace t{1e-3, {0, 9, 9, 0, 0, 9, 0}};
  const auto r = classify_on_off(t, 0.0, 1.0, 3.0);
  REQUIRE(r.on_durations.size() == 2);
  CHECK(r.on_durations[0] == doctest::Approx(2e-3));
  CHECK(r.on_durations[1] == doctest::Approx(1e-3));
  REQUIRE(r.off_durations.size() == 1);
  CHECK(r.off_durations[0] == doctest::Approx(2e-3));
  CHECK(r.on_bins == 3);
}

TEST_CASE("raising the threshold never adds ON time") {
  std::mt19937_64 rng(2);
  std::poisson_distribution<std::int64_t> lo(0.5), hi(6.0);
  BinnedTrace t{1e-6, {}};
  for (int i = 0; i < 20000; ++i) t.counts.push_back((i / 37) % 3 == 0 ? hi(rng) : lo(rng));
  std::size_t last = t.size() + 1;
  for (double ns = 0.0; ns <= 8.0; ns += 0.25) {
    const auto r = classify_on_off(t, 0.5, std::sqrt(0.5), ns);
    CHECK(r.on_bins <= last);
    last = r.on_bins;
  }
}

TEST_CASE("interval rates recover exponential generators") {
  for (double rate : {85e3, 63e3}) {
    const auto d = exp_samples(rate, 10000, static_cast<std::uint64_t>(rate));
    const auto f = fit_interval_rate(d);
    CHECK(f.value("rate") == doctest::Approx(rate).epsilon(0.05));
    CHECK(f.value("rate_mean") == doctest::Approx(rate).epsilon(0.05));
    CHECK(std::abs(f.value("rate") - f.value("rate_mean")) < 0.1 * rate);
  }
}

TEST_CASE("rate estimator scales inversely with durations") {
  const auto d = exp_samples(1e4, 2000, 4);
  std::vector<double> d2;
  for (double v : d) d2.push_back(v * 8.0);
  CHECK(fit_interval_rate(d2).value("rate_mean") == doctest::Approx(fit_interval_rate(d).value("rate_mean") / 8.0).epsilon(1e-12));
}

TEST_CASE("degenerate durations are flagged and short lists refused") {
  const std::vector<double> same(200, 1e-5);
  CHECK(fit_interval_rate(same).has_flag("non_exponential"));
  const std::vector<double> few(10, 1e-5);
  CHECK_THROWS_AS(fit_interval_rate(few), InsufficientData);
}

TEST_CASE("on probability") {
  BinnedTrace t{1e-3, std::vector<std::int64_t>(100, 9)};
  const auto r = classify_on_off(t, 0.0, 1.0, 3.0);
  const auto p = on_probability_threshold(r, t);
  CHECK(p.fraction == 1.0);
  CHECK(std::find(p.flags.begin(), p.flags.end(), "threshold_biased") != p.flags.end());

  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(100.0, 10.0);
  BinnedTrace bg{1e-3, {}};
  for (int i = 0; i < 100000; ++i) bg.counts.push_back(static_cast<std::int64_t>(std::llround(g(rng))));
  const auto rb = classify_on_off(bg, 100.0, 10.0, 3.0);
  CHECK(on_probability_threshold(rb, bg).fraction < 0.005);
}
