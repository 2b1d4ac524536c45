#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <random>

#include "photodyn/core.hpp"
#include "photodyn/io.hpp"

using namespace photodyn;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "photodyn-unit";
  std::filesystem::create_directories(p);
  return p / name;
}

std::int64_t ms(double v) { return seconds_to_ticks(v * 1e-3); }

}  // namespace

TEST_CASE("binning an empty stream gives zero bins over the duration") {
  const TimeTagStream s({}, ms(10));
  const auto t = bin_timetags(s, 1e-3);
  CHECK(t.size() == 10);
  CHECK(t.total() == 0);
}

TEST_CASE("binning counts tags per bin") {
  const TimeTagStream s({ms(0.1), ms(0.2), ms(1.5)}, ms(3));
  const auto t = bin_timetags(s, 1e-3);
  CHECK(t.counts == std::vector<std::int64_t>{2, 1, 0});
}

TEST_CASE("binning conserves in-range events and drops the partial bin") {
  std::mt19937_64 rng(7);
  std::vector<std::int64_t> ts;
  std::int64_t t = 0;
  std::exponential_distribution<double> gap(1.0 / 37'000.0);
  while (true) {
    t += 1 + static_cast<std::int64_t>(gap(rng));
    if (t > ms(10.5)) break;
    ts.push_back(t);
  }
  const TimeTagStream s(ts, ms(10.5));
  const auto b = bin_timetags(s, 1e-3);
  CHECK(b.size() == 10);
  const auto in_range = std::count_if(ts.begin(), ts.end(), [](std::int64_t v) { return v < ms(10); });
  CHECK(b.total() == in_range);
}

TEST_CASE("binned Poisson stream mean approaches r b") {
  std::mt19937_64 rng(11);
  const double rate = 1e4, bw = 1e-3, dur = 20.0;
  std::exponential_distribution<double> gap(rate);
  std::vector<std::int64_t> ts;
  double t = gap(rng);
  std::int64_t last = -1;
  while (t < dur) {
    const auto k = seconds_to_ticks(t);
    if (k > last) ts.push_back(k), last = k;
    t += gap(rng);
  }
  const auto b = bin_timetags(TimeTagStream(ts, seconds_to_ticks(dur)), bw);
  const double mean = static_cast<double>(b.total()) / static_cast<double>(b.size());
  const double se = std::sqrt(rate * bw / static_cast<double>(b.size()));
  CHECK(std::abs(mean - rate * bw) < 3 * se);
}

TEST_CASE("time-tag stream rejects unordered or out-of-range tags") {
  CHECK_THROWS_AS(TimeTagStream({5, 5}, 10), std::invalid_argument);
  CHECK_THROWS_AS(TimeTagStream({5, 3}, 10), std::invalid_argument);
  CHECK_THROWS_AS(TimeTagStream({11}, 10), std::invalid_argument);
  CHECK_THROWS_AS(TimeTagStream({-1}, 10), std::invalid_argument);
}

TEST_CASE("background stats") {
  BinnedTrace c{1e-3, std::vector<std::int64_t>(100, 5)};
  const auto s = background_stats(c);
  CHECK(s.mean == 5.0);
  CHECK(s.sigma == 0.0);

  BinnedTrace two{1e-3, {4, 6}};
  const auto s2 = background_stats(two);
  CHECK(s2.mean == doctest::Approx(5.0));
  CHECK(s2.sigma == doctest::Approx(std::sqrt(2.0)));

  std::mt19937_64 rng(3);
  std::poisson_distribution<std::int64_t> po(9.0);
  BinnedTrace p{1e-3, {}};
  for (int i = 0; i < 10000; ++i) p.counts.push_back(po(rng));
  const auto s3 = background_stats(p);
  CHECK(std::abs(s3.mean - 9.0) < 3 * 3.0 / 100.0);
  // Standard error of the sample sd for a near-Gaussian: sigma / sqrt(2n).
  CHECK(std::abs(s3.sigma - 3.0) < 3 * 3.0 / std::sqrt(2.0 * 10000));
}

TEST_CASE("histograms") {
  const std::vector<double> one{0.5}, e01{0.0, 1.0};
  CHECK(make_histogram(one, e01).counts == std::vector<std::int64_t>{1});
  const std::vector<double> none, e012{0.0, 1.0, 2.0};
  CHECK(make_histogram(none, e012).counts == std::vector<std::int64_t>{0, 0});
  const std::vector<double> edge{2.0, -1.0, 1.0};
  const auto h = make_histogram(edge, e012);
  CHECK(h.counts == std::vector<std::int64_t>{0, 1});
  CHECK(h.ignored == 2);
  const std::vector<double> bad{0.0, 0.0};
  CHECK_THROWS_AS(make_histogram(one, bad), std::invalid_argument);
  const auto ie = integer_edges(3);
  CHECK(ie.front() == -0.5);
  CHECK(ie.back() == 3.5);
}

TEST_CASE("time-tag files round-trip") {
  const TimeTagStream s({1, 1000, 123456789012}, 200000000000, 2);
  io::write_timetags_binary(scratch("tags.ptt"), s);
  CHECK(io::read_timetags_binary(scratch("tags.ptt"), s.duration_ticks()) == s);
  io::write_timetags_csv(scratch("tags.csv"), s);
  CHECK(io::read_timetags_csv(scratch("tags.csv"), s.duration_ticks(), 2) == s);
}

TEST_CASE("trace and table CSVs round-trip exactly") {
  BinnedTrace t{1e-6, {0, 3, 1, 7}, 0.0};
  io::write_trace_csv(scratch("trace.csv"), t);
  const auto back = io::read_trace_csv(scratch("trace.csv"));
  CHECK(back.counts == t.counts);
  CHECK(back.bin_width == doctest::Approx(1e-6).epsilon(1e-12));

  const std::vector<double> a{0.1, 1.0 / 3.0, 1e-300}, b{-2.5, 3.0, 7.0};
  io::write_table_csv(scratch("table.csv"), {"a", "b"}, {a, b});
  const auto tab = io::read_table_csv(scratch("table.csv"));
  CHECK(tab.column("a") == a);
  CHECK(tab.column("b") == b);
}

TEST_CASE("unreadable files raise I/O errors") {
  CHECK_THROWS_AS(io::read_trace_csv(scratch("does-not-exist.csv")), io::IoError);
}
