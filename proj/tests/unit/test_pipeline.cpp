#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "photodyn/pipeline.hpp"

using namespace photodyn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("photodyn_unit_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTrace = R"(seed = 3
[model]
spectral_mode = "telegraph"
telegraph_return_khz = [40.0, 40.0]
[model.jump.p1]
base_khz = 80.0
[model.jump.p2]
base_khz = 80.0
[detection]
background_cps = 20000.0
[protocol]
kind = "trace"
duration_s = 0.2
bin_width_s = 1e-5
background_s = 0.05
[protocol.drive]
p_res_uw = 20.0
[[analysis]]
stage = "mixture"
grid_points = 3
)";

}  // namespace

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("trace run: simulate, analyze, report") {
  const auto dir = fresh_dir("trace");
  const auto cfg = parse_config(kTrace);
  simulate_run(cfg, dir);
  CHECK(fs::exists(dir / "trace.csv"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "run.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["config_sha256"] == sha256_hex(kTrace));

  const auto raw = slurp(dir / "trace.csv");
  const auto results = analyze_run(dir, {"intervals", "mixture"});
  REQUIRE(results.size() == 2);
  for (const auto& r : results) CHECK_MESSAGE(r.ok, r.stage << ": " << r.error);
  CHECK(fs::exists(dir / "analysis" / "rates.json"));
  CHECK(fs::exists(dir / "analysis" / "mixture_fit.json"));
  report_run(dir);
  CHECK(fs::exists(dir / "report" / "summary.json"));
  CHECK(slurp(dir / "trace.csv") == raw);

  // Same config and seed give byte-identical raw data.
  const auto again = fresh_dir("trace_again");
  simulate_run(cfg, again);
  CHECK(slurp(again / "trace.csv") == raw);
  const auto other = fresh_dir("trace_other");
  simulate_run(cfg, other, 4);
  CHECK(slurp(other / "trace.csv") != raw);
  fs::remove_all(dir);
  fs::remove_all(again);
  fs::remove_all(other);
}

TEST_CASE("timetag run gives a symmetric g2 table") {
  const auto dir = fresh_dir("g2");
  const auto cfg = parse_config(
      "seed = 1\n[model]\ncalibrate = false\nc_cal = 1.0\n[detection]\neta = 1.0\nband = \"all\"\n"
      "[protocol]\nkind = \"timetags\"\nduration_s = 0.002\n[protocol.drive]\np_green_uw = 12.0\n");
  simulate_run(cfg, dir);
  const auto r = analyze_run(dir);
  REQUIRE(r.size() == 1);
  CHECK_MESSAGE(r[0].ok, r[0].error);
  std::ifstream in(dir / "analysis" / "g2.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> lags;
  while (std::getline(in, line)) lags.push_back(std::stod(line.substr(0, line.find(','))));
  REQUIRE(lags.size() % 2 == 1);
  for (std::size_t i = 0; i < lags.size(); ++i) CHECK(lags[i] == doctest::Approx(-lags[lags.size() - 1 - i]));
  fs::remove_all(dir);
}

TEST_CASE("missing inputs") {
  CHECK_THROWS_AS(analyze_run(fresh_dir("nothing")), MissingInput);
  const auto dir = fresh_dir("noqe");
  simulate_run(parse_config(kTrace), dir);
  const auto r = analyze_run(dir, {"qe"});
  REQUIRE(r.size() == 1);
  CHECK_FALSE(r[0].ok);
  CHECK(r[0].missing_input);
  CHECK_THROWS_AS(analyze_run(dir, {"bogus"}), std::invalid_argument);
  fs::remove_all(dir);
}
