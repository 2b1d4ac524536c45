#include <doctest.h>

#include <stdexcept>

#include "photodyn/config.hpp"

using namespace photodyn;

namespace {

int first_line(const char* text) {
  try {
    parse_config(text, "t.toml");
  } catch (const ConfigError& e) {
    REQUIRE_FALSE(e.diagnostics().empty());
    return e.diagnostics().front().line;
  }
  FAIL("expected ConfigError");
  return -1;
}

}  // namespace

TEST_CASE("minimal config") {
  const auto c = parse_config("seed = 7\n[protocol]\nkind = \"trace\"\nduration_s = 0.5\n");
  CHECK(c.seed == 7);
  REQUIRE(std::holds_alternative<TraceProtocol>(c.protocol));
  CHECK(std::get<TraceProtocol>(c.protocol).duration_s == 0.5);
  CHECK(c.model.c_cal == doctest::Approx(calibration_multiplier(EmitterModel{}, DetectionModel{})));
  CHECK(default_stages(c.protocol) == std::vector<std::string>{"intervals", "mixture"});
}

TEST_CASE("diagnostics carry the offending line") {
  CHECK(first_line("seed = 1\n[protocol]\nkind = \"trace\"\nbogus = 3\n") == 4);
  CHECK(first_line("seed = 1\n[protocol]\nkind = \"trace\"\nduration_s = \"long\"\n") == 4);
  CHECK(first_line("seed = 1\n\n[protocol\nkind = \"trace\"\n") == 3);
  CHECK(first_line("seed = 1\n[protocol]\nkind = \"nope\"\n") == 3);
  CHECK(first_line("[model]\nc_cal = 2.0\n[protocol]\nkind = \"trace\"\n") == 2);
  CHECK(first_line("[protocol]\nkind = \"trace\"\nduration_s = -1.0\n") > 0);
}

TEST_CASE("every message is reported") {
  try {
    parse_config("[protocol]\nkind = \"trace\"\nfoo = 1\nbar = 2\n", "x.toml");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.diagnostics().size() == 2);
    CHECK(std::string(e.what()).find("x.toml:3:") != std::string::npos);
  }
}

TEST_CASE("analysis stages and their parameters") {
  const auto c = parse_config(
      "[protocol]\nkind = \"timetags\"\n[[analysis]]\nstage = \"g2\"\nmax_lag_ns = 30.0\n");
  CHECK(c.stage("g2").number("max_lag_ns", 0.0) == 30.0);
  CHECK(c.stage("mixture").number("grid_points", 5.0) == 5.0);
  CHECK(first_line("[protocol]\nkind = \"trace\"\n[[analysis]]\nstage = \"nonsense\"\n") == 4);
}
