#include <doctest.h>

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "photodyn/closed_loop.hpp"

using namespace photodyn;

TEST_CASE("suite registry") {
  CHECK(suite_names().size() == 10);
  CHECK(has_suite("A9-qe"));
  CHECK_FALSE(has_suite("all"));
  CHECK_THROWS_AS(run_suite("A99"), std::invalid_argument);
}

TEST_CASE("quantum efficiency suite passes and serializes") {
  const auto reports = run_suites("A9-qe");
  REQUIRE(reports.size() == 1);
  CHECK_MESSAGE(reports[0].passed(), reports[0].error);
  const auto j = nlohmann::json::parse(reports_to_json(reports));
  CHECK(j.is_array());
  CHECK(j.size() == 1);
}
