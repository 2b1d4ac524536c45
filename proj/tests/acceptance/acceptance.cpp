// Runs every closed-loop suite and prints one PASS/FAIL line per criterion.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "photodyn/closed_loop.hpp"

int main(int argc, char** argv) {
  photodyn::ClosedLoopOptions opt;
  if (argc > 1) opt.seed = std::strtoull(argv[1], nullptr, 10);
  bool all = true;
  for (const auto& name : photodyn::suite_names()) {
    const auto r = photodyn::run_suite(name, opt);
    const auto id = name.substr(0, name.find('-'));
    std::size_t ok = 0;
    for (const auto& c : r.checks) ok += c.pass ? 1 : 0;
    const bool pass = r.passed();
    all = all && pass;
    std::printf("%-4s %-4s %-14s %zu/%zu checks  %.1f s%s%s\n", id.c_str(), pass ? "PASS" : "FAIL",
                name.substr(name.find('-') + 1).c_str(), ok, r.checks.size(), r.elapsed_s,
                r.error.empty() ? "" : "  error: ", r.error.c_str());
    if (!pass)
      for (const auto& c : r.checks)
        if (!c.pass)
          std::printf("       %s: truth %.6g estimate %.6g tolerance %.3g %s\n", c.quantity.c_str(), c.truth,
                      c.estimate, c.tolerance, c.note.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
