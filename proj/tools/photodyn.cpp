#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "photodyn/closed_loop.hpp"
#include "photodyn/config.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/io.hpp"
#include "photodyn/parallel.hpp"
#include "photodyn/pipeline.hpp"

namespace {

enum Exit : int { ok = 0, usage = 2, io_error = 3, analysis = 4 };

std::vector<std::string> split_stages(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Maps library exceptions onto the exit-code contract.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const photodyn::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return usage;
  } catch (const photodyn::MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const photodyn::io::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return io_error;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return io_error;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const photodyn::CapExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return analysis;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emitter photodynamics simulator and analysis pipeline"};
  app.set_version_flag("--version", std::string(PHOTODYN_VERSION));
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: PHOTODYN_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "Simulate a configured protocol into a run directory");
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  sim->add_option("-c,--config", config_path, "TOML config")->required();
  sim->add_option("-o,--out", out_dir, "Run directory (default: output_dir from the config)");
  sim->add_option("--seed", seed, "Master seed (overrides the config)");

  auto* ana = app.add_subcommand("analyze", "Run analysis stages on a run directory");
  std::string run_dir, stages;
  ana->add_option("dir", run_dir, "Run directory")->required();
  ana->add_option("--stages", stages, "Comma-separated stages (default: config, else per protocol)");

  auto* cl = app.add_subcommand("closed-loop", "Simulate with known truth and check parameter recovery");
  std::string suite;
  std::string cl_out;
  std::uint64_t cl_seed = photodyn::ClosedLoopOptions{}.seed;
  cl->add_option("suite", suite, "Suite name or 'all'")->required();
  cl->add_option("-o,--out", cl_out, "Write each suite's data and fits below this directory");
  cl->add_option("--seed", cl_seed, "Master seed");

  auto* rep = app.add_subcommand("report", "Collect results and write plot-ready CSVs");
  rep->add_option("dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }
  if (threads > 0) photodyn::thread_override() = threads;

  if (*sim) {
    return guarded([&] {
      const auto cfg = photodyn::load_config(config_path);
      std::filesystem::path dir;
      if (!out_dir.empty())
        dir = out_dir;
      else if (cfg.output_dir)
        dir = *cfg.output_dir;
      else
        throw std::invalid_argument("no run directory: pass -o DIR or set output_dir in the config");
      const auto files = photodyn::simulate_run(cfg, dir, seed);
      for (const auto& f : files) std::cout << (dir / f).string() << '\n';
      return static_cast<int>(ok);
    });
  }
  if (*ana) {
    return guarded([&] {
      const auto results = photodyn::analyze_run(run_dir, split_stages(stages));
      bool missing = false, failed = false;
      for (const auto& r : results) {
        if (r.ok) {
          std::cout << r.stage << ": ok\n";
        } else {
          std::cerr << r.stage << ": " << (r.missing_input ? "missing input: " : "failed: ") << r.error << '\n';
          (r.missing_input ? missing : failed) = true;
        }
      }
      return static_cast<int>(missing ? usage : failed ? analysis : ok);
    });
  }
  if (*cl) {
    if (suite != "all" && !photodyn::has_suite(suite)) {
      std::cerr << "unknown suite '" << suite << "'; known suites:";
      for (const auto& n : photodyn::suite_names()) std::cerr << ' ' << n;
      std::cerr << " all\n";
      return usage;
    }
    return guarded([&] {
      photodyn::ClosedLoopOptions opt;
      opt.seed = cl_seed;
      if (!cl_out.empty()) opt.output_dir = cl_out;
      const auto reports = photodyn::run_suites(suite, opt);
      std::cout << photodyn::reports_to_json(reports) << '\n';
      bool all = true;
      for (const auto& r : reports) all = all && r.passed();
      return static_cast<int>(all ? ok : analysis);
    });
  }
  if (*rep) {
    return guarded([&] {
      for (const auto& f : photodyn::report_run(run_dir)) std::cout << (std::filesystem::path(run_dir) / f).string() << '\n';
      return static_cast<int>(ok);
    });
  }
  return usage;
}
