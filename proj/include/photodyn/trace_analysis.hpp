#pragma once

#include <span>
#include <string>
#include <vector>

#include "photodyn/core.hpp"

namespace photodyn {

struct StateRun {
  bool on = false;
  double start_s = 0.0;
  double duration_s = 0.0;
  bool truncated = false;  // touches the first or last bin
};

struct IntervalRecord {
  std::vector<double> on_durations;   // seconds, interior runs only
  std::vector<double> off_durations;  // seconds, interior runs only
  double threshold = 0.0;             // counts per bin
  double n_sigma = 3.0;
  double bin_width = 0.0;
  std::vector<StateRun> runs;  // every run, truncated ones included
  std::size_t on_bins = 0;
  std::size_t total_bins = 0;
};

/// A bin is ON iff counts > bg_mean + n_sigma * bg_sigma. Maximal runs of
/// equal state become durations; the first and last run are excluded from
/// the duration lists as censored.
IntervalRecord classify_on_off(const BinnedTrace& trace, double bg_mean, double bg_sigma, double n_sigma = 3.0);

struct IntervalFitOptions {
  std::size_t min_count = 50;
  std::size_t min_entries_per_bin = 5;
  double histogram_bin_width = 0.0;  // seconds; 0 chooses mean / 4, rounded to the duration quantum
  double disagreement_flag = 0.25;
};

/// Switching rate from interval durations. Primary value `rate` is minus the
/// slope of a count-weighted linear fit to log(histogram counts) over bins
/// with enough entries; `rate_mean` is 1 / mean(duration). Flags
/// `non_exponential` when they differ by more than 25 %.
/// Throws InsufficientData below min_count durations.
FitResult fit_interval_rate(std::span<const double> durations, const IntervalFitOptions& options = {});

struct OnProbability {
  double fraction = 0.0;
  std::vector<std::string> flags;
};

/// ON time over analyzed time, counting every bin of the trace (censored
/// boundary runs included). Always flagged `threshold_biased`.
OnProbability on_probability_threshold(const IntervalRecord& record, const BinnedTrace& trace);

}  // namespace photodyn
