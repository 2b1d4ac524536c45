#include "photodyn/trace_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "photodyn/errors.hpp"

namespace photodyn {

IntervalRecord classify_on_off(const BinnedTrace& trace, double bg_mean, double bg_sigma, double n_sigma) {
  if (trace.size() < 3) throw std::invalid_argument("classify_on_off: trace shorter than 3 bins");
  if (bg_sigma < 0.0) throw std::invalid_argument("classify_on_off: bg_sigma must be >= 0");
  IntervalRecord rec;
  rec.n_sigma = n_sigma;
  rec.threshold = bg_mean + n_sigma * bg_sigma;
  rec.bin_width = trace.bin_width;
  rec.total_bins = trace.size();

  const auto& c = trace.counts;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= c.size(); ++i) {
    const bool state = static_cast<double>(c[start]) > rec.threshold;
    if (i < c.size() && (static_cast<double>(c[i]) > rec.threshold) == state) continue;
    StateRun run;
    run.on = state;
    run.start_s = trace.t0 + static_cast<double>(start) * trace.bin_width;
    run.duration_s = static_cast<double>(i - start) * trace.bin_width;
    run.truncated = start == 0 || i == c.size();
    if (state) rec.on_bins += i - start;
    if (!run.truncated) (state ? rec.on_durations : rec.off_durations).push_back(run.duration_s);
    rec.runs.push_back(run);
    start = i;
  }
  return rec;
}

namespace {

// Smallest positive duration, if every duration is close to an integer
// multiple of it; otherwise 0.
double duration_quantum(std::span<const double> d) {
  const double q = *std::min_element(d.begin(), d.end());
  if (!(q > 0.0)) return 0.0;
  for (double v : d) {
    const double r = v / q;
    if (std::abs(r - std::round(r)) > 1e-6 * r) return 0.0;
  }
  return q;
}

}  // namespace

FitResult fit_interval_rate(std::span<const double> durations, const IntervalFitOptions& opt) {
  if (durations.size() < opt.min_count)
    throw InsufficientData("fit_interval_rate: " + std::to_string(durations.size()) + " durations, need " +
                           std::to_string(opt.min_count));
  for (double d : durations)
    if (!(d > 0.0)) throw std::invalid_argument("fit_interval_rate: durations must be positive");

  const double mean = std::accumulate(durations.begin(), durations.end(), 0.0) / static_cast<double>(durations.size());
  const double rate_mean = 1.0 / mean;
  const double n = static_cast<double>(durations.size());

  // Histogram for the semilog fit. Lattice-valued durations get edges
  // halfway between lattice points so each bin holds whole lattice sites.
  const double q = duration_quantum(durations);
  double w = opt.histogram_bin_width > 0.0 ? opt.histogram_bin_width : mean / 4.0;
  double origin = 0.0;
  if (q > 0.0) {
    w = std::max(q, std::round(w / q) * q);
    origin = 0.5 * q;
  }
  const double dmax = *std::max_element(durations.begin(), durations.end());
  const auto n_bins = static_cast<std::size_t>(std::floor((dmax - origin) / w)) + 1;
  std::vector<double> counts(n_bins, 0.0);
  for (double d : durations) {
    const double pos = (d - origin) / w;
    if (pos < 0.0) continue;
    counts[std::min(n_bins - 1, static_cast<std::size_t>(pos))] += 1.0;
  }

  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n_bins; ++i) {
    if (counts[i] < static_cast<double>(opt.min_entries_per_bin)) continue;
    const double x = origin + (static_cast<double>(i) + 0.5) * w;
    const double y = std::log(counts[i]);
    const double wt = counts[i];
    sw += wt;
    sx += wt * x;
    sy += wt * y;
    sxx += wt * x * x;
    sxy += wt * x * y;
    ++used;
  }

  FitResult out;
  out.n_points = static_cast<int>(durations.size());
  out.set("rate_mean", rate_mean, rate_mean / std::sqrt(n), "Hz");
  out.set("histogram_bin_width", w, 0.0, "s");
  if (used < 2) {
    // Everything sits in one histogram bin: the semilog slope is undefined.
    out.set("rate", rate_mean, rate_mean / std::sqrt(n), "Hz");
    out.flags.emplace_back("semilog_undefined");
    out.flags.emplace_back("non_exponential");
    out.converged = false;
    return out;
  }
  const double det = sw * sxx - sx * sx;
  const double slope = (sw * sxy - sx * sy) / det;
  // Count weights are inverse variances of log(counts), so the slope error
  // follows from the weighted normal equations.
  const double slope_err = std::sqrt(sw / det);
  out.set("rate", -slope, slope_err, "Hz");
  out.set("semilog_bins", static_cast<double>(used));
  out.converged = true;
  double rss = 0;
  for (std::size_t i = 0; i < n_bins; ++i) {
    if (counts[i] < static_cast<double>(opt.min_entries_per_bin)) continue;
    const double x = origin + (static_cast<double>(i) + 0.5) * w;
    const double fit_y = (sy - slope * sx) / sw + slope * x;
    rss += counts[i] * (std::log(counts[i]) - fit_y) * (std::log(counts[i]) - fit_y);
  }
  out.goodness = rss;
  const double primary = -slope;
  if (!(primary > 0.0) || std::abs(primary - rate_mean) > opt.disagreement_flag * primary)
    out.flags.emplace_back("non_exponential");
  return out;
}

OnProbability on_probability_threshold(const IntervalRecord& record, const BinnedTrace& trace) {
  OnProbability out;
  out.flags.emplace_back("threshold_biased");
  if (trace.size() == 0) return out;
  out.fraction = static_cast<double>(record.on_bins) / static_cast<double>(trace.size());
  return out;
}

}  // namespace photodyn
