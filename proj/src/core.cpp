#include "photodyn/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "photodyn/errors.hpp"

namespace photodyn {

TimeTagStream::TimeTagStream(std::vector<std::int64_t> timestamps_ps, std::int64_t duration_ps, int channel)
    : timestamps_(std::move(timestamps_ps)), duration_(duration_ps), channel_(channel) {
  if (duration_ < 0) throw std::invalid_argument("TimeTagStream: negative duration");
  for (std::size_t i = 0; i < timestamps_.size(); ++i) {
    if (timestamps_[i] < 0) throw std::invalid_argument("TimeTagStream: negative timestamp");
    if (i > 0 && timestamps_[i] <= timestamps_[i - 1])
      throw std::invalid_argument("TimeTagStream: timestamps must be strictly increasing");
  }
  if (!timestamps_.empty() && timestamps_.back() > duration_)
    throw std::invalid_argument("TimeTagStream: timestamp beyond duration");
}

double TimeTagStream::mean_rate() const {
  if (duration_ == 0) return 0.0;
  return static_cast<double>(timestamps_.size()) / duration_s();
}

std::int64_t BinnedTrace::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

void BinnedTrace::validate() const {
  if (!(bin_width > 0.0)) throw std::invalid_argument("BinnedTrace: bin_width must be positive");
  if (counts.empty()) throw std::invalid_argument("BinnedTrace: at least one bin required");
  if (std::any_of(counts.begin(), counts.end(), [](std::int64_t c) { return c < 0; }))
    throw std::invalid_argument("BinnedTrace: negative count");
}

Spectrum::Spectrum(std::vector<double> wavelengths_nm, std::vector<double> values)
    : wavelengths(std::move(wavelengths_nm)), counts(std::move(values)) {
  if (wavelengths.size() != counts.size()) throw std::invalid_argument("Spectrum: length mismatch");
  for (std::size_t i = 1; i < wavelengths.size(); ++i)
    if (!(wavelengths[i] > wavelengths[i - 1]))
      throw std::invalid_argument("Spectrum: wavelengths must be strictly increasing");
}

double FitResult::value(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("FitResult: no parameter '" + name + "'");
  return it->second.value;
}

double FitResult::error(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("FitResult: no parameter '" + name + "'");
  return it->second.error;
}

bool FitResult::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

void FitResult::set(const std::string& name, double value, double error, std::string unit) {
  params[name] = ParamEstimate{value, std::abs(error), std::move(unit)};
}

BinnedTrace bin_timetags(const TimeTagStream& stream, double bin_width_s) {
  if (!(bin_width_s > 0.0)) throw std::invalid_argument("bin_timetags: bin_width must be positive");
  const std::int64_t bw = seconds_to_ticks(bin_width_s);
  if (bw <= 0) throw std::invalid_argument("bin_timetags: bin_width below tick resolution");
  const auto n_bins = static_cast<std::size_t>(stream.duration_ticks() / bw);
  if (n_bins == 0) throw std::invalid_argument("bin_timetags: duration shorter than one bin");

  BinnedTrace trace;
  trace.bin_width = ticks_to_seconds(bw);
  trace.counts.assign(n_bins, 0);
  for (std::int64_t t : stream.timestamps()) {
    const auto idx = static_cast<std::size_t>(t / bw);
    if (idx < n_bins) ++trace.counts[idx];
  }
  return trace;
}

BackgroundStats background_stats(const BinnedTrace& trace, std::size_t begin, std::size_t end) {
  if (end > trace.counts.size()) end = trace.counts.size();
  if (begin >= end) throw std::invalid_argument("background_stats: empty region");
  const auto n = static_cast<double>(end - begin);
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += static_cast<double>(trace.counts[i]);
  const double mean = sum / n;
  if (end - begin == 1) return {mean, 0.0};
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double d = static_cast<double>(trace.counts[i]) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / (n - 1.0))};
}

BackgroundStats background_stats(const BinnedTrace& trace) { return background_stats(trace, 0, trace.counts.size()); }

Histogram make_histogram(std::span<const double> values, std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("make_histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("make_histogram: edges must be strictly increasing");

  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double v : values) {
    if (!(v >= edges.front()) || !(v < edges.back())) {
      ++h.ignored;
      continue;
    }
    // upper_bound gives the first edge strictly greater than v.
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    ++h.total;
  }
  return h;
}

std::vector<double> linear_edges(double lo, double hi, std::size_t n_bins) {
  if (n_bins == 0 || !(hi > lo)) throw std::invalid_argument("linear_edges: invalid range");
  std::vector<double> e(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
  return e;
}

std::vector<double> log_edges(double lo, double hi, std::size_t n_bins) {
  if (n_bins == 0 || !(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("log_edges: invalid range");
  std::vector<double> e(n_bins + 1);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i <= n_bins; ++i) e[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n_bins));
  return e;
}

std::vector<double> integer_edges(std::int64_t n_max) {
  if (n_max < 0) throw std::invalid_argument("integer_edges: negative n_max");
  std::vector<double> e(static_cast<std::size_t>(n_max) + 2);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = static_cast<double>(i) - 0.5;
  return e;
}

}  // namespace photodyn
