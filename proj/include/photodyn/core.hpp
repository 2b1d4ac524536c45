#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace photodyn {

/// Time-tag resolution: one tick is one picosecond.
constexpr double kTicksPerSecond = 1e12;
constexpr double kTicksPerNs = 1e3;

inline std::int64_t seconds_to_ticks(double s) { return static_cast<std::int64_t>(s * kTicksPerSecond + 0.5); }
inline double ticks_to_seconds(std::int64_t t) { return static_cast<double>(t) / kTicksPerSecond; }
inline double ticks_to_ns(std::int64_t t) { return static_cast<double>(t) / kTicksPerNs; }

/// Ordered photon detection times in integer picosecond ticks.
///
/// Timestamps are strictly increasing and never exceed the acquisition
/// duration. The stream is immutable once constructed.
class TimeTagStream {
 public:
  TimeTagStream() = default;
  TimeTagStream(std::vector<std::int64_t> timestamps_ps, std::int64_t duration_ps, int channel = 0);

  [[nodiscard]] std::span<const std::int64_t> timestamps() const { return timestamps_; }
  [[nodiscard]] std::int64_t duration_ticks() const { return duration_; }
  [[nodiscard]] double duration_s() const { return ticks_to_seconds(duration_); }
  [[nodiscard]] int channel() const { return channel_; }
  [[nodiscard]] std::size_t size() const { return timestamps_.size(); }
  [[nodiscard]] bool empty() const { return timestamps_.empty(); }
  /// Mean detected rate in counts per second.
  [[nodiscard]] double mean_rate() const;

  bool operator==(const TimeTagStream&) const = default;

 private:
  std::vector<std::int64_t> timestamps_;
  std::int64_t duration_ = 0;
  int channel_ = 0;
};

/// Counts per fixed-width time bin.
struct BinnedTrace {
  double bin_width = 0.0;  // seconds
  std::vector<std::int64_t> counts;
  double t0 = 0.0;  // seconds

  [[nodiscard]] std::size_t size() const { return counts.size(); }
  [[nodiscard]] double duration() const { return bin_width * static_cast<double>(counts.size()); }
  [[nodiscard]] std::int64_t total() const;
  void validate() const;

  bool operator==(const BinnedTrace&) const = default;
};

struct Histogram {
  std::vector<double> edges;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  std::int64_t ignored = 0;  // values outside [edges.front(), edges.back())

  [[nodiscard]] std::size_t size() const { return counts.size(); }
  [[nodiscard]] double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
  [[nodiscard]] double width(std::size_t i) const { return edges[i + 1] - edges[i]; }
};

struct Spectrum {
  std::vector<double> wavelengths;  // nm, strictly increasing
  std::vector<double> counts;

  Spectrum() = default;
  Spectrum(std::vector<double> wavelengths_nm, std::vector<double> values);
  [[nodiscard]] std::size_t size() const { return wavelengths.size(); }
};

struct ParamEstimate {
  double value = 0.0;
  double error = 0.0;
  std::string unit;
};

enum class GoodnessKind { residual_sum_of_squares, log_likelihood };

struct FitResult {
  std::map<std::string, ParamEstimate> params;
  double goodness = 0.0;
  GoodnessKind goodness_kind = GoodnessKind::residual_sum_of_squares;
  bool converged = false;
  int n_points = 0;
  std::vector<std::string> flags;

  [[nodiscard]] double value(const std::string& name) const;
  [[nodiscard]] double error(const std::string& name) const;
  [[nodiscard]] bool has_flag(const std::string& flag) const;
  void set(const std::string& name, double value, double error = 0.0, std::string unit = {});
};

/// Counts timestamps into bins [i*bw, (i+1)*bw) from t = 0. The trailing
/// partial bin is dropped, so floor(duration / bw) bins are produced.
BinnedTrace bin_timetags(const TimeTagStream& stream, double bin_width_s);

struct BackgroundStats {
  double mean = 0.0;   // counts per bin
  double sigma = 0.0;  // sample standard deviation, counts per bin
};

/// Sample mean and sample standard deviation over bins [begin, end).
BackgroundStats background_stats(const BinnedTrace& trace, std::size_t begin, std::size_t end);
BackgroundStats background_stats(const BinnedTrace& trace);

/// Left-closed binning; the last bin is also left-closed, values equal to
/// the final edge are counted as out of range.
Histogram make_histogram(std::span<const double> values, std::span<const double> edges);

std::vector<double> linear_edges(double lo, double hi, std::size_t n_bins);
std::vector<double> log_edges(double lo, double hi, std::size_t n_bins);
/// Unit-width bins centred on the integers 0..n_max.
std::vector<double> integer_edges(std::int64_t n_max);

}  // namespace photodyn
