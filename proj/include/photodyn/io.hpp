#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "photodyn/core.hpp"

namespace photodyn::io {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Binary time-tag format: 16-byte little-endian header
//   bytes 0..3   magic "PTT1"
//   bytes 4..7   u32 channel
//   bytes 8..15  u64 tag count
// followed by `count` u64 timestamps in picosecond ticks. The duration is not part of
// the format; readers take it from the caller (run manifest) or fall back to
// the last timestamp.
void write_timetags_binary(const std::filesystem::path& path, const TimeTagStream& stream);
TimeTagStream read_timetags_binary(const std::filesystem::path& path, std::optional<std::int64_t> duration_ticks = {});

// One timestamp (ps ticks) per line, preceded by a `timestamp_ps` header line.
void write_timetags_csv(const std::filesystem::path& path, const TimeTagStream& stream);
TimeTagStream read_timetags_csv(const std::filesystem::path& path, std::optional<std::int64_t> duration_ticks = {},
                                int channel = 0);

// Header: t_s,counts
void write_trace_csv(const std::filesystem::path& path, const BinnedTrace& trace);
BinnedTrace read_trace_csv(const std::filesystem::path& path);

// Header: lower,upper,count
void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist);
Histogram read_histogram_csv(const std::filesystem::path& path);

// Header: wavelength_nm,counts
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spectrum);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

/// Generic numeric table writer; values are printed with 17 significant digits
/// so repeated runs produce byte-identical files.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
  [[nodiscard]] const std::vector<double>& column(const std::string& name) const;
};
Table read_table_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace photodyn::io
