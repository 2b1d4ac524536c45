#include "photodyn/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace photodyn::io {
namespace {

static_assert(std::endian::native == std::endian::little, "binary time-tag I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'P', 'T', 'T', '1'};

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

std::int64_t parse_int(const std::string& s, const std::filesystem::path& path, std::size_t line_no) {
  std::int64_t v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::ostringstream os;
    os << static_cast<long long>(v);
    return os.str();
  }
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), ptr);
}

void write_timetags_binary(const std::filesystem::path& path, const TimeTagStream& stream) {
  auto out = open_out(path, std::ios::binary);
  const auto channel = static_cast<std::uint32_t>(stream.channel());
  const auto count = static_cast<std::uint64_t>(stream.size());
  out.write(kMagic.data(), 4);
  out.write(reinterpret_cast<const char*>(&channel), sizeof channel);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (std::int64_t t : stream.timestamps()) {
    const auto u = static_cast<std::uint64_t>(t);
    out.write(reinterpret_cast<const char*>(&u), sizeof u);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TimeTagStream read_timetags_binary(const std::filesystem::path& path, std::optional<std::int64_t> duration_ticks) {
  auto in = open_in(path, std::ios::binary);
  std::array<char, 4> magic{};
  std::uint32_t channel = 0;
  std::uint64_t count = 0;
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(&channel), sizeof channel);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || magic != kMagic) throw IoError("not a PTT1 time-tag file: " + path.string());
  std::vector<std::int64_t> tags(count);
  for (auto& t : tags) {
    std::uint64_t u = 0;
    in.read(reinterpret_cast<char*>(&u), sizeof u);
    t = static_cast<std::int64_t>(u);
  }
  if (!in) throw IoError("truncated time-tag file: " + path.string());
  const std::int64_t dur = duration_ticks.value_or(tags.empty() ? 0 : tags.back());
  return TimeTagStream(std::move(tags), dur, static_cast<int>(channel));
}

void write_timetags_csv(const std::filesystem::path& path, const TimeTagStream& stream) {
  auto out = open_out(path);
  out << "timestamp_ps\n";
  for (std::int64_t t : stream.timestamps()) out << t << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

TimeTagStream read_timetags_csv(const std::filesystem::path& path, std::optional<std::int64_t> duration_ticks,
                                int channel) {
  auto in = open_in(path);
  std::string line;
  std::vector<std::int64_t> tags;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    tags.push_back(parse_int(line, path, line_no));
  }
  const std::int64_t dur = duration_ticks.value_or(tags.empty() ? 0 : tags.back());
  return TimeTagStream(std::move(tags), dur, channel);
}

void write_trace_csv(const std::filesystem::path& path, const BinnedTrace& trace) {
  auto out = open_out(path);
  out << "t_s,counts\n";
  for (std::size_t i = 0; i < trace.counts.size(); ++i)
    out << format_number(trace.t0 + trace.bin_width * static_cast<double>(i)) << ',' << trace.counts[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

BinnedTrace read_trace_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("t_s,counts", 0) != 0) throw IoError(path.string() + ":1: expected header 't_s,counts'");
  std::vector<double> times;
  BinnedTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    times.push_back(parse_double(f[0], path, line_no));
    trace.counts.push_back(parse_int(f[1], path, line_no));
  }
  if (times.empty()) throw IoError(path.string() + ": empty trace");
  trace.t0 = times.front();
  trace.bin_width = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1) : 0.0;
  return trace;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist) {
  auto out = open_out(path);
  out << "lower,upper,count\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    out << format_number(hist.edges[i]) << ',' << format_number(hist.edges[i + 1]) << ',' << hist.counts[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Histogram read_histogram_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  Histogram h;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    const double lo = parse_double(f[0], path, line_no);
    const double hi = parse_double(f[1], path, line_no);
    if (h.edges.empty()) h.edges.push_back(lo);
    h.edges.push_back(hi);
    h.counts.push_back(parse_int(f[2], path, line_no));
    h.total += h.counts.back();
  }
  return h;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spectrum) {
  auto out = open_out(path);
  out << "wavelength_nm,counts\n";
  for (std::size_t i = 0; i < spectrum.size(); ++i)
    out << format_number(spectrum.wavelengths[i]) << ',' << format_number(spectrum.counts[i]) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
  const auto t = read_table_csv(path);
  return Spectrum(t.column("wavelength_nm"), t.column("counts"));
}

void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw std::invalid_argument("write_table_csv: header/column mismatch");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != rows) throw std::invalid_argument("write_table_csv: ragged columns");
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_number(columns[j][i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

const std::vector<double>& Table::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return columns[j];
  throw IoError("table has no column '" + name + "'");
}

Table read_table_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  Table t;
  t.header = split(line, ',');
  t.columns.resize(t.header.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != t.header.size())
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                    " fields");
    for (std::size_t j = 0; j < f.size(); ++j) t.columns[j].push_back(parse_double(f[j], path, line_no));
  }
  return t;
}

}  // namespace photodyn::io
