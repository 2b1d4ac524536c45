#include "photodyn/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "photodyn/parallel.hpp"
#include "photodyn/random.hpp"

namespace photodyn {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

TraceEngine make_engine(const EmitterModel& model, const DetectionModel& detection, std::uint64_t seed,
                        const std::optional<EnvState>& initial) {
  return initial ? TraceEngine(model, detection, seed, *initial) : TraceEngine(model, detection, seed);
}

LaserDrive lasers_off(LaserDrive d) {
  d.p_res_uw = 0.0;
  d.p_blue_uw = 0.0;
  d.p_green_uw = 0.0;
  d.mw.on = false;
  return d;
}

double gaussian_density(double x, double c, double s) {
  return std::exp(-0.5 * (x - c) * (x - c) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

void validate(const TraceProtocol& p) {
  require(p.duration_s >= p.bin_width_s && p.bin_width_s > 0.0, "trace protocol: need duration >= bin_width > 0");
}

void validate(const TimetagProtocol& p) {
  require(p.duration_s > 0.0 && p.max_expected_events > 0.0, "timetag protocol: need a positive duration and event cap");
}

void validate(const SaturationProtocol& p) {
  require(!p.powers_uw.empty(), "saturation protocol: empty power sweep");
  require(std::is_sorted(p.powers_uw.begin(), p.powers_uw.end()), "saturation protocol: powers must be increasing");
  require(p.dwell_s >= p.bin_width_s && p.bin_width_s > 0.0 && p.background_s >= p.bin_width_s,
          "saturation protocol: dwell and background must cover at least one positive bin");
}

void validate(const PleProtocol& p) {
  require(p.step_ghz > 0.0 && p.stop_ghz > p.start_ghz, "PLE protocol: need start < stop and a positive step");
  require(p.dwell_s > 0.0 && p.scans >= 1, "PLE protocol: need positive dwell and at least one scan");
}

void validate(const PumpProbeProtocol& p) {
  require(!p.delays_s.empty(), "pump-probe protocol: empty delay list");
  require(std::is_sorted(p.delays_s.begin(), p.delays_s.end()), "pump-probe protocol: delays must be increasing");
  require(p.repetitions >= 1 && p.readout_s >= p.bin_width_s, "pump-probe protocol: invalid readout or repetitions");
}

void validate(const OdmrProtocol& p) {
  require(!p.freqs_ghz.empty(), "ODMR protocol: empty frequency sweep");
  require(std::is_sorted(p.freqs_ghz.begin(), p.freqs_ghz.end()), "ODMR protocol: frequencies must be increasing");
  require(p.dwell_s > 0.0 && p.interleave >= 1, "ODMR protocol: need positive dwell and interleave >= 1");
}

void validate(const AngleProtocol& p) {
  require(!p.angles_deg.empty(), "angle protocol: empty angle sweep");
  require(std::is_sorted(p.angles_deg.begin(), p.angles_deg.end()), "angle protocol: angles must be increasing");
  require(p.dwell_s > 0.0, "angle protocol: dwell must be positive");
}

void validate(const SpectraProtocol& p) {
  require(p.frames >= 1 && p.frame_s > 0.0, "spectra protocol: need frames >= 1 and a positive frame time");
  require(p.grid_step_nm > 0.0 && p.grid_stop_nm > p.grid_start_nm, "spectra protocol: invalid wavelength grid");
}

void validate_protocol(const Protocol& protocol) {
  std::visit([](const auto& p) { validate(p); }, protocol);
}

TraceRecord run_trace(const EmitterModel& model, const DetectionModel& detection, const TraceProtocol& p,
                      std::uint64_t seed) {
  validate(p);
  TraceRecord out;
  TraceOptions opt;
  opt.burn_in_s = p.burn_in_s;
  opt.initial = p.initial;
  out.trace = simulate_trace_detailed(model, detection, p.drive, p.duration_s, p.bin_width_s, substream_seed(seed, 0), opt);
  if (p.background_s > 0.0)
    out.background = simulate_trace(model, detection, lasers_off(p.drive), p.background_s, p.bin_width_s, substream_seed(seed, 1));
  return out;
}

TimeTagStream run_timetags(const EmitterModel& model, const DetectionModel& detection, const TimetagProtocol& p,
                           std::uint64_t seed) {
  validate(p);
  TimetagOptions opt;
  opt.max_expected_events = p.max_expected_events;
  opt.initial = p.initial;
  return simulate_timetags(model, detection, p.drive, p.duration_s, substream_seed(seed, 0), opt);
}

SaturationRecord run_saturation(const EmitterModel& model, const DetectionModel& detection,
                                const SaturationProtocol& p, std::uint64_t seed) {
  validate(p);
  const std::size_t n = p.powers_uw.size();

  SaturationRecord out;
  out.bin_width_s = p.bin_width_s;
  const auto bg = simulate_trace(model, detection, lasers_off(p.drive), p.background_s, p.bin_width_s, substream_seed(seed, n));
  const auto stats = background_stats(bg);
  out.bg_mean = stats.mean;
  out.bg_sigma = stats.sigma;
  const double threshold = stats.mean + p.n_sigma * stats.sigma;

  out.points.resize(n);
  parallel_for(n, [&](std::size_t i) {
    LaserDrive d = p.drive;
    d.p_res_uw = p.powers_uw[i];
    auto engine = make_engine(model, detection, substream_seed(seed, i), p.initial);
    const auto rec = engine.record(d, p.dwell_s, p.bin_width_s);
    double sum = 0.0, sum2 = 0.0, all = 0.0;
    std::size_t on = 0;
    for (auto c : rec.trace.counts) {
      const auto v = static_cast<double>(c);
      all += v;
      if (v > threshold) {
        sum += v;
        sum2 += v * v;
        ++on;
      }
    }
    SaturationPoint& pt = out.points[i];
    pt.power_uw = p.powers_uw[i];
    pt.mean_rate_cps = all / rec.trace.duration();
    pt.on_fraction = static_cast<double>(on) / static_cast<double>(rec.trace.size());
    if (on > 0) {
      const double m = sum / static_cast<double>(on);
      const double var = on > 1 ? (sum2 - static_cast<double>(on) * m * m) / static_cast<double>(on - 1) : m;
      pt.on_rate_cps = (m - stats.mean) / p.bin_width_s;
      pt.on_rate_err_cps = std::sqrt(std::max(var, 1.0) / static_cast<double>(on)) / p.bin_width_s;
    }
  });
  return out;
}

PleRecord run_ple(const EmitterModel& model, const DetectionModel& detection, const PleProtocol& p,
                  std::uint64_t seed) {
  validate(p);
  PleRecord out;
  const auto n_steps = static_cast<std::size_t>(std::floor((p.stop_ghz - p.start_ghz) / p.step_ghz + 1e-9)) + 1;
  for (std::size_t k = 0; k < n_steps; ++k) out.detunings_ghz.push_back(p.start_ghz + static_cast<double>(k) * p.step_ghz);
  out.scans.resize(static_cast<std::size_t>(p.scans));
  parallel_for(out.scans.size(), [&](std::size_t s) {
    auto engine = make_engine(model, detection, substream_seed(seed, 0, s), p.initial);
    LaserDrive d = p.drive;
    auto& counts = out.scans[s];
    counts.resize(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
      d.detuning_laser_ghz = out.detunings_ghz[k];
      const auto integral = engine.integrate(d, p.dwell_s);
      counts[k] = engine.sample_counts(integral.expected_counts);
    }
  });
  return out;
}

std::vector<double> ple_peak_positions(const PleRecord& record) {
  std::vector<double> peaks;
  for (const auto& scan : record.scans) {
    const auto it = std::max_element(scan.begin(), scan.end());
    if (it == scan.end() || *it == 0) continue;
    peaks.push_back(record.detunings_ghz[static_cast<std::size_t>(it - scan.begin())]);
  }
  return peaks;
}

std::vector<std::vector<double>> run_sequence(const EmitterModel& model, const DetectionModel& detection,
                                              const PulseSequence& sequence, double bin_width_s, std::uint64_t seed,
                                              std::optional<EnvState> initial) {
  sequence.validate();
  require(bin_width_s > 0.0, "pulse sequence: bin width must be positive");
  auto engine = make_engine(model, detection, seed, initial);
  std::vector<std::vector<double>> sums;
  for (const auto& seg : sequence.segments)
    if (seg.record) sums.emplace_back(static_cast<std::size_t>(std::floor(seg.duration_s / bin_width_s * (1.0 + 1e-12))), 0.0);
  for (int r = 0; r < sequence.repeat; ++r) {
    std::size_t k = 0;
    for (const auto& seg : sequence.segments) {
      if (!seg.record) {
        engine.advance(seg.drive, seg.duration_s);
        continue;
      }
      const auto rec = engine.record(seg.drive, seg.duration_s, bin_width_s);
      auto& acc = sums[k++];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(rec.trace.counts[i]);
    }
  }
  for (auto& acc : sums)
    for (auto& v : acc) v /= sequence.repeat;
  return sums;
}

std::vector<Transient> run_pump_probe(const EmitterModel& model, const DetectionModel& detection,
                                      const PumpProbeProtocol& p, std::uint64_t seed) {
  validate(p);
  std::vector<Transient> out(p.delays_s.size());
  parallel_for(out.size(), [&](std::size_t i) {
    PulseSequence seq;
    seq.segments = {{p.pump, p.pump_s, false}, {p.dark, p.delays_s[i], false}, {p.probe, p.readout_s, true}};
    seq.repeat = p.repetitions;
    auto sums = run_sequence(model, detection, seq, p.bin_width_s, substream_seed(seed, i), p.initial);
    out[i].delay_s = p.delays_s[i];
    out[i].bin_width_s = p.bin_width_s;
    out[i].counts = std::move(sums.front());
  });
  return out;
}

OdmrRecord run_odmr(const EmitterModel& model, const DetectionModel& detection, const OdmrProtocol& p,
                    std::uint64_t seed) {
  validate(p);
  const std::size_t n = p.freqs_ghz.size();
  OdmrRecord out;
  out.freqs_ghz = p.freqs_ghz;
  out.counts_on.assign(n, 0.0);
  out.counts_off.assign(n, 0.0);
  out.signal.assign(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    auto engine = make_engine(model, detection, substream_seed(seed, i), p.initial);
    LaserDrive on = p.drive, off = p.drive;
    on.mw.on = true;
    on.mw.freq_ghz = p.freqs_ghz[i];
    off.mw.on = false;
    const double chunk = p.dwell_s / p.interleave;
    engine.advance(off, std::min(chunk, 0.05));
    for (int k = 0; k < p.interleave; ++k) {
      out.counts_on[i] += static_cast<double>(engine.sample_counts(engine.integrate(on, chunk).expected_counts));
      out.counts_off[i] += static_cast<double>(engine.sample_counts(engine.integrate(off, chunk).expected_counts));
    }
    out.signal[i] = out.counts_off[i] > 0.0 ? out.counts_on[i] / out.counts_off[i] : 1.0;
  });
  return out;
}

AngleRecord run_angle(const EmitterModel& model, const DetectionModel& detection, const AngleProtocol& p,
                      std::uint64_t seed) {
  validate(p);
  AngleRecord out;
  out.angles_deg = p.angles_deg;
  out.rate_cps.assign(p.angles_deg.size(), 0.0);
  parallel_for(p.angles_deg.size(), [&](std::size_t i) {
    auto engine = make_engine(model, detection, substream_seed(seed, i), p.initial);
    LaserDrive d = p.drive;
    d.theta_deg = p.angles_deg[i];
    engine.advance(d, std::min(0.05, p.dwell_s));
    const auto integral = engine.integrate(d, p.dwell_s);
    out.rate_cps[i] = static_cast<double>(engine.sample_counts(integral.expected_counts)) / p.dwell_s;
  });
  return out;
}

SpectraRecord run_spectra(const EmitterModel& model, const DetectionModel& detection, const SpectraProtocol& p,
                          std::uint64_t seed) {
  validate(p);
  std::vector<double> grid;
  for (double wl = p.grid_start_nm; wl <= p.grid_stop_nm + 1e-9; wl += p.grid_step_nm) grid.push_back(wl);

  constexpr double c_nm_thz = 299792.458;
  const double acoustic_nm = c_nm_thz / (c_nm_thz / p.zpl1_nm - p.acoustic_psb_thz);
  const double zpl2_nm = p.zpl1_nm + p.zpl2_offset_nm;
  const double dw = model.debye_waller;
  const double optical_share = (1.0 - p.acoustic_psb_fraction) / static_cast<double>(std::max<std::size_t>(1, p.optical_psb_nm.size()));
  // Per-pixel fractions of each emission branch.
  std::vector<double> zpl1(grid.size()), zpl2(grid.size()), psb(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    zpl1[i] = gaussian_density(grid[i], p.zpl1_nm, p.zpl_sigma_nm) * p.grid_step_nm;
    zpl2[i] = gaussian_density(grid[i], zpl2_nm, p.zpl_sigma_nm) * p.grid_step_nm;
    double s = p.acoustic_psb_fraction * gaussian_density(grid[i], acoustic_nm, p.acoustic_psb_sigma_nm);
    for (double c : p.optical_psb_nm) s += optical_share * gaussian_density(grid[i], c, p.optical_psb_sigma_nm);
    psb[i] = s * p.grid_step_nm;
  }

  SpectraRecord out;
  auto engine = make_engine(model, detection, substream_seed(seed, 0), p.initial);
  for (int f = 0; f < p.frames; ++f) {
    const auto integral = engine.integrate(p.drive, p.frame_s);
    const double c1 = integral.pathway_counts[0] * p.counts_scale;
    const double c2 = integral.pathway_counts[1] * p.counts_scale;
    std::vector<double> counts(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double mean = dw * (c1 * zpl1[i] + c2 * zpl2[i]) + (1.0 - dw) * (c1 + c2) * psb[i];
      counts[i] = static_cast<double>(engine.sample_counts(mean));
    }
    out.frames.emplace_back(grid, std::move(counts));
    out.pathway_counts.push_back(integral.pathway_counts);
  }
  return out;
}

std::string protocol_name(const Protocol& p) {
  static const char* names[] = {"trace", "timetags", "saturation", "ple", "pump_probe", "odmr", "angle", "spectra"};
  return names[p.index()];
}

}  // namespace photodyn
