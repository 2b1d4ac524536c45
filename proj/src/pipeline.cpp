#include "photodyn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "photodyn/correlation.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/fit.hpp"
#include "photodyn/io.hpp"
#include "photodyn/photon_stats.hpp"
#include "photodyn/trace_analysis.hpp"

namespace photodyn {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "run.json";
constexpr const char* kConfigCopy = "config.toml";
constexpr const char* kTimetags = "timetags.ptt";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw io::IoError("cannot read '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  out << data;
  if (!out) throw io::IoError("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw io::IoError(p.string() + ": " + e.what());
  }
}

// Non-finite numbers become null so the files stay valid JSON.
json num(double v) { return std::isfinite(v) ? json(v) : json(); }

json fit_json(const FitResult& f) {
  json params = json::object();
  for (const auto& [name, p] : f.params) params[name] = {{"value", num(p.value)}, {"error", num(p.error)}, {"unit", p.unit}};
  return {{"params", params},
          {"goodness", num(f.goodness)},
          {"goodness_kind", f.goodness_kind == GoodnessKind::log_likelihood ? "log_likelihood" : "residual_sum_of_squares"},
          {"converged", f.converged},
          {"n_points", f.n_points},
          {"flags", f.flags}};
}

FitResult fit_from_json(const json& j) {
  FitResult f;
  for (const auto& [name, p] : j.at("params").items()) {
    const double v = p.at("value").is_null() ? std::nan("") : p.at("value").get<double>();
    const double e = p.at("error").is_null() ? std::nan("") : p.at("error").get<double>();
    f.set(name, v, e, p.value("unit", ""));
  }
  f.converged = j.value("converged", false);
  return f;
}

std::vector<double> to_double(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

// ---- raw files ----------------------------------------------------------------

struct RawWriter {
  fs::path dir;
  std::vector<std::string> files;

  void table(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& columns) {
    io::write_table_csv(dir / name, header, columns);
    files.push_back(name);
  }
  void trace(const std::string& name, const BinnedTrace& t) {
    io::write_trace_csv(dir / name, t);
    files.push_back(name);
  }
  void js(const std::string& name, const json& j) {
    write_json(dir / name, j);
    files.push_back(name);
  }
};

json simulate_protocol(const RunConfig& c, std::uint64_t seed, RawWriter& w) {
  const auto& m = c.model;
  const auto& d = c.detection;
  json extra = json::object();
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TraceProtocol>) {
          const auto rec = run_trace(m, d, p, seed);
          w.trace("trace.csv", rec.trace.trace);
          if (rec.background) w.trace("background.csv", *rec.background);
          const auto& t = rec.trace.truth;
          w.js("truth.json", {{"duty", t.duty},
                              {"emitter_bin_fraction", t.emitter_bin_fraction},
                              {"active", t.active},
                              {"active_bin_fraction", t.active_bin_fraction}});
        } else if constexpr (std::is_same_v<P, TimetagProtocol>) {
          const auto tags = run_timetags(m, d, p, seed);
          io::write_timetags_binary(w.dir / kTimetags, tags);
          w.files.push_back(kTimetags);
          extra["duration_ticks"] = tags.duration_ticks();
        } else if constexpr (std::is_same_v<P, SaturationProtocol>) {
          const auto rec = run_saturation(m, d, p, seed);
          std::vector<std::vector<double>> cols(5);
          for (const auto& pt : rec.points) {
            cols[0].push_back(pt.power_uw);
            cols[1].push_back(pt.on_rate_cps);
            cols[2].push_back(pt.on_rate_err_cps);
            cols[3].push_back(pt.mean_rate_cps);
            cols[4].push_back(pt.on_fraction);
          }
          w.table("saturation.csv", {"power_uw", "on_rate_cps", "on_rate_err_cps", "mean_rate_cps", "on_fraction"}, cols);
          extra["background_counts_per_bin"] = {{"mean", rec.bg_mean}, {"sigma", rec.bg_sigma}};
        } else if constexpr (std::is_same_v<P, PleProtocol>) {
          const auto rec = run_ple(m, d, p, seed);
          std::vector<std::vector<double>> cols(3);
          for (std::size_t s = 0; s < rec.scans.size(); ++s)
            for (std::size_t k = 0; k < rec.detunings_ghz.size(); ++k) {
              cols[0].push_back(static_cast<double>(s));
              cols[1].push_back(rec.detunings_ghz[k]);
              cols[2].push_back(static_cast<double>(rec.scans[s][k]));
            }
          w.table("ple.csv", {"scan", "detuning_ghz", "counts"}, cols);
        } else if constexpr (std::is_same_v<P, PumpProbeProtocol>) {
          const auto rec = run_pump_probe(m, d, p, seed);
          std::vector<std::vector<double>> cols(3);
          for (const auto& t : rec)
            for (std::size_t k = 0; k < t.counts.size(); ++k) {
              cols[0].push_back(t.delay_s);
              cols[1].push_back(t.bin_width_s * static_cast<double>(k));
              cols[2].push_back(t.counts[k]);
            }
          w.table("pump_probe.csv", {"delay_s", "t_s", "counts"}, cols);
        } else if constexpr (std::is_same_v<P, OdmrProtocol>) {
          const auto rec = run_odmr(m, d, p, seed);
          w.table("odmr.csv", {"freq_ghz", "counts_on", "counts_off", "signal"},
                  {rec.freqs_ghz, rec.counts_on, rec.counts_off, rec.signal});
        } else if constexpr (std::is_same_v<P, AngleProtocol>) {
          const auto rec = run_angle(m, d, p, seed);
          w.table("angle.csv", {"angle_deg", "rate_cps"}, {rec.angles_deg, rec.rate_cps});
        } else if constexpr (std::is_same_v<P, SpectraProtocol>) {
          const auto rec = run_spectra(m, d, p, seed);
          std::vector<std::vector<double>> cols(3), truth(3);
          for (std::size_t f = 0; f < rec.frames.size(); ++f) {
            const auto& fr = rec.frames[f];
            for (std::size_t i = 0; i < fr.size(); ++i) {
              cols[0].push_back(static_cast<double>(f));
              cols[1].push_back(fr.wavelengths[i]);
              cols[2].push_back(fr.counts[i]);
            }
            truth[0].push_back(static_cast<double>(f));
            truth[1].push_back(rec.pathway_counts[f][0]);
            truth[2].push_back(rec.pathway_counts[f][1]);
          }
          w.table("spectra.csv", {"frame", "wavelength_nm", "counts"}, cols);
          w.table("spectra_truth.csv", {"frame", "pathway1_counts", "pathway2_counts"}, truth);
        }
      },
      c.protocol);
  return extra;
}

// ---- analysis stages ------------------------------------------------------------

struct Run {
  fs::path dir;
  json manifest;
  RunConfig config;

  [[nodiscard]] fs::path raw(const std::string& name) const {
    const auto p = dir / name;
    if (!fs::exists(p)) throw MissingInput("missing input '" + p.string() + "'");
    return p;
  }
  [[nodiscard]] fs::path out(const std::string& name) const { return dir / "analysis" / name; }
};

using Files = std::vector<std::string>;

std::vector<Spectrum> read_frames(const Run& r) {
  const auto t = io::read_table_csv(r.raw("spectra.csv"));
  const auto& frame = t.column("frame");
  const auto& wl = t.column("wavelength_nm");
  const auto& counts = t.column("counts");
  std::vector<Spectrum> frames;
  std::size_t i = 0;
  while (i < frame.size()) {
    std::vector<double> x, y;
    const double f = frame[i];
    for (; i < frame.size() && frame[i] == f; ++i) {
      x.push_back(wl[i]);
      y.push_back(counts[i]);
    }
    frames.emplace_back(std::move(x), std::move(y));
  }
  return frames;
}

json rate_json(const std::vector<double>& durations, const IntervalFitOptions& opt) {
  try {
    const auto f = fit_interval_rate(durations, opt);
    return fit_json(f);
  } catch (const InsufficientData& e) {
    return {{"error", e.what()}, {"n", durations.size()}};
  }
}

Files stage_intervals(const Run& r, const StageSpec& st) {
  const auto trace = io::read_trace_csv(r.raw("trace.csv"));
  const auto bg_trace = io::read_trace_csv(r.raw("background.csv"));
  const auto bg = background_stats(bg_trace);
  const double n_sigma = st.number("n_sigma", 3.0);
  const auto rec = classify_on_off(trace, bg.mean, bg.sigma, n_sigma);
  std::vector<std::vector<double>> cols(4);
  for (const auto& run : rec.runs) {
    cols[0].push_back(run.on ? 1.0 : 0.0);
    cols[1].push_back(run.start_s);
    cols[2].push_back(run.duration_s);
    cols[3].push_back(run.truncated ? 1.0 : 0.0);
  }
  io::write_table_csv(r.out("intervals.csv"), {"on", "start_s", "duration_s", "truncated"}, cols);
  IntervalFitOptions opt;
  opt.min_count = static_cast<std::size_t>(st.number("min_count", 50.0));
  opt.histogram_bin_width = st.number("histogram_bin_width_s", 0.0);
  const auto on_p = on_probability_threshold(rec, trace);
  write_json(r.out("rates.json"),
             {{"n_sigma", n_sigma},
              {"threshold_counts", rec.threshold},
              {"background", {{"mean", bg.mean}, {"sigma", bg.sigma}}},
              {"on_bins", rec.on_bins},
              {"total_bins", rec.total_bins},
              {"n_on_intervals", rec.on_durations.size()},
              {"n_off_intervals", rec.off_durations.size()},
              // ON durations end in an off switch and vice versa.
              {"off_rate", rate_json(rec.on_durations, opt)},
              {"on_rate", rate_json(rec.off_durations, opt)},
              {"on_probability", {{"value", on_p.fraction}, {"flags", on_p.flags}}}});
  return {"analysis/intervals.csv", "analysis/rates.json"};
}

Files stage_mixture(const Run& r, const StageSpec& st) {
  const auto trace = io::read_trace_csv(r.raw("trace.csv"));
  const auto hist = count_histogram(trace);
  std::vector<double> grid;
  if (auto l = st.list("lambda_max")) {
    grid = *l;
  } else {
    // Around the upper tail of the count distribution.
    std::vector<std::int64_t> sorted = trace.counts;
    std::sort(sorted.begin(), sorted.end());
    const double q = std::max(1.0, static_cast<double>(sorted[static_cast<std::size_t>(0.999 * static_cast<double>(sorted.size() - 1))]));
    const double lo = st.number("grid_lo", 0.5) * q, hi = st.number("grid_hi", 1.5) * q;
    const int n = std::max(2, static_cast<int>(st.number("grid_points", 11)));
    for (int i = 0; i < n; ++i) grid.push_back(lo + (hi - lo) * i / (n - 1));
  }
  MixtureOptions opt;
  opt.J = static_cast<int>(st.number("J", 64));
  opt.pushforward_width = st.number("pushforward_width", 2.0);
  const auto mode = weight_mode_from_string(st.string("weight_mode", "uniform"));
  const auto sel = select_lambda_max(hist, grid, mode, opt);
  const auto cmp = compare_pmf(hist, sel.best.params);
  json curve = json::array();
  std::vector<std::vector<double>> bic(4);
  for (const auto& b : sel.curve) {
    curve.push_back({{"lambda_max", b.lambda_max}, {"bic", num(b.bic)}, {"log_likelihood", num(b.log_likelihood)},
                     {"p_e", num(b.p_e)}, {"ok", b.ok}});
    bic[0].push_back(b.lambda_max);
    bic[1].push_back(b.bic);
    bic[2].push_back(b.log_likelihood);
    bic[3].push_back(b.p_e);
  }
  const auto pe = on_fraction(sel.best);
  write_json(r.out("mixture_fit.json"),
             {{"lambda_max", sel.best.params.lambda_max},
              {"weight_mode", std::string(to_string(mode))},
              {"J", sel.best.params.J},
              {"fit", fit_json(sel.best.fit)},
              {"log_likelihood", sel.best.log_likelihood},
              {"n_bins", sel.best.n_bins},
              {"on_fraction", {{"value", pe.value}, {"error", num(pe.error)}}},
              {"bic_curve", curve},
              {"pmf_chi2", {{"chi2", cmp.chi2}, {"dof", cmp.dof}, {"p_value", num(cmp.p_value)}}}});
  std::vector<double> n(cmp.model.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = static_cast<double>(i);
  io::write_table_csv(r.out("pmf_compare.csv"), {"n", "empirical", "model"}, {n, cmp.empirical, cmp.model});
  io::write_table_csv(r.out("bic_curve.csv"), {"lambda_max", "bic", "log_likelihood", "p_e"}, bic);
  return {"analysis/mixture_fit.json", "analysis/pmf_compare.csv", "analysis/bic_curve.csv"};
}

Files stage_g2(const Run& r, const StageSpec& st) {
  const auto ticks = r.manifest.value("duration_ticks", std::int64_t{0});
  const auto tags = io::read_timetags_binary(r.raw(kTimetags), ticks > 0 ? std::optional<std::int64_t>(ticks) : std::nullopt);
  const auto curve = g2_histogram(tags, st.number("max_lag_ns", 20.0), st.number("bin_width_ns", 0.1));
  io::write_table_csv(r.out("g2.csv"), {"lag_ns", "g2", "g2_err", "coincidences"},
                      {curve.lags_ns, curve.values, curve.errors(), to_double(curve.raw)});
  G2FitOptions fo;
  fo.fit_bunching = st.number("fit_bunching", 0.0) != 0.0;
  fo.tau_guess_ns = st.number("tau_guess_ns", 1.26);
  const auto fit = fit_g2(curve, fo);
  json j = {{"antibunching", fit_json(fit.antibunching)},
            {"rss_antibunching", fit.rss_antibunching},
            {"flags", fit.flags},
            {"n_tags", tags.size()},
            {"mean_rate_cps", tags.mean_rate()}};
  if (fit.bunching) j["bunching"] = fit_json(*fit.bunching);
  write_json(r.out("g2_fit.json"), j);
  return {"analysis/g2.csv", "analysis/g2_fit.json"};
}

Files stage_saturation(const Run& r, const StageSpec&) {
  const auto t = io::read_table_csv(r.raw("saturation.csv"));
  const auto& err = t.column("on_rate_err_cps");
  const auto fit = fit_saturation(t.column("power_uw"), t.column("on_rate_cps"), std::span<const double>(err));
  write_json(r.out("saturation_fit.json"), fit_json(fit));
  return {"analysis/saturation_fit.json"};
}

Files stage_qe(const Run& r, const StageSpec& st) {
  const auto path = r.out("saturation_fit.json");
  if (!fs::exists(path)) throw MissingInput("missing input '" + path.string() + "' (run the saturation stage)");
  const auto sat = fit_from_json(read_json(path));
  const double i_inf_mcps = sat.value("I_inf") * 1e-6;
  const double tau = st.number("tau_ns", r.config.model.lifetime_ns());
  const auto qe = qe_lower_bound(i_inf_mcps, r.config.detection.eta, tau);
  write_json(r.out("qe.json"), {{"qe_lower_bound", qe.value},
                                {"i_inf_mcps", i_inf_mcps},
                                {"eta", r.config.detection.eta},
                                {"tau_ns", tau},
                                {"out_of_model", qe.out_of_model},
                                {"assumption", qe.assumption}});
  return {"analysis/qe.json"};
}

Files stage_ple(const Run& r, const StageSpec& st) {
  const auto t = io::read_table_csv(r.raw("ple.csv"));
  const auto& scan = t.column("scan");
  const auto& det = t.column("detuning_ghz");
  const auto& counts = t.column("counts");
  PleRecord rec;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (scan[i] == 0.0) rec.detunings_ghz.push_back(det[i]);
    const auto s = static_cast<std::size_t>(scan[i]);
    if (rec.scans.size() <= s) rec.scans.resize(s + 1);
    rec.scans[s].push_back(static_cast<std::int64_t>(counts[i]));
  }
  const auto peaks = ple_peak_positions(rec);
  const double range = st.number("range_ghz", 100.0);
  const auto hist = make_histogram(peaks, linear_edges(-range, range, static_cast<std::size_t>(st.number("bins", 50))));
  io::write_histogram_csv(r.out("ple_peaks.csv"), hist);
  auto fit = fit_gaussian_histogram(hist);
  json j = fit_json(fit);
  j["n_scans"] = rec.scans.size();
  j["n_peaks"] = peaks.size();
  write_json(r.out("ple_fit.json"), j);
  return {"analysis/ple_peaks.csv", "analysis/ple_fit.json"};
}

Files stage_pump_probe(const Run& r, const StageSpec&) {
  const auto t = io::read_table_csv(r.raw("pump_probe.csv"));
  const auto& delay = t.column("delay_s");
  const auto& ts = t.column("t_s");
  const auto& counts = t.column("counts");
  std::vector<Transient> tr;
  for (std::size_t i = 0; i < delay.size(); ++i) {
    if (tr.empty() || tr.back().delay_s != delay[i]) tr.push_back({delay[i], 0.0, {}});
    if (tr.back().counts.size() == 1) tr.back().bin_width_s = ts[i] - ts[i - 1];
    tr.back().counts.push_back(counts[i]);
  }
  const auto fit = fit_pump_probe(tr);
  io::write_table_csv(r.out("pump_probe_amplitudes.csv"), {"delay_s", "amplitude", "amplitude_err", "contrast"},
                      {fit.delays_s, fit.amplitudes, fit.amplitude_errs, fit.contrasts});
  write_json(r.out("t1.json"), {{"t1_s", fit.t1_s},
                                {"t1_err_s", num(fit.t1_err_s)},
                                {"contrast", fit.contrast},
                                {"readout_tau_s", fit.readout_tau_s},
                                {"recovery", fit_json(fit.recovery)},
                                {"flags", fit.flags}});
  return {"analysis/pump_probe_amplitudes.csv", "analysis/t1.json"};
}

Files stage_odmr(const Run& r, const StageSpec&) {
  const auto t = io::read_table_csv(r.raw("odmr.csv"));
  write_json(r.out("odmr_fit.json"), fit_json(fit_odmr(t.column("freq_ghz"), t.column("signal"))));
  return {"analysis/odmr_fit.json"};
}

Files stage_angle(const Run& r, const StageSpec&) {
  const auto t = io::read_table_csv(r.raw("angle.csv"));
  write_json(r.out("angle_fit.json"), fit_json(fit_sinusoid_180(t.column("angle_deg"), t.column("rate_cps"))));
  return {"analysis/angle_fit.json"};
}

SpectrumOptions spectrum_options(const StageSpec& st, bool double_zpl) {
  SpectrumOptions o;
  o.zpl_search_lo_nm = st.number("zpl_search_lo_nm", o.zpl_search_lo_nm);
  o.zpl_search_hi_nm = st.number("zpl_search_hi_nm", o.zpl_search_hi_nm);
  o.double_zpl = st.number("double_zpl", double_zpl ? 1.0 : 0.0) != 0.0;
  return o;
}

Files stage_spectrum(const Run& r, const StageSpec& st) {
  const auto frames = read_frames(r);
  if (frames.empty()) throw MissingInput("spectra.csv holds no frames");
  // Default: all frames summed.
  const double pick = st.number("frame", -1.0);
  Spectrum spec;
  if (pick >= 0.0) {
    const auto k = static_cast<std::size_t>(pick);
    if (k >= frames.size()) throw std::invalid_argument("spectrum stage: frame index out of range");
    spec = frames[k];
  } else {
    std::vector<double> sum(frames.front().size(), 0.0);
    for (const auto& f : frames)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += f.counts[i];
    spec = Spectrum(frames.front().wavelengths, sum);
  }
  const auto a = analyze_spectrum(spec, spectrum_options(st, false));
  json j = {{"zpl_center_nm", a.zpl_center_nm}, {"dw_factor", a.dw_factor}, {"flags", a.flags}};
  if (a.zpl2_center_nm) j["zpl2_center_nm"] = *a.zpl2_center_nm;
  if (a.zpl_area_ratio) j["zpl_area_ratio"] = *a.zpl_area_ratio;
  if (a.psb_center_nm) j["psb_center_nm"] = *a.psb_center_nm;
  if (a.gap_thz) j["gap_thz"] = *a.gap_thz;
  write_json(r.out("spectrum.json"), j);
  io::write_spectrum_csv(r.out("spectrum_sum.csv"), spec);
  return {"analysis/spectrum.json", "analysis/spectrum_sum.csv"};
}

Files stage_anticorrelation(const Run& r, const StageSpec& st) {
  const auto res = two_line_anticorrelation(read_frames(r), spectrum_options(st, true));
  std::vector<double> idx(res.area1.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  io::write_table_csv(r.out("line_areas.csv"), {"frame", "area1", "area2"}, {idx, res.area1, res.area2});
  write_json(r.out("anticorrelation.json"), {{"pearson_r", res.pearson_r},
                                             {"total_intensity_cv", res.total_intensity_cv},
                                             {"failed_frames", res.failed_frames}});
  return {"analysis/line_areas.csv", "analysis/anticorrelation.json"};
}

const std::map<std::string, std::function<Files(const Run&, const StageSpec&)>>& stage_table() {
  static const std::map<std::string, std::function<Files(const Run&, const StageSpec&)>> t = {
      {"intervals", stage_intervals}, {"mixture", stage_mixture},   {"g2", stage_g2},
      {"saturation", stage_saturation}, {"qe", stage_qe},         {"ple", stage_ple},
      {"pump_probe", stage_pump_probe}, {"odmr", stage_odmr},     {"angle", stage_angle},
      {"spectrum", stage_spectrum},   {"anticorrelation", stage_anticorrelation},
  };
  return t;
}

Run open_run(const fs::path& dir) {
  const auto manifest = dir / kManifest;
  if (!fs::exists(manifest)) throw MissingInput("'" + dir.string() + "' is not a run directory (no run.json)");
  Run r;
  r.dir = dir;
  r.manifest = read_json(manifest);
  const auto cfg = dir / kConfigCopy;
  if (!fs::exists(cfg)) throw MissingInput("missing input '" + cfg.string() + "'");
  r.config = load_config(cfg);
  return r;
}

// ---- report ---------------------------------------------------------------------

std::vector<double> model_curve(ModelId id, const FitResult& fit, const std::vector<double>& x) {
  const auto spec = model_spec(id);
  std::vector<double> y;
  y.reserve(x.size());
  for (double v : x) y.push_back(evaluate(spec, fit, v));
  return y;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::vector<std::string> simulate_run(const RunConfig& config, const fs::path& dir, std::optional<std::uint64_t> seed) {
  const std::uint64_t s = seed.value_or(config.seed);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::IoError("cannot create '" + dir.string() + "': " + ec.message());
  RawWriter w{dir, {}};
  write_file(dir / kConfigCopy, config.text);
  const json extra = simulate_protocol(config, s, w);
  json manifest = {{"tool", "photodyn"},
                   {"version", PHOTODYN_VERSION},
                   {"seed", s},
                   {"config_sha256", sha256_hex(config.text)},
                   {"config", kConfigCopy},
                   {"protocol", protocol_name(config.protocol)},
                   {"c_cal", config.model.c_cal},
                   {"files", w.files}};
  manifest.update(extra);
  write_json(dir / kManifest, manifest);
  std::vector<std::string> files{kManifest, kConfigCopy};
  files.insert(files.end(), w.files.begin(), w.files.end());
  return files;
}

std::vector<StageResult> analyze_run(const fs::path& dir, const std::vector<std::string>& requested) {
  const Run r = open_run(dir);
  std::vector<std::string> names = requested;
  if (names.empty())
    for (const auto& s : r.config.analysis) names.push_back(s.name);
  if (names.empty()) names = default_stages(r.config.protocol);
  for (const auto& n : names)
    if (!stage_table().count(n)) throw std::invalid_argument("unknown analysis stage '" + n + "'");
  // Canonical order so dependent stages (qe after saturation) see their inputs.
  std::vector<std::string> ordered;
  for (const auto& n : stage_names())
    if (std::find(names.begin(), names.end(), n) != names.end()) ordered.push_back(n);

  std::error_code ec;
  fs::create_directories(dir / "analysis", ec);
  if (ec) throw io::IoError("cannot create '" + (dir / "analysis").string() + "': " + ec.message());

  std::vector<StageResult> results;
  for (const auto& name : ordered) {
    StageResult res;
    res.stage = name;
    try {
      res.files = stage_table().at(name)(r, r.config.stage(name));
      res.ok = true;
    } catch (const MissingInput& e) {
      res.missing_input = true;
      res.error = e.what();
    } catch (const std::exception& e) {
      res.error = e.what();
    }
    results.push_back(std::move(res));
  }

  // analysis.json accumulates the latest status of every stage ever run.
  const auto status_path = dir / "analysis" / "analysis.json";
  json status = fs::exists(status_path) ? read_json(status_path) : json::object();
  for (const auto& res : results) {
    json s = {{"ok", res.ok}, {"files", res.files}};
    if (!res.ok) s["error"] = res.error;
    if (res.missing_input) s["missing_input"] = true;
    status[res.stage] = s;
  }
  write_json(status_path, status);
  return results;
}

std::vector<std::string> report_run(const fs::path& dir) {
  const Run r = open_run(dir);
  const auto adir = dir / "analysis";
  const auto rdir = dir / "report";
  std::error_code ec;
  fs::create_directories(rdir, ec);
  if (ec) throw io::IoError("cannot create '" + rdir.string() + "': " + ec.message());
  std::vector<std::string> files;
  auto have = [&](const char* name) { return fs::exists(adir / name); };
  auto table = [&](const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& cols) {
    io::write_table_csv(rdir / name, header, cols);
    files.push_back("report/" + name);
  };

  json summary = {{"manifest", r.manifest}, {"results", json::object()}};
  if (fs::exists(adir))
    for (const auto& entry : fs::directory_iterator(adir)) {
      if (entry.path().extension() != ".json") continue;
      summary["results"][entry.path().stem().string()] = read_json(entry.path());
    }

  if (have("saturation_fit.json")) {
    const auto t = io::read_table_csv(r.raw("saturation.csv"));
    const auto fit = fit_from_json(read_json(adir / "saturation_fit.json"));
    const auto& p = t.column("power_uw");
    table("saturation_curve.csv", {"power_uw", "rate_cps", "rate_err_cps", "model_cps"},
          {p, t.column("on_rate_cps"), t.column("on_rate_err_cps"), model_curve(ModelId::saturation, fit, p)});
  }
  if (have("ple_fit.json")) {
    const auto h = io::read_histogram_csv(adir / "ple_peaks.csv");
    const auto fit = fit_from_json(read_json(adir / "ple_fit.json"));
    std::vector<double> c, n;
    for (std::size_t i = 0; i < h.size(); ++i) {
      c.push_back(h.center(i));
      n.push_back(static_cast<double>(h.counts[i]));
    }
    table("ple_curve.csv", {"detuning_ghz", "count", "model"}, {c, n, model_curve(ModelId::gaussian, fit, c)});
  }
  if (have("g2_fit.json")) {
    const auto t = io::read_table_csv(adir / "g2.csv");
    const auto fit = fit_from_json(read_json(adir / "g2_fit.json").at("antibunching"));
    const auto& lag = t.column("lag_ns");
    table("g2_curve.csv", {"lag_ns", "g2", "g2_err", "model"},
          {lag, t.column("g2"), t.column("g2_err"), model_curve(ModelId::g2_antibunching, fit, lag)});
  }
  if (have("t1.json")) {
    const auto t = io::read_table_csv(adir / "pump_probe_amplitudes.csv");
    const auto fit = fit_from_json(read_json(adir / "t1.json").at("recovery"));
    const auto& d = t.column("delay_s");
    table("t1_curve.csv", {"delay_s", "amplitude", "amplitude_err", "model"},
          {d, t.column("amplitude"), t.column("amplitude_err"), model_curve(ModelId::exp_recovery, fit, d)});
  }
  if (have("odmr_fit.json")) {
    const auto t = io::read_table_csv(r.raw("odmr.csv"));
    const auto fit = fit_from_json(read_json(adir / "odmr_fit.json"));
    const auto& f = t.column("freq_ghz");
    table("odmr_curve.csv", {"freq_ghz", "signal", "model"}, {f, t.column("signal"), model_curve(ModelId::lorentzian_dip, fit, f)});
  }
  if (have("angle_fit.json")) {
    const auto t = io::read_table_csv(r.raw("angle.csv"));
    const auto fit = fit_from_json(read_json(adir / "angle_fit.json"));
    const auto& a = t.column("angle_deg");
    table("angle_curve.csv", {"angle_deg", "rate_cps", "model"}, {a, t.column("rate_cps"), model_curve(ModelId::sinusoid_180, fit, a)});
  }
  if (have("rates.json")) {
    // Interval histograms on a common log axis.
    const auto t = io::read_table_csv(adir / "intervals.csv");
    const auto& on = t.column("on");
    const auto& dur = t.column("duration_s");
    const auto& trunc = t.column("truncated");
    std::vector<double> on_d, off_d;
    for (std::size_t i = 0; i < on.size(); ++i) {
      if (trunc[i] != 0.0) continue;
      (on[i] != 0.0 ? on_d : off_d).push_back(dur[i]);
    }
    const double lo = std::max(1e-9, r.config.protocol.index() == 0 ? std::get<TraceProtocol>(r.config.protocol).bin_width_s : 1e-6);
    double hi = lo * 10.0;
    for (double v : on_d) hi = std::max(hi, v * 1.01);
    for (double v : off_d) hi = std::max(hi, v * 1.01);
    const auto edges = log_edges(lo, hi, 40);
    const auto h_on = make_histogram(on_d, edges);
    const auto h_off = make_histogram(off_d, edges);
    std::vector<double> lower(edges.begin(), edges.end() - 1), upper(edges.begin() + 1, edges.end());
    table("interval_histograms.csv", {"lower_s", "upper_s", "on_count", "off_count"},
          {lower, upper, to_double(h_on.counts), to_double(h_off.counts)});
  }
  write_json(rdir / "summary.json", summary);
  files.push_back("report/summary.json");
  return files;
}

}  // namespace photodyn
