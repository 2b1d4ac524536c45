#include "photodyn/closed_loop.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "photodyn/core.hpp"
#include "photodyn/correlation.hpp"
#include "photodyn/fit.hpp"
#include "photodyn/io.hpp"
#include "photodyn/parallel.hpp"
#include "photodyn/photon_stats.hpp"
#include "photodyn/protocols.hpp"
#include "photodyn/random.hpp"
#include "photodyn/simulator.hpp"
#include "photodyn/trace_analysis.hpp"

namespace photodyn {
namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

Check check(std::string criterion, std::string quantity, double truth, double estimate, double tolerance,
            std::string note = {}) {
  Check c{std::move(criterion), std::move(quantity), truth, estimate, tolerance, false, std::move(note)};
  c.pass = std::isfinite(estimate) && std::abs(estimate - truth) <= tolerance;
  return c;
}

Check check_true(std::string criterion, std::string quantity, bool ok, std::string note = {}) {
  return check(std::move(criterion), std::move(quantity), 1.0, ok ? 1.0 : 0.0, 0.0, std::move(note));
}

DetectionModel psb_detection(double background_cps) {
  DetectionModel d;
  d.eta = 0.10;
  d.band = Band::psb;
  d.background_cps = background_cps;
  return d;
}

void calibrate(Scenario& s) {
  s.model.c_cal = 1.0;
  s.model.c_cal = calibration_multiplier(s.model, s.detection);
}

EnvState locked(Pathway p = Pathway::p1) {
  EnvState e;
  e.pathway = p;
  e.resonant = true;
  return e;
}

struct Sink {
  std::optional<std::filesystem::path> dir;

  [[nodiscard]] std::optional<std::filesystem::path> sub(const std::string& name) const {
    if (!dir) return std::nullopt;
    auto p = *dir / name;
    std::filesystem::create_directories(p);
    return p;
  }
};

// ---- A1 -------------------------------------------------------------------

SuiteReport suite_saturation(const ClosedLoopOptions& opt) {
  SuiteReport r;
  const auto sc = saturation_scenario();
  SaturationProtocol p;
  p.powers_uw = {0.5, 1.0, 2.0, 4.0, 7.6, 12.0, 20.0, 35.0, 60.0, 100.0};
  p.drive = sc.drive;
  p.initial = locked();
  const auto rec = run_saturation(sc.model, sc.detection, p, opt.seed);
  std::vector<double> pw, rate, err;
  for (const auto& pt : rec.points) {
    pw.push_back(pt.power_uw);
    rate.push_back(pt.on_rate_cps);
    err.push_back(pt.on_rate_err_cps);
  }
  const auto fit = fit_saturation(pw, rate, err);
  const double i_inf = fit.value("I_inf") * 1e-6;
  const double p_sat = fit.value("P_sat");
  r.checks.push_back(check("A1", "I_inf_mcps", sc.model.i_inf_target_mcps, i_inf, 0.05 * sc.model.i_inf_target_mcps));
  r.checks.push_back(check("A1", "P_sat_uw", sc.model.p_sat_uw, p_sat, 0.10 * sc.model.p_sat_uw));
  if (auto dir = Sink{opt.output_dir}.sub("A1-saturation")) {
    io::write_table_csv(*dir / "saturation.csv", {"power_uw", "on_rate_cps", "on_rate_err_cps"}, {pw, rate, err});
  }
  return r;
}

// ---- A2 -------------------------------------------------------------------

SuiteReport suite_ple(const ClosedLoopOptions& opt) {
  SuiteReport r;
  const auto sc = ple_scenario();
  PleProtocol p;
  p.drive = sc.drive;
  p.scans = 200;
  const auto rec = run_ple(sc.model, sc.detection, p, opt.seed);
  const auto peaks = ple_peak_positions(rec);
  const auto hist = make_histogram(peaks, linear_edges(-100.0, 100.0, 50));
  const auto fit = fit_gaussian_histogram(hist);
  const double truth = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sc.model.sigma_inh_ghz;
  r.checks.push_back(check("A2", "ple_envelope_fwhm_ghz", truth, fit.value("fwhm"), 5.0,
                           std::to_string(peaks.size()) + " scans with a peak"));
  if (auto dir = Sink{opt.output_dir}.sub("A2-ple")) {
    io::write_table_csv(*dir / "ple_peaks.csv", {"peak_detuning_ghz"}, {peaks});
  }
  return r;
}

// ---- A3 -------------------------------------------------------------------

struct OffRate {
  double truth_hz = 0.0;
  double estimate_hz = 0.0;
};

OffRate measure_off_rate(const Scenario& sc, Pathway pathway, std::uint64_t seed) {
  TraceProtocol p;
  p.drive = sc.drive;
  if (pathway == Pathway::p2) p.drive.detuning_laser_ghz = sc.model.pathway2_offset_ghz;
  p.duration_s = 1.0;
  p.bin_width_s = 1e-6;
  p.background_s = 0.1;
  p.initial = locked(pathway);
  const auto rec = run_trace(sc.model, sc.detection, p, seed);
  const auto bg = background_stats(*rec.background);
  const auto intervals = classify_on_off(rec.trace.trace, bg.mean, bg.sigma, 3.0);
  const auto fit = fit_interval_rate(intervals.on_durations);
  return {spectral_jump_rate_hz(sc.model, p.drive, pathway), fit.value("rate")};
}

SuiteReport suite_offrates(const ClosedLoopOptions& opt) {
  SuiteReport r;
  std::map<std::pair<int, int>, OffRate> m;
  const int temps[] = {77, 8};
  for (int t : temps) {
    const auto sc = offrate_scenario(t);
    for (int pw = 0; pw < 2; ++pw) {
      const auto res = measure_off_rate(sc, static_cast<Pathway>(pw), substream_seed(opt.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(pw)));
      m[{t, pw}] = res;
      r.checks.push_back(check("A3", "off_rate_khz_P" + std::to_string(pw + 1) + "_" + std::to_string(t) + "K",
                               res.truth_hz * 1e-3, res.estimate_hz * 1e-3, 0.10 * res.truth_hz * 1e-3));
    }
  }
  r.checks.push_back(check_true("A3", "P1_off_rate_77K_above_8K", m[{77, 0}].estimate_hz > m[{8, 0}].estimate_hz));
  const double factor_truth = m[{77, 1}].truth_hz / m[{8, 1}].truth_hz;
  const double factor = m[{77, 1}].estimate_hz / m[{8, 1}].estimate_hz;
  r.checks.push_back(check("A3", "P2_cooling_reduction_factor", factor_truth, factor, 0.30 * factor_truth));
  return r;
}

// ---- A4 -------------------------------------------------------------------

constexpr double kMixtureBinWidth = 20e-6;
constexpr double kMixtureWidth = 2.0;  // detuning spread over the emission HWHM

SuiteReport suite_mixture(const ClosedLoopOptions& opt) {
  SuiteReport r;
  const double blue[] = {0.0, 100.0};
  for (int k = 0; k < 2; ++k) {
    const auto sc = mixture_scenario(blue[k]);
    TraceProtocol p;
    p.drive = sc.drive;
    p.duration_s = 2.0;
    p.bin_width_s = kMixtureBinWidth;
    p.burn_in_s = 0.5;
    p.background_s = 0.2;
    const auto rec = run_trace(sc.model, sc.detection, p, substream_seed(opt.seed, static_cast<std::uint64_t>(k)));
    const double truth = rec.trace.truth.active;
    const double lambda_max = emission_rate(sc.model, sc.detection, sc.drive, EnvState{}) * p.bin_width_s;
    std::vector<double> grid;
    for (double f : {0.6, 0.8, 1.0, 1.2, 1.4}) grid.push_back(f * lambda_max);
    MixtureOptions mo;
    mo.pushforward_width = kMixtureWidth;
    const auto hist = count_histogram(rec.trace.trace);
    const auto sel = select_lambda_max(hist, grid, WeightMode::lorentzian_pushforward, mo);
    const auto bg = background_stats(*rec.background);
    const auto iv = classify_on_off(rec.trace.trace, bg.mean, bg.sigma, 3.0);
    const double threshold_estimate = on_probability_threshold(iv, rec.trace.trace).fraction;
    const std::string tag = blue[k] > 0.0 ? "_blue" : "_no_blue";
    const bool regime = blue[k] > 0.0 ? (truth > 0.15 && truth < 0.25) : truth < 0.01;
    r.checks.push_back(check_true("A4", "true_duty_regime" + tag, regime, "truth " + std::to_string(truth)));
    r.checks.push_back(check("A4", "p_e" + tag, truth, sel.best.params.p_e, 0.02,
                             "threshold estimate " + std::to_string(threshold_estimate)));
    r.checks.push_back(check("A4", "bic_argmin_lambda_max" + tag, lambda_max, sel.best.params.lambda_max, 1e-9 * lambda_max));
    if (auto dir = Sink{opt.output_dir}.sub("A4-mixture" + tag)) {
      const auto cmp = compare_pmf(hist, sel.best.params);
      std::vector<double> n(cmp.model.size());
      for (std::size_t i = 0; i < n.size(); ++i) n[i] = static_cast<double>(i);
      io::write_table_csv(*dir / "pmf_compare.csv", {"n", "empirical", "model"}, {n, cmp.empirical, cmp.model});
      std::vector<double> l, b;
      for (const auto& c : sel.curve) {
        l.push_back(c.lambda_max);
        b.push_back(c.bic);
      }
      io::write_table_csv(*dir / "bic_curve.csv", {"lambda_max", "bic"}, {l, b});
    }
  }

  // Normalization over random parameter draws.
  Rng rng(substream_seed(opt.seed, 99));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    MixtureParams mp;
    mp.p_e = u(rng);
    mp.lambda_b = 0.01 + 20.0 * u(rng);
    mp.gamma = 2.0 * u(rng);
    mp.lambda_max = 0.1 + 100.0 * u(rng);
    mp.J = 2 + static_cast<int>(126.0 * u(rng));
    mp.weight_mode = u(rng) < 0.5 ? WeightMode::uniform : WeightMode::lorentzian_pushforward;
    mp.pushforward_width = 0.5 + 4.0 * u(rng);
    const int n_max = static_cast<int>(std::ceil(mp.lambda_max + 6.0 * std::sqrt(mp.lambda_max))) + static_cast<int>(10.0 * u(rng));
    double sum = 0.0;
    for (double v : mixture_pmf(mp, n_max)) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  r.checks.push_back(check("A4", "pmf_normalization_max_error", 0.0, worst, 1e-9, "1000 random parameter draws"));
  return r;
}

// ---- A5 -------------------------------------------------------------------

SuiteReport suite_g2(const ClosedLoopOptions& opt) {
  SuiteReport r;
  // Pure Poisson stream: lasers off, background only.
  {
    auto sc = g2_scenario();
    sc.detection.background_cps = 1e7;
    TimetagProtocol p;
    p.drive = LaserDrive{};
    p.duration_s = 0.1;
    const auto tags = run_timetags(sc.model, sc.detection, p, substream_seed(opt.seed, 0));
    const auto curve = g2_histogram(tags, 50.0, 1.0);
    double worst = 0.0;
    for (double v : curve.values) worst = std::max(worst, std::abs(v - 1.0));
    r.checks.push_back(check("A5", "poisson_g2_max_deviation", 0.0, worst, 0.05,
                             std::to_string(tags.size()) + " tags, 1 ns bins"));
  }
  const double bin_ns = 0.1;
  const double max_lag_ns = 20.0;
  G2FitOptions fo;
  fo.fit_bunching = false;
  // Emitter plus background at the signal fraction rho with 1 - rho^2 = 0.443.
  {
    const double rho = std::sqrt(1.0 - 0.443);
    auto sc = g2_scenario();
    const double signal = emission_rate(sc.model, sc.detection, sc.drive, EnvState{});
    sc.detection.background_cps = signal * (1.0 - rho) / rho;
    TimetagProtocol p;
    p.drive = sc.drive;
    p.duration_s = 0.05;
    const auto tags = run_timetags(sc.model, sc.detection, p, substream_seed(opt.seed, 1));
    const auto curve = g2_histogram(tags, max_lag_ns, bin_ns);
    const auto fit = fit_g2(curve, fo);
    r.checks.push_back(check("A5", "g2_zero_with_background", 0.443, fit.antibunching.value("g0"), 0.05,
                             "zero bin " + std::to_string(curve.values[curve.zero_index()])));
    if (auto dir = Sink{opt.output_dir}.sub("A5-g2")) {
      io::write_table_csv(*dir / "g2.csv", {"lag_ns", "g2", "g2_err"}, {curve.lags_ns, curve.values, curve.errors()});
    }
  }
  // Clean emitter: antibunching time against the radiative lifetime.
  {
    const auto sc = g2_scenario();
    TimetagProtocol p;
    p.drive = sc.drive;
    p.duration_s = 0.05;
    const auto tags = run_timetags(sc.model, sc.detection, p, substream_seed(opt.seed, 2));
    const auto fit = fit_g2(g2_histogram(tags, max_lag_ns, bin_ns), fo);
    const double tau = sc.model.lifetime_ns();
    r.checks.push_back(check("A5", "antibunching_tau_ns", tau, fit.antibunching.value("tau_a"), 0.15 * tau));
  }
  return r;
}

// ---- A6 -------------------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return g;
}

PumpProbeFit pump_probe(const Scenario& sc, std::uint64_t seed, const std::optional<std::filesystem::path>& dir) {
  PumpProbeProtocol p;
  p.pump = sc.drive;
  p.probe = sc.drive;
  p.dark = sc.drive;
  p.dark.p_res_uw = p.dark.p_green_uw = p.dark.p_blue_uw = 0.0;
  // Each readout also pumps the next repetition, so a short extra pump suffices.
  p.pump_s = 5e-3;
  p.delays_s = log_grid(0.7e-6, 64e-3, 24);
  p.bin_width_s = 5e-4;
  p.repetitions = 8000;
  p.initial = locked();
  const auto transients = run_pump_probe(sc.model, sc.detection, p, seed);
  auto fit = fit_pump_probe(transients);
  if (dir) {
    io::write_table_csv(*dir / "recovery.csv", {"delay_s", "amplitude", "amplitude_err", "contrast"},
                        {fit.delays_s, fit.amplitudes, fit.amplitude_errs, fit.contrasts});
  }
  return fit;
}

SuiteReport suite_pump_probe(const ClosedLoopOptions& opt) {
  SuiteReport r;
  struct Case {
    std::string name;
    bool resonant;
    double b_mt, theta;
  };
  const std::vector<Case> cases = {{"offres_field_50deg", false, 30.0, 50.0},
                                   {"offres_field_140deg", false, 30.0, 140.0},
                                   {"offres_zero_field", false, 0.0, 50.0},
                                   {"res_field_50deg", true, 30.0, 50.0}};
  std::map<std::string, PumpProbeFit> fits;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    fits[c.name] = pump_probe(shelf_scenario(c.resonant, c.b_mt, c.theta), substream_seed(opt.seed, i),
                              Sink{opt.output_dir}.sub("A6-pump-probe/" + c.name));
  }
  auto t1 = [&](const std::string& n) { return fits[n].t1_s * 1e3; };
  auto con = [&](const std::string& n) { return fits[n].contrast; };
  auto fmt = [](double a, double b) { return std::to_string(a) + " vs " + std::to_string(b); };
  r.checks.push_back(check("A6", "T1_ms_offres_field_50deg", 5.6, t1("offres_field_50deg"), 0.15 * 5.6,
                           "contrast " + std::to_string(con("offres_field_50deg"))));
  r.checks.push_back(check_true("A6", "T1_order_50deg_140deg_zero_field",
                                t1("offres_field_50deg") > t1("offres_field_140deg") &&
                                    t1("offres_field_140deg") > t1("offres_zero_field"),
                                fmt(t1("offres_field_140deg"), t1("offres_zero_field")) + " ms"));
  r.checks.push_back(check_true("A6", "contrast_order_50deg_140deg_zero_field",
                                con("offres_field_50deg") > con("offres_field_140deg") &&
                                    con("offres_field_140deg") > con("offres_zero_field"),
                                fmt(con("offres_field_140deg"), con("offres_zero_field"))));
  r.checks.push_back(check_true("A6", "contrast_resonant_above_offres",
                                con("res_field_50deg") > con("offres_field_50deg"),
                                fmt(con("res_field_50deg"), con("offres_field_50deg"))));
  return r;
}

// ---- A7 -------------------------------------------------------------------

SuiteReport suite_odmr(const ClosedLoopOptions& opt) {
  SuiteReport r;
  const double powers[] = {-6.0, -3.0, 0.0};
  std::vector<double> contrasts;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto sc = odmr_scenario(powers[i]);
    OdmrProtocol p;
    for (double f = 1.50; f <= 2.2401; f += 0.01) p.freqs_ghz.push_back(f);
    p.drive = sc.drive;
    p.dwell_s = 100.0;
    p.interleave = 20;
    const auto rec = run_odmr(sc.model, sc.detection, p, substream_seed(opt.seed, i));
    const auto fit = fit_odmr(rec.freqs_ghz, rec.signal);
    contrasts.push_back(fit.value("contrast"));
    if (auto dir = Sink{opt.output_dir}.sub("A7-odmr/" + std::to_string(static_cast<int>(powers[i])) + "dBm")) {
      io::write_table_csv(*dir / "odmr.csv", {"freq_ghz", "counts_on", "counts_off", "signal"},
                          {rec.freqs_ghz, rec.counts_on, rec.counts_off, rec.signal});
    }
    if (i != 2) continue;
    r.checks.push_back(check("A7", "f0_ghz", 1.87, fit.value("f0"), 0.02));
    r.checks.push_back(check("A7", "contrast_percent", 2.65, 100.0 * fit.value("contrast"), 0.5));
    r.checks.push_back(check("A7", "fwhm_mhz", 200.0, 1e3 * fit.value("fwhm"), 40.0));
  }
  r.checks.push_back(check_true("A7", "contrast_increases_with_mw_power",
                                contrasts[0] < contrasts[1] && contrasts[1] < contrasts[2],
                                std::to_string(contrasts[0]) + " < " + std::to_string(contrasts[1]) + " < " +
                                    std::to_string(contrasts[2])));
  return r;
}

// ---- A8 -------------------------------------------------------------------

SuiteReport suite_angle(const ClosedLoopOptions& opt) {
  SuiteReport r;
  const auto sc = shelf_scenario(false, 30.0, 0.0);
  AngleProtocol p;
  for (int a = 0; a <= 180; a += 10) p.angles_deg.push_back(a);
  p.drive = sc.drive;
  p.dwell_s = 10000.0;
  const auto rec = run_angle(sc.model, sc.detection, p, opt.seed);
  const auto fit = fit_sinusoid_180(rec.angles_deg, rec.rate_cps);
  r.checks.push_back(check("A8", "theta_min_deg", 50.0, fit.value("theta_min"), 5.0));
  r.checks.push_back(check("A8", "theta_max_deg", 140.0, fit.value("theta_max"), 5.0));
  if (auto dir = Sink{opt.output_dir}.sub("A8-angle")) {
    io::write_table_csv(*dir / "angle.csv", {"angle_deg", "rate_cps"}, {rec.angles_deg, rec.rate_cps});
  }
  return r;
}

// ---- A9 -------------------------------------------------------------------

SuiteReport suite_qe(const ClosedLoopOptions&) {
  SuiteReport r;
  const auto qe = qe_lower_bound(12.5, 0.10, 1.26);
  r.checks.push_back(check("A9", "qe_lower_bound_formula", 0.315, qe.value, 1e-12));
  r.checks.push_back(check("A9", "qe_lower_bound_in_reported_range", 0.33, qe.value, 0.09));
  return r;
}

// ---- A10 ------------------------------------------------------------------

struct JacobianCase {
  ModelId id;
  std::vector<double> p;  // typical parameters, scattered by +-50 %
  double x_lo, x_hi;
};

double worst_jacobian_error(std::uint64_t seed) {
  const std::vector<JacobianCase> cases = {
      {ModelId::saturation, {12.5, 7.6}, 0.1, 100.0},
      {ModelId::gaussian, {30.0, 2.0, 18.7, 1.0}, -60.0, 60.0},
      {ModelId::lorentzian_dip, {1.0, 0.03, 1.87, 0.2}, 1.5, 2.25},
      {ModelId::exp_recovery, {0.2, 5.6e-3}, 1e-6, 0.06},
      {ModelId::sinusoid_180, {1.0, 0.1, 50.0}, 0.0, 180.0},
      {ModelId::double_gaussian, {100.0, 585.0, 0.025, 80.0, 585.12, 0.03, 2.0}, 584.8, 585.3},
      {ModelId::exp_decay, {10.0, 2e-3, 5.0}, 0.0, 0.01},
      {ModelId::g2_antibunching, {0.3, 1.26}, -20.0, 20.0},
      {ModelId::g2_bunching, {0.3, 1.26, 0.2, 30.0}, -100.0, 100.0},
  };
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto spec = model_spec(c.id);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> p = c.p;
      for (auto& v : p) v *= 0.5 + u(rng);
      const double x = c.x_lo + (c.x_hi - c.x_lo) * u(rng);
      std::vector<double> g(p.size());
      spec.grad(x, p, g);
      const auto n = numeric_gradient(spec, x, p);
      // Relative per component. A component whose scaled sensitivity
      // |df/dp * p / f| is below 1e-4 is compared against that floor instead.
      const double f = std::abs(spec.f(x, p));
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double floor = 1e-4 * f / std::abs(p[k]);
        const double denom = std::max({std::abs(g[k]), std::abs(n[k]), floor, 1e-300});
        worst = std::max(worst, std::abs(g[k] - n[k]) / denom);
      }
    }
  }
  return worst;
}

// Static environment (no slow processes): the binned engine and the photon
// cascade must agree on the mean detected rate.
Check two_tier_oracle(std::uint64_t seed) {
  Scenario sc{EmitterModel{}, psb_detection(0.0), LaserDrive{}};
  const std::vector<double> s_values{0.1, 0.3, 1.0, 3.0, 10.0};
  double worst_z = 0.0;
  std::string note;
  for (std::size_t i = 0; i < s_values.size(); ++i) {
    LaserDrive d;
    d.p_green_uw = s_values[i] * sc.model.p_sat_green_uw;
    const double trace_s = 1.0;
    const auto trace = simulate_trace(sc.model, sc.detection, d, trace_s, 1e-3, substream_seed(seed, i, 0));
    double n_trace = 0.0;
    for (auto c : trace.counts) n_trace += static_cast<double>(c);
    const double tags_s = 0.01;
    const auto tags = simulate_timetags(sc.model, sc.detection, d, tags_s, substream_seed(seed, i, 1));
    const double n_tags = static_cast<double>(tags.size());
    const double r1 = n_trace / trace_s, r2 = n_tags / tags_s;
    const double se = std::sqrt(n_trace / (trace_s * trace_s) + n_tags / (tags_s * tags_s));
    const double z = std::abs(r1 - r2) / se;
    worst_z = std::max(worst_z, z);
    note += (i ? ", " : "") + std::string("s=") + io::format_number(s_values[i]) + " z=" + io::format_number(std::round(z * 100) / 100);
  }
  return check("A10", "two_tier_vs_ssa_max_z", 0.0, worst_z, 3.0, note);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Same seed, different worker counts: files must match byte for byte.
Check determinism(std::uint64_t seed) {
  const auto root = std::filesystem::temp_directory_path() /
                    ("photodyn-determinism-" + std::to_string(seed) + "-" + std::to_string(::getpid()));
  const auto sc = offrate_scenario(77.0);
  SaturationProtocol sp;
  sp.powers_uw = {1.0, 5.0, 20.0, 50.0};
  sp.drive = sc.drive;
  sp.dwell_s = 0.02;
  TraceProtocol tp;
  tp.drive = sc.drive;
  tp.duration_s = 0.05;
  tp.bin_width_s = 1e-5;
  tp.background_s = 0.01;
  TimetagProtocol gp;
  const auto g2 = g2_scenario();
  gp.drive = g2.drive;
  gp.duration_s = 0.002;

  const std::size_t keep = thread_override();
  std::vector<std::string> blobs;
  for (std::size_t run = 0; run < 3; ++run) {
    thread_override() = run == 0 ? 1 : 4;
    const auto dir = root / std::to_string(run);
    std::filesystem::create_directories(dir);
    const auto sat = run_saturation(sc.model, sc.detection, sp, seed);
    std::vector<double> pw, on, err;
    for (const auto& pt : sat.points) {
      pw.push_back(pt.power_uw);
      on.push_back(pt.on_rate_cps);
      err.push_back(pt.on_rate_err_cps);
    }
    io::write_table_csv(dir / "saturation.csv", {"power_uw", "rate_cps", "rate_err_cps"}, {pw, on, err});
    io::write_trace_csv(dir / "trace.csv", run_trace(sc.model, sc.detection, tp, seed).trace.trace);
    io::write_timetags_binary(dir / "tags.bin", run_timetags(g2.model, g2.detection, gp, seed));
    blobs.push_back(slurp(dir / "saturation.csv") + slurp(dir / "trace.csv") + slurp(dir / "tags.bin"));
  }
  thread_override() = keep;
  std::filesystem::remove_all(root);
  const bool same = blobs[0] == blobs[1] && blobs[1] == blobs[2];
  return check_true("A10", "determinism_byte_identical", same && !blobs[0].empty(),
                    "three runs, 1 and 4 workers, " + std::to_string(blobs[0].size()) + " bytes");
}

Check threshold_monotone(std::uint64_t seed) {
  const auto sc = offrate_scenario(77.0);
  TraceProtocol tp;
  tp.drive = sc.drive;
  tp.duration_s = 0.2;
  tp.bin_width_s = 1e-6;
  tp.background_s = 0.05;
  const auto rec = run_trace(sc.model, sc.detection, tp, seed);
  const auto bg = background_stats(*rec.background);
  bool ok = true;
  std::size_t last = std::numeric_limits<std::size_t>::max();
  std::string note;
  for (double ns = 0.0; ns <= 6.0 + 1e-9; ns += 0.5) {
    const auto iv = classify_on_off(rec.trace.trace, bg.mean, bg.sigma, ns);
    ok = ok && iv.on_bins <= last;
    last = iv.on_bins;
  }
  return check_true("A10", "on_time_monotone_in_threshold", ok, "n_sigma 0..6 step 0.5");
}

std::vector<Spectrum> two_line_frames(const std::vector<double>& a1, const std::vector<double>& a2, Rng* noise) {
  std::vector<double> grid;
  for (double wl = 584.0; wl <= 586.0 + 1e-9; wl += 0.005) grid.push_back(wl);
  std::vector<Spectrum> frames;
  for (std::size_t f = 0; f < a1.size(); ++f) {
    std::vector<double> y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double g1 = std::exp(-0.5 * std::pow((grid[i] - 585.0) / 0.025, 2)) / (0.025 * kSqrt2Pi);
      const double g2 = std::exp(-0.5 * std::pow((grid[i] - 585.12) / 0.025, 2)) / (0.025 * kSqrt2Pi);
      y[i] = 0.005 * (a1[f] * g1 + a2[f] * g2) + 1.0;
      if (noise) y[i] = static_cast<double>(std::poisson_distribution<std::int64_t>(y[i])(*noise));
    }
    frames.emplace_back(grid, std::move(y));
  }
  return frames;
}

SuiteReport suite_properties(const ClosedLoopOptions& opt) {
  SuiteReport r;
  r.checks.push_back(check("A10", "jacobian_max_relative_error", 0.0, worst_jacobian_error(substream_seed(opt.seed, 0)),
                           1e-6, "every model, 100 random points"));
  r.checks.push_back(two_tier_oracle(substream_seed(opt.seed, 1)));
  r.checks.push_back(determinism(substream_seed(opt.seed, 2)));
  r.checks.push_back(threshold_monotone(substream_seed(opt.seed, 3)));

  SpectrumOptions so;
  so.double_zpl = true;
  {
    std::vector<double> a1, a2;
    for (int f = 0; f < 100; ++f) {
      a1.push_back(2000.0 + 20.0 * f);
      a2.push_back(6000.0 - a1.back());
    }
    const auto res = two_line_anticorrelation(two_line_frames(a1, a2, nullptr), so);
    r.checks.push_back(check("A10", "perfect_anticorrelation_r", -1.0, res.pearson_r, 1e-6));
    r.checks.push_back(check("A10", "perfect_anticorrelation_cv", 0.0, res.total_intensity_cv, 1e-6));
  }
  {
    Rng rng(substream_seed(opt.seed, 4));
    std::uniform_real_distribution<double> u(1000.0, 3000.0);
    std::vector<double> a1, a2;
    for (int f = 0; f < 100; ++f) {
      a1.push_back(u(rng));
      a2.push_back(u(rng));
    }
    const auto res = two_line_anticorrelation(two_line_frames(a1, a2, &rng), so);
    r.checks.push_back(check("A10", "independent_lines_r", 0.0, res.pearson_r, 0.2, "100 frames"));
  }
  {
    Scenario sc{EmitterModel{}, psb_detection(0.0), LaserDrive{}};
    sc.model.pathway.k12_hz = 0.5;
    sc.model.pathway.k21_hz = 0.5;
    sc.drive.p_green_uw = sc.model.p_sat_green_uw;
    calibrate(sc);
    SpectraProtocol sp;
    sp.drive = sc.drive;
    sp.frames = 100;
    sp.grid_start_nm = 584.0;
    sp.grid_stop_nm = 600.0;
    const auto rec = run_spectra(sc.model, sc.detection, sp, substream_seed(opt.seed, 5));
    const auto res = two_line_anticorrelation(rec.frames, so);
    r.checks.push_back(check_true("A10", "switching_lines_anticorrelated", res.pearson_r < -0.7,
                                  "r = " + io::format_number(res.pearson_r)));
    r.checks.push_back(check("A10", "switching_total_cv", 0.0, res.total_intensity_cv, 0.10));
  }
  return r;
}

using SuiteFn = std::function<SuiteReport(const ClosedLoopOptions&)>;

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r = {
      {"A1-saturation", suite_saturation},
      {"A2-ple", suite_ple},
      {"A3-offrates", suite_offrates},
      {"A4-mixture", suite_mixture},
      {"A5-g2", suite_g2},
      {"A6-pump-probe", suite_pump_probe},
      {"A7-odmr", suite_odmr},
      {"A8-angle", suite_angle},
      {"A9-qe", suite_qe},
      {"A10-properties", suite_properties},
  };
  return r;
}

}  // namespace

// ---- scenarios --------------------------------------------------------------

Scenario saturation_scenario() {
  Scenario s{EmitterModel{}, psb_detection(100.0), LaserDrive{}};
  s.model.spectral_mode = SpectralMode::jump_gaussian;
  s.drive.temperature_k = 77.0;
  calibrate(s);
  return s;
}

Scenario ple_scenario() {
  Scenario s{EmitterModel{}, psb_detection(100.0), LaserDrive{}};
  s.model.sigma_inh_ghz = 18.7;
  s.model.jump[0].base_khz = 0.01;
  s.drive.p_res_uw = 2.0;
  s.drive.temperature_k = 77.0;
  calibrate(s);
  return s;
}

Scenario offrate_scenario(double temperature_k) {
  Scenario s{EmitterModel{}, psb_detection(100.0), LaserDrive{}};
  auto& m = s.model;
  m.spectral_mode = SpectralMode::telegraph;
  m.telegraph_off_min_ghz = 30.0;
  // P1: weakly activated, linear in resonant power.
  m.jump[0] = {3.0, 3.0, 0.0, 99.3, 10.0};
  // P2: strongly activated.
  m.jump[1] = {4.0, 0.8, 0.0, 361.0, 10.0};
  m.telegraph_return_khz = {9.4, 11.0};
  s.drive.p_res_uw = 20.0;
  s.drive.temperature_k = temperature_k;
  calibrate(s);
  return s;
}

Scenario mixture_scenario(double p_blue_uw) {
  Scenario s{EmitterModel{}, psb_detection(5000.0), LaserDrive{}};
  auto& m = s.model;
  s.drive.p_res_uw = 2.0;
  s.drive.p_blue_uw = p_blue_uw;
  s.drive.temperature_k = 77.0;
  // Narrow Gaussian wandering, slow against the bin width.
  m.spectral_mode = SpectralMode::jump_gaussian;
  m.sigma_inh_ghz = kMixtureWidth * 0.5 * broadened_fwhm_ghz(m, s.drive.p_res_uw);
  m.jump[0].base_khz = 0.5;
  // Long-lived shelf, emptied slowly in the dark and faster under blue light.
  m.shelving.kappa_down_hz = 11000.0;
  m.shelving.d_down_hz = 5.0;
  m.shelving.r_blue_hz_per_uw = 2.0;
  calibrate(s);
  return s;
}
Scenario g2_scenario() {
  Scenario s{EmitterModel{}, DetectionModel{}, LaserDrive{}};
  s.detection.eta = 1.0;
  s.detection.band = Band::all;
  s.detection.background_cps = 0.0;
  s.model.c_cal = 1.0;
  // Weak off-resonant pumping, s = 0.05.
  s.drive.p_green_uw = 0.05 * s.model.p_sat_green_uw;
  return s;
}
Scenario shelf_scenario(bool resonant, double b_field_mt, double theta_deg) {
  Scenario s{EmitterModel{}, psb_detection(100.0), LaserDrive{}};
  auto& sh = s.model.shelving;
  // Bright cycling feeds the slow `down` sublevel; mixing hands population
  // to the fast `up` sublevel, which empties quickly.
  sh.kappa_down_hz = 78.0;
  sh.d_down_hz = 168.0;
  sh.d_up_hz = 1500.0;
  sh.mix_m0_hz = 18.75;
  sh.mix_m1_hz = 8.75;
  sh.mix_theta_ref_deg = 140.0;
  sh.mix_zero_field_hz = 5000.0;
  s.drive.temperature_k = 77.0;
  s.drive.b_field_mt = b_field_mt;
  s.drive.theta_deg = theta_deg;
  if (resonant)
    s.drive.p_res_uw = 8.0 * s.model.p_sat_uw;
  else
    s.drive.p_green_uw = s.model.p_sat_green_uw;
  calibrate(s);
  return s;
}
Scenario odmr_scenario(double mw_power_dbm) {
  Scenario s{EmitterModel{}, psb_detection(100.0), LaserDrive{}};
  auto& sh = s.model.shelving;
  // Cycling feeds the fast `up` sublevel; resonant microwaves move population
  // into the slow `down` sublevel and so darken the emitter.
  sh.kappa_up_hz = 200.0;
  sh.d_up_hz = 1500.0;
  sh.d_down_hz = 168.0;
  s.model.mw.f0_ghz = 1.87;
  s.model.mw.hwhm_mhz = 65.0;
  s.model.mw.r0_hz = 200.0;
  s.model.mw.p_ref_dbm = 0.0;
  s.drive.temperature_k = 77.0;
  s.drive.b_field_mt = 30.0;
  s.drive.p_green_uw = s.model.p_sat_green_uw;
  s.drive.mw.power_dbm = mw_power_dbm;
  calibrate(s);
  return s;
}

// ---- runner -------------------------------------------------------------------

bool SuiteReport::passed() const {
  if (!error.empty() || checks.empty()) return false;
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

bool has_suite(const std::string& name) {
  for (const auto& n : suite_names())
    if (n == name) return true;
  return false;
}

SuiteReport run_suite(const std::string& name, const ClosedLoopOptions& options) {
  for (const auto& [n, fn] : registry()) {
    if (n != name) continue;
    const auto start = std::chrono::steady_clock::now();
    SuiteReport r;
    try {
      r = fn(options);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.suite = name;
    r.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }
  throw std::invalid_argument("unknown suite '" + name + "'");
}

std::vector<SuiteReport> run_suites(const std::string& name, const ClosedLoopOptions& options) {
  std::vector<SuiteReport> out;
  if (name == "all") {
    for (const auto& n : suite_names()) out.push_back(run_suite(n, options));
  } else {
    out.push_back(run_suite(name, options));
  }
  return out;
}

std::string reports_to_json(const std::vector<SuiteReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json s;
    s["suite"] = r.suite;
    s["pass"] = r.passed();
    s["elapsed_s"] = r.elapsed_s;
    if (!r.error.empty()) s["error"] = r.error;
    s["checks"] = nlohmann::json::array();
    for (const auto& c : r.checks) {
      s["checks"].push_back({{"criterion", c.criterion},
                             {"quantity", c.quantity},
                             {"truth", c.truth},
                             {"estimate", std::isfinite(c.estimate) ? nlohmann::json(c.estimate) : nlohmann::json()},
                             {"tolerance", c.tolerance},
                             {"pass", c.pass},
                             {"note", c.note}});
    }
    j.push_back(s);
  }
  return j.dump(2);
}

}  // namespace photodyn
