#include "photodyn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "photodyn/errors.hpp"

namespace photodyn {
namespace {

double draw_off_detuning(const EmitterModel& model, Rng& rng) {
  std::normal_distribution<double> normal(0.0, model.sigma_inh_ghz);
  for (int i = 0; i < 1000; ++i) {
    const double d = normal(rng);
    if (std::abs(d) >= model.telegraph_off_min_ghz) return d;
  }
  // off_min far outside the distribution; park at the boundary.
  return model.telegraph_off_min_ghz;
}

double draw_gaussian_detuning(const EmitterModel& model, Rng& rng) {
  std::normal_distribution<double> normal(0.0, model.sigma_inh_ghz);
  return normal(rng);
}

double pathway_rate_hz(const PathwaySwitch& p, const LaserDrive& drive, Pathway from) {
  return from == Pathway::p1 ? p.k12_hz + p.k12_blue_hz_per_uw * drive.p_blue_uw
                             : p.k21_hz + p.k21_blue_hz_per_uw * drive.p_blue_uw;
}

// Transitions shared by both simulation tiers; shelving entry is added by
// the caller because its form differs between them.
void add_common_transitions(SlowTransitions& out, const EmitterModel& model, const LaserDrive& drive,
                            const EnvState& env) {
  if (env.shelf != Shelf::none) {
    out.add(SlowEvent::deshelve, deshelving_rate_hz(model.shelving, drive, env.shelf));
    out.add(SlowEvent::spin_mix, spin_mixing_rate_hz(model.shelving, drive));
    out.add(SlowEvent::mw_flip, mw_flip_rate_hz(model.mw, drive.mw));
  }
  out.add(SlowEvent::pathway_switch, pathway_rate_hz(model.pathway, drive, env.pathway));
  const double jump = spectral_jump_rate_hz(model, drive, env.pathway);
  if (model.spectral_mode == SpectralMode::jump_gaussian) {
    out.add(SlowEvent::detuning_jump, jump);
  } else if (env.resonant) {
    out.add(SlowEvent::detuning_jump, jump);
  } else {
    out.add(SlowEvent::telegraph_return, 1e3 * model.telegraph_return_khz[static_cast<int>(env.pathway)]);
  }
}

SlowEvent choose(const SlowTransitions& tr, double u) {
  double target = u * tr.total_hz;
  for (std::size_t i = 0; i < tr.size; ++i) {
    target -= tr.items[i].rate_hz;
    if (target < 0.0) return tr.items[i].event;
  }
  return tr.items[tr.size - 1].event;
}

}  // namespace

SlowTransitions slow_transitions(const EmitterModel& model, const LaserDrive& drive, const EnvState& env) {
  SlowTransitions out;
  if (env.shelf == Shelf::none) {
    const double s = saturation_parameter(model, drive, env);
    const double excited = s / (1.0 + s);
    out.add(SlowEvent::shelve_up, model.shelving.kappa_up_hz * excited);
    out.add(SlowEvent::shelve_down, model.shelving.kappa_down_hz * excited);
  }
  add_common_transitions(out, model, drive, env);
  return out;
}

EnvState apply_slow_event(const EmitterModel& model, const EnvState& env, SlowEvent event, Rng& rng) {
  EnvState next = env;
  switch (event) {
    case SlowEvent::shelve_up:
      next.shelf = Shelf::up;
      next.electronic = Electronic::ground;
      break;
    case SlowEvent::shelve_down:
      next.shelf = Shelf::down;
      next.electronic = Electronic::ground;
      break;
    case SlowEvent::deshelve:
      next.shelf = Shelf::none;
      next.electronic = Electronic::ground;
      break;
    case SlowEvent::spin_mix:
    case SlowEvent::mw_flip:
      next.shelf = env.shelf == Shelf::up ? Shelf::down : Shelf::up;
      break;
    case SlowEvent::pathway_switch:
      next.pathway = env.pathway == Pathway::p1 ? Pathway::p2 : Pathway::p1;
      if (model.spectral_mode == SpectralMode::jump_gaussian) {
        next.detuning_ghz = draw_gaussian_detuning(model, rng);
      } else {
        next.resonant = false;
        next.detuning_ghz = draw_off_detuning(model, rng);
      }
      break;
    case SlowEvent::detuning_jump:
      if (model.spectral_mode == SpectralMode::jump_gaussian) {
        next.detuning_ghz = draw_gaussian_detuning(model, rng);
      } else {
        next.resonant = false;
        next.detuning_ghz = draw_off_detuning(model, rng);
      }
      break;
    case SlowEvent::telegraph_return:
      next.resonant = true;
      next.detuning_ghz = 0.0;
      break;
  }
  return next;
}

SlowStep step_slow_state(const EmitterModel& model, const LaserDrive& drive, const EnvState& env, Rng& rng) {
  const auto tr = slow_transitions(model, drive, env);
  SlowStep step;
  step.next = env;
  if (tr.total_hz <= 0.0) return step;
  if (!std::isfinite(tr.total_hz)) throw std::invalid_argument("step_slow_state: non-finite transition rate");
  std::exponential_distribution<double> expo(tr.total_hz);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  step.dwell_s = expo(rng);
  const SlowEvent e = choose(tr, uni(rng));
  step.event = e;
  step.next = apply_slow_event(model, env, e, rng);
  return step;
}

EnvState initial_env(const EmitterModel& model, const LaserDrive& drive, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  EnvState env;
  const double k12 = pathway_rate_hz(model.pathway, drive, Pathway::p1);
  const double k21 = pathway_rate_hz(model.pathway, drive, Pathway::p2);
  if (k12 + k21 > 0.0 && uni(rng) < k12 / (k12 + k21)) env.pathway = Pathway::p2;
  if (model.spectral_mode == SpectralMode::jump_gaussian) {
    env.detuning_ghz = draw_gaussian_detuning(model, rng);
  } else {
    const double off = spectral_jump_rate_hz(model, drive, env.pathway);
    const double on = 1e3 * model.telegraph_return_khz[static_cast<int>(env.pathway)];
    const double p_res = (on + off) > 0.0 ? on / (on + off) : 0.0;
    if (uni(rng) < p_res) {
      env.resonant = true;
      env.detuning_ghz = 0.0;
    } else {
      env.detuning_ghz = draw_off_detuning(model, rng);
    }
  }
  return env;
}

bool is_emitting(const EmitterModel& model, const LaserDrive& drive, const EnvState& env) {
  if (env.shelf != Shelf::none) return false;
  if (drive.p_green_uw > 0.0) return true;
  if (drive.p_res_uw <= 0.0) return false;
  return std::abs(effective_detuning_ghz(model, drive, env)) <= 0.5 * broadened_fwhm_ghz(model, drive.p_res_uw);
}

TraceEngine::TraceEngine(EmitterModel model, DetectionModel detection, std::uint64_t seed)
    : model_(std::move(model)), detection_(std::move(detection)), rng_(seed) {
  model_.validate();
  detection_.validate();
}

TraceEngine::TraceEngine(EmitterModel model, DetectionModel detection, std::uint64_t seed, EnvState initial)
    : TraceEngine(std::move(model), std::move(detection), seed) {
  env_ = initial;
  initialized_ = true;
}

template <typename Sink>
void TraceEngine::evolve(const LaserDrive& drive, double duration_s, Sink&& sink) {
  drive.validate();
  if (!initialized_) {
    env_ = initial_env(model_, drive, rng_);
    initialized_ = true;
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  double t = 0.0;
  for (;;) {
    const auto tr = slow_transitions(model_, drive, env_);
    const double rate = emission_rate(model_, detection_, drive, env_);
    const bool emitting = is_emitting(model_, drive, env_);
    const double dwell = tr.total_hz > 0.0 ? expo(rng_) / tr.total_hz : std::numeric_limits<double>::infinity();
    if (t + dwell >= duration_s) {
      sink(t, duration_s, rate, emitting);
      break;
    }
    sink(t, t + dwell, rate, emitting);
    t += dwell;
    env_ = apply_slow_event(model_, env_, choose(tr, uni(rng_)), rng_);
    ++steps_;
  }
  time_ += duration_s;
}

void TraceEngine::advance(const LaserDrive& drive, double duration_s) {
  if (duration_s < 0.0) throw std::invalid_argument("TraceEngine::advance: negative duration");
  evolve(drive, duration_s, [](double, double, double, bool) {});
}

TraceEngine::Integral TraceEngine::integrate(const LaserDrive& drive, double duration_s) {
  if (duration_s < 0.0) throw std::invalid_argument("TraceEngine::integrate: negative duration");
  Integral out;
  evolve(drive, duration_s, [&](double a, double b, double rate, bool emitting) {
    out.expected_counts += rate * (b - a);
    out.pathway_counts[static_cast<int>(env_.pathway)] += rate * (b - a);
    if (emitting) out.emitting_time_s += b - a;
  });
  out.expected_counts += detection_.background_cps * duration_s;
  return out;
}

std::int64_t TraceEngine::sample_counts(double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::int64_t> pois(mean);
  return pois(rng_);
}

RecordedTrace TraceEngine::record(const LaserDrive& drive, double duration_s, double bin_width_s) {
  if (!(bin_width_s > 0.0)) throw std::invalid_argument("TraceEngine::record: bin_width must be positive");
  if (duration_s < bin_width_s) throw std::invalid_argument("TraceEngine::record: duration shorter than one bin");
  const auto n_bins = static_cast<std::size_t>(std::floor(duration_s / bin_width_s * (1.0 + 1e-12)));
  const double recorded = static_cast<double>(n_bins) * bin_width_s;

  RecordedTrace out;
  out.expected_counts.assign(n_bins, 0.0);
  out.emitting_time_s.assign(n_bins, 0.0);
  out.active_time_s.assign(n_bins, 0.0);
  const double start = time_;
  evolve(drive, duration_s, [&](double a, double b, double rate, bool emitting) {
    b = std::min(b, recorded);
    if (b <= a) return;
    auto i = static_cast<std::size_t>(a / bin_width_s);
    while (i < n_bins && a < b) {
      const double bin_end = std::min(b, static_cast<double>(i + 1) * bin_width_s);
      const double dt = bin_end - a;
      if (dt > 0.0) {
        out.expected_counts[i] += rate * dt;
        if (emitting) out.emitting_time_s[i] += dt;
        if (env_.shelf == Shelf::none) out.active_time_s[i] += dt;
      }
      a = bin_end;
      ++i;
    }
  });

  out.trace.bin_width = bin_width_s;
  out.trace.t0 = start;
  out.trace.counts.resize(n_bins);
  const double bg = detection_.background_cps * bin_width_s;
  for (std::size_t i = 0; i < n_bins; ++i) {
    out.expected_counts[i] += bg;
    out.trace.counts[i] = sample_counts(out.expected_counts[i]);
  }
  return out;
}

SimulatedTrace simulate_trace_detailed(const EmitterModel& model, const DetectionModel& detection,
                                       const LaserDrive& drive, double duration_s, double bin_width_s,
                                       std::uint64_t seed, const TraceOptions& options) {
  if (!(bin_width_s > 0.0)) throw std::invalid_argument("simulate_trace: bin_width must be positive");
  if (!(duration_s >= bin_width_s)) throw std::invalid_argument("simulate_trace: duration must be >= bin_width");
  TraceEngine engine = options.initial ? TraceEngine(model, detection, seed, *options.initial)
                                       : TraceEngine(model, detection, seed);
  if (options.burn_in_s > 0.0) engine.advance(drive, options.burn_in_s);
  auto rec = engine.record(drive, duration_s, bin_width_s);
  rec.trace.t0 = 0.0;

  SimulatedTrace out;
  out.trace = std::move(rec.trace);
  double emitting = 0.0;
  std::size_t touched = 0;
  for (double e : rec.emitting_time_s) {
    emitting += e;
    if (e > 0.0) ++touched;
  }
  out.truth.duty = emitting / out.trace.duration();
  out.truth.emitter_bin_fraction = static_cast<double>(touched) / static_cast<double>(out.trace.size());
  double active = 0.0;
  std::size_t active_bins = 0;
  for (double a : rec.active_time_s) {
    active += a;
    if (a > 0.0) ++active_bins;
  }
  out.truth.active = active / out.trace.duration();
  out.truth.active_bin_fraction = static_cast<double>(active_bins) / static_cast<double>(out.trace.size());
  out.truth.emitting_time_s = std::move(rec.emitting_time_s);
  return out;
}

BinnedTrace simulate_trace(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                           double duration_s, double bin_width_s, std::uint64_t seed) {
  return simulate_trace_detailed(model, detection, drive, duration_s, bin_width_s, seed).trace;
}

double expected_timetag_events(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                               double duration_s) {
  EnvState on_resonance;
  on_resonance.detuning_ghz = drive.detuning_laser_ghz;
  const double s = saturation_parameter(model, drive, on_resonance);
  const double gamma = model.gamma_max_hz();
  const double r = s * gamma / 2.0;
  const double rho = 0.5 * s / (1.0 + s);
  return duration_s * (r * (1.0 - rho) + (r + gamma) * rho + detection.background_cps);
}

TimeTagStream simulate_timetags(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                                double duration_s, std::uint64_t seed, const TimetagOptions& options) {
  model.validate();
  detection.validate();
  drive.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("simulate_timetags: duration must be positive");
  const double expected = expected_timetag_events(model, detection, drive, duration_s);
  if (expected > options.max_expected_events) {
    std::ostringstream msg;
    msg << "simulate_timetags: about " << expected << " events expected, above the cap of "
        << options.max_expected_events << "; shorten the duration or scale rates down (e.g. lower drive power)";
    throw CapExceeded(msg.str());
  }
  const double detect_p = model.c_cal * detection.band_efficiency(model.debye_waller);
  if (detect_p > 1.0)
    throw std::invalid_argument("simulate_timetags: c_cal * eta_band exceeds 1 and cannot act as a detection probability");

  Rng rng(seed);
  Rng bg_rng(mix64(seed ^ 0xb4c6f1d2e3a59788ULL));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  EnvState env = options.initial ? *options.initial : initial_env(model, drive, rng);
  env.electronic = Electronic::ground;
  const double gamma = model.gamma_max_hz();

  std::vector<std::int64_t> tags;
  tags.reserve(static_cast<std::size_t>(std::min(1e8, expected * detect_p * 0.6 + 16)));

  // Per slow state: slow transitions for the ground / excited electronic
  // state and the pump rate. Rebuilt only when the slow state changes.
  SlowTransitions slow_ground, slow_excited;
  double pump = 0.0;
  auto rebuild = [&] {
    slow_ground = SlowTransitions{};
    slow_excited = SlowTransitions{};
    if (env.shelf == Shelf::none) {
      slow_excited.add(SlowEvent::shelve_up, 2.0 * model.shelving.kappa_up_hz);
      slow_excited.add(SlowEvent::shelve_down, 2.0 * model.shelving.kappa_down_hz);
    }
    add_common_transitions(slow_ground, model, drive, env);
    add_common_transitions(slow_excited, model, drive, env);
    pump = env.shelf == Shelf::none ? saturation_parameter(model, drive, env) * gamma / 2.0 : 0.0;
  };
  rebuild();

  double t = 0.0;
  for (;;) {
    const bool excited = env.electronic == Electronic::excited;
    const SlowTransitions& slow = excited ? slow_excited : slow_ground;
    const double fast = excited ? pump + gamma : pump;
    const double total = fast + slow.total_hz;
    if (total <= 0.0) break;
    t += expo(rng) / total;
    if (t >= duration_s) break;
    const double u = uni(rng) * total;
    if (u < fast) {
      if (!excited) {
        env.electronic = Electronic::excited;
      } else if (u < pump) {
        env.electronic = Electronic::ground;  // stimulated emission into the drive mode
      } else {
        env.electronic = Electronic::ground;
        if (uni(rng) < detect_p) tags.push_back(static_cast<std::int64_t>(t * kTicksPerSecond));
      }
    } else {
      const double v = (u - fast) / slow.total_hz;
      env = apply_slow_event(model, env, choose(slow, std::min(v, 1.0 - 1e-16)), rng);
      rebuild();
    }
  }

  if (detection.background_cps > 0.0) {
    std::vector<std::int64_t> bg;
    double tb = 0.0;
    for (;;) {
      tb += expo(bg_rng) / detection.background_cps;
      if (tb >= duration_s) break;
      bg.push_back(static_cast<std::int64_t>(tb * kTicksPerSecond));
    }
    std::vector<std::int64_t> merged;
    merged.reserve(tags.size() + bg.size());
    std::merge(tags.begin(), tags.end(), bg.begin(), bg.end(), std::back_inserter(merged));
    tags = std::move(merged);
  }
  // Coincident ticks cannot be resolved; keep one (1 ps dead time).
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  return TimeTagStream(std::move(tags), seconds_to_ticks(duration_s), 0);
}

}  // namespace photodyn
