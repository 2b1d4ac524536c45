#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>

#include "photodyn/core.hpp"
#include "photodyn/model.hpp"
#include "photodyn/random.hpp"

namespace photodyn {

enum class SlowEvent {
  shelve_up,
  shelve_down,
  deshelve,
  spin_mix,
  mw_flip,
  pathway_switch,
  detuning_jump,  // jump_gaussian mode, or telegraph resonant -> off
  telegraph_return,
};

struct SlowTransition {
  SlowEvent event;
  double rate_hz;
};

/// Active slow transitions out of `env` under `drive`. Shelving entry is
/// weighted by the excited-state factor s/(1+s); the list never holds more
/// than eight entries.
struct SlowTransitions {
  std::array<SlowTransition, 8> items{};
  std::size_t size = 0;
  double total_hz = 0.0;

  void add(SlowEvent e, double rate) {
    if (rate <= 0.0) return;
    items[size++] = {e, rate};
    total_hz += rate;
  }
};

SlowTransitions slow_transitions(const EmitterModel& model, const LaserDrive& drive, const EnvState& env);

/// Applies a transition; draws new detunings from `rng` where needed.
EnvState apply_slow_event(const EmitterModel& model, const EnvState& env, SlowEvent event, Rng& rng);

struct SlowStep {
  EnvState next;
  double dwell_s = std::numeric_limits<double>::infinity();
  std::optional<SlowEvent> event;  // empty when the state is absorbing
};

/// One Gillespie step of the slow process. With zero total rate the state is
/// absorbing under the current drive: `dwell_s` is +inf and `next == env`.
SlowStep step_slow_state(const EmitterModel& model, const LaserDrive& drive, const EnvState& env, Rng& rng);

/// Draws a starting state from the stationary pathway / telegraph
/// occupancies (unshelved, ground state).
EnvState initial_env(const EmitterModel& model, const LaserDrive& drive, Rng& rng);

/// True when the emitter is unshelved and its line sits within the
/// power-broadened half width of the resonant laser (or it is pumped
/// off-resonantly).
bool is_emitting(const EmitterModel& model, const LaserDrive& drive, const EnvState& env);

struct RecordedTrace {
  BinnedTrace trace;
  std::vector<double> emitting_time_s;  // per bin
  std::vector<double> active_time_s;    // per bin, time spent unshelved
  std::vector<double> expected_counts;  // per bin, emitter + background
};

/// Two-tier engine: Gillespie evolution of the slow state with conditionally
/// Poisson photon counts. Single-threaded; one instance per RNG substream.
class TraceEngine {
 public:
  TraceEngine(EmitterModel model, DetectionModel detection, std::uint64_t seed);
  TraceEngine(EmitterModel model, DetectionModel detection, std::uint64_t seed, EnvState initial);

  /// Evolves the slow state without recording.
  void advance(const LaserDrive& drive, double duration_s);

  /// Evolves the slow state and records floor(duration / bin_width) bins;
  /// any trailing remainder is evolved but not recorded.
  RecordedTrace record(const LaserDrive& drive, double duration_s, double bin_width_s);

  struct Integral {
    double expected_counts = 0.0;  // emitter + background
    double emitting_time_s = 0.0;
    std::array<double, 2> pathway_counts{};  // emitter only, per pathway
  };
  /// Evolves for `duration_s` and returns the integrated expected counts.
  Integral integrate(const LaserDrive& drive, double duration_s);

  /// Poisson sample with the engine's generator.
  std::int64_t sample_counts(double mean);

  [[nodiscard]] const EnvState& env() const { return env_; }
  [[nodiscard]] double time_s() const { return time_; }
  [[nodiscard]] std::uint64_t slow_steps() const { return steps_; }
  [[nodiscard]] const EmitterModel& model() const { return model_; }
  [[nodiscard]] const DetectionModel& detection() const { return detection_; }

 private:
  template <typename Sink>
  void evolve(const LaserDrive& drive, double duration_s, Sink&& sink);

  EmitterModel model_;
  DetectionModel detection_;
  Rng rng_;
  EnvState env_;
  double time_ = 0.0;
  std::uint64_t steps_ = 0;
  bool initialized_ = false;
};

struct TraceTruth {
  double duty = 0.0;                  // time fraction spent emitting
  double emitter_bin_fraction = 0.0;  // fraction of bins with any emitting time
  double active = 0.0;                // time fraction spent unshelved
  double active_bin_fraction = 0.0;   // fraction of bins with any unshelved time
  std::vector<double> emitting_time_s;
};

struct SimulatedTrace {
  BinnedTrace trace;
  TraceTruth truth;
};

struct TraceOptions {
  double burn_in_s = 0.0;
  std::optional<EnvState> initial;
};

/// Binned trace under a constant drive; reproducible for a fixed seed.
BinnedTrace simulate_trace(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                           double duration_s, double bin_width_s, std::uint64_t seed);

SimulatedTrace simulate_trace_detailed(const EmitterModel& model, const DetectionModel& detection,
                                       const LaserDrive& drive, double duration_s, double bin_width_s,
                                       std::uint64_t seed, const TraceOptions& options = {});

struct TimetagOptions {
  double max_expected_events = 1e8;
  std::optional<EnvState> initial;
};

/// Photon-resolution simulation: explicit G <-> E cycling (absorption and
/// stimulated emission at R = s Gamma / 2, spontaneous decay at Gamma),
/// shelving from E at 2 kappa, slow processes interleaved, and an
/// independent Poisson background stream.
TimeTagStream simulate_timetags(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                                double duration_s, std::uint64_t seed, const TimetagOptions& options = {});

/// Expected number of stochastic events simulate_timetags would execute.
double expected_timetag_events(const EmitterModel& model, const DetectionModel& detection, const LaserDrive& drive,
                               double duration_s);

}  // namespace photodyn
