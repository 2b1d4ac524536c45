#include "photodyn/config.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "photodyn/io.hpp"

namespace photodyn {
namespace {

std::string render(const std::string& source, const std::vector<Diagnostic>& diags) {
  std::ostringstream os;
  for (std::size_t i = 0; i < diags.size(); ++i) {
    if (i) os << '\n';
    os << source;
    if (diags[i].line > 0) os << ':' << diags[i].line;
    os << ": " << diags[i].message;
  }
  return os.str();
}

int line_of(const toml::node& n) { return static_cast<int>(n.source().begin.line); }

// Reads keys of one table, records type errors and reports keys never read.
class Section {
 public:
  Section(const toml::table* t, std::string path, std::vector<Diagnostic>& diags)
      : table_(t), path_(std::move(path)), diags_(diags) {}

  [[nodiscard]] bool present() const { return table_ != nullptr; }
  [[nodiscard]] int line() const { return table_ ? line_of(*table_) : 0; }
  [[nodiscard]] const std::string& path() const { return path_; }

  [[nodiscard]] const toml::node* node(const std::string& key) {
    if (!table_) return nullptr;
    used_.insert(key);
    return table_->get(key);
  }

  void error(const toml::node* n, const std::string& msg) {
    diags_.push_back({n ? line_of(*n) : line(), msg});
  }

  void number(const std::string& key, double& out) {
    const auto* n = node(key);
    if (!n) return;
    if (auto v = n->value<double>(); v && (n->is_integer() || n->is_floating_point()))
      out = *v;
    else
      error(n, "'" + qualified(key) + "' must be a number");
  }

  void integer(const std::string& key, int& out) {
    const auto* n = node(key);
    if (!n) return;
    if (auto v = n->as_integer())
      out = static_cast<int>(v->get());
    else
      error(n, "'" + qualified(key) + "' must be an integer");
  }

  void boolean(const std::string& key, bool& out) {
    const auto* n = node(key);
    if (!n) return;
    if (auto v = n->as_boolean())
      out = v->get();
    else
      error(n, "'" + qualified(key) + "' must be true or false");
  }

  bool string(const std::string& key, std::string& out) {
    const auto* n = node(key);
    if (!n) return false;
    if (auto v = n->as_string()) {
      out = v->get();
      return true;
    }
    error(n, "'" + qualified(key) + "' must be a string");
    return false;
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    const auto* n = node(key);
    if (!n) return;
    const auto* arr = n->as_array();
    if (!arr) {
      error(n, "'" + qualified(key) + "' must be an array of numbers");
      return;
    }
    std::vector<double> v;
    for (const auto& e : *arr) {
      if (auto d = e.value<double>(); d && (e.is_integer() || e.is_floating_point())) {
        v.push_back(*d);
      } else {
        error(&e, "'" + qualified(key) + "' must hold numbers only");
        return;
      }
    }
    out = std::move(v);
  }

  Section sub(const std::string& key) {
    const auto* n = node(key);
    if (n && !n->is_table()) {
      error(n, "'" + qualified(key) + "' must be a table");
      return {nullptr, qualified(key), diags_};
    }
    return {n ? n->as_table() : nullptr, qualified(key), diags_};
  }

  /// Flags every key that no accessor asked for.
  void finish() {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!used_.count(key)) diags_.push_back({line_of(v), "unknown key '" + qualified(key) + "'"});
    }
  }

  [[nodiscard]] std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> used_;
  std::vector<Diagnostic>& diags_;
};

template <typename Fn>
void guarded(Section& s, std::vector<Diagnostic>& diags, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    diags.push_back({s.line(), std::string("[") + (s.path().empty() ? "root" : s.path()) + "] " + e.what()});
  }
}

void read_jump(Section s, JumpRateLaw& j) {
  s.number("base_khz", j.base_khz);
  s.number("c_res_khz_per_uw", j.c_res_khz_per_uw);
  s.number("c_blue_khz_per_uw", j.c_blue_khz_per_uw);
  s.number("arrhenius_khz", j.arrhenius_khz);
  s.number("activation_mev", j.activation_mev);
  s.finish();
}

// Returns whether c_cal should be derived from i_inf_target_mcps.
bool read_model(Section s, EmitterModel& m, std::vector<Diagnostic>& diags) {
  bool calibrate = true;
  s.boolean("calibrate", calibrate);
  s.number("gamma_rad_per_ns", m.gamma_rad_per_ns);
  s.number("debye_waller", m.debye_waller);
  s.number("p_sat_uw", m.p_sat_uw);
  s.number("p_sat_green_uw", m.p_sat_green_uw);
  s.number("i_inf_target_mcps", m.i_inf_target_mcps);
  if (const auto* n = s.node("c_cal")) {
    if (calibrate) s.error(n, "'model.c_cal' needs 'model.calibrate = false'");
    s.number("c_cal", m.c_cal);
  }
  s.number("gamma_h_ghz", m.gamma_h_ghz);
  s.number("sigma_inh_ghz", m.sigma_inh_ghz);
  s.number("pathway2_offset_ghz", m.pathway2_offset_ghz);
  std::string mode;
  if (s.string("spectral_mode", mode)) {
    try {
      m.spectral_mode = spectral_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      s.error(s.node("spectral_mode"), e.what());
    }
  }
  std::vector<double> ret;
  s.numbers("telegraph_return_khz", ret);
  if (!ret.empty()) {
    if (ret.size() != 2)
      s.error(s.node("telegraph_return_khz"), "'model.telegraph_return_khz' needs one value per pathway");
    else
      m.telegraph_return_khz = {ret[0], ret[1]};
  }
  s.number("telegraph_off_min_ghz", m.telegraph_off_min_ghz);

  auto jump = s.sub("jump");
  read_jump(jump.sub("p1"), m.jump[0]);
  read_jump(jump.sub("p2"), m.jump[1]);
  jump.finish();

  auto pw = s.sub("pathway");
  pw.number("k12_hz", m.pathway.k12_hz);
  pw.number("k21_hz", m.pathway.k21_hz);
  pw.number("k12_blue_hz_per_uw", m.pathway.k12_blue_hz_per_uw);
  pw.number("k21_blue_hz_per_uw", m.pathway.k21_blue_hz_per_uw);
  pw.finish();

  auto sh = s.sub("shelving");
  auto& x = m.shelving;
  sh.number("kappa_up_hz", x.kappa_up_hz);
  sh.number("kappa_down_hz", x.kappa_down_hz);
  sh.number("d_up_hz", x.d_up_hz);
  sh.number("d_down_hz", x.d_down_hz);
  sh.number("r_blue_hz_per_uw", x.r_blue_hz_per_uw);
  sh.number("mix_m0_hz", x.mix_m0_hz);
  sh.number("mix_m1_hz", x.mix_m1_hz);
  sh.number("mix_theta_ref_deg", x.mix_theta_ref_deg);
  sh.number("mix_zero_field_hz", x.mix_zero_field_hz);
  sh.number("zero_field_below_mt", x.zero_field_below_mt);
  sh.finish();

  auto mw = s.sub("mw");
  mw.number("f0_ghz", m.mw.f0_ghz);
  mw.number("hwhm_mhz", m.mw.hwhm_mhz);
  mw.number("r0_hz", m.mw.r0_hz);
  mw.number("p_ref_dbm", m.mw.p_ref_dbm);
  mw.finish();
  s.finish();

  if (calibrate) m.c_cal = 1.0;  // replaced once the detection chain is known
  guarded(s, diags, [&] { m.validate(); });
  return calibrate;
}

void read_detection(Section s, DetectionModel& d, std::vector<Diagnostic>& diags) {
  s.number("eta", d.eta);
  std::string band;
  if (s.string("band", band)) {
    try {
      d.band = band_from_string(band);
    } catch (const std::invalid_argument& e) {
      s.error(s.node("band"), e.what());
    }
  }
  s.number("background_cps", d.background_cps);
  s.finish();
  guarded(s, diags, [&] { d.validate(); });
}

LaserDrive read_drive(Section s, std::vector<Diagnostic>& diags) {
  LaserDrive d;
  s.number("p_res_uw", d.p_res_uw);
  s.number("detuning_laser_ghz", d.detuning_laser_ghz);
  s.number("p_blue_uw", d.p_blue_uw);
  s.number("p_green_uw", d.p_green_uw);
  s.number("temperature_k", d.temperature_k);
  s.number("b_field_mt", d.b_field_mt);
  s.number("theta_deg", d.theta_deg);
  auto mw = s.sub("mw");
  mw.number("freq_ghz", d.mw.freq_ghz);
  mw.number("power_dbm", d.mw.power_dbm);
  mw.boolean("on", d.mw.on);
  mw.finish();
  s.finish();
  guarded(s, diags, [&] { d.validate(); });
  return d;
}

std::optional<EnvState> read_initial(Section s) {
  if (!s.present()) return std::nullopt;
  EnvState e;
  int pathway = 1;
  s.integer("pathway", pathway);
  if (pathway != 1 && pathway != 2) s.error(s.node("pathway"), "'" + s.qualified("pathway") + "' must be 1 or 2");
  e.pathway = pathway == 2 ? Pathway::p2 : Pathway::p1;
  s.boolean("resonant", e.resonant);
  s.number("detuning_ghz", e.detuning_ghz);
  std::string shelf;
  if (s.string("shelf", shelf)) {
    if (shelf == "none")
      e.shelf = Shelf::none;
    else if (shelf == "up")
      e.shelf = Shelf::up;
    else if (shelf == "down")
      e.shelf = Shelf::down;
    else
      s.error(s.node("shelf"), "'" + s.qualified("shelf") + "' must be none, up or down");
  }
  s.finish();
  return e;
}

std::vector<double> stepped(double start, double stop, double step) {
  std::vector<double> v;
  if (!(step > 0.0) || stop < start) return v;
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) v.push_back(start + static_cast<double>(i) * step);
  return v;
}

Protocol read_protocol(Section s, std::vector<Diagnostic>& diags) {
  if (!s.present()) {
    diags.push_back({0, "missing [protocol] table"});
    return TraceProtocol{};
  }
  std::string kind;
  if (!s.string("kind", kind)) {
    diags.push_back({s.line(), "'protocol.kind' is required"});
    return TraceProtocol{};
  }
  auto drive = [&](const char* key = "drive") { return read_drive(s.sub(key), diags); };
  Protocol out;
  if (kind == "trace") {
    TraceProtocol p;
    p.drive = drive();
    s.number("duration_s", p.duration_s);
    s.number("bin_width_s", p.bin_width_s);
    s.number("burn_in_s", p.burn_in_s);
    s.number("background_s", p.background_s);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "timetags") {
    TimetagProtocol p;
    p.drive = drive();
    s.number("duration_s", p.duration_s);
    s.number("max_expected_events", p.max_expected_events);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "saturation") {
    SaturationProtocol p;
    p.drive = drive();
    s.numbers("powers_uw", p.powers_uw);
    s.number("dwell_s", p.dwell_s);
    s.number("bin_width_s", p.bin_width_s);
    s.number("background_s", p.background_s);
    s.number("n_sigma", p.n_sigma);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "ple") {
    PleProtocol p;
    p.drive = drive();
    s.number("start_ghz", p.start_ghz);
    s.number("stop_ghz", p.stop_ghz);
    s.number("step_ghz", p.step_ghz);
    s.number("dwell_s", p.dwell_s);
    s.integer("scans", p.scans);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "pump_probe") {
    PumpProbeProtocol p;
    p.pump = drive("pump");
    p.dark = drive("dark");
    p.probe = drive("probe");
    s.number("pump_s", p.pump_s);
    s.numbers("delays_s", p.delays_s);
    s.number("readout_s", p.readout_s);
    s.number("bin_width_s", p.bin_width_s);
    s.integer("repetitions", p.repetitions);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "odmr") {
    OdmrProtocol p;
    p.drive = drive();
    double start = 1.5, stop = 2.24, step = 0.01;
    s.number("start_ghz", start);
    s.number("stop_ghz", stop);
    s.number("step_ghz", step);
    p.freqs_ghz = stepped(start, stop, step);
    s.number("dwell_s", p.dwell_s);
    s.integer("interleave", p.interleave);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "angle") {
    AngleProtocol p;
    p.drive = drive();
    double start = 0.0, stop = 180.0, step = 10.0;
    s.number("start_deg", start);
    s.number("stop_deg", stop);
    s.number("step_deg", step);
    p.angles_deg = stepped(start, stop, step);
    s.number("dwell_s", p.dwell_s);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else if (kind == "spectra") {
    SpectraProtocol p;
    p.drive = drive();
    s.integer("frames", p.frames);
    s.number("frame_s", p.frame_s);
    s.number("grid_start_nm", p.grid_start_nm);
    s.number("grid_stop_nm", p.grid_stop_nm);
    s.number("grid_step_nm", p.grid_step_nm);
    s.number("zpl1_nm", p.zpl1_nm);
    s.number("zpl2_offset_nm", p.zpl2_offset_nm);
    s.number("zpl_sigma_nm", p.zpl_sigma_nm);
    s.number("acoustic_psb_thz", p.acoustic_psb_thz);
    s.number("acoustic_psb_sigma_nm", p.acoustic_psb_sigma_nm);
    s.number("acoustic_psb_fraction", p.acoustic_psb_fraction);
    s.numbers("optical_psb_nm", p.optical_psb_nm);
    s.number("optical_psb_sigma_nm", p.optical_psb_sigma_nm);
    s.number("counts_scale", p.counts_scale);
    p.initial = read_initial(s.sub("initial"));
    out = p;
  } else {
    s.error(s.node("kind"), "unknown protocol kind '" + kind +
                                "' (expected trace, timetags, saturation, ple, pump_probe, odmr, angle or spectra)");
    return TraceProtocol{};
  }
  s.finish();
  guarded(s, diags, [&] { validate_protocol(out); });
  return out;
}

// Accepted parameters per stage: numbers, strings, lists.
struct StageKeys {
  std::set<std::string> numbers, strings, lists;
};

const std::map<std::string, StageKeys>& stage_keys() {
  static const std::map<std::string, StageKeys> k = {
      {"intervals", {{"n_sigma", "min_count", "histogram_bin_width_s"}, {}, {}}},
      {"mixture", {{"J", "pushforward_width", "grid_points", "grid_lo", "grid_hi"}, {"weight_mode"}, {"lambda_max"}}},
      {"g2", {{"max_lag_ns", "bin_width_ns", "tau_guess_ns", "fit_bunching"}, {}, {}}},
      {"saturation", {{}, {}, {}}},
      {"ple", {{"bins", "range_ghz"}, {}, {}}},
      {"pump_probe", {{}, {}, {}}},
      {"odmr", {{}, {}, {}}},
      {"angle", {{}, {}, {}}},
      {"spectrum", {{"zpl_search_lo_nm", "zpl_search_hi_nm", "double_zpl", "frame"}, {}, {}}},
      {"anticorrelation", {{"zpl_search_lo_nm", "zpl_search_hi_nm"}, {}, {}}},
      {"qe", {{"tau_ns"}, {}, {}}},
  };
  return k;
}

std::vector<StageSpec> read_analysis(const toml::node* node, std::vector<Diagnostic>& diags) {
  std::vector<StageSpec> out;
  if (!node) return out;
  const auto* arr = node->as_array();
  if (!arr || !arr->is_array_of_tables()) {
    diags.push_back({line_of(*node), "'analysis' must be an array of tables ([[analysis]])"});
    return out;
  }
  std::set<std::string> seen;
  for (const auto& el : *arr) {
    const auto& t = *el.as_table();
    StageSpec st;
    st.line = line_of(t);
    const auto* name = t.get("stage");
    if (!name || !name->is_string()) {
      diags.push_back({st.line, "every [[analysis]] entry needs a string 'stage'"});
      continue;
    }
    st.name = name->as_string()->get();
    const auto it = stage_keys().find(st.name);
    if (it == stage_keys().end()) {
      diags.push_back({line_of(*name), "unknown analysis stage '" + st.name + "'"});
      continue;
    }
    if (!seen.insert(st.name).second) diags.push_back({st.line, "analysis stage '" + st.name + "' listed twice"});
    for (const auto& [k, v] : t) {
      const std::string key(k.str());
      if (key == "stage") continue;
      const std::string q = "analysis." + st.name + "." + key;
      if (it->second.numbers.count(key)) {
        if (auto d = v.value<double>(); d && (v.is_integer() || v.is_floating_point()))
          st.numbers[key] = *d;
        else if (auto b = v.as_boolean())
          st.numbers[key] = b->get() ? 1.0 : 0.0;
        else
          diags.push_back({line_of(v), "'" + q + "' must be a number"});
      } else if (it->second.strings.count(key)) {
        if (auto s = v.as_string())
          st.strings[key] = s->get();
        else
          diags.push_back({line_of(v), "'" + q + "' must be a string"});
      } else if (it->second.lists.count(key)) {
        std::vector<double> vals;
        bool ok = v.is_array();
        if (ok)
          for (const auto& e : *v.as_array()) {
            auto d = e.value<double>();
            if (!d || !(e.is_integer() || e.is_floating_point())) {
              ok = false;
              break;
            }
            vals.push_back(*d);
          }
        if (ok)
          st.lists[key] = std::move(vals);
        else
          diags.push_back({line_of(v), "'" + q + "' must be an array of numbers"});
      } else {
        diags.push_back({line_of(v), "unknown key '" + q + "'"});
      }
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::string source, std::vector<Diagnostic> diagnostics)
    : std::runtime_error(render(source, diagnostics)), source_(std::move(source)), diagnostics_(std::move(diagnostics)) {}

double StageSpec::number(const std::string& key, double fallback) const {
  const auto it = numbers.find(key);
  return it == numbers.end() ? fallback : it->second;
}

std::string StageSpec::string(const std::string& key, const std::string& fallback) const {
  const auto it = strings.find(key);
  return it == strings.end() ? fallback : it->second;
}

std::optional<std::vector<double>> StageSpec::list(const std::string& key) const {
  const auto it = lists.find(key);
  if (it == lists.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"intervals", "mixture", "g2",  "saturation", "ple",
                                                 "pump_probe", "odmr",   "angle", "spectrum", "anticorrelation",
                                                 "qe"};
  return names;
}

std::vector<std::string> default_stages(const Protocol& protocol) {
  switch (protocol.index()) {
    case 0: return {"intervals", "mixture"};
    case 1: return {"g2"};
    case 2: return {"saturation", "qe"};
    case 3: return {"ple"};
    case 4: return {"pump_probe"};
    case 5: return {"odmr"};
    case 6: return {"angle"};
    default: return {"spectrum", "anticorrelation"};
  }
}

StageSpec RunConfig::stage(const std::string& name) const {
  for (const auto& s : analysis)
    if (s.name == name) return s;
  StageSpec s;
  s.name = name;
  return s;
}

RunConfig parse_config(std::string_view text, std::string_view source_name) {
  const std::string source(source_name);
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source, {{static_cast<int>(e.source().begin.line), std::string(e.description())}});
  }
  std::vector<Diagnostic> diags;
  RunConfig cfg;
  cfg.text = std::string(text);
  Section top(&root, "", diags);
  if (const auto* n = top.node("seed")) {
    const auto v = n->as_integer();
    if (!v || v->get() < 0)
      top.error(n, "'seed' must be a non-negative integer");
    else
      cfg.seed = static_cast<std::uint64_t>(v->get());
  }
  std::string out_dir;
  if (top.string("output_dir", out_dir)) cfg.output_dir = out_dir;

  const bool calibrate = read_model(top.sub("model"), cfg.model, diags);
  read_detection(top.sub("detection"), cfg.detection, diags);
  cfg.protocol = read_protocol(top.sub("protocol"), diags);
  cfg.analysis = read_analysis(top.node("analysis"), diags);
  top.finish();

  if (diags.empty() && calibrate) {
    try {
      cfg.model.c_cal = calibration_multiplier(cfg.model, cfg.detection);
    } catch (const std::invalid_argument& e) {
      diags.push_back({0, e.what()});
    }
  }
  std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  if (!diags.empty()) throw ConfigError(source, std::move(diags));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::IoError("cannot read config '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config(text, path.string());
}

}  // namespace photodyn
