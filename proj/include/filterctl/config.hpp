#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/io.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/optimize.hpp"
#include "filterctl/pulses.hpp"
#include "filterctl/sensing.hpp"

namespace filterctl {

using json = nlohmann::json;

/// Config error tied to one key (dotted path).
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string key, const std::string& message)
      : InvalidInput(message + " [key: " + key + "]"), key_(std::move(key)) {}
  const std::string& key() const { return key_; }
  virtual const char* name() const { return "ConfigError"; }

 private:
  std::string key_;
};

class UnknownScenario : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* name() const override { return "UnknownScenario"; }
};

class BandOutsideGrid : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* name() const override { return "BandOutsideGrid"; }
};

class MissingDeviceParameter : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* name() const override { return "MissingDeviceParameter"; }
};

enum class ScenarioKind { x_gate_low, x_gate_high, x_gate_mixed, cz_fluxonium, sensing };

inline std::string to_string(ScenarioKind s) {
  switch (s) {
    case ScenarioKind::x_gate_low: return "x_gate_low";
    case ScenarioKind::x_gate_high: return "x_gate_high";
    case ScenarioKind::x_gate_mixed: return "x_gate_mixed";
    case ScenarioKind::cz_fluxonium: return "cz_fluxonium";
    case ScenarioKind::sensing: return "sensing";
  }
  return "?";
}

inline bool is_x_gate(ScenarioKind s) {
  return s == ScenarioKind::x_gate_low || s == ScenarioKind::x_gate_high || s == ScenarioKind::x_gate_mixed;
}

/// How to build a waveform. Frequencies inside are already in rad/ns.
struct WaveformSpec {
  // cos: Omega = (theta/T)(1 - cos(2 pi t / T)).
  // square: constant `value`; for cz_fluxonium a missing value means the CZ flux.
  // tone: a0 + amplitude cos(2 pi harmonic t / T + phase).
  // file: pulse csv at `path`.
  // ansatz: ansatz text at `path`.
  std::string type = "cos";
  double theta = kPi;
  std::optional<double> value;
  double a0 = 0.0;
  double amplitude = 0.0;
  std::size_t harmonic = 1;
  double phase = 0.0;
  std::filesystem::path path;
};

struct BaselineSpec {
  std::string label;
  WaveformSpec waveform;
  /// Non-empty: the baseline is itself optimized from `waveform` over these bands.
  std::vector<Band> bands;
};

struct SweepSpec {
  std::vector<double> amplitudes;
  std::vector<double> gammas;  // rad/ns
  std::size_t n_realizations = 200;
  /// Normalizes the susceptibility table; empty = the optimized pulse.
  std::string reference;
  /// Noise whose Lorentzian widths the susceptibility sweep varies; default = the run noise.
  std::optional<PsdModel> family;
};

struct SensingSpec {
  std::vector<Band> signal_bands;
  double omega_s = 0.0;
  double B = 1e-4;
  std::size_t shots = 300;
  std::size_t repetitions = 200;
  std::vector<double> noise_amplitudes;
  /// PDD amplitude; 0 matches the optimized coupling's RMS.
  double pdd_c0 = 0.0;
};

struct NoiseExportSpec {
  double duration = 0.0;  // ns; 0 = pulse duration
  double dt = 0.0;        // ns; 0 = pulse sample spacing
  std::size_t count = 1;
};

struct RunConfig {
  ScenarioKind scenario = ScenarioKind::x_gate_mixed;
  std::string name;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  double T = 50.0;
  std::size_t n_samples = 1024;
  Envelope envelope = Envelope::half_sine;
  double grid_omega_max = 0.0;
  std::size_t grid_points = 4001;
  std::vector<Band> bands;
  WaveformSpec initial;
  /// Previously optimized waveform; skips the optimization step when set.
  std::optional<std::filesystem::path> pulse_file;
  std::vector<BaselineSpec> baselines;
  FluxoniumPair pair;
  FluxSensor sensor;
  PsdModel noise;
  OptimizerConfig optimizer;
  SweepSpec sweep;
  SensingSpec sensing;
  NoiseExportSpec gen_noise;
  /// Canonical echo of the parsed document.
  json raw;

  double omega0() const { return kTwoPi / T; }
};

namespace detail {

/// Frequency unit applied to every frequency-valued key.
struct Units {
  double scale = 1.0;
};

inline const json& require_key(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + key, "missing required key '" + path + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, "wrong type for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j.at(key), path + key);
}

inline std::vector<Band> parse_bands(const json& j, const std::string& key, Units u) {
  if (!j.is_array()) throw ConfigError(key, "'" + key + "' must be a list of [lo, hi] pairs");
  std::vector<Band> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string k = key + "[" + std::to_string(i) + "]";
    const auto pair = get_as<std::vector<double>>(j[i], k);
    if (pair.size() != 2 || !(pair[0] < pair[1]) || pair[0] < 0.0)
      throw ConfigError(k, "band '" + k + "' must be [lo, hi] with 0 <= lo < hi");
    out.emplace_back(pair[0] * u.scale, pair[1] * u.scale);
  }
  return out;
}

inline std::vector<double> parse_amplitudes(const json& j, const std::string& key) {
  if (j.is_array()) return get_as<std::vector<double>>(j, key);
  // {"from": a, "to": b, "n": n} on a log scale.
  const double a = get_as<double>(require_key(j, "from", key + "."), key + ".from");
  const double b = get_as<double>(require_key(j, "to", key + "."), key + ".to");
  const auto n = get_as<std::size_t>(require_key(j, "n", key + "."), key + ".n");
  try {
    return log_amplitudes(a, b, n);
  } catch (const InvalidInput& e) {
    throw ConfigError(key, e.what());
  }
}

inline PsdModel parse_noise(const json& j, const std::string& key, Units u) {
  const std::string type = get_as<std::string>(require_key(j, "type", key + "."), key + ".type");
  try {
    if (type == "lorentzian")
      return Lorentzian{get_or<double>(j, "A", key + ".", 1.0),
                        get_as<double>(require_key(j, "gamma", key + "."), key + ".gamma") * u.scale,
                        get_or<double>(j, "omega0", key + ".", 0.0) * u.scale};
    if (type == "rtn")
      return RtnEnsemble{get_or<double>(j, "A", key + ".", 1.0), get_or<double>(j, "tau_min_ns", key + ".", 1.0),
                         get_or<double>(j, "tau_max_ns", key + ".", 1e4), get_or<std::size_t>(j, "n", key + ".", 200)};
    if (type == "quasi_static") return QuasiStatic{get_as<double>(require_key(j, "sigma", key + "."), key + ".sigma")};
    if (type == "table") {
      PsdTable t;
      t.omega = get_as<std::vector<double>>(require_key(j, "omega", key + "."), key + ".omega");
      for (double& w : t.omega) w *= u.scale;
      t.values = get_as<std::vector<double>>(require_key(j, "values", key + "."), key + ".values");
      return t;
    }
    if (type == "sum") {
      const json& terms = require_key(j, "terms", key + ".");
      PsdSum s;
      for (std::size_t i = 0; i < terms.size(); ++i)
        s.terms.push_back(parse_noise(terms[i], key + ".terms[" + std::to_string(i) + "]", u));
      return s;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(key, e.what());
  }
  throw ConfigError(key + ".type", "unknown noise type '" + type + "' (expected lorentzian, rtn, quasi_static, table or sum)");
}

inline WaveformSpec parse_waveform(const json& j, const std::string& key, const std::filesystem::path& base) {
  WaveformSpec w;
  w.type = get_as<std::string>(require_key(j, "type", key + "."), key + ".type");
  if (w.type == "cos") {
    w.theta = get_as<double>(require_key(j, "theta_pi", key + "."), key + ".theta_pi") * kPi;
  } else if (w.type == "square") {
    if (j.contains("value")) w.value = get_as<double>(j.at("value"), key + ".value");
  } else if (w.type == "tone") {
    w.a0 = get_or<double>(j, "a0", key + ".", 0.0);
    w.amplitude = get_as<double>(require_key(j, "amplitude", key + "."), key + ".amplitude");
    w.harmonic = get_as<std::size_t>(require_key(j, "harmonic", key + "."), key + ".harmonic");
    w.phase = get_or<double>(j, "phase", key + ".", 0.0);
    if (w.harmonic < 1) throw ConfigError(key + ".harmonic", "harmonic must be >= 1");
  } else if (w.type == "file" || w.type == "ansatz") {
    w.path = get_as<std::string>(require_key(j, "path", key + "."), key + ".path");
    if (w.path.is_relative()) w.path = base / w.path;
  } else {
    throw ConfigError(key + ".type", "unknown waveform type '" + w.type + "' (expected cos, square, tone, file or ansatz)");
  }
  return w;
}

inline OptimizerConfig parse_optimizer(const json& j, const std::string& key) {
  OptimizerConfig c;
  if (j.is_null()) return c;
  c.learning_rate = get_or<double>(j, "learning_rate", key + ".", c.learning_rate);
  c.max_iterations = get_or<std::size_t>(j, "max_iterations", key + ".", c.max_iterations);
  c.n_harmonics = get_or<std::size_t>(j, "n_harmonics", key + ".", c.n_harmonics);
  c.w1 = get_or<double>(j, "w1", key + ".", c.w1);
  if (j.contains("w2") && !(j.at("w2").is_string() && j.at("w2").get<std::string>() == "auto"))
    c.w2 = get_as<double>(j.at("w2"), key + ".w2");
  if (j.contains("tolerance")) c.tolerance = get_as<double>(j.at("tolerance"), key + ".tolerance");
  c.init_jitter = get_or<double>(j, "init_jitter", key + ".", c.init_jitter);
  c.calibrate = get_or<bool>(j, "calibrate", key + ".", c.calibrate);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(key, e.what());
  }
  return c;
}

inline double device_param(const json& dev, const std::string& name) {
  if (!dev.contains(name))
    throw MissingDeviceParameter("device." + name, "missing device parameter 'device." + name + "'");
  return get_as<double>(dev.at(name), "device." + name);
}

inline ScenarioKind parse_scenario(const json& doc) {
  const std::string s = get_as<std::string>(require_key(doc, "scenario", ""), "scenario");
  for (ScenarioKind k : {ScenarioKind::x_gate_low, ScenarioKind::x_gate_high, ScenarioKind::x_gate_mixed,
                         ScenarioKind::cz_fluxonium, ScenarioKind::sensing})
    if (to_string(k) == s) return k;
  throw UnknownScenario("scenario", "unknown scenario '" + s +
                                        "' (expected x_gate_low, x_gate_high, x_gate_mixed, cz_fluxonium or sensing)");
}

inline void check_bands_on_grid(const std::vector<Band>& bands, double omega_max, const std::string& key) {
  for (std::size_t i = 0; i < bands.size(); ++i)
    if (bands[i].hi > omega_max * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "band '" << key << "[" << i << "]' = [" << bands[i].lo << ", " << bands[i].hi
          << "] rad/ns extends beyond the omega grid maximum " << omega_max << " rad/ns";
      throw BandOutsideGrid(key + "[" + std::to_string(i) + "]", msg.str());
    }
}

}  // namespace detail

/// Parses a run config. Relative file paths resolve against `base`.
inline RunConfig parse_run_config(const json& doc, const std::filesystem::path& base = ".") {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  RunConfig c;
  c.raw = doc;
  c.scenario = parse_scenario(doc);
  c.name = get_or<std::string>(doc, "name", "", to_string(c.scenario));
  c.seed = get_or<std::uint64_t>(doc, "seed", "", 0);
  c.output_dir = get_or<std::string>(doc, "output_dir", "", "out/" + c.name);

  const bool gate = is_x_gate(c.scenario);
  const bool cz = c.scenario == ScenarioKind::cz_fluxonium;
  const bool sense = c.scenario == ScenarioKind::sensing;
  c.T = get_as<double>(require_key(doc, "duration_ns", ""), "duration_ns");
  if (!(c.T > 0.0)) throw ConfigError("duration_ns", "duration_ns must be > 0");
  c.n_samples = get_or<std::size_t>(doc, "n_samples", "", 1024);
  if (c.n_samples < 2) throw ConfigError("n_samples", "n_samples must be >= 2");
  c.envelope = sense ? Envelope::none : Envelope::half_sine;
  if (doc.contains("envelope")) {
    try {
      c.envelope = envelope_from_string(get_as<std::string>(doc.at("envelope"), "envelope"));
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ConfigError("envelope", e.what());
    }
  }

  const std::string unit = get_or<std::string>(doc, "frequency_unit", "", "rad_per_ns");
  Units u;
  if (unit == "omega0")
    u.scale = c.omega0();
  else if (unit == "ghz")
    u.scale = kTwoPi;
  else if (unit != "rad_per_ns")
    throw ConfigError("frequency_unit", "unknown frequency_unit '" + unit + "' (expected rad_per_ns, omega0 or ghz)");

  const json grid = doc.value("grid", json::object());
  c.grid_omega_max = get_or<double>(grid, "omega_max", "grid.", 20.0 * c.omega0() / u.scale) * u.scale;
  c.grid_points = get_or<std::size_t>(grid, "n_points", "grid.", 4001);
  if (!(c.grid_omega_max > 0.0) || c.grid_points < 2) throw ConfigError("grid", "grid needs omega_max > 0 and n_points >= 2");

  c.bands = parse_bands(require_key(doc, "bands", ""), "bands", u);
  if (c.bands.empty()) throw ConfigError("bands", "at least one band is required");
  check_bands_on_grid(c.bands, c.grid_omega_max, "bands");

  if (gate || cz) {
    if (doc.contains("initial_pulse")) {
      c.initial = parse_waveform(doc.at("initial_pulse"), "initial_pulse", base);
    } else if (cz) {
      c.initial.type = "square";
    } else {
      throw ConfigError("initial_pulse", "missing required key 'initial_pulse'");
    }
  } else {
    c.initial = parse_waveform(require_key(doc, "initial_flux", ""), "initial_flux", base);
  }

  if (doc.contains("pulse_file")) {
    std::filesystem::path p = get_as<std::string>(doc.at("pulse_file"), "pulse_file");
    c.pulse_file = p.is_relative() ? base / p : p;
  }

  if (doc.contains("baselines")) {
    const json& bl = doc.at("baselines");
    for (std::size_t i = 0; i < bl.size(); ++i) {
      const std::string k = "baselines[" + std::to_string(i) + "]";
      BaselineSpec b;
      b.label = get_as<std::string>(require_key(bl[i], "label", k + "."), k + ".label");
      b.waveform = parse_waveform(bl[i], k, base);
      if (bl[i].contains("bands")) {
        b.bands = parse_bands(bl[i].at("bands"), k + ".bands", u);
        check_bands_on_grid(b.bands, c.grid_omega_max, k + ".bands");
      }
      c.baselines.push_back(std::move(b));
    }
  }

  if (cz || sense) {
    const json& dev = require_key(doc, "device", "");
    if (dev.is_string()) {
      if (dev.get<std::string>() != "default")
        throw ConfigError("device", "device must be an object or the string \"default\"");
    } else if (cz) {
      c.pair.delta_a = kTwoPi * device_param(dev, "delta_a_ghz");
      c.pair.delta_b = kTwoPi * device_param(dev, "delta_b_ghz");
      c.pair.ip_a = kTwoPi * device_param(dev, "ip_a_ghz");
      c.pair.ip_b = kTwoPi * device_param(dev, "ip_b_ghz");
      c.pair.J = kTwoPi * device_param(dev, "J_ghz");
    } else {
      c.sensor.delta = kTwoPi * device_param(dev, "delta_ghz");
      c.sensor.ip = kTwoPi * device_param(dev, "ip_ghz");
    }
    try {
      cz ? c.pair.validate() : c.sensor.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError("device", e.what());
    }
  }

  c.noise = parse_noise(require_key(doc, "noise", ""), "noise", u);
  c.optimizer = parse_optimizer(doc.value("optimizer", json()), "optimizer");
  c.optimizer.seed = derive_seed(c.seed, "optimizer", 0);

  const json sweep = doc.value("sweep", json::object());
  if (sweep.contains("amplitudes")) c.sweep.amplitudes = parse_amplitudes(sweep.at("amplitudes"), "sweep.amplitudes");
  if (sweep.contains("gammas")) {
    c.sweep.gammas = get_as<std::vector<double>>(sweep.at("gammas"), "sweep.gammas");
    for (double& g : c.sweep.gammas) g *= u.scale;
  }
  c.sweep.n_realizations = get_or<std::size_t>(sweep, "n_realizations", "sweep.", c.sweep.n_realizations);
  c.sweep.reference = get_or<std::string>(sweep, "reference", "sweep.", "");
  if (sweep.contains("family")) c.sweep.family = parse_noise(sweep.at("family"), "sweep.family", u);

  if (sense) {
    const json& s = require_key(doc, "sensing", "");
    c.sensing.signal_bands = parse_bands(require_key(s, "signal_bands", "sensing."), "sensing.signal_bands", u);
    check_bands_on_grid(c.sensing.signal_bands, c.grid_omega_max, "sensing.signal_bands");
    c.sensing.omega_s = get_as<double>(require_key(s, "omega_s", "sensing."), "sensing.omega_s") * u.scale;
    c.sensing.B = get_or<double>(s, "B", "sensing.", c.sensing.B);
    c.sensing.shots = get_or<std::size_t>(s, "shots", "sensing.", c.sensing.shots);
    c.sensing.repetitions = get_or<std::size_t>(s, "repetitions", "sensing.", c.sensing.repetitions);
    if (s.contains("noise_amplitudes"))
      c.sensing.noise_amplitudes = parse_amplitudes(s.at("noise_amplitudes"), "sensing.noise_amplitudes");
    c.sensing.pdd_c0 = get_or<double>(s, "pdd_c0", "sensing.", 0.0);
    try {
      check_comb(c.sensing.omega_s, c.T);
    } catch (const InvalidInput& e) {
      throw ConfigError("sensing.omega_s", e.what());
    }
  }

  const json gn = doc.value("gen_noise", json::object());
  c.gen_noise.duration = get_or<double>(gn, "duration_ns", "gen_noise.", 0.0);
  c.gen_noise.dt = get_or<double>(gn, "dt_ns", "gen_noise.", 0.0);
  c.gen_noise.count = get_or<std::size_t>(gn, "count", "gen_noise.", 1);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("", "cannot parse " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace filterctl
