#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "filterctl/config.hpp"
#include "filterctl/dynamics.hpp"
#include "filterctl/filters.hpp"
#include "filterctl/io.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/optimize.hpp"
#include "filterctl/sensing.hpp"
#include "filterctl/susceptibility.hpp"

#ifndef FILTERCTL_VERSION
#define FILTERCTL_VERSION "0.0.0"
#endif

namespace filterctl {

inline constexpr const char* kVersion = FILTERCTL_VERSION;

/// Output directory plus the bookkeeping that ends up in manifest.json.
class RunContext {
 public:
  RunContext(RunConfig cfg, std::string command) : cfg_(std::move(cfg)), command_(std::move(command)) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg_.output_dir.string() + ": " + ec.message());
  }

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& out() const { return cfg_.output_dir; }

  /// Named sub-stream of the root seed, recorded in the manifest.
  std::uint64_t seed(const std::string& stream, std::uint64_t index = 0) {
    const std::uint64_t s = derive_seed(cfg_.seed, stream, index);
    seeds_[stream + "/" + std::to_string(index)] = s;
    return s;
  }

  void csv(const std::string& name, const CsvTable& t) {
    write_csv(out() / name, t);
    files_.push_back(name);
  }

  void text(const std::string& name, const std::string& body) {
    write_text(out() / name, body);
    files_.push_back(name);
  }

  void log(const std::string& line) { notes_.push_back(line); }
  const std::vector<std::string>& notes() const { return notes_; }

  std::uint64_t config_hash() const { return fnv1a64(cfg_.raw.dump()); }

  void write_manifest() const {
    json m;
    m["software"] = "filterctl";
    m["version"] = kVersion;
    m["command"] = command_;
    m["scenario"] = to_string(cfg_.scenario);
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash()));
    m["config_hash_fnv1a64"] = hash;
    m["root_seed"] = cfg_.seed;
    m["seeds"] = seeds_;
    m["files"] = files_;
    m["config"] = cfg_.raw;
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["timestamp"] = ts;
    write_text(out() / "manifest.json", m.dump(2) + "\n");
  }

 private:
  RunConfig cfg_;
  std::string command_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::string> files_;
  std::vector<std::string> notes_;
};

// ---------------------------------------------------------------------------
// Building blocks.

inline SampledWaveform build_waveform(const WaveformSpec& w, const RunConfig& cfg) {
  const double T = cfg.T;
  const std::size_t n = cfg.n_samples;
  if (w.type == "cos") return sample(cos_pulse(w.theta, T), n);
  if (w.type == "square") {
    if (w.value) return sample(square_pulse(*w.value, T), n);
    if (cfg.scenario == ScenarioKind::cz_fluxonium) return sample(square_pulse(square_cz_flux(cfg.pair, T), T), n);
    throw ConfigError("initial_pulse.value", "square waveform needs a value outside cz_fluxonium");
  }
  if (w.type == "tone") {
    PulseAnsatz a{T, w.a0, std::vector<Harmonic>(w.harmonic), Envelope::none};
    a.harmonics.back() = {w.amplitude, w.phase};
    return sample(a, n);
  }
  SampledWaveform s =
      w.type == "file" ? read_pulse_csv(w.path) : sample(parse_ansatz(read_text(w.path)), n);
  if (s.size() != n || std::abs(s.duration() - T) > 1e-9 * T)
    throw ConfigError("pulse_file", "waveform " + w.path.string() + " has " + std::to_string(s.size()) +
                                        " samples over " + format_number(s.duration()) + " ns, expected " +
                                        std::to_string(n) + " over " + format_number(T) + " ns");
  return s;
}

inline std::unique_ptr<CostProblem> make_problem(const RunConfig& cfg, const std::vector<Band>& bands) {
  if (is_x_gate(cfg.scenario))
    return std::make_unique<SingleQubitGateProblem>(cfg.T, cfg.n_samples, gate_x(), bands, cfg.envelope);
  if (cfg.scenario == ScenarioKind::cz_fluxonium)
    return std::make_unique<CzGateProblem>(cfg.pair, cfg.T, cfg.n_samples, bands, cfg.envelope);
  return std::make_unique<SensingProblem>(cfg.T, cfg.n_samples, bands, cfg.sensing.signal_bands, cfg.sensor,
                                          cfg.envelope);
}

inline Scenario make_scenario(const RunConfig& cfg, const SampledWaveform& w) {
  if (cfg.scenario == ScenarioKind::cz_fluxonium) return CzScenario{cfg.pair, w};
  return SingleQubitScenario{w};
}

inline OmegaGrid run_grid(const RunConfig& cfg) { return uniform_grid(cfg.grid_omega_max, cfg.grid_points, true); }

/// Filter function of a waveform in the scenario's noise channels.
inline FilterFunction run_filter(const RunConfig& cfg, const SampledWaveform& w) {
  const OmegaGrid grid = run_grid(cfg);
  switch (cfg.scenario) {
    case ScenarioKind::cz_fluxonium: return filter_function(control_functions_cz(cfg.pair, w), grid);
    case ScenarioKind::sensing:
      return filter_function(control_functions_coupling(sensor_coupling(cfg.sensor, w)), {1.0}, grid);
    default: return filter_function(control_functions_single_qubit(w), grid);
  }
}

/// Every Lorentzian width set to gamma and every amplitude to 1.
inline PsdModel with_width(const PsdModel& m, double gamma) {
  if (auto* l = m.get_if<Lorentzian>()) return Lorentzian{1.0, gamma, l->omega0};
  if (auto* s = m.get_if<PsdSum>()) {
    PsdSum out;
    for (const PsdModel& t : s->terms) out.terms.push_back(with_width(t, gamma));
    return out;
  }
  return with_amplitude(m, 1.0);
}

inline bool has_lorentzian(const PsdModel& m) {
  if (m.get_if<Lorentzian>()) return true;
  if (auto* s = m.get_if<PsdSum>())
    for (const PsdModel& t : s->terms)
      if (has_lorentzian(t)) return true;
  return false;
}

struct OptimizedPulse {
  SampledWaveform initial;
  SampledWaveform waveform;
  OptimizationTrace trace;
  bool loaded = false;
};

/// Optimizes from the configured seed pulse over cfg.bands (or loads pulse_file)
/// and writes pulse.csv, ansatz.txt, trace.csv, filter.csv, filter_initial.csv, bands.csv.
inline OptimizedPulse run_optimize(RunContext& ctx) {
  const RunConfig& cfg = ctx.config();
  OptimizedPulse out;
  out.initial = build_waveform(cfg.initial, cfg);
  if (cfg.pulse_file) {
    WaveformSpec f;
    f.type = cfg.pulse_file->extension() == ".txt" ? "ansatz" : "file";
    f.path = *cfg.pulse_file;
    out.waveform = build_waveform(f, cfg);
    out.loaded = true;
    ctx.log("loaded optimized pulse from " + f.path.string());
  } else {
    const auto problem = make_problem(cfg, cfg.bands);
    OptimizerConfig oc = cfg.optimizer;
    oc.seed = ctx.seed("optimizer");
    out.trace = optimize(out.initial, oc, *problem);
    out.waveform = sample(out.trace.final_ansatz, cfg.n_samples);
    ctx.text("ansatz.txt", ansatz_text(out.trace.final_ansatz));
    ctx.csv("trace.csv", trace_table(out.trace));
    ctx.log("optimizer: " + std::to_string(out.trace.iterations) + " iterations, cost " +
            format_number(out.trace.cost.front()) + " -> " + format_number(out.trace.final_cost));
  }
  ctx.csv("pulse.csv", pulse_table(out.waveform));
  const FilterFunction F0 = run_filter(cfg, out.initial), F1 = run_filter(cfg, out.waveform);
  ctx.csv("filter.csv", filter_table(F1));
  ctx.csv("filter_initial.csv", filter_table(F0));

  CsvTable bands({"band", "lo_rad_per_ns", "hi_rad_per_ns", "F_initial", "F_optimized", "ratio"});
  auto add = [&](const std::string& label, const std::vector<Band>& bs) {
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const double a = band_integral(F0, {bs[i]}), b = band_integral(F1, {bs[i]});
      bands.row(label + std::to_string(i), bs[i].lo, bs[i].hi, a, b, b / a);
    }
  };
  add("noise", cfg.bands);
  if (cfg.scenario == ScenarioKind::sensing) add("signal", cfg.sensing.signal_bands);
  ctx.csv("bands.csv", bands);
  const double ratio = band_integral(F1, cfg.bands) / band_integral(F0, cfg.bands);
  ctx.log("noise-band integral ratio optimized/initial = " + format_number(ratio));
  return out;
}

/// The optimized pulse ("rcp") followed by the configured baselines.
inline std::vector<PulseCase> pulse_set(RunContext& ctx, const SampledWaveform& rcp) {
  const RunConfig& cfg = ctx.config();
  const bool cz = cfg.scenario == ScenarioKind::cz_fluxonium;
  const Matrix target = cz ? gate_cz().U : gate_x().U;
  std::vector<PulseCase> out;
  out.push_back({"rcp", make_scenario(cfg, rcp), target, cz});
  for (std::size_t i = 0; i < cfg.baselines.size(); ++i) {
    const BaselineSpec& b = cfg.baselines[i];
    SampledWaveform w = build_waveform(b.waveform, cfg);
    if (!b.bands.empty()) {
      const auto problem = make_problem(cfg, b.bands);
      OptimizerConfig oc = cfg.optimizer;
      oc.seed = ctx.seed("optimizer", i + 1);
      w = sample(optimize(w, oc, *problem).final_ansatz, cfg.n_samples);
    }
    ctx.csv("pulse_" + b.label + ".csv", pulse_table(w));
    out.push_back({b.label, make_scenario(cfg, w), target, cz});
  }
  return out;
}

/// Fidelity sweeps of every pulse under cfg.noise scaled to each amplitude.
/// All pulses share one set of noise traces.
inline void run_verify(RunContext& ctx, const std::vector<PulseCase>& pulses) {
  const RunConfig& cfg = ctx.config();
  if (cfg.sweep.amplitudes.empty()) throw ConfigError("sweep.amplitudes", "verify needs sweep.amplitudes");
  const std::uint64_t seed = ctx.seed("noise", 0);
  const PsdModel unit = with_amplitude(cfg.noise, 1.0);
  CsvTable summary({"pulse", "A", "infidelity", "stderr", "predicted"});
  for (const PulseCase& p : pulses) {
    const Matrix target = p.self_compared ? ideal_unitary(p.scenario) : p.target;
    const auto sweep = fidelity_sweep(p.scenario, target, unit, cfg.sweep.amplitudes, cfg.sweep.n_realizations, seed,
                                      p.self_compared);
    ctx.csv("sweep_" + p.label + ".csv", sweep_table(sweep));
    const FilterFunction F = run_filter(cfg, scenario_waveform(p.scenario));
    ctx.csv("filter_" + p.label + ".csv", filter_table(F));
    const double floor = noise_free_floor(p);
    for (const FidelityStats& s : sweep)
      summary.row(p.label, s.A, s.infidelity(), s.std_error, floor + predict_infidelity(F, with_amplitude(unit, s.A)));
  }
  ctx.csv("verify_summary.csv", summary);
}

inline std::vector<WidthRow> run_susceptibility(RunContext& ctx, const std::vector<PulseCase>& pulses) {
  const RunConfig& cfg = ctx.config();
  if (cfg.sweep.gammas.empty()) throw ConfigError("sweep.gammas", "susceptibility needs sweep.gammas");
  if (cfg.sweep.amplitudes.empty()) throw ConfigError("sweep.amplitudes", "susceptibility needs sweep.amplitudes");
  const PsdModel base = cfg.sweep.family ? *cfg.sweep.family : cfg.noise;
  if (!has_lorentzian(base))
    throw ConfigError(cfg.sweep.family ? "sweep.family" : "noise",
                      "susceptibility sweeps Lorentzian widths; the noise model has no Lorentzian term");
  WidthSweepConfig w;
  w.gammas = cfg.sweep.gammas;
  w.family = [base](double g) { return with_width(base, g); };
  w.amplitudes = cfg.sweep.amplitudes;
  w.n_realizations = cfg.sweep.n_realizations;
  w.seed = ctx.seed("noise", 1);
  w.reference = cfg.sweep.reference.empty() ? "rcp" : cfg.sweep.reference;
  const auto rows = susceptibility_vs_width(pulses, w);
  ctx.csv("susceptibility.csv", susceptibility_table(rows));
  return rows;
}

struct SenseRow {
  double A = 0.0;
  double I_opt = 0.0, I_pdd = 0.0;
  EstimateDistribution opt, pdd;
  Improvement improvement;
};

/// Shot simulation and estimation for the optimized coupling and its PDD baseline
/// at every noise amplitude. Writes estimates*.csv, fisher.csv, variance.csv.
inline std::vector<SenseRow> run_sense(RunContext& ctx, const SampledWaveform& flux) {
  const RunConfig& cfg = ctx.config();
  const SensingSpec& s = cfg.sensing;
  if (s.noise_amplitudes.empty()) throw ConfigError("sensing.noise_amplitudes", "sense needs noise amplitudes");
  const SampledWaveform c_opt = sensor_coupling(cfg.sensor, flux);
  const double c0 = s.pdd_c0 > 0.0 ? s.pdd_c0 : rms(c_opt);
  const SampledWaveform c_pdd = pdd_baseline(s.omega_s, cfg.T, c0, cfg.n_samples);
  ctx.csv("coupling_opt.csv", pulse_table(c_opt));
  ctx.csv("coupling_pdd.csv", pulse_table(c_pdd));
  ctx.csv("filter_pdd.csv",
          filter_table(filter_function(control_functions_coupling(c_pdd), {1.0}, run_grid(cfg))));

  const double a_opt = aligned_phase(c_opt, s.omega_s), a_pdd = aligned_phase(c_pdd, s.omega_s);
  CsvTable fisher({"A", "I_opt", "I_pdd", "improvement_db"});
  CsvTable variance({"A", "var_opt", "var_pdd", "crb_opt", "crb_pdd", "improvement_db", "ci_lo_db", "ci_hi_db",
                     "mean_opt", "mean_pdd", "null_opt", "null_pdd"});
  std::vector<SenseRow> rows;
  for (std::size_t i = 0; i < s.noise_amplitudes.size(); ++i) {
    SenseRow r;
    r.A = s.noise_amplitudes[i];
    const PsdModel S = with_amplitude(cfg.noise, r.A);
    const SensingModel mo(make_protocol(c_opt, s.omega_s, a_opt, s.B, S, s.shots, s.repetitions), s.shots);
    const SensingModel mp(make_protocol(c_pdd, s.omega_s, a_pdd, s.B, S, s.shots, s.repetitions), s.shots);
    r.I_opt = mo.fisher(s.B);
    r.I_pdd = mp.fisher(s.B);
    r.opt = run_estimates(mo, s.B, s.shots, s.repetitions, ctx.seed("shots_opt", i));
    r.pdd = run_estimates(mp, s.B, s.shots, s.repetitions, ctx.seed("shots_pdd", i));
    r.improvement = improvement_db(r.pdd.estimates, r.opt.estimates, ctx.seed("bootstrap", i));
    fisher.row(r.A, r.I_opt, r.I_pdd, 10.0 * std::log10(r.I_opt / r.I_pdd));
    variance.row(r.A, r.opt.variance, r.pdd.variance, 1.0 / r.I_opt, 1.0 / r.I_pdd, r.improvement.db,
                 r.improvement.ci_lo, r.improvement.ci_hi, r.opt.mean, r.pdd.mean, r.opt.null_detections,
                 r.pdd.null_detections);
    for (const auto& [tag, d] : {std::pair{"opt", &r.opt}, std::pair{"pdd", &r.pdd}}) {
      CsvTable est({"rep", "B_hat"});
      for (std::size_t k = 0; k < d->estimates.size(); ++k) est.row(k, d->estimates[k]);
      ctx.csv("estimates_" + std::string(tag) + "_A" + std::to_string(i) + ".csv", est);
      if (i + 1 == s.noise_amplitudes.size() && std::string(tag) == "opt") ctx.csv("estimates.csv", est);
    }
    rows.push_back(std::move(r));
  }
  ctx.csv("fisher.csv", fisher);
  ctx.csv("variance.csv", variance);
  return rows;
}

/// Noise traces of cfg.noise plus their ensemble periodogram against the model.
inline void run_gen_noise(RunContext& ctx) {
  const RunConfig& cfg = ctx.config();
  const double T = cfg.gen_noise.duration > 0.0 ? cfg.gen_noise.duration : cfg.T;
  const double dt = cfg.gen_noise.dt > 0.0 ? cfg.gen_noise.dt : cfg.T / static_cast<double>(cfg.n_samples);
  require(cfg.gen_noise.count >= 1, "gen_noise: count must be >= 1");
  const auto traces = synthesize_batch(cfg.noise, T, dt, ctx.seed("noise", 2), cfg.gen_noise.count);
  for (std::size_t i = 0; i < traces.size(); ++i) ctx.csv("noise_" + std::to_string(i) + ".csv", noise_table(traces[i]));
  const Periodogram p = periodogram(traces);
  CsvTable t({"omega_rad_per_ns", "S_estimate", "S_model"});
  for (std::size_t m = 1; m < p.omega.size(); ++m) t.row(p.omega[m], p.values[m], psd(cfg.noise, p.omega[m]));
  ctx.csv("periodogram.csv", t);
}

// ---------------------------------------------------------------------------
// Subcommands.

inline void require_gate(const RunConfig& cfg, const std::string& cmd) {
  if (cfg.scenario == ScenarioKind::sensing)
    throw ConfigError("scenario", cmd + " needs a gate scenario (x_gate_*, cz_fluxonium), got sensing");
}

inline void require_sensing(const RunConfig& cfg, const std::string& cmd) {
  if (cfg.scenario != ScenarioKind::sensing)
    throw ConfigError("scenario", cmd + " needs the sensing scenario, got " + to_string(cfg.scenario));
}

/// Runs one subcommand and writes the manifest; returns the log lines.
inline std::vector<std::string> run_command(const std::string& command, const RunConfig& cfg) {
  RunContext ctx(cfg, command);
  if (command == "optimize-gate") {
    require_gate(cfg, command);
    run_optimize(ctx);
  } else if (command == "optimize-sensing") {
    require_sensing(cfg, command);
    run_optimize(ctx);
  } else if (command == "verify") {
    require_gate(cfg, command);
    const OptimizedPulse p = run_optimize(ctx);
    run_verify(ctx, pulse_set(ctx, p.waveform));
  } else if (command == "susceptibility") {
    require_gate(cfg, command);
    const OptimizedPulse p = run_optimize(ctx);
    run_susceptibility(ctx, pulse_set(ctx, p.waveform));
  } else if (command == "sense") {
    require_sensing(cfg, command);
    const OptimizedPulse p = run_optimize(ctx);
    run_sense(ctx, p.waveform);
  } else if (command == "gen-noise") {
    run_gen_noise(ctx);
  } else if (command == "run") {
    const OptimizedPulse p = run_optimize(ctx);
    if (cfg.scenario == ScenarioKind::sensing) {
      run_sense(ctx, p.waveform);
    } else {
      const auto pulses = pulse_set(ctx, p.waveform);
      run_verify(ctx, pulses);
      if (!cfg.sweep.gammas.empty()) run_susceptibility(ctx, pulses);
    }
  } else {
    throw InvalidInput("unknown command '" + command + "'");
  }
  ctx.write_manifest();
  return ctx.notes();
}

}  // namespace filterctl
