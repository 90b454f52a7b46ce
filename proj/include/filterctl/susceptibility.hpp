#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/dynamics.hpp"
#include "filterctl/noisegen.hpp"

namespace filterctl {

// log10(1 - F) = 2 log10(A) + log10(C) in the moderate-A window.

struct SusceptibilityOptions {
  double floor_factor = 5.0;
  /// Largest allowed |residual| of the slope-2 fit, in decades.
  double max_residual_dec = 0.3;
  std::size_t min_points = 4;
  /// Infidelities below this are treated as numerically zero.
  double numeric_floor = 1e-13;
};

struct SusceptibilityFit {
  std::string label;
  double gamma = 0.0;
  double C = 0.0;
  double log10_C = 0.0;
  double a_min = 0.0, a_max = 0.0;
  double residual_rms = 0.0;
  std::size_t n_points = 0;
};

namespace detail {

struct FitWindow {
  std::vector<double> log_a, log_y;
  double log_c = 0.0;
  double rms = 0.0;
};

inline FitWindow susceptibility_window(const std::vector<FidelityStats>& sweep, double floor,
                                       const SusceptibilityOptions& opt) {
  require(opt.min_points >= 1, "susceptibility: min_points must be >= 1");
  const double threshold = std::max(opt.floor_factor * floor, opt.numeric_floor);
  std::vector<std::pair<double, double>> pts;
  for (const FidelityStats& s : sweep) {
    const double y = s.infidelity();
    if (s.A > 0.0 && std::isfinite(y) && y > threshold) pts.emplace_back(s.A, y);
  }
  std::sort(pts.begin(), pts.end());
  FitWindow w;
  // Drop points from the high-A end until every residual is below the cutoff.
  while (pts.size() >= opt.min_points) {
    double sum = 0.0;
    for (const auto& [a, y] : pts) sum += std::log10(y) - 2.0 * std::log10(a);
    const double lc = sum / static_cast<double>(pts.size());
    double worst = 0.0, ss = 0.0;
    for (const auto& [a, y] : pts) {
      const double r = std::log10(y) - 2.0 * std::log10(a) - lc;
      worst = std::max(worst, std::abs(r));
      ss += r * r;
    }
    if (worst < opt.max_residual_dec) {
      w.log_c = lc;
      w.rms = std::sqrt(ss / static_cast<double>(pts.size()));
      for (const auto& [a, y] : pts) {
        w.log_a.push_back(std::log10(a));
        w.log_y.push_back(std::log10(y));
      }
      return w;
    }
    pts.pop_back();
  }
  std::ostringstream msg;
  msg << "susceptibility: fewer than " << opt.min_points << " points in the valid window (floor cutoff "
      << threshold << " = " << opt.floor_factor << " x noise-free floor " << floor
      << ", quartic-onset cutoff " << opt.max_residual_dec << " dec slope-2 residual)";
  throw InvalidInput(msg.str());
}

}  // namespace detail

/// Fixed-slope fit. `floor` is the noise-free infidelity of the pulse.
inline SusceptibilityFit fit_susceptibility(const std::vector<FidelityStats>& sweep, double floor = 0.0,
                                            const SusceptibilityOptions& opt = {}) {
  const detail::FitWindow w = detail::susceptibility_window(sweep, floor, opt);
  SusceptibilityFit f;
  f.log10_C = w.log_c;
  f.C = std::pow(10.0, w.log_c);
  f.a_min = std::pow(10.0, w.log_a.front());
  f.a_max = std::pow(10.0, w.log_a.back());
  f.residual_rms = w.rms;
  f.n_points = w.log_a.size();
  return f;
}

/// Free-slope least squares over the same valid window.
inline LineFit fit_infidelity_slope(const std::vector<FidelityStats>& sweep, double floor = 0.0,
                                    const SusceptibilityOptions& opt = {}) {
  const detail::FitWindow w = detail::susceptibility_window(sweep, floor, opt);
  return fit_line(w.log_a, w.log_y);
}

/// Logarithmically spaced amplitudes from a to b inclusive.
inline std::vector<double> log_amplitudes(double a, double b, std::size_t n) {
  require(a > 0.0 && b > a && n >= 2, "log_amplitudes: need 0 < a < b and n >= 2");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a * std::pow(b / a, static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

struct PulseCase {
  std::string label;
  Scenario scenario;
  Matrix target;
  bool self_compared = false;
};

struct WidthSweepConfig {
  std::vector<double> gammas;
  /// Unit-amplitude noise model for a given width.
  std::function<PsdModel(double)> family;
  std::vector<double> amplitudes;
  std::size_t n_realizations = 200;
  std::uint64_t seed = 0;
  MonteCarloOptions mc{};
  SusceptibilityOptions fit{};
  /// Label whose minimum C over the gamma grid normalizes the table.
  std::string reference;
};

struct WidthRow {
  SusceptibilityFit fit;
  double C_normalized = 0.0;
};

inline double noise_free_floor(const PulseCase& p) {
  if (p.self_compared) return 0.0;
  return 1.0 - gate_fidelity(p.target, ideal_unitary(p.scenario));
}

inline std::vector<WidthRow> susceptibility_vs_width(const std::vector<PulseCase>& pulses,
                                                     const WidthSweepConfig& cfg) {
  require(!pulses.empty(), "susceptibility_vs_width: empty pulse set");
  require(!cfg.gammas.empty(), "susceptibility_vs_width: empty gamma grid");
  require(static_cast<bool>(cfg.family), "susceptibility_vs_width: missing noise family");
  std::vector<WidthRow> rows;
  for (const PulseCase& p : pulses) {
    const Matrix target = p.self_compared ? ideal_unitary(p.scenario) : p.target;
    const double floor = noise_free_floor(p);
    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
      const double g = cfg.gammas[gi];
      // One seed for every width and pulse.
      const auto sweep = fidelity_sweep(p.scenario, target, cfg.family(g), cfg.amplitudes, cfg.n_realizations,
                                        derive_seed(cfg.seed, "width", 0), p.self_compared, cfg.mc);
      WidthRow row;
      row.fit = fit_susceptibility(sweep, floor, cfg.fit);
      row.fit.label = p.label;
      row.fit.gamma = g;
      rows.push_back(row);
    }
  }
  double ref = std::numeric_limits<double>::infinity();
  for (const WidthRow& r : rows)
    if (r.fit.label == (cfg.reference.empty() ? pulses.front().label : cfg.reference)) ref = std::min(ref, r.fit.C);
  require(std::isfinite(ref), "susceptibility_vs_width: reference pulse '" + cfg.reference + "' not in the set");
  for (WidthRow& r : rows) r.C_normalized = r.fit.C / ref;
  return rows;
}

}  // namespace filterctl
