#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/filters.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/pulses.hpp"

namespace filterctl {

// AC-signal sensing with a T-periodic coupling c_z(t). Readouts at t = nT;
// p_minus(n) = (1 + v_n cos(B Gamma_bar n T)) / 2 with v_n = exp(-chi(nT)/2).

// ---------------------------------------------------------------------------
// Signal gain.

/// Gamma(T) / T with Gamma(T) = int_0^T c(v) cos(omega_s v + alpha) dv (midpoint rule).
inline double gamma_bar(const SampledWaveform& c, double omega_s, double alpha) {
  double acc = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) acc += c[k] * std::cos(omega_s * c.midpoint(k) + alpha);
  return acc * c.dt / c.duration();
}

/// theta_s = arg c(omega_s, T); alpha = theta_s maximizes Gamma(T) = |c(omega_s, T)|.
inline double aligned_phase(const SampledWaveform& c, double omega_s) {
  return std::arg(fourier_transform(c.samples, c.dt, omega_s));
}

// ---------------------------------------------------------------------------
// Dephasing exponent chi(nT) = (1/2pi) int S |c(omega, nT)|^2 over the whole axis.
//
// For a T-periodic coupling the phase over n periods is a sum of n identically
// shaped period phases, so chi(n) = n Q_0 + 2 sum_{m=1}^{n-1} (n - m) Q_m with
// the period cross-covariances Q_m = (1/pi) int_0^inf S |c(omega, T)|^2 cos(m omega T).

namespace detail {

inline void collect_centres(const PsdModel& m, std::vector<std::pair<double, double>>& out) {
  if (auto* l = m.get_if<Lorentzian>()) out.emplace_back(l->omega0, l->gamma);
  if (auto* r = m.get_if<RtnEnsemble>()) out.emplace_back(0.0, 2.0 / r->tau_max);
  if (auto* s = m.get_if<PsdSum>())
    for (const PsdModel& t : s->terms) collect_centres(t, out);
}

}  // namespace detail

struct ChiOptions {
  /// Grid points per oscillation period of cos(m omega T) at the largest m.
  std::size_t points_per_period = 16;
  /// Upper frequency in units of 2pi/T (capped at the sampling Nyquist).
  double omega_max_harmonics = 40.0;
};

inline std::vector<double> chi_series(const SampledWaveform& c, const PsdModel& S, std::size_t n_max,
                                      const ChiOptions& opt = {}) {
  require(n_max >= 1, "chi: n_max must be >= 1");
  require(all_finite(c.samples), "chi: coupling waveform is not finite");
  // Sums go term by term, each on a grid adapted to that term.
  if (auto* sum = S.get_if<PsdSum>()) {
    std::vector<double> out(n_max, 0.0);
    for (const PsdModel& t : sum->terms) {
      const std::vector<double> part = chi_series(c, t, n_max, opt);
      for (std::size_t j = 0; j < n_max; ++j) out[j] += part[j];
    }
    return out;
  }
  const double T = c.duration();
  const double w0 = kTwoPi / T;
  const double nyquist = kPi / c.dt;
  std::vector<std::pair<double, double>> centres;
  detail::collect_centres(S, centres);
  double w_max = opt.omega_max_harmonics * w0;
  for (const auto& [wc, g] : centres) w_max = std::max(w_max, wc + 200.0 * g);
  const double support = psd_support_max(S);
  if (std::isfinite(support)) w_max = std::max(w_max, support);
  w_max = std::min(w_max, nyquist);

  const double h = kTwoPi / (static_cast<double>(opt.points_per_period) * static_cast<double>(n_max) * T);
  std::vector<double> nodes = linspace(0.0, w_max, static_cast<std::size_t>(std::ceil(w_max / h)) + 1);
  // Resolve narrow spectral features the uniform grid would step over.
  for (const auto& [wc, g] : centres) {
    if (g > 4.0 * h) continue;
    nodes.push_back(wc);
    for (int k = -16; k <= 12; ++k) {
      const double d = g * std::pow(10.0, k / 4.0);
      for (double w : {wc - d, wc + d})
        if (w > 0.0 && w < w_max) nodes.push_back(w);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  const std::size_t n = nodes.size();
  std::vector<double> g(n), weight(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) g[i] = psd(S, nodes[i]) * std::norm(fourier_transform(c.samples, c.dt, nodes[i]));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = 0.5 * (nodes[i + 1] - nodes[i]);
    weight[i] += d;
    weight[i + 1] += d;
  }
  std::vector<double> Q(n_max, 0.0);
  std::vector<std::complex<double>> z(n, 1.0), rot(n);
  for (std::size_t i = 0; i < n; ++i) rot[i] = std::polar(1.0, nodes[i] * T);
  for (std::size_t m = 0; m < n_max; ++m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += weight[i] * g[i] * z[i].real();
      z[i] *= rot[i];
    }
    Q[m] = acc / kPi;
  }
  // Quasi-static part: fully correlated across periods.
  const double qs = quasi_static_variance(S) * std::norm(fourier_transform(c.samples, c.dt, 0.0));
  std::vector<double> chi(n_max);
  double step = 0.0, total = 0.0, tail = 0.0;
  for (std::size_t j = 0; j < n_max; ++j) {
    step = Q[0] + 2.0 * tail;  // chi(j + 1) - chi(j)
    total += step;
    chi[j] = std::max(0.0, total) + qs * static_cast<double>((j + 1) * (j + 1));
    if (j + 1 < n_max) tail += Q[j + 1];
  }
  return chi;
}

inline double chi(const SampledWaveform& c, const PsdModel& S, std::size_t n, const ChiOptions& opt = {}) {
  return chi_series(c, S, n, opt).back();
}

// ---------------------------------------------------------------------------
// Protocol.

struct SensingProtocol {
  SampledWaveform coupling{1.0, {0.0, 0.0}};
  double B = 0.0;
  double omega_s = 0.0;
  double alpha = 0.0;
  std::size_t k = 0;
  PsdModel noise;
  std::size_t shots = 300;
  std::size_t repetitions = 200;
};

inline void check_comb(double omega_s, double T) {
  const double x = omega_s * T / kTwoPi;
  const double k = std::round(x);
  if (!(std::abs(omega_s * T - kTwoPi * k) < 1e-9) || k < 1.0) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "comb constraint violated: omega_s = " << omega_s << " rad/ns, T = " << T
        << " ns, omega_s*T/2pi = " << x << " (nearest k = " << std::max(1.0, k) << ")";
    throw InvalidInput(msg.str());
  }
}

inline SensingProtocol make_protocol(const SampledWaveform& coupling, double omega_s, double alpha, double B,
                                     PsdModel noise, std::size_t shots = 300, std::size_t repetitions = 200) {
  check_comb(omega_s, coupling.duration());
  require(std::isfinite(B) && B >= 0.0, "sensing: B must be finite and >= 0");
  require(shots >= 1 && repetitions >= 1, "sensing: shots and repetitions must be >= 1");
  SensingProtocol p;
  p.coupling = coupling;
  p.B = B;
  p.omega_s = omega_s;
  p.alpha = alpha;
  p.k = static_cast<std::size_t>(std::llround(omega_s * coupling.duration() / kTwoPi));
  p.noise = std::move(noise);
  p.shots = shots;
  p.repetitions = repetitions;
  return p;
}

/// Precomputed gain and visibilities for readouts n = 1..n_max.
class SensingModel {
 public:
  explicit SensingModel(const SensingProtocol& p, std::size_t n_max = 0, const ChiOptions& opt = {})
      : T_(p.coupling.duration()) {
    check_comb(p.omega_s, T_);
    if (n_max == 0) n_max = p.shots;
    gamma_bar_ = gamma_bar(p.coupling, p.omega_s, p.alpha);
    chi_ = chi_series(p.coupling, p.noise, n_max, opt);
  }

  /// Direct construction from precomputed pieces.
  SensingModel(double T, double gbar, std::vector<double> chi) : T_(T), gamma_bar_(gbar), chi_(std::move(chi)) {}

  double period() const { return T_; }
  double gbar() const { return gamma_bar_; }
  std::size_t n_max() const { return chi_.size(); }
  double chi_at(std::size_t n) const {
    require(n >= 1 && n <= chi_.size(), "sensing: readout index out of range");
    return chi_[n - 1];
  }
  double visibility(std::size_t n) const { return std::exp(-0.5 * chi_at(n)); }

  /// (p_plus, p_minus) at t = nT for signal amplitude B.
  std::pair<double, double> probabilities(std::size_t n, double B) const {
    const double x = 0.5 * (1.0 + visibility(n) * std::cos(B * gamma_bar_ * static_cast<double>(n) * T_));
    const double pm = std::clamp(x, 0.0, 1.0);
    return {1.0 - pm, pm};
  }

  /// Bernoulli Fisher information summed over n = 1..n_max.
  double fisher(double B, std::size_t n_max = 0) const {
    if (n_max == 0) n_max = chi_.size();
    double I = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
      const double g = gamma_bar_ * static_cast<double>(n) * T_;
      const double v2 = std::exp(-chi_at(n));
      const double s2 = std::pow(std::sin(B * g), 2);
      if (s2 == 0.0 || v2 == 0.0) continue;
      I += g * g / (1.0 + (1.0 / v2 - 1.0) / s2);
    }
    return I;
  }

 private:
  double T_;
  double gamma_bar_ = 0.0;
  std::vector<double> chi_;
};

inline std::pair<double, double> outcome_probabilities(const SensingModel& m, std::size_t n, double B) {
  require(n >= 1, "outcome_probabilities: n must be >= 1");
  return m.probabilities(n, B);
}

inline double fisher_information(const SensingModel& m, double B, std::size_t n_max = 0) {
  return m.fisher(B, n_max);
}

/// Sum over n of (dp/dB)^2 / (p (1 - p)) with a central-difference derivative.
inline double fisher_information_numeric(const SensingModel& m, double B, std::size_t n_max = 0, double h = 0.0) {
  if (n_max == 0) n_max = m.n_max();
  if (h == 0.0) h = 1e-5 * std::max(std::abs(B), 1.0 / std::max(std::abs(m.gbar()) * m.period() * n_max, 1e-300));
  double I = 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    const double p = m.probabilities(n, B).second;
    const double dp = (m.probabilities(n, B + h).second - m.probabilities(n, B - h).second) / (2 * h);
    const double q = p * (1.0 - p);
    if (q > 0.0) I += dp * dp / q;
  }
  return I;
}

// ---------------------------------------------------------------------------
// Shots and estimation.

/// One repetition: outcome at n = 1..shots, 1 meaning the minus outcome.
inline std::vector<std::uint8_t> simulate_shots(const SensingModel& m, double B, std::size_t shots,
                                                std::uint64_t seed) {
  require(shots <= m.n_max(), "simulate_shots: more shots than precomputed readouts");
  Rng rng(seed);
  std::vector<std::uint8_t> y(shots);
  for (std::size_t n = 1; n <= shots; ++n) y[n - 1] = uniform01(rng) < m.probabilities(n, B).second ? 1 : 0;
  return y;
}

/// All repetitions, repetition r drawn from derive_seed(seed, "shots", r).
inline std::vector<std::vector<std::uint8_t>> simulate_repetitions(const SensingModel& m, double B,
                                                                   std::size_t shots, std::size_t reps,
                                                                   std::uint64_t seed) {
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) out.push_back(simulate_shots(m, B, shots, derive_seed(seed, "shots", r)));
  return out;
}

struct SensingEstimate {
  double B = 0.0;
  double omega = 0.0;
  bool null_detection = false;
};

inline double log_likelihood(const SensingModel& m, const std::vector<std::uint8_t>& y, double omega) {
  double L = 0.0;
  for (std::size_t n = 1; n <= y.size(); ++n) {
    const double pm = 0.5 * (1.0 + m.visibility(n) * std::cos(omega * static_cast<double>(n) * m.period()));
    const double p = std::clamp(y[n - 1] ? pm : 1.0 - pm, 1e-300, 1.0);
    L += std::log(p);
  }
  return L;
}

/// Maximum likelihood Ramsey frequency on (0, pi/T): grid search plus
/// golden-section refinement, then B = omega / Gamma_bar.
inline SensingEstimate estimate_B(const std::vector<std::uint8_t>& y, const SensingModel& m,
                                  std::size_t grid_per_shot = 4) {
  require(!y.empty() && y.size() <= m.n_max(), "estimate_B: shot record length out of range");
  if (m.gbar() == 0.0) throw InvalidInput("estimate_B: Gamma_bar = 0, the protocol cannot sense this tone");
  const double top = kPi / m.period();
  const std::size_t G = std::max<std::size_t>(64, grid_per_shot * y.size());
  const double step = top / static_cast<double>(G);
  std::size_t best = 0;
  double best_L = -INFINITY;
  for (std::size_t j = 0; j < G; ++j) {
    const double L = log_likelihood(m, y, (static_cast<double>(j) + 0.5) * step);
    if (L > best_L) best_L = L, best = j;
  }
  double a = std::max(0.0, static_cast<double>(best) - 0.5) * step;
  double b = std::min(top, (static_cast<double>(best) + 1.5) * step);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = log_likelihood(m, y, x1), f2 = log_likelihood(m, y, x2);
  for (int it = 0; it < 80 && b - a > 1e-12 * top; ++it) {
    if (f1 > f2) {
      b = x2, x2 = x1, f2 = f1;
      x1 = b - phi * (b - a);
      f1 = log_likelihood(m, y, x1);
    } else {
      a = x1, x1 = x2, f1 = f2;
      x2 = a + phi * (b - a);
      f2 = log_likelihood(m, y, x2);
    }
  }
  SensingEstimate e;
  e.omega = 0.5 * (a + b);
  e.B = e.omega / m.gbar();
  e.null_detection = best == 0;
  return e;
}

struct EstimateDistribution {
  std::vector<double> estimates;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t null_detections = 0;
};

inline EstimateDistribution summarize(const std::vector<SensingEstimate>& est) {
  EstimateDistribution d;
  for (const SensingEstimate& e : est) {
    d.estimates.push_back(e.B);
    d.null_detections += e.null_detection ? 1 : 0;
  }
  const double n = static_cast<double>(d.estimates.size());
  for (double b : d.estimates) d.mean += b / n;
  for (double b : d.estimates) d.variance += (b - d.mean) * (b - d.mean);
  d.variance = d.estimates.size() > 1 ? d.variance / (n - 1.0) : 0.0;
  return d;
}

inline EstimateDistribution run_estimates(const SensingModel& m, double B, std::size_t shots, std::size_t reps,
                                          std::uint64_t seed) {
  std::vector<SensingEstimate> est;
  for (const auto& y : simulate_repetitions(m, B, shots, reps, seed)) est.push_back(estimate_B(y, m));
  return summarize(est);
}

struct Improvement {
  double db = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
};

/// 10 log10(var_ref / var_opt) with a percentile bootstrap over repetitions.
inline Improvement improvement_db(const std::vector<double>& reference, const std::vector<double>& optimized,
                                  std::uint64_t seed, std::size_t n_boot = 1000) {
  require(reference.size() >= 2 && optimized.size() >= 2, "improvement_db: need at least two estimates each");
  auto var = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  Improvement out;
  out.db = 10.0 * std::log10(var(reference) / var(optimized));
  Rng rng(derive_seed(seed, "bootstrap", 0));
  std::vector<double> boots;
  std::vector<double> a(reference.size()), b(optimized.size());
  for (std::size_t i = 0; i < n_boot; ++i) {
    for (double& x : a) x = reference[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(reference.size()))];
    for (double& x : b) x = optimized[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(optimized.size()))];
    boots.push_back(10.0 * std::log10(var(a) / var(b)));
  }
  std::sort(boots.begin(), boots.end());
  out.ci_lo = boots[static_cast<std::size_t>(0.025 * static_cast<double>(n_boot))];
  out.ci_hi = boots[static_cast<std::size_t>(0.975 * static_cast<double>(n_boot - 1))];
  return out;
}

// ---------------------------------------------------------------------------
// Noise phase Monte Carlo: phi_n = int_0^{nT} c(t) beta(t) dt on synthesized noise.

inline std::vector<std::vector<double>> phase_noise_samples(const SampledWaveform& c, const PsdModel& S,
                                                            const std::vector<std::size_t>& readouts,
                                                            std::size_t count, std::uint64_t seed,
                                                            const FourierSynthesisOptions& opt = {8, true}) {
  require(!readouts.empty(), "phase_noise_samples: no readout times");
  const std::size_t n_top = *std::max_element(readouts.begin(), readouts.end());
  const std::size_t N = c.size();
  std::vector<std::vector<double>> out(count, std::vector<double>(readouts.size()));
  for (std::size_t r = 0; r < count; ++r) {
    const NoiseRealization beta =
        synthesize(S, static_cast<double>(n_top) * c.duration(), c.dt, derive_seed(seed, "noise", r), opt);
    double acc = 0.0;
    std::size_t period = 0;
    std::vector<double> cum(n_top + 1, 0.0);
    for (std::size_t k = 0; k < beta.samples.size(); ++k) {
      acc += c[k % N] * beta.samples[k] * c.dt;
      if ((k + 1) % N == 0) cum[++period] = acc;
    }
    for (std::size_t j = 0; j < readouts.size(); ++j) out[r][j] = cum[readouts[j]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline.

/// +-c0 square wave flipping sign every tau = pi / omega_target, starting at +c0.
inline SampledWaveform pdd_baseline(double omega_target, double T, double c0, std::size_t n_samples) {
  require(omega_target > 0.0 && T > 0.0 && n_samples >= 2, "pdd_baseline: invalid arguments");
  check_comb(omega_target, T);
  const double dt = T / static_cast<double>(n_samples);
  const double tau = kPi / omega_target;
  std::vector<double> v(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const auto seg = static_cast<long long>(std::floor((static_cast<double>(k) + 0.5) * dt / tau));
    v[k] = (seg % 2 == 0) ? c0 : -c0;
  }
  return SampledWaveform(dt, std::move(v));
}

inline double rms(const SampledWaveform& w) {
  double s = 0.0;
  for (double x : w.samples) s += x * x;
  return std::sqrt(s / static_cast<double>(w.size()));
}

// ---------------------------------------------------------------------------
// Higher-order bias correction.

/// Probabilists' Gauss-Hermite rule (Golub-Welsch): E[f(X)], X ~ N(0,1) ~= sum w_i f(x_i).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(std::size_t n) {
  require(n >= 1, "gauss_hermite: n must be >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(k));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> x(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    x[i] = es.eigenvalues()[j];
    w[i] = std::pow(es.eigenvectors()(0, j), 2);
  }
  return {x, w};
}

using FrequencyMap = std::function<double(double)>;

/// Period- and noise-averaged frequency shift
/// (1/T) int_0^T < omega(Phi_b + B cos(omega_s t + alpha) + Phi_n) - omega(Phi_b) > dt.
inline double mean_frequency_shift(const FrequencyMap& omega, const SampledWaveform& flux_bias, double omega_s,
                                   double alpha, double sigma, double B, std::size_t order = 40) {
  const auto [x, w] = gauss_hermite(order);
  double acc = 0.0;
  for (std::size_t k = 0; k < flux_bias.size(); ++k) {
    const double pb = flux_bias[k];
    const double ps = B * std::cos(omega_s * flux_bias.midpoint(k) + alpha);
    const double base = omega(pb);
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e += w[i] * (omega(pb + ps + sigma * x[i]) - base);
    acc += e;
  }
  return acc / static_cast<double>(flux_bias.size());
}

/// Solves mean_frequency_shift(B) = omega_est for B >= 0 by bracketing and bisection.
inline double bias_correction(const FrequencyMap& omega, const SampledWaveform& flux_bias, double omega_s,
                              double alpha, double sigma, double omega_est, double B_guess) {
  require(sigma >= 0.0 && std::isfinite(omega_est), "bias_correction: invalid sigma or estimate");
  auto f = [&](double B) { return mean_frequency_shift(omega, flux_bias, omega_s, alpha, sigma, B) - omega_est; };
  const double f0 = f(0.0);
  if (f0 >= 0.0) return 0.0;
  double hi = B_guess > 0.0 ? B_guess : 1e-6;
  int guard = 0;
  while (f(hi) < 0.0) {
    hi *= 2.0;
    if (++guard > 200) throw NumericalError("bias_correction: could not bracket the signal amplitude");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double bias_correction(const FluxSensor& dev, const SampledWaveform& flux_bias, double omega_s,
                              double alpha, double sigma, double omega_est, double B_guess) {
  dev.validate();
  return bias_correction([&](double p) { return dev.frequency(p); }, flux_bias, omega_s, alpha, sigma, omega_est,
                         B_guess);
}

/// Noise level from the signal-off shift: solves mean_frequency_shift(sigma; B = 0) = offset.
inline double estimate_sigma(const FrequencyMap& omega, const SampledWaveform& flux_bias, double offset,
                             double sigma_guess = 1e-3) {
  auto f = [&](double s) { return mean_frequency_shift(omega, flux_bias, 0.0, 0.0, s, 0.0) - offset; };
  if (f(0.0) >= 0.0) return 0.0;
  double hi = sigma_guess;
  int guard = 0;
  while (f(hi) < 0.0) {
    hi *= 2.0;
    if (++guard > 200) throw NumericalError("estimate_sigma: could not bracket the noise level");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace filterctl
