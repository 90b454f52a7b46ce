#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "filterctl/core.hpp"

namespace filterctl {

// ---------------------------------------------------------------------------
// Power spectral densities. Every model is specified for omega >= 0 and is
// extended evenly, S(omega) = S(|omega|), so the two-sided convention
// <beta^2> = (1/2pi) * integral of S over the whole axis holds.

/// A^2 / (gamma + (omega - omega0)^2 / gamma).
struct Lorentzian {
  double A = 0.0;
  double gamma = 1.0;
  double omega0 = 0.0;
};

/// Sum of N random-telegraph Lorentzians, tau_i = (i/N)(tau_max - tau_min) + tau_min,
/// w_i^2 = (A^2 / (N pi)) (tau_max - tau_min) / tau_i, giving a 1/f band.
struct RtnEnsemble {
  double A = 0.0;
  double tau_min = 1.0;
  double tau_max = 1e4;
  std::size_t n = 200;
};

/// Piecewise-linear table on increasing omega >= 0; zero outside the table.
struct PsdTable {
  std::vector<double> omega;
  std::vector<double> values;
};

/// Quasi-static Gaussian offset of standard deviation sigma, S = 2 pi sigma^2 delta(omega).
struct QuasiStatic {
  double sigma = 0.0;
};

class PsdModel;

struct PsdSum {
  std::vector<PsdModel> terms;
};

class PsdModel {
 public:
  using Variant = std::variant<Lorentzian, RtnEnsemble, PsdSum, PsdTable, QuasiStatic>;

  PsdModel() : v_(PsdTable{}) {}
  PsdModel(Lorentzian l) : v_(l) { validate(); }
  PsdModel(RtnEnsemble r) : v_(r) { validate(); }
  PsdModel(PsdSum s) : v_(std::move(s)) {}
  PsdModel(PsdTable t) : v_(std::move(t)) { validate(); }
  PsdModel(QuasiStatic q) : v_(q) { validate(); }

  const Variant& variant() const { return v_; }
  Variant& variant() { return v_; }

  template <class T>
  const T* get_if() const { return std::get_if<T>(&v_); }

 private:
  void validate() const;
  Variant v_;
};

inline void PsdModel::validate() const {
  if (auto* l = std::get_if<Lorentzian>(&v_)) {
    require(std::isfinite(l->A) && std::isfinite(l->omega0), "lorentzian: non-finite parameter");
    require(std::isfinite(l->gamma) && l->gamma > 0.0, "lorentzian: gamma must be > 0");
  } else if (auto* r = std::get_if<RtnEnsemble>(&v_)) {
    require(r->n >= 1, "rtn ensemble: N must be >= 1");
    require(r->tau_min > 0.0 && r->tau_min < r->tau_max, "rtn ensemble: need 0 < tau_min < tau_max");
    require(std::isfinite(r->A), "rtn ensemble: non-finite amplitude");
  } else if (auto* t = std::get_if<PsdTable>(&v_)) {
    require(t->omega.size() == t->values.size(), "psd table: omega/value size mismatch");
    for (std::size_t i = 0; i < t->omega.size(); ++i) {
      require(std::isfinite(t->values[i]) && t->values[i] >= 0.0,
              "psd table: negative or non-finite entry at index " + std::to_string(i));
      require(t->omega[i] >= 0.0 && (i == 0 || t->omega[i] > t->omega[i - 1]),
              "psd table: omega grid must be nonnegative and strictly increasing");
    }
  } else if (auto* q = std::get_if<QuasiStatic>(&v_)) {
    require(std::isfinite(q->sigma) && q->sigma >= 0.0, "quasi-static: sigma must be >= 0");
  }
}

inline double rtn_tau(const RtnEnsemble& r, std::size_t i) {
  return static_cast<double>(i) / static_cast<double>(r.n) * (r.tau_max - r.tau_min) + r.tau_min;
}

inline double rtn_weight_sq(const RtnEnsemble& r, std::size_t i) {
  return r.A * r.A / (static_cast<double>(r.n) * kPi) * (r.tau_max - r.tau_min) / rtn_tau(r, i);
}

/// S(omega) of one telegraph process with mean dwell time tau and unit weight.
inline double telegraph_psd(double tau, double omega) {
  return 4.0 * tau / (4.0 + omega * omega * tau * tau);
}

/// S(omega). The quasi-static term is a delta at zero and contributes nothing
/// pointwise.
inline double psd(const PsdModel& m, double omega) {
  const double w = std::abs(omega);
  return std::visit(
      [w](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Lorentzian>) {
          const double d = w - x.omega0;
          return x.A * x.A / (x.gamma + d * d / x.gamma);
        } else if constexpr (std::is_same_v<T, RtnEnsemble>) {
          double acc = 0.0;
          for (std::size_t i = 1; i <= x.n; ++i)
            acc += rtn_weight_sq(x, i) * telegraph_psd(rtn_tau(x, i), w);
          return acc;
        } else if constexpr (std::is_same_v<T, PsdSum>) {
          double acc = 0.0;
          for (const PsdModel& t : x.terms) acc += psd(t, w);
          return acc;
        } else if constexpr (std::is_same_v<T, PsdTable>) {
          if (x.omega.empty() || w < x.omega.front() || w > x.omega.back()) return 0.0;
          auto it = std::upper_bound(x.omega.begin(), x.omega.end(), w);
          if (it == x.omega.end()) return x.values.back();
          const std::size_t i = static_cast<std::size_t>(it - x.omega.begin());
          const double f = (w - x.omega[i - 1]) / (x.omega[i] - x.omega[i - 1]);
          return x.values[i - 1] + f * (x.values[i] - x.values[i - 1]);
        } else {
          return 0.0;
        }
      },
      m.variant());
}

namespace detail {

// Integral of the omega >= 0 branch over [a, b] with 0 <= a <= b.
inline double psd_integral_nonneg(const PsdModel& m, double a, double b) {
  return std::visit(
      [a, b](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Lorentzian>) {
          return x.A * x.A * atan_diff((a - x.omega0) / x.gamma, (b - x.omega0) / x.gamma);
        } else if constexpr (std::is_same_v<T, RtnEnsemble>) {
          double acc = 0.0;
          for (std::size_t i = 1; i <= x.n; ++i) {
            const double h = 0.5 * rtn_tau(x, i);
            acc += rtn_weight_sq(x, i) * 2.0 * atan_diff(a * h, b * h);
          }
          return acc;
        } else if constexpr (std::is_same_v<T, PsdSum>) {
          double acc = 0.0;
          for (const PsdModel& t : x.terms) acc += psd_integral_nonneg(t, a, b);
          return acc;
        } else if constexpr (std::is_same_v<T, PsdTable>) {
          if (x.omega.size() < 2) return 0.0;
          const double lo = std::max(a, x.omega.front());
          const double hi = std::min(b, x.omega.back());
          if (lo >= hi) return 0.0;
          const PsdModel self(x);
          double acc = 0.0;
          double left = lo;
          auto it = std::upper_bound(x.omega.begin(), x.omega.end(), lo);
          for (; it != x.omega.end() && *it < hi; ++it) {
            acc += 0.5 * (*it - left) * (psd(self, left) + psd(self, *it));
            left = *it;
          }
          acc += 0.5 * (hi - left) * (psd(self, left) + psd(self, hi));
          return acc;
        } else {
          return 0.0;
        }
      },
      m.variant());
}

}  // namespace detail

/// Exact integral of S over [a, b] for analytic models (the quasi-static delta
/// is excluded; see quasi_static_variance).
inline double psd_integral(const PsdModel& m, double a, double b) {
  if (a > b) return -psd_integral(m, b, a);
  if (a >= 0.0) return detail::psd_integral_nonneg(m, a, b);
  if (b <= 0.0) return detail::psd_integral_nonneg(m, -b, -a);
  return detail::psd_integral_nonneg(m, 0.0, -a) + detail::psd_integral_nonneg(m, 0.0, b);
}

/// Variance carried by delta-function (quasi-static) terms.
inline double quasi_static_variance(const PsdModel& m) {
  if (auto* q = m.get_if<QuasiStatic>()) return q->sigma * q->sigma;
  if (auto* s = m.get_if<PsdSum>()) {
    double acc = 0.0;
    for (const PsdModel& t : s->terms) acc += quasi_static_variance(t);
    return acc;
  }
  return 0.0;
}

/// <beta^2> = (1/pi) * integral of S over [0, inf) plus quasi-static variance.
inline double psd_variance(const PsdModel& m) {
  return psd_integral(m, 0.0, INFINITY) / kPi + quasi_static_variance(m);
}

/// Copy of m with every amplitude parameter set to A (tables rescaled by A^2
/// relative to unit amplitude; quasi-static sigma set to A).
inline PsdModel with_amplitude(const PsdModel& m, double A) {
  return std::visit(
      [A](const auto& x) -> PsdModel {
        using T = std::decay_t<decltype(x)>;
        T y = x;
        if constexpr (std::is_same_v<T, Lorentzian> || std::is_same_v<T, RtnEnsemble>) {
          y.A = A;
        } else if constexpr (std::is_same_v<T, PsdSum>) {
          for (PsdModel& t : y.terms) t = with_amplitude(t, A);
        } else if constexpr (std::is_same_v<T, PsdTable>) {
          for (double& v : y.values) v *= A * A;
        } else {
          y.sigma = A;
        }
        return PsdModel(std::move(y));
      },
      m.variant());
}

/// Upper edge of the spectral support for finite tables, infinity otherwise.
inline double psd_support_max(const PsdModel& m) {
  if (auto* t = m.get_if<PsdTable>()) return t->omega.empty() ? 0.0 : t->omega.back();
  if (m.get_if<QuasiStatic>()) return 0.0;
  if (auto* s = m.get_if<PsdSum>()) {
    double hi = 0.0;
    for (const PsdModel& t : s->terms) hi = std::max(hi, psd_support_max(t));
    return hi;
  }
  return INFINITY;
}

// ---------------------------------------------------------------------------
// Time-domain realizations.

struct NoiseRealization {
  double dt = 0.0;
  std::vector<double> samples;  // beta(k dt), k = 0..N-1
  std::uint64_t seed = 0;
  std::shared_ptr<const PsdModel> source;

  std::size_t size() const { return samples.size(); }
  double duration() const { return dt * static_cast<double>(samples.size()); }
};

struct FourierSynthesisOptions {
  /// The trace is synthesized on window_factor * T and truncated to T, which
  /// lowers the frequency resolution floor to 2 pi / (window_factor T).
  std::size_t window_factor = 1;
  /// Adds a Gaussian offset carrying the spectral weight below the first bin.
  bool dc_offset = false;
};

namespace detail {

struct FftwC2R {
  int n;
  fftw_complex* in;
  double* out;
  fftw_plan plan;
  explicit FftwC2R(int n_) : n(n_) {
    in = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    out = fftw_alloc_real(static_cast<std::size_t>(n));
    plan = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwC2R() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwC2R(const FftwC2R&) = delete;
  FftwC2R& operator=(const FftwC2R&) = delete;
};

struct FftwR2C {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;
  explicit FftwR2C(int n_) : n(n_) {
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwR2C() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwR2C(const FftwR2C&) = delete;
  FftwR2C& operator=(const FftwR2C&) = delete;
};

inline std::size_t sample_count(double T, double dt) {
  require(std::isfinite(T) && T > 0.0, "noise duration T must be > 0");
  require(std::isfinite(dt) && dt > 0.0, "noise step dt must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  require(n >= 2, "noise trace needs at least two samples");
  return n;
}

}  // namespace detail

/// Bin amplitudes F_i, i = 1..n_total/2 - 1, for a window of n_total samples
/// at spacing dt: F_i^2 = (2/pi) * integral of S over [w_i - dw/2, w_i + dw/2].
inline std::vector<double> fourier_bin_amplitudes(const PsdModel& m, std::size_t n_total, double dt) {
  const double window = static_cast<double>(n_total) * dt;
  const double dw = kTwoPi / window;
  const std::size_t nb = n_total / 2;
  std::vector<double> F(nb, 0.0);
  for (std::size_t i = 1; i < nb; ++i) {
    const double w = static_cast<double>(i) * dw;
    const double p = psd_integral(m, w - 0.5 * dw, w + 0.5 * dw);
    F[i] = std::sqrt(std::max(0.0, 2.0 / kPi * p));
  }
  return F;
}

/// beta(t) = sum_i F_i cos(w_i t + phi_i) with independent uniform phases.
inline NoiseRealization synthesize_fourier(const PsdModel& model, double T, double dt,
                                           std::uint64_t seed,
                                           const FourierSynthesisOptions& opt = {}) {
  const std::size_t n = detail::sample_count(T, dt);
  require(opt.window_factor >= 1, "window_factor must be >= 1");
  const std::size_t n_total = n * opt.window_factor;
  const double w_max = kPi / dt;
  require(psd_support_max(model) <= w_max || std::isinf(psd_support_max(model)),
          "synthesize_fourier: dt too coarse, table PSD extends beyond pi/dt");
  const std::vector<double> F = fourier_bin_amplitudes(model, n_total, dt);

  Rng rng(seed);
  detail::FftwC2R fft(static_cast<int>(n_total));
  for (std::size_t i = 0; i <= n_total / 2; ++i) fft.in[i][0] = fft.in[i][1] = 0.0;
  for (std::size_t i = 1; i < F.size(); ++i) {
    const double ph = kTwoPi * uniform01(rng);
    fft.in[i][0] = 0.5 * F[i] * std::cos(ph);
    fft.in[i][1] = 0.5 * F[i] * std::sin(ph);
  }
  double offset = 0.0;
  if (opt.dc_offset) {
    const double dw = kTwoPi / (static_cast<double>(n_total) * dt);
    const double var = psd_integral(model, 0.0, 0.5 * dw) / kPi + quasi_static_variance(model);
    offset = std::sqrt(var) * standard_normal(rng);
  }
  fftw_execute(fft.plan);

  NoiseRealization r;
  r.dt = dt;
  r.seed = seed;
  r.source = std::make_shared<const PsdModel>(model);
  r.samples.assign(fft.out, fft.out + n);
  for (double& v : r.samples) v += offset;
  return r;
}

/// Switching instants of a +-1 telegraph process with exponential dwell times
/// of mean tau (Poisson switching at rate 1/tau) on [0, horizon).
inline std::vector<double> telegraph_switch_times(double tau, double horizon, Rng& rng) {
  std::vector<double> times;
  double t = exponential(rng, tau);
  while (t < horizon) {
    times.push_back(t);
    t += exponential(rng, tau);
  }
  return times;
}

/// Adds weight * eta(k dt) for k = 0..n-1 to out, eta a telegraph process with
/// random initial sign.
inline void accumulate_telegraph(double tau, double weight, double dt, Rng& rng,
                                 std::vector<double>& out) {
  double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  double next = exponential(rng, tau);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    while (next <= t) {
      sign = -sign;
      next += exponential(rng, tau);
    }
    out[k] += weight * sign;
  }
}

inline NoiseRealization synthesize_rtn(double A, double tau_min, double tau_max, std::size_t N,
                                       double T, double dt, std::uint64_t seed) {
  require(N >= 1, "synthesize_rtn: N must be >= 1");
  require(tau_min > 0.0 && tau_min < tau_max, "synthesize_rtn: need 0 < tau_min < tau_max");
  const RtnEnsemble ens{A, tau_min, tau_max, N};
  const std::size_t n = detail::sample_count(T, dt);
  NoiseRealization r;
  r.dt = dt;
  r.seed = seed;
  r.source = std::make_shared<const PsdModel>(ens);
  r.samples.assign(n, 0.0);
  if (A == 0.0) return r;
  Rng rng(seed);
  for (std::size_t i = 1; i <= N; ++i)
    accumulate_telegraph(rtn_tau(ens, i), std::sqrt(rtn_weight_sq(ens, i)), dt, rng, r.samples);
  return r;
}

/// One realization of any model: RTN ensembles switch in the time domain,
/// everything else goes through Fourier synthesis. Sums mixing both draw
/// each term from its own sub-stream.
inline NoiseRealization synthesize(const PsdModel& model, double T, double dt, std::uint64_t seed,
                                   const FourierSynthesisOptions& opt = {}) {
  if (auto* r = model.get_if<RtnEnsemble>())
    return synthesize_rtn(r->A, r->tau_min, r->tau_max, r->n, T, dt, seed);
  if (auto* s = model.get_if<PsdSum>()) {
    bool has_rtn = false;
    for (const PsdModel& t : s->terms) has_rtn |= t.get_if<RtnEnsemble>() != nullptr;
    if (has_rtn) {
      NoiseRealization out;
      out.dt = dt;
      out.seed = seed;
      out.source = std::make_shared<const PsdModel>(model);
      out.samples.assign(detail::sample_count(T, dt), 0.0);
      for (std::size_t i = 0; i < s->terms.size(); ++i) {
        const NoiseRealization part =
            synthesize(s->terms[i], T, dt, derive_seed(seed, "term", i), opt);
        for (std::size_t k = 0; k < out.samples.size(); ++k) out.samples[k] += part.samples[k];
      }
      return out;
    }
  }
  return synthesize_fourier(model, T, dt, seed, opt);
}

/// Realizations i = 0..count-1 drawn from stream derive_seed(root, stream, i).
inline std::vector<NoiseRealization> synthesize_batch(const PsdModel& model, double T, double dt,
                                                      std::uint64_t root, std::size_t count,
                                                      const FourierSynthesisOptions& opt = {},
                                                      std::string_view stream = "noise") {
  std::vector<NoiseRealization> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(synthesize(model, T, dt, derive_seed(root, stream, i), opt));
  return out;
}

struct Periodogram {
  std::vector<double> omega;
  std::vector<double> values;
};

/// Ensemble-averaged (dt/N)|X_m|^2 at omega_m = 2 pi m / (N dt), m = 0..N/2.
/// A realization synthesized from S returns S averaged over each bin.
inline Periodogram periodogram(const std::vector<NoiseRealization>& realizations) {
  require(!realizations.empty(), "periodogram: need at least one realization");
  const std::size_t n = realizations.front().size();
  const double dt = realizations.front().dt;
  for (const NoiseRealization& r : realizations)
    require(r.size() == n && r.dt == dt, "periodogram: realizations must share length and dt");
  require(n >= 2, "periodogram: realizations too short");

  Periodogram p;
  const std::size_t nb = n / 2 + 1;
  p.omega.resize(nb);
  p.values.assign(nb, 0.0);
  const double T = static_cast<double>(n) * dt;
  for (std::size_t m = 0; m < nb; ++m) p.omega[m] = kTwoPi * static_cast<double>(m) / T;

  detail::FftwR2C fft(static_cast<int>(n));
  const double norm = dt / static_cast<double>(n) / static_cast<double>(realizations.size());
  for (const NoiseRealization& r : realizations) {
    std::copy(r.samples.begin(), r.samples.end(), fft.in);
    fftw_execute(fft.plan);
    for (std::size_t m = 0; m < nb; ++m)
      p.values[m] += norm * (fft.out[m][0] * fft.out[m][0] + fft.out[m][1] * fft.out[m][1]);
  }
  return p;
}

}  // namespace filterctl
