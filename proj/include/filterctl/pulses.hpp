#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "filterctl/core.hpp"

namespace filterctl {

enum class Envelope { half_sine, none };

inline std::string to_string(Envelope e) {
  return e == Envelope::half_sine ? "half_sine" : "none";
}

inline Envelope envelope_from_string(const std::string& s) {
  if (s == "half_sine") return Envelope::half_sine;
  if (s == "none") return Envelope::none;
  throw InvalidInput("unknown envelope '" + s + "' (expected half_sine or none)");
}

struct Harmonic {
  double amplitude = 0.0;  // rad/ns
  double phase = 0.0;      // rad
};

/// Omega(t) = env(t) * (a0 + sum_j a_j cos(2 pi j t / T + phi_j)),
/// env = sin(pi t / T) or 1.
struct PulseAnsatz {
  double duration = 0.0;
  double a0 = 0.0;
  std::vector<Harmonic> harmonics;
  Envelope envelope = Envelope::half_sine;

  void validate() const {
    require(std::isfinite(duration) && duration > 0.0, "ansatz duration must be > 0");
    require(std::isfinite(a0), "ansatz a0 must be finite");
    for (const Harmonic& h : harmonics)
      require(std::isfinite(h.amplitude) && std::isfinite(h.phase),
              "ansatz harmonic coefficients must be finite");
  }

  double envelope_at(double t) const {
    return envelope == Envelope::half_sine ? std::sin(kPi * t / duration) : 1.0;
  }

  double operator()(double t) const {
    double acc = a0;
    const double w = kTwoPi * t / duration;
    for (std::size_t j = 0; j < harmonics.size(); ++j)
      acc += harmonics[j].amplitude *
             std::cos(w * static_cast<double>(j + 1) + harmonics[j].phase);
    return envelope_at(t) * acc;
  }

  /// Sum of coefficient magnitudes; bounds |Omega(t)| from above.
  double max_amplitude() const {
    double a = std::abs(a0);
    for (const Harmonic& h : harmonics) a += std::abs(h.amplitude);
    return a;
  }

  std::size_t n_harmonics() const { return harmonics.size(); }
};

/// Piecewise-constant waveform; sample k covers [k dt, (k+1) dt).
struct SampledWaveform {
  double dt = 0.0;
  std::vector<double> samples;

  SampledWaveform() = default;
  SampledWaveform(double dt_, std::vector<double> samples_)
      : dt(dt_), samples(std::move(samples_)) {
    require(std::isfinite(dt) && dt > 0.0, "waveform dt must be > 0");
    require(samples.size() >= 2, "waveform needs at least two samples");
  }

  std::size_t size() const { return samples.size(); }
  double duration() const { return dt * static_cast<double>(samples.size()); }
  double midpoint(std::size_t k) const { return (static_cast<double>(k) + 0.5) * dt; }
  double operator[](std::size_t k) const { return samples[k]; }

  SampledWaveform scaled(double s) const {
    SampledWaveform out = *this;
    for (double& v : out.samples) v *= s;
    return out;
  }
};

inline SampledWaveform sample(const PulseAnsatz& ansatz, std::size_t n_samples) {
  ansatz.validate();
  require(n_samples >= 2, "sample: n_samples must be >= 2");
  const double dt = ansatz.duration / static_cast<double>(n_samples);
  std::vector<double> out(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k)
    out[k] = ansatz((static_cast<double>(k) + 0.5) * dt);
  return SampledWaveform(dt, std::move(out));
}

// ---------------------------------------------------------------------------
// Linear coordinates. The ansatz is linear in p = [a0, c1, s1, ..., cN, sN]
// with a_j cos(x + phi_j) = c_j cos x + s_j sin x, c_j = a_j cos phi_j,
// s_j = -a_j sin phi_j.

inline std::vector<double> to_linear(const PulseAnsatz& a) {
  std::vector<double> p(1 + 2 * a.harmonics.size());
  p[0] = a.a0;
  for (std::size_t j = 0; j < a.harmonics.size(); ++j) {
    p[1 + 2 * j] = a.harmonics[j].amplitude * std::cos(a.harmonics[j].phase);
    p[2 + 2 * j] = -a.harmonics[j].amplitude * std::sin(a.harmonics[j].phase);
  }
  return p;
}

inline PulseAnsatz from_linear(std::span<const double> p, double duration, Envelope env) {
  require(p.size() % 2 == 1, "linear coefficient vector must have odd length");
  PulseAnsatz a;
  a.duration = duration;
  a.envelope = env;
  a.a0 = p[0];
  const std::size_t n = (p.size() - 1) / 2;
  a.harmonics.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = p[1 + 2 * j], s = p[2 + 2 * j];
    a.harmonics[j] = {std::hypot(c, s), std::atan2(-s, c)};
  }
  return a;
}

/// Column m of the returned matrix is basis function m sampled at the
/// midpoint grid, envelope included.
inline Eigen::MatrixXd basis_matrix(double duration, std::size_t n_samples,
                                    std::size_t n_harmonics, Envelope env) {
  const double dt = duration / static_cast<double>(n_samples);
  Eigen::MatrixXd B(static_cast<Eigen::Index>(n_samples),
                    static_cast<Eigen::Index>(1 + 2 * n_harmonics));
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = (static_cast<double>(k) + 0.5) * dt;
    const double e = env == Envelope::half_sine ? std::sin(kPi * t / duration) : 1.0;
    const double w = kTwoPi * t / duration;
    const auto r = static_cast<Eigen::Index>(k);
    B(r, 0) = e;
    for (std::size_t j = 1; j <= n_harmonics; ++j) {
      const double x = w * static_cast<double>(j);
      B(r, static_cast<Eigen::Index>(2 * j - 1)) = e * std::cos(x);
      B(r, static_cast<Eigen::Index>(2 * j)) = e * std::sin(x);
    }
  }
  return B;
}

/// Keeps the n_keep lowest Fourier components of pwc and attaches the
/// envelope. The coefficients are the least-squares fit of pwc by the
/// envelope-windowed basis, which is the plain DFT when envelope = none and
/// makes reshape(sample(reshape(x))) == reshape(x) for either envelope.
inline PulseAnsatz reshape(const SampledWaveform& pwc, std::size_t n_keep, Envelope env) {
  require(pwc.size() >= 2, "reshape: waveform needs at least two samples");
  require(all_finite(pwc.samples), "reshape: waveform contains non-finite samples");
  require(2 * n_keep <= pwc.size(),
          "reshape: n_keep = " + std::to_string(n_keep) + " exceeds the Nyquist count " +
              std::to_string(pwc.size() / 2));
  const double T = pwc.duration();
  const Eigen::MatrixXd B = basis_matrix(T, pwc.size(), n_keep, env);
  const Eigen::Map<const Eigen::VectorXd> y(pwc.samples.data(),
                                            static_cast<Eigen::Index>(pwc.size()));
  Eigen::VectorXd p;
  if (env == Envelope::none) {
    // Columns are orthogonal on the midpoint grid (the Nyquist cosine
    // column vanishes identically).
    p = B.transpose() * y;
    for (Eigen::Index m = 0; m < p.size(); ++m) {
      const double nn = B.col(m).squaredNorm();
      p(m) = nn > 1e-9 ? p(m) / nn : 0.0;
    }
  } else {
    p = B.colPivHouseholderQr().solve(y);
  }
  return from_linear(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                     T, env);
}

/// phi(T) = sum_k Omega_k dt.
inline double rotation_angle(const SampledWaveform& w) {
  double acc = 0.0;
  for (double v : w.samples) acc += v;
  return acc * w.dt;
}

// ---------------------------------------------------------------------------
// Reference waveforms.

/// Raised-cosine pulse (theta/T)(1 - cos(2 pi t/T)) with area theta.
inline PulseAnsatz cos_pulse(double theta, double duration) {
  PulseAnsatz a;
  a.duration = duration;
  a.envelope = Envelope::none;
  a.a0 = theta / duration;
  a.harmonics = {{theta / duration, kPi}};
  return a;
}

inline PulseAnsatz square_pulse(double value, double duration) {
  PulseAnsatz a;
  a.duration = duration;
  a.envelope = Envelope::none;
  a.a0 = value;
  return a;
}

}  // namespace filterctl
