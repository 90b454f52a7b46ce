#pragma once

#include <cmath>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/pulses.hpp"

namespace filterctl {

// Flux-tunable two-level qubit: omega(Phi) = sqrt(Delta^2 + (2 I_p Phi)^2).
// All coupling strengths below are exact flux derivatives of the
// corresponding Hamiltonian coefficient.

inline double qubit_frequency(double delta, double ip, double phi) {
  const double e = 2.0 * ip * phi;
  return std::sqrt(delta * delta + e * e);
}

/// omega(Phi) - Delta, written to avoid cancellation near the sweet spot.
inline double frequency_shift(double delta, double ip, double phi) {
  const double e = 2.0 * ip * phi;
  return e * e / (qubit_frequency(delta, ip, phi) + delta);
}

/// c_z = d omega / d Phi = 4 I_p^2 Phi / omega.
inline double dephasing_coupling(double delta, double ip, double phi) {
  return 4.0 * ip * ip * phi / qubit_frequency(delta, ip, phi);
}

/// d c_z / d Phi = 4 I_p^2 Delta^2 / omega^3.
inline double dephasing_coupling_slope(double delta, double ip, double phi) {
  const double w = qubit_frequency(delta, ip, phi);
  return 4.0 * ip * ip * delta * delta / (w * w * w);
}

// s = epsilon / omega and its first two flux derivatives; J_zz = J s_A s_B.
inline double zz_factor(double delta, double ip, double phi) {
  return 2.0 * ip * phi / qubit_frequency(delta, ip, phi);
}
inline double zz_factor_d1(double delta, double ip, double phi) {
  const double w = qubit_frequency(delta, ip, phi);
  return 2.0 * ip * delta * delta / (w * w * w);
}
inline double zz_factor_d2(double delta, double ip, double phi) {
  const double w = qubit_frequency(delta, ip, phi);
  const double w2 = w * w;
  return -24.0 * ip * ip * ip * delta * delta * phi / (w2 * w2 * w);
}

struct SingleQubitDephasing {
  // H = delta(t)/2 Z + Omega(t)/2 X with delta = beta.
  static constexpr double channel_prefactor = 0.25;
};

struct FluxoniumPair {
  double delta_a = kTwoPi * 1.0;
  double delta_b = kTwoPi * 1.3;
  double ip_a = 10.0 * kTwoPi * 1.0;
  double ip_b = 10.0 * kTwoPi * 1.3;
  double J = kTwoPi * 0.02;

  double eta() const { return delta_b / delta_a; }
  double K_a() const { return 2.0 * ip_a / delta_a; }
  double K_b() const { return 2.0 * ip_b / delta_b; }

  void validate() const {
    require(std::isfinite(delta_a) && delta_a > 0.0, "fluxonium pair: delta_a must be > 0");
    require(std::isfinite(delta_b) && delta_b > 0.0, "fluxonium pair: delta_b must be > 0");
    require(std::isfinite(ip_a) && std::isfinite(ip_b), "fluxonium pair: non-finite I_p");
    require(std::isfinite(J), "fluxonium pair: non-finite J");
  }

  double omega_a(double phi) const { return frequency_shift(delta_a, ip_a, phi); }
  double omega_b(double phi) const { return frequency_shift(delta_b, ip_b, phi); }
  double jzz(double phi) const {
    return J * zz_factor(delta_a, ip_a, phi) * zz_factor(delta_b, ip_b, phi);
  }
  double c_za(double phi) const { return dephasing_coupling(delta_a, ip_a, phi); }
  double c_zb(double phi) const { return dephasing_coupling(delta_b, ip_b, phi); }
  double c_zz(double phi) const {
    return J * (zz_factor_d1(delta_a, ip_a, phi) * zz_factor(delta_b, ip_b, phi) +
                zz_factor(delta_a, ip_a, phi) * zz_factor_d1(delta_b, ip_b, phi));
  }
  double c_za_slope(double phi) const { return dephasing_coupling_slope(delta_a, ip_a, phi); }
  double c_zb_slope(double phi) const { return dephasing_coupling_slope(delta_b, ip_b, phi); }
  double c_zz_slope(double phi) const {
    const double sa = zz_factor(delta_a, ip_a, phi), sb = zz_factor(delta_b, ip_b, phi);
    const double da = zz_factor_d1(delta_a, ip_a, phi), db = zz_factor_d1(delta_b, ip_b, phi);
    const double dda = zz_factor_d2(delta_a, ip_a, phi), ddb = zz_factor_d2(delta_b, ip_b, phi);
    return J * (dda * sb + 2.0 * da * db + sa * ddb);
  }
};

struct FluxSensor {
  double delta = kTwoPi * 1.0;
  double ip = 10.0 * kTwoPi * 1.0;

  void validate() const {
    require(std::isfinite(delta) && delta > 0.0, "flux sensor: delta must be > 0");
    require(std::isfinite(ip), "flux sensor: non-finite I_p");
  }
  double frequency(double phi) const { return qubit_frequency(delta, ip, phi); }
  double c_z(double phi) const { return dephasing_coupling(delta, ip, phi); }
  double c_z_slope(double phi) const { return dephasing_coupling_slope(delta, ip, phi); }
};

/// Per-sample couplings of the fluxonium CZ scenario. Noise enters as
/// beta(t) [1/2 c_zA Z_A + 1/2 c_zB Z_B + c_zz Z_A Z_B].
struct CzChannels {
  SampledWaveform z_a, z_b, zz;
  SampledWaveform omega_a, omega_b, jzz;
};

inline CzChannels cz_couplings(const FluxoniumPair& dev, const SampledWaveform& flux) {
  dev.validate();
  const std::size_t n = flux.size();
  std::vector<double> za(n), zb(n), zz(n), oa(n), ob(n), jz(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double phi = flux[k];
    za[k] = dev.c_za(phi);
    zb[k] = dev.c_zb(phi);
    zz[k] = dev.c_zz(phi);
    oa[k] = dev.omega_a(phi);
    ob[k] = dev.omega_b(phi);
    jz[k] = dev.jzz(phi);
  }
  const double dt = flux.dt;
  return {SampledWaveform(dt, std::move(za)), SampledWaveform(dt, std::move(zb)),
          SampledWaveform(dt, std::move(zz)), SampledWaveform(dt, std::move(oa)),
          SampledWaveform(dt, std::move(ob)), SampledWaveform(dt, std::move(jz))};
}

inline SampledWaveform sensor_coupling(const FluxSensor& dev, const SampledWaveform& flux_bias) {
  dev.validate();
  std::vector<double> c(flux_bias.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = dev.c_z(flux_bias[k]);
  return SampledWaveform(flux_bias.dt, std::move(c));
}

/// Constant flux giving J_zz T = pi/4 (bisection on the monotone branch Phi > 0).
inline double square_cz_flux(const FluxoniumPair& dev, double T) {
  const double target = kPi / 4.0 / T;
  double lo = 0.0, hi = 1.0;
  require(dev.jzz(hi) > target, "square_cz_flux: J too small to reach a CZ phase in T");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dev.jzz(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace filterctl
