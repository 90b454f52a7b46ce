#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/pulses.hpp"

namespace filterctl {

/// Named time series sampled on a shared midpoint grid.
struct ControlFunctions {
  double dt = 0.0;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> channels;
  /// Default weight of each channel in the total filter function.
  std::vector<double> prefactors;

  std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration() const { return dt * static_cast<double>(n_samples()); }
};

/// phi_k at the midpoint of step k: dt (sum_{j<k} Omega_j + Omega_k / 2).
inline std::vector<double> midpoint_phase(const SampledWaveform& omega) {
  std::vector<double> phi(omega.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    phi[k] = (acc + 0.5 * omega[k]) * omega.dt;
    acc += omega[k];
  }
  return phi;
}

/// Toggling-frame Z axis under Omega/2 X: Z cos(phi) + Y sin(phi).
inline ControlFunctions control_functions_single_qubit(const SampledWaveform& omega) {
  const std::vector<double> phi = midpoint_phase(omega);
  ControlFunctions cf;
  cf.dt = omega.dt;
  cf.labels = {"sin", "cos"};
  cf.channels.assign(2, std::vector<double>(phi.size()));
  for (std::size_t k = 0; k < phi.size(); ++k) {
    cf.channels[0][k] = std::sin(phi[k]);
    cf.channels[1][k] = std::cos(phi[k]);
  }
  cf.prefactors = {SingleQubitDephasing::channel_prefactor,
                   SingleQubitDephasing::channel_prefactor};
  return cf;
}

inline ControlFunctions control_functions_cz(const FluxoniumPair& dev, const SampledWaveform& flux) {
  CzChannels ch = cz_couplings(dev, flux);
  ControlFunctions cf;
  cf.dt = flux.dt;
  cf.labels = {"z_A", "z_B", "zz"};
  cf.channels = {std::move(ch.z_a.samples), std::move(ch.z_b.samples), std::move(ch.zz.samples)};
  cf.prefactors = {0.25, 0.25, 1.0};
  return cf;
}

/// Single coupling channel with unit weight (sensing phase noise).
inline ControlFunctions control_functions_coupling(const SampledWaveform& c, std::string label = "z") {
  ControlFunctions cf;
  cf.dt = c.dt;
  cf.labels = {std::move(label)};
  cf.channels = {c.samples};
  cf.prefactors = {1.0};
  return cf;
}

// ---------------------------------------------------------------------------
// Frequency grids.

struct OmegaGrid {
  std::vector<double> omega;
  /// Grid holds omega >= 0 only and stands for the evenly extended axis.
  bool even = true;

  double max_abs() const {
    double m = 0.0;
    for (double w : omega) m = std::max(m, std::abs(w));
    return m;
  }
};

inline OmegaGrid uniform_grid(double omega_max, std::size_t n_points, bool even = true) {
  require(omega_max > 0.0, "grid omega_max must be > 0");
  OmegaGrid g;
  g.even = even;
  g.omega = even ? linspace(0.0, omega_max, n_points) : linspace(-omega_max, omega_max, n_points);
  return g;
}

/// 4001 points over [0, 40 pi / T], even.
inline OmegaGrid default_grid(double T) { return uniform_grid(40.0 * kPi / T, 4001, true); }

/// Uniform nodes covering each band with spacing at most max_spacing (band
/// edges included), flagged even.
inline OmegaGrid band_grid(const std::vector<Band>& bands, double max_spacing) {
  OmegaGrid g;
  g.even = true;
  for (const Band& b : normalize_bands(bands)) {
    require(b.lo >= 0.0, "band_grid: bands must lie on omega >= 0");
    const auto n = static_cast<std::size_t>(std::ceil(b.width() / max_spacing)) + 1;
    const std::vector<double> pts = linspace(b.lo, b.hi, std::max<std::size_t>(n, 2));
    g.omega.insert(g.omega.end(), pts.begin(), pts.end());
  }
  return g;
}

// ---------------------------------------------------------------------------
// Finite-time Fourier transforms.

/// G(omega) = sum_k f_k dt exp(-i omega t_k), t_k = (k + 1/2) dt.
inline std::complex<double> fourier_transform(std::span<const double> f, double dt, double omega) {
  const std::complex<double> step = std::polar(1.0, -omega * dt);
  std::complex<double> rot = std::polar(1.0, -0.5 * omega * dt);
  std::complex<double> acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    acc += f[k] * rot;
    rot *= step;
    // Renormalize occasionally so rounding in the recurrence cannot drift.
    if ((k & 255) == 255) rot /= std::abs(rot);
  }
  return acc * dt;
}

/// Dense midpoint-rule transform for a fixed (omega grid, time grid) pair.
/// Worth building when many waveforms share the grids.
class FourierOperator {
 public:
  FourierOperator() = default;
  FourierOperator(const std::vector<double>& omega, std::size_t n_samples, double dt)
      : omega_(omega), dt_(dt) {
    const auto m = static_cast<Eigen::Index>(omega.size());
    const auto n = static_cast<Eigen::Index>(n_samples);
    cos_.resize(m, n);
    sin_.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double x = omega[static_cast<std::size_t>(i)] * (static_cast<double>(k) + 0.5) * dt;
        cos_(i, k) = std::cos(x) * dt;
        sin_(i, k) = -std::sin(x) * dt;
      }
    }
  }

  std::size_t n_omega() const { return omega_.size(); }
  std::size_t n_samples() const { return static_cast<std::size_t>(cos_.cols()); }
  const std::vector<double>& omega() const { return omega_; }
  double dt() const { return dt_; }

  /// Real and imaginary parts of G on the grid.
  void apply(const Eigen::Ref<const Eigen::VectorXd>& f, Eigen::VectorXd& re, Eigen::VectorXd& im) const {
    re.noalias() = cos_ * f;
    im.noalias() = sin_ * f;
  }

  /// d/df_k of sum_i w_i |G_i|^2 = 2 sum_i w_i (re_i C_ik + im_i S_ik).
  Eigen::VectorXd weighted_power_gradient(const Eigen::VectorXd& w, const Eigen::VectorXd& re,
                                          const Eigen::VectorXd& im) const {
    const Eigen::VectorXd a = w.cwiseProduct(re);
    const Eigen::VectorXd b = w.cwiseProduct(im);
    return 2.0 * (cos_.transpose() * a + sin_.transpose() * b);
  }

 private:
  std::vector<double> omega_;
  double dt_ = 0.0;
  Eigen::MatrixXd cos_, sin_;
};

// ---------------------------------------------------------------------------
// Filter functions.

struct FilterFunction {
  OmegaGrid grid;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> channel;  // |G_v(omega)|^2
  std::vector<double> prefactors;
  std::vector<double> total;                 // sum_v p_v |G_v|^2
  /// sum_v p_v (f_v(0)^2 + f_v(T)^2): sets the 1/omega^2 tail beyond the grid.
  double edge_weight = 0.0;
  double duration = 0.0;
};

inline FilterFunction filter_function(const ControlFunctions& cf, const std::vector<double>& prefactors,
                                      const OmegaGrid& grid) {
  require(!cf.channels.empty(), "filter_function: empty channel map");
  require(prefactors.size() == cf.channels.size(), "filter_function: one prefactor per channel required");
  require(!grid.omega.empty(), "filter_function: empty omega grid");
  FilterFunction F;
  F.grid = grid;
  F.labels = cf.labels;
  F.prefactors = prefactors;
  F.duration = cf.duration();
  F.total.assign(grid.omega.size(), 0.0);
  F.channel.resize(cf.channels.size());
  for (std::size_t v = 0; v < cf.channels.size(); ++v) {
    const std::vector<double>& f = cf.channels[v];
    require(all_finite(f), "filter_function: non-finite control function '" + cf.labels[v] + "'");
    F.channel[v].resize(grid.omega.size());
    for (std::size_t i = 0; i < grid.omega.size(); ++i) {
      F.channel[v][i] = std::norm(fourier_transform(f, cf.dt, grid.omega[i]));
      F.total[i] += prefactors[v] * F.channel[v][i];
    }
    F.edge_weight += prefactors[v] * (f.front() * f.front() + f.back() * f.back());
  }
  return F;
}

inline FilterFunction filter_function(const ControlFunctions& cf, const OmegaGrid& grid) {
  return filter_function(cf, cf.prefactors, grid);
}

namespace detail {

// Linear interpolation of y on increasing x.
inline double interp(const std::vector<double>& x, const std::vector<double>& y, double at) {
  auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double f = (at - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + f * (y[i] - y[i - 1]);
}

// Trapezoid integral of the tabulated y over [lo, hi] with interpolated ends.
inline double trapezoid_range(const std::vector<double>& x, const std::vector<double>& y, double lo,
                              double hi) {
  double acc = 0.0;
  double left = lo;
  double yl = interp(x, y, lo);
  auto it = std::upper_bound(x.begin(), x.end(), lo);
  for (; it != x.end() && *it < hi; ++it) {
    const double yr = y[static_cast<std::size_t>(it - x.begin())];
    acc += 0.5 * (*it - left) * (yl + yr);
    left = *it;
    yl = yr;
  }
  acc += 0.5 * (hi - left) * (yl + interp(x, y, hi));
  return acc;
}

}  // namespace detail

/// Trapezoid integral of the total filter function over the union of bands.
/// On even grids the bands (omega >= 0) count twice, once per sign of omega.
inline double band_integral(const FilterFunction& F, const std::vector<Band>& bands) {
  if (bands.empty()) return 0.0;
  const std::vector<double>& w = F.grid.omega;
  require(w.size() >= 2, "band_integral: grid needs at least two points");
  double acc = 0.0;
  for (const Band& b : normalize_bands(bands)) {
    if (b.lo < w.front() - 1e-12 * std::abs(w.front()) || b.hi > w.back() * (1.0 + 1e-12))
      throw InvalidInput("band (" + std::to_string(b.lo) + ", " + std::to_string(b.hi) +
                         ") lies outside the omega grid [" + std::to_string(w.front()) + ", " +
                         std::to_string(w.back()) + "]");
    acc += detail::trapezoid_range(w, F.total, std::max(b.lo, w.front()), std::min(b.hi, w.back()));
  }
  return F.grid.even ? 2.0 * acc : acc;
}

/// Integral of the total filter function over the whole axis, with the
/// asymptotic 2 edge_weight / omega^2 tail added beyond the grid edge.
inline double full_axis_integral(const FilterFunction& F) {
  const std::vector<double>& w = F.grid.omega;
  double acc = trapezoid(w, F.total);
  double tail;
  if (F.grid.even) {
    acc *= 2.0;
    tail = 2.0 * F.edge_weight / w.back();
  } else {
    tail = F.edge_weight / w.back() + F.edge_weight / -w.front();
  }
  return acc + tail;
}

/// Second-order infidelity (1/2pi) * integral of F S d omega. S is integrated
/// exactly over each grid cell and weighted with the cell-averaged F, so
/// spectra narrower than the grid spacing are still resolved.
inline double predict_infidelity(const FilterFunction& F, const PsdModel& S) {
  const std::vector<double>& w = F.grid.omega;
  require(w.size() >= 2, "predict_infidelity: grid needs at least two points");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i)
    acc += 0.5 * (F.total[i] + F.total[i + 1]) * psd_integral(S, w[i], w[i + 1]);
  if (F.grid.even) acc *= 2.0;
  acc /= kTwoPi;
  const double qs = quasi_static_variance(S);
  if (qs > 0.0) acc += qs * detail::interp(w, F.total, 0.0);
  return std::max(acc, 0.0);
}

}  // namespace filterctl
