#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/dynamics.hpp"
#include "filterctl/filters.hpp"
#include "filterctl/pulses.hpp"

namespace filterctl {

// ---------------------------------------------------------------------------
// Band quadrature: trapezoid nodes and weights over a union of bands on
// omega >= 0, doubled for the negative half axis.

struct BandQuadrature {
  std::vector<double> omega;
  std::vector<double> weight;
};

inline BandQuadrature band_quadrature(const std::vector<Band>& bands, double max_spacing) {
  BandQuadrature q;
  for (const Band& b : normalize_bands(bands)) {
    require(b.lo >= 0.0, "band quadrature: bands must lie on omega >= 0");
    const auto n = std::max<std::size_t>(static_cast<std::size_t>(std::ceil(b.width() / max_spacing)) + 1, 2);
    const std::vector<double> pts = linspace(b.lo, b.hi, n);
    const double h = (b.hi - b.lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      q.omega.push_back(pts[i]);
      q.weight.push_back(2.0 * h * ((i == 0 || i + 1 == n) ? 0.5 : 1.0));
    }
  }
  return q;
}

/// Sum over channels of p_v * sum_i w_i |G_v(omega_i)|^2 and, optionally, its
/// gradient with respect to every channel sample.
class BandPower {
 public:
  BandPower() = default;
  BandPower(const std::vector<Band>& bands, double max_spacing, std::size_t n_samples, double dt) {
    const BandQuadrature q = band_quadrature(bands, max_spacing);
    op_ = FourierOperator(q.omega, n_samples, dt);
    w_ = Eigen::Map<const Eigen::VectorXd>(q.weight.data(), static_cast<Eigen::Index>(q.weight.size()));
  }

  bool empty() const { return op_.n_omega() == 0; }

  double operator()(const std::vector<double>& f, double prefactor, std::vector<double>* grad) const {
    if (empty()) {
      if (grad) grad->assign(f.size(), 0.0);
      return 0.0;
    }
    const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(f.size()));
    Eigen::VectorXd re, im;
    op_.apply(fv, re, im);
    const double value = prefactor * w_.dot(re.cwiseAbs2() + im.cwiseAbs2());
    if (grad) {
      const Eigen::VectorXd g = prefactor * op_.weighted_power_gradient(w_, re, im);
      grad->assign(g.data(), g.data() + g.size());
    }
    return value;
  }

 private:
  FourierOperator op_;
  Eigen::VectorXd w_;
};

// ---------------------------------------------------------------------------
// Cost problems. Each returns two terms, combined by the optimizer as
// w1 * t1 + w2 * t2, with gradients with respect to the sampled waveform.

struct CostTerms {
  double t1 = 0.0;
  double t2 = 0.0;
  std::vector<double> g1, g2;
};

class CostProblem {
 public:
  virtual ~CostProblem() = default;
  virtual double duration() const = 0;
  virtual std::size_t n_samples() const = 0;
  virtual Envelope envelope() const = 0;
  virtual CostTerms terms(const std::vector<double>& x, bool want_grad) const = 0;
  virtual std::string kind() const = 0;
  /// Adjusts the ansatz so the noise-free gate is exact; a no-op by default.
  virtual PulseAnsatz calibrate(const PulseAnsatz& a) const { return a; }

  double dt() const { return duration() / static_cast<double>(n_samples()); }
};

/// Single-qubit gate under dephasing: t1 = 1 - F_G, t2 = band integral of the
/// sin/cos filter function (prefactor 1/4 each).
class SingleQubitGateProblem : public CostProblem {
 public:
  SingleQubitGateProblem(double T, std::size_t n_samples, const GateSpec& gate, std::vector<Band> bands,
                         Envelope env = Envelope::half_sine, double max_spacing = 0.0)
      : T_(T), n_(n_samples), env_(env), bands_(std::move(bands)) {
    require(gate.dim() == 2, "single-qubit problem needs a 2x2 target");
    require(T > 0.0 && n_samples >= 2, "single-qubit problem: invalid time grid");
    Matrix X(2, 2);
    X << 0, 1, 1, 0;
    a_ = gate.U.adjoint().trace() / 2.0;
    b_ = (gate.U.adjoint() * X).trace() / 2.0;
    if (max_spacing <= 0.0) max_spacing = kPi / (100.0 * T);
    power_ = BandPower(bands_, max_spacing, n_samples, T / static_cast<double>(n_samples));
  }

  double duration() const override { return T_; }
  std::size_t n_samples() const override { return n_; }
  Envelope envelope() const override { return env_; }
  std::string kind() const override { return "robust_gate"; }
  const std::vector<Band>& bands() const { return bands_; }

  /// F_G and dF_G/dphi for the rotation exp(-i phi X / 2).
  std::pair<double, double> fidelity(double phi) const {
    const double c = std::cos(0.5 * phi), s = std::sin(0.5 * phi);
    const cd f = c * a_ - cd(0, 1) * s * b_;
    const cd df = -0.5 * s * a_ - cd(0, 0.5) * c * b_;
    return {std::norm(f), 2.0 * std::real(std::conj(f) * df)};
  }

  CostTerms terms(const std::vector<double>& x, bool want_grad) const override {
    require(x.size() == n_, "waveform length differs from the problem grid");
    const double dt = T_ / static_cast<double>(n_);
    const SampledWaveform w(dt, x);
    const ControlFunctions cf = control_functions_single_qubit(w);
    CostTerms out;
    const auto [F, dF] = fidelity(rotation_angle(w));
    out.t1 = 1.0 - F;
    std::vector<double> gs, gc;
    out.t2 = power_(cf.channels[0], 0.25, want_grad ? &gs : nullptr) +
             power_(cf.channels[1], 0.25, want_grad ? &gc : nullptr);
    if (want_grad) {
      out.g1.assign(n_, -dF * dt);
      // d/dphi_k, then back through phi_k = dt (sum_{j<k} x_j + x_k / 2).
      std::vector<double> gphi(n_);
      for (std::size_t k = 0; k < n_; ++k) gphi[k] = gs[k] * cf.channels[1][k] - gc[k] * cf.channels[0][k];
      out.g2.assign(n_, 0.0);
      double tail = 0.0;
      for (std::size_t j = n_; j-- > 0;) {
        out.g2[j] = dt * (tail + 0.5 * gphi[j]);
        tail += gphi[j];
      }
    }
    return out;
  }

  /// Shifts a0 so the rotation angle lands exactly on the best angle for the target.
  PulseAnsatz calibrate(const PulseAnsatz& a) const override {
    const double phi = rotation_angle(sample(a, n_));
    // F_G(phi) is 4 pi periodic; search the optimum closest to phi.
    double best = phi, best_f = -1.0;
    for (int i = -400; i <= 400; ++i) {
      const double p = phi + kPi * i / 100.0;
      const double f = fidelity(p).first;
      if (f > best_f + 1e-15 || (std::abs(f - best_f) <= 1e-15 && std::abs(p - phi) < std::abs(best - phi)))
        best = p, best_f = f;
    }
    // Newton refinement on dF/dphi.
    for (int it = 0; it < 50; ++it) {
      const double h = 1e-5;
      const double d1 = fidelity(best).second;
      const double d2 = (fidelity(best + h).second - fidelity(best - h).second) / (2 * h);
      if (d2 == 0.0) break;
      const double step = d1 / d2;
      best -= step;
      if (std::abs(step) < 1e-15) break;
    }
    PulseAnsatz out = a;
    const double unit_area = rotation_angle(sample(PulseAnsatz{a.duration, 1.0, {}, a.envelope}, n_));
    out.a0 += (best - phi) / unit_area;
    return out;
  }

 private:
  double T_;
  std::size_t n_;
  Envelope env_;
  std::vector<Band> bands_;
  cd a_, b_;
  BandPower power_;
};

/// Fluxonium CZ driven by a shared flux pulse: t1 = 1 - cos^2(r) with r the
/// CZ phase error after virtual Z corrections, t2 = band integral of the
/// z_A, z_B (prefactor 1/4) and zz (prefactor 1) filter functions.
class CzGateProblem : public CostProblem {
 public:
  CzGateProblem(const FluxoniumPair& dev, double T, std::size_t n_samples, std::vector<Band> bands,
                Envelope env = Envelope::half_sine, double max_spacing = 0.0)
      : dev_(dev), T_(T), n_(n_samples), env_(env), bands_(std::move(bands)) {
    dev.validate();
    require(T > 0.0 && n_samples >= 2, "CZ problem: invalid time grid");
    if (max_spacing <= 0.0) max_spacing = kPi / (100.0 * T);
    power_ = BandPower(bands_, max_spacing, n_samples, T / static_cast<double>(n_samples));
  }

  double duration() const override { return T_; }
  std::size_t n_samples() const override { return n_; }
  Envelope envelope() const override { return env_; }
  std::string kind() const override { return "robust_gate"; }
  const FluxoniumPair& device() const { return dev_; }
  const std::vector<Band>& bands() const { return bands_; }

  double zz_phase(const std::vector<double>& x) const {
    double acc = 0.0;
    for (double phi : x) acc += dev_.jzz(phi);
    return acc * T_ / static_cast<double>(n_);
  }

  CostTerms terms(const std::vector<double>& x, bool want_grad) const override {
    require(x.size() == n_, "waveform length differs from the problem grid");
    const double dt = T_ / static_cast<double>(n_);
    std::vector<double> ca(n_), cb(n_), czz(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      ca[k] = dev_.c_za(x[k]);
      cb[k] = dev_.c_zb(x[k]);
      czz[k] = dev_.c_zz(x[k]);
    }
    CostTerms out;
    const double r = cz_phase_error(zz_phase(x));
    out.t1 = std::pow(std::sin(r), 2);
    std::vector<double> ga, gb, gz;
    out.t2 = power_(ca, 0.25, want_grad ? &ga : nullptr) + power_(cb, 0.25, want_grad ? &gb : nullptr) +
             power_(czz, 1.0, want_grad ? &gz : nullptr);
    if (want_grad) {
      // d sin^2 r / d theta = sin 2r; d theta / d Phi_k = dt c_zz(Phi_k).
      const double s2r = std::sin(2.0 * r);
      out.g1.resize(n_);
      out.g2.resize(n_);
      for (std::size_t k = 0; k < n_; ++k) {
        out.g1[k] = s2r * dt * czz[k];
        out.g2[k] = ga[k] * dev_.c_za_slope(x[k]) + gb[k] * dev_.c_zb_slope(x[k]) + gz[k] * dev_.c_zz_slope(x[k]);
      }
    }
    return out;
  }

  /// Rescales the whole flux pulse so the ZZ phase hits the nearest CZ value.
  PulseAnsatz calibrate(const PulseAnsatz& a) const override {
    const std::vector<double> x0 = sample(a, n_).samples;
    const double theta0 = zz_phase(x0);
    const double target = theta0 - cz_phase_error(theta0);
    auto theta_at = [&](double s) {
      std::vector<double> x = x0;
      for (double& v : x) v *= s;
      return zz_phase(x);
    };
    // theta(s) is increasing in s > 0 for this device model.
    double lo = 0.0, hi = 1.0;
    while (theta_at(hi) < target && hi < 64.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (theta_at(mid) < target ? lo : hi) = mid;
    }
    const double s = 0.5 * (lo + hi);
    PulseAnsatz out = a;
    out.a0 *= s;
    for (Harmonic& h : out.harmonics) h.amplitude *= s;
    return out;
  }

 private:
  FluxoniumPair dev_;
  double T_;
  std::size_t n_;
  Envelope env_;
  std::vector<Band> bands_;
  BandPower power_;
};

/// Sensing: t1 = L1 = noise-band integral of |c_z(omega, T)|^2, t2 = L2 =
/// minus the signal-band integral. The waveform is a flux bias mapped through
/// the sensor's c_z, or the coupling itself when no sensor is given.
class SensingProblem : public CostProblem {
 public:
  SensingProblem(double T, std::size_t n_samples, std::vector<Band> noise_bands, std::vector<Band> signal_bands,
                 std::optional<FluxSensor> sensor = std::nullopt, Envelope env = Envelope::none,
                 double max_spacing = 0.0)
      : T_(T), n_(n_samples), env_(env), sensor_(sensor),
        noise_bands_(std::move(noise_bands)), signal_bands_(std::move(signal_bands)) {
    require(T > 0.0 && n_samples >= 2, "sensing problem: invalid time grid");
    if (max_spacing <= 0.0) max_spacing = kPi / (20.0 * T);
    const double dt = T / static_cast<double>(n_samples);
    noise_ = BandPower(noise_bands_, max_spacing, n_samples, dt);
    signal_ = BandPower(signal_bands_, max_spacing, n_samples, dt);
  }

  double duration() const override { return T_; }
  std::size_t n_samples() const override { return n_; }
  Envelope envelope() const override { return env_; }
  std::string kind() const override { return "sensing"; }
  const std::optional<FluxSensor>& sensor() const { return sensor_; }

  std::vector<double> coupling(const std::vector<double>& x) const {
    if (!sensor_) return x;
    std::vector<double> c(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) c[k] = sensor_->c_z(x[k]);
    return c;
  }

  CostTerms terms(const std::vector<double>& x, bool want_grad) const override {
    require(x.size() == n_, "waveform length differs from the problem grid");
    const std::vector<double> c = coupling(x);
    CostTerms out;
    out.t1 = noise_(c, 1.0, want_grad ? &out.g1 : nullptr);
    out.t2 = -signal_(c, 1.0, want_grad ? &out.g2 : nullptr);
    if (want_grad) {
      for (std::size_t k = 0; k < n_; ++k) {
        const double d = sensor_ ? sensor_->c_z_slope(x[k]) : 1.0;
        out.g1[k] *= d;
        out.g2[k] *= -d;
      }
    }
    return out;
  }

 private:
  double T_;
  std::size_t n_;
  Envelope env_;
  std::optional<FluxSensor> sensor_;
  std::vector<Band> noise_bands_, signal_bands_;
  BandPower noise_, signal_;
};

// ---------------------------------------------------------------------------
// Standalone cost functions.

inline double cost_robust_gate(const SampledWaveform& pulse, const Scenario& scenario, const GateSpec& gate,
                               const std::vector<Band>& bands, double w1 = 1.0, double w2 = 1.0) {
  require(w1 >= 0.0 && w2 >= 0.0 && (w1 > 0.0 || w2 > 0.0), "cost weights must be >= 0 and not both 0");
  require(!(w2 > 0.0 && bands.empty()), "cost_robust_gate: w2 > 0 needs at least one band");
  const double T = pulse.duration();
  if (std::holds_alternative<SingleQubitScenario>(scenario)) {
    const SingleQubitGateProblem p(T, pulse.size(), gate, bands);
    const CostTerms t = p.terms(pulse.samples, false);
    return w1 * t.t1 + w2 * t.t2;
  }
  const auto& cz = std::get<CzScenario>(scenario);
  require(gate.dim() == 4, "CZ scenario needs a 4x4 target");
  // CZ fidelity is taken up to single-qubit virtual Z corrections.
  const CzGateProblem p(cz.device, T, pulse.size(), bands);
  const CostTerms t = p.terms(pulse.samples, false);
  return w1 * t.t1 + w2 * t.t2;
}

inline double cost_sensing(const SampledWaveform& coupling, const std::vector<Band>& noise_bands,
                           const std::vector<Band>& signal_bands, double w1 = 1.0, double w2 = 1.0) {
  const SensingProblem p(coupling.duration(), coupling.size(), noise_bands, signal_bands);
  const CostTerms t = p.terms(coupling.samples, false);
  return w1 * t.t1 + w2 * t.t2;
}

// ---------------------------------------------------------------------------
// Optimizer.

struct OptimizerConfig {
  double w1 = 1.0;
  /// Negative selects auto-balancing at the initial point.
  double w2 = -1.0;
  double learning_rate = 0.01;
  std::size_t n_harmonics = 7;
  // Stop once the cost drops below this; disabled by default.
  double tolerance = -std::numeric_limits<double>::infinity();
  std::size_t max_iterations = 1000;
  /// Stream for init_jitter.
  std::uint64_t seed = 0;
  /// Gaussian perturbation of the normalized initial coefficients; 0 keeps the seed pulse.
  double init_jitter = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Apply the problem's exact-gate calibration to the final ansatz.
  bool calibrate = true;

  void validate() const {
    require(w1 >= 0.0, "optimizer: w1 must be >= 0");
    require(w1 > 0.0 || w2 != 0.0, "optimizer: w1 and w2 cannot both be 0");
    require(learning_rate > 0.0, "optimizer: learning rate must be > 0");
    require(max_iterations >= 1, "optimizer: max_iterations must be >= 1");
    require(init_jitter >= 0.0 && std::isfinite(init_jitter), "optimizer: init_jitter must be >= 0");
  }
};

struct OptimizationTrace {
  std::vector<double> cost;
  std::vector<double> grad_norm;
  std::vector<double> best_cost;
  PulseAnsatz initial;
  PulseAnsatz final_ansatz;
  double final_cost = 0.0;
  double w1 = 1.0, w2 = 1.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Maps normalized linear coefficients q to the sampled waveform
/// x = B (scale q) and evaluates w1 t1 + w2 t2 with its gradient in q.
class ParametrizedCost {
 public:
  ParametrizedCost(const CostProblem& problem, std::size_t n_harmonics, double scale, double w1, double w2)
      : problem_(problem), scale_(scale), w1_(w1), w2_(w2) {
    B_ = basis_matrix(problem.duration(), problem.n_samples(), n_harmonics, problem.envelope());
  }

  std::size_t dim() const { return static_cast<std::size_t>(B_.cols()); }
  double scale() const { return scale_; }

  std::vector<double> waveform(const Eigen::VectorXd& q) const {
    const Eigen::VectorXd x = B_ * (scale_ * q);
    return {x.data(), x.data() + x.size()};
  }

  PulseAnsatz ansatz(const Eigen::VectorXd& q) const {
    const Eigen::VectorXd p = scale_ * q;
    return from_linear(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                       problem_.duration(), problem_.envelope());
  }

  double operator()(const Eigen::VectorXd& q, Eigen::VectorXd* grad) const {
    const CostTerms t = problem_.terms(waveform(q), grad != nullptr);
    if (grad) {
      Eigen::VectorXd gx(static_cast<Eigen::Index>(t.g1.size()));
      for (std::size_t k = 0; k < t.g1.size(); ++k) gx[static_cast<Eigen::Index>(k)] = w1_ * t.g1[k] + w2_ * t.g2[k];
      *grad = scale_ * (B_.transpose() * gx);
    }
    return w1_ * t.t1 + w2_ * t.t2;
  }

 private:
  const CostProblem& problem_;
  Eigen::MatrixXd B_;
  double scale_, w1_, w2_;
};

/// Gradient of w1 t1 + w2 t2 with respect to the piecewise-constant samples.
inline std::vector<double> waveform_gradient(const CostProblem& problem, const std::vector<double>& x, double w1,
                                             double w2) {
  const CostTerms t = problem.terms(x, true);
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) g[k] = w1 * t.g1[k] + w2 * t.g2[k];
  return g;
}

/// Adam on the reshaped ansatz coefficients. Every evaluation goes through the
/// N_c-harmonic envelope-windowed basis, so the iterate never leaves the
/// reshaped space; gradients reach the coefficients through the sampled
/// waveform by the chain rule.
inline OptimizationTrace optimize(const SampledWaveform& initial, const OptimizerConfig& cfg,
                                  const CostProblem& problem) {
  cfg.validate();
  require(all_finite(initial.samples), "optimize: initial waveform is not finite");
  require(initial.size() == problem.n_samples(), "optimize: initial waveform length differs from the problem grid");
  require(std::abs(initial.duration() - problem.duration()) <= initial.dt,
          "optimize: initial waveform duration differs from the problem");

  OptimizationTrace tr;
  tr.initial = reshape(initial, cfg.n_harmonics, problem.envelope());
  const std::vector<double> p0 = to_linear(tr.initial);
  const std::vector<double> x0 = sample(tr.initial, problem.n_samples()).samples;
  double scale = 0.0;
  for (double v : x0) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) scale = 1.0;

  tr.w1 = cfg.w1;
  tr.w2 = cfg.w2;
  if (cfg.w2 < 0.0) {
    const CostTerms t0 = problem.terms(x0, false);
    if (problem.kind() == "sensing")
      tr.w2 = std::abs(t0.t2) > 0.0 ? cfg.w1 * std::abs(t0.t1) / std::abs(t0.t2) : 1.0;
    else
      tr.w2 = t0.t2 > 0.0 ? std::max(cfg.w1, 1.0) / t0.t2 : 1.0;
  }

  const ParametrizedCost f(problem, cfg.n_harmonics, scale, tr.w1, tr.w2);
  const auto d = static_cast<Eigen::Index>(f.dim());
  Eigen::VectorXd q(d);
  for (Eigen::Index i = 0; i < d; ++i) q[i] = p0[static_cast<std::size_t>(i)] / scale;
  if (cfg.init_jitter > 0.0) {
    Rng rng(derive_seed(cfg.seed, "optimizer", 0));
    for (Eigen::Index i = 0; i < d; ++i) q[i] += cfg.init_jitter * standard_normal(rng);
  }

  Eigen::VectorXd m = Eigen::VectorXd::Zero(d), v = Eigen::VectorXd::Zero(d), g(d);
  Eigen::VectorXd best_q = q;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const double c = f(q, &g);
    if (!std::isfinite(c) || !g.allFinite())
      throw NumericalError("optimizer diverged at iteration " + std::to_string(it) + " (cost = " +
                           std::to_string(c) + ")");
    tr.cost.push_back(c);
    tr.grad_norm.push_back(g.norm() / scale);
    if (c < best) {
      best = c;
      best_q = q;
    }
    tr.best_cost.push_back(best);
    tr.iterations = it + 1;
    if (c < cfg.tolerance) {
      tr.converged = true;
      break;
    }
    const double t = static_cast<double>(it + 1);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const Eigen::VectorXd mhat = m / (1.0 - std::pow(cfg.beta1, t));
    const Eigen::VectorXd vhat = v / (1.0 - std::pow(cfg.beta2, t));
    q -= cfg.learning_rate * (mhat.array() / (vhat.array().sqrt() + cfg.epsilon)).matrix();
  }

  tr.final_ansatz = f.ansatz(best_q);
  if (cfg.calibrate) tr.final_ansatz = problem.calibrate(tr.final_ansatz);
  const CostTerms tf = problem.terms(sample(tr.final_ansatz, problem.n_samples()).samples, false);
  tr.final_cost = tr.w1 * tf.t1 + tr.w2 * tf.t2;
  return tr;
}

}  // namespace filterctl
