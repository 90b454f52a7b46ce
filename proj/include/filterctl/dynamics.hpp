#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <variant>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/pulses.hpp"

namespace filterctl {

using cd = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

struct GateSpec {
  Matrix U;

  GateSpec() = default;
  explicit GateSpec(Matrix u) : U(std::move(u)) {
    require(U.rows() == U.cols() && (U.rows() == 2 || U.rows() == 4),
            "gate must be a 2x2 or 4x4 matrix");
    const double err = (U.adjoint() * U - Matrix::Identity(U.rows(), U.cols())).norm();
    require(err < 1e-10, "gate matrix is not unitary (||U^dag U - I|| = " + std::to_string(err) + ")");
  }
  Eigen::Index dim() const { return U.rows(); }
};

inline GateSpec gate_identity(Eigen::Index d) { return GateSpec(Matrix::Identity(d, d)); }

inline GateSpec gate_x() {
  Matrix x(2, 2);
  x << 0, 1, 1, 0;
  return GateSpec(x);
}

inline GateSpec gate_cz() {
  Matrix u = Matrix::Identity(4, 4);
  u(3, 3) = -1.0;
  return GateSpec(u);
}

/// |Tr(U_G^dag U) / d|^2.
inline double gate_fidelity(const Matrix& target, const Matrix& U) {
  return std::norm((target.adjoint() * U).trace() / static_cast<double>(U.rows()));
}

// ---------------------------------------------------------------------------
// Propagation.

inline bool is_hermitian(const Matrix& H, double tol = 1e-10) {
  if (H.rows() != H.cols()) return false;
  const double scale = std::max(1.0, H.norm());
  return (H - H.adjoint()).norm() <= tol * scale;
}

/// exp(-i H dt) for Hermitian H: closed form for 2x2 and diagonal H,
/// eigendecomposition otherwise.
inline Matrix step_exponential(const Matrix& H, double dt) {
  const Eigen::Index d = H.rows();
  const Matrix offdiag = H - Matrix(H.diagonal().asDiagonal());
  if (offdiag.norm() == 0.0) {
    Matrix U = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) U(i, i) = std::polar(1.0, -H(i, i).real() * dt);
    return U;
  }
  if (d == 2) {
    // H = h0 I + hx X + hy Y + hz Z.
    const double h0 = 0.5 * (H(0, 0).real() + H(1, 1).real());
    const double hz = 0.5 * (H(0, 0).real() - H(1, 1).real());
    const double hx = H(1, 0).real();
    const double hy = H(1, 0).imag();
    const double n = std::sqrt(hx * hx + hy * hy + hz * hz);
    const double c = std::cos(n * dt), s = std::sin(n * dt) / n;
    Matrix U(2, 2);
    U(0, 0) = cd(c, -s * hz);
    U(1, 1) = cd(c, s * hz);
    U(0, 1) = cd(0, -s) * cd(hx, -hy);
    U(1, 0) = cd(0, -s) * cd(hx, hy);
    return std::polar(1.0, -h0 * dt) * U;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const Eigen::VectorXcd ph =
      (es.eigenvalues().cast<cd>() * cd(0.0, -dt)).array().exp().matrix();
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// Time-ordered product of per-step exponentials, U = U_{N-1} ... U_0.
inline Matrix propagate(const std::vector<Matrix>& H, double dt) {
  require(!H.empty(), "propagate: empty Hamiltonian sequence");
  require(dt > 0.0 && std::isfinite(dt), "propagate: dt must be > 0");
  const Eigen::Index d = H.front().rows();
  Matrix U = Matrix::Identity(d, d);
  for (std::size_t k = 0; k < H.size(); ++k) {
    require(H[k].rows() == d && H[k].cols() == d, "propagate: inconsistent Hamiltonian dimension");
    require(is_hermitian(H[k]), "propagate: Hamiltonian at step " + std::to_string(k) + " is not Hermitian");
    U = step_exponential(H[k], dt) * U;
  }
  return U;
}

/// H_k = (delta_k Z + Omega_k X) / 2 with the closed-form SU(2) step.
inline Eigen::Matrix2cd propagate_single_qubit(std::span<const double> omega,
                                               std::span<const double> delta, double dt) {
  Eigen::Matrix2cd U = Eigen::Matrix2cd::Identity();
  for (std::size_t k = 0; k < omega.size(); ++k) {
    const double hx = 0.5 * omega[k], hz = delta.empty() ? 0.0 : 0.5 * delta[k];
    const double n = std::hypot(hx, hz);
    const double c = std::cos(n * dt);
    const double s = n > 0.0 ? std::sin(n * dt) / n : dt;
    Eigen::Matrix2cd step;
    step << cd(c, -s * hz), cd(0, -s * hx), cd(0, -s * hx), cd(c, s * hz);
    U = step * U;
  }
  return U;
}

// ---------------------------------------------------------------------------
// Scenarios.

/// H = delta(t)/2 Z + Omega(t)/2 X with delta = beta.
struct SingleQubitScenario {
  SampledWaveform omega;
};

/// H0 = 1/2 Omega_A Z_A + 1/2 Omega_B Z_B + J_zz Z_A Z_B driven by a shared
/// flux pulse; noise beta [1/2 c_zA Z_A + 1/2 c_zB Z_B + c_zz Z_A Z_B].
struct CzScenario {
  FluxoniumPair device;
  SampledWaveform flux;
};

using Scenario = std::variant<SingleQubitScenario, CzScenario>;

inline Eigen::Index scenario_dim(const Scenario& s) {
  return std::holds_alternative<SingleQubitScenario>(s) ? 2 : 4;
}

inline const SampledWaveform& scenario_waveform(const Scenario& s) {
  if (auto* q = std::get_if<SingleQubitScenario>(&s)) return q->omega;
  return std::get<CzScenario>(s).flux;
}

namespace detail {

// Diagonal phases of the CZ evolution in the basis |00>, |01>, |10>, |11>
// (Z eigenvalue +1 for 0): integrals of the Z_A, Z_B and Z_A Z_B terms.
struct CzPhases {
  double za = 0.0, zb = 0.0, zz = 0.0;
};

inline Matrix cz_unitary(const CzPhases& p) {
  Matrix U = Matrix::Zero(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double sa = a ? -1.0 : 1.0, sb = b ? -1.0 : 1.0;
      U(2 * a + b, 2 * a + b) = std::polar(1.0, -(p.za * sa + p.zb * sb + p.zz * sa * sb));
    }
  return U;
}

// Precomputed per-sample coefficients of a CZ scenario.
struct CzTables {
  std::vector<double> h_za, h_zb, h_zz;  // H0 diagonal terms
  std::vector<double> n_za, n_zb, n_zz;  // noise couplings per unit beta
};

inline CzTables cz_tables(const CzScenario& s) {
  CzChannels ch = cz_couplings(s.device, s.flux);
  CzTables t;
  t.h_za = ch.omega_a.samples;
  t.h_zb = ch.omega_b.samples;
  for (double& v : t.h_za) v *= 0.5;
  for (double& v : t.h_zb) v *= 0.5;
  t.h_zz = ch.jzz.samples;
  t.n_za = ch.z_a.samples;
  t.n_zb = ch.z_b.samples;
  for (double& v : t.n_za) v *= 0.5;
  for (double& v : t.n_zb) v *= 0.5;
  t.n_zz = ch.zz.samples;
  return t;
}

}  // namespace detail

/// Noise-free evolution U_0(T).
inline Matrix ideal_unitary(const Scenario& s) {
  if (auto* q = std::get_if<SingleQubitScenario>(&s))
    return propagate_single_qubit(q->omega.samples, {}, q->omega.dt);
  const auto& cz = std::get<CzScenario>(s);
  const detail::CzTables t = detail::cz_tables(cz);
  detail::CzPhases p;
  for (std::size_t k = 0; k < t.h_za.size(); ++k) {
    p.za += t.h_za[k];
    p.zb += t.h_zb[k];
    p.zz += t.h_zz[k];
  }
  p.za *= cz.flux.dt;
  p.zb *= cz.flux.dt;
  p.zz *= cz.flux.dt;
  return detail::cz_unitary(p);
}

/// Evaluates U(T) for many noise traces on a fixed scenario.
class NoisyPropagator {
 public:
  explicit NoisyPropagator(const Scenario& s) : s_(s) {
    if (auto* cz = std::get_if<CzScenario>(&s)) {
      tables_ = detail::cz_tables(*cz);
      for (std::size_t k = 0; k < tables_.h_za.size(); ++k) {
        base_.za += tables_.h_za[k];
        base_.zb += tables_.h_zb[k];
        base_.zz += tables_.h_zz[k];
      }
    }
  }

  Matrix operator()(std::span<const double> beta) const {
    const SampledWaveform& w = scenario_waveform(s_);
    require(beta.size() == w.size(), "noise trace length differs from the control grid");
    if (auto* q = std::get_if<SingleQubitScenario>(&s_))
      return propagate_single_qubit(q->omega.samples, beta, q->omega.dt);
    detail::CzPhases p = base_;
    for (std::size_t k = 0; k < beta.size(); ++k) {
      p.za += beta[k] * tables_.n_za[k];
      p.zb += beta[k] * tables_.n_zb[k];
      p.zz += beta[k] * tables_.n_zz[k];
    }
    p.za *= w.dt;
    p.zb *= w.dt;
    p.zz *= w.dt;
    return detail::cz_unitary(p);
  }

 private:
  const Scenario& s_;
  detail::CzTables tables_;
  detail::CzPhases base_;
};

/// Evolution with the noise trace beta (same length and step as the control).
inline Matrix noisy_unitary(const Scenario& s, std::span<const double> beta) {
  return NoisyPropagator(s)(beta);
}

/// Distance of a Z_A Z_B phase from the CZ class {pi/4 + m pi/2}, in [-pi/4, pi/4].
inline double cz_phase_error(double zz_phase) {
  double r = std::fmod(zz_phase - kPi / 4, kPi / 2);
  if (r > kPi / 4) r -= kPi / 2;
  if (r < -kPi / 4) r += kPi / 2;
  return r;
}

/// CZ dressed with the single-qubit Z rotations (and global phase) that best
/// match a diagonal U0, i.e. the target reachable with virtual Z corrections.
inline GateSpec virtual_z_cz_target(const Matrix& U0) {
  require(U0.rows() == 4, "virtual_z_cz_target: 4x4 unitary required");
  const double p00 = -std::arg(U0(0, 0)), p01 = -std::arg(U0(1, 1));
  const double p10 = -std::arg(U0(2, 2)), p11 = -std::arg(U0(3, 3));
  const double zz = 0.25 * (p00 - p01 - p10 + p11);
  const double r = cz_phase_error(zz);
  Matrix corr = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) {
    const double s = (i == 0 || i == 3) ? 1.0 : -1.0;
    corr(i, i) = std::polar(1.0, s * r);
  }
  return GateSpec(U0 * corr);
}

// ---------------------------------------------------------------------------
// Monte-Carlo fidelity.

struct FidelityStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
  double A = 0.0;
  bool self_compared = false;

  double infidelity() const { return 1.0 - mean; }
};

/// Welford accumulator; merging order does not change the result beyond rounding.
struct MeanAccumulator {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double std_error_of_mean() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

struct MonteCarloOptions {
  std::size_t window_factor = 8;
  bool dc_offset = true;
};

/// Unit-scale noise traces on the control grid of the scenario, realization
/// i drawn from derive_seed(seed, "noise", i).
inline std::vector<std::vector<double>> noise_traces(const Scenario& s, const PsdModel& noise,
                                                     std::size_t n_realizations, std::uint64_t seed,
                                                     const MonteCarloOptions& opt = {}) {
  require(n_realizations >= 1, "need at least one noise realization");
  const SampledWaveform& w = scenario_waveform(s);
  FourierSynthesisOptions fo;
  fo.window_factor = opt.window_factor;
  fo.dc_offset = opt.dc_offset;
  std::vector<std::vector<double>> out;
  out.reserve(n_realizations);
  for (std::size_t i = 0; i < n_realizations; ++i)
    out.push_back(synthesize(noise, w.duration(), w.dt, derive_seed(seed, "noise", i), fo).samples);
  return out;
}

inline FidelityStats fidelity_from_traces(const Scenario& s, const Matrix& target,
                                          const std::vector<std::vector<double>>& traces, double A,
                                          bool self_compared = false) {
  require(target.rows() == scenario_dim(s), "gate dimension does not match the scenario");
  MeanAccumulator acc;
  const NoisyPropagator U(s);
  std::vector<double> beta;
  for (const auto& tr : traces) {
    beta.resize(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) beta[k] = A * tr[k];
    acc.add(gate_fidelity(target, U(beta)));
  }
  FidelityStats st;
  st.mean = acc.mean;
  st.std_error = acc.std_error_of_mean();
  st.count = acc.n;
  st.A = A;
  st.self_compared = self_compared;
  return st;
}

/// <|Tr(U_G^dag U(T)) / d|^2> over realizations of A * beta, beta ~ noise.
inline FidelityStats average_gate_fidelity(const Scenario& s, const GateSpec& gate, const PsdModel& noise,
                                           double A, std::size_t n_realizations, std::uint64_t seed,
                                           const MonteCarloOptions& opt = {}) {
  require(gate.dim() == scenario_dim(s), "gate dimension does not match the scenario");
  return fidelity_from_traces(s, gate.U, noise_traces(s, noise, n_realizations, seed, opt), A);
}

/// As average_gate_fidelity with U_G replaced by the noise-free U_0(T).
inline FidelityStats self_compared_fidelity(const Scenario& s, const PsdModel& noise, double A,
                                            std::size_t n_realizations, std::uint64_t seed,
                                            const MonteCarloOptions& opt = {}) {
  return fidelity_from_traces(s, ideal_unitary(s), noise_traces(s, noise, n_realizations, seed, opt), A,
                              true);
}

/// One realization set reused across every amplitude.
inline std::vector<FidelityStats> fidelity_sweep(const Scenario& s, const Matrix& target,
                                                 const PsdModel& noise, const std::vector<double>& amplitudes,
                                                 std::size_t n_realizations, std::uint64_t seed,
                                                 bool self_compared = false,
                                                 const MonteCarloOptions& opt = {}) {
  const auto traces = noise_traces(s, noise, n_realizations, seed, opt);
  std::vector<FidelityStats> out;
  for (double A : amplitudes) out.push_back(fidelity_from_traces(s, target, traces, A, self_compared));
  return out;
}

}  // namespace filterctl
