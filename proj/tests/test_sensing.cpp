#include <gtest/gtest.h>

#include "filterctl/sensing.hpp"

using namespace filterctl;

namespace {

constexpr double kT = 100.0;
const double kW0 = kTwoPi / kT;
const double kWs = 5 * kW0;

SampledWaveform tone(double a, double omega, double phase, std::size_t n = 256, double T = kT) {
  std::vector<double> v(n);
  const double dt = T / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = a * std::cos(omega * (k + 0.5) * dt + phase);
  return SampledWaveform(dt, v);
}

PsdModel lorentz_pair(double A, double gamma) {
  return PsdSum{{Lorentzian{A, gamma, 0.0}, Lorentzian{A, gamma, 8 * kW0}}};
}

}  // namespace

TEST(GammaBar, ConstantCouplingSensesNothing) {
  const SampledWaveform c(kT / 200, std::vector<double>(200, 3.0));
  EXPECT_NEAR(gamma_bar(c, kWs, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(gamma_bar(c, kWs, -kPi / 2), 0.0, 1e-12);
}

TEST(GammaBar, MatchedFilter) {
  const double alpha = 0.7;
  const SampledWaveform c = tone(1.0, kWs, alpha);
  EXPECT_NEAR(gamma_bar(c, kWs, alpha) * kT, kT / 2, 1e-10);
  // The aligned phase recovers alpha and maximizes Gamma.
  const double a = aligned_phase(c, kWs);
  EXPECT_NEAR(std::remainder(a - alpha, kTwoPi), 0.0, 1e-10);
  for (double d : {0.1, -0.2, 1.0}) EXPECT_LT(gamma_bar(c, kWs, a + d), gamma_bar(c, kWs, a));
}

TEST(Chi, ZeroSpectrum) {
  const SampledWaveform c = tone(2.0, kWs, 0.0);
  for (double x : chi_series(c, PsdTable{}, 5)) EXPECT_EQ(x, 0.0);
}

TEST(Chi, WhiteNoiseParseval) {
  // Flat table up to the sampling Nyquist: chi(nT) = S0 n int_0^T c^2.
  const std::size_t n = 64;
  const SampledWaveform c = tone(1.5, kWs, 0.3, n);
  const double S0 = 2e-3;
  const double nyq = kPi / c.dt;
  const PsdModel S = PsdTable{{0.0, nyq}, {S0, S0}};
  const std::vector<double> chi = chi_series(c, S, 4);
  double e = 0.0;
  for (double v : c.samples) e += v * v * c.dt;
  for (std::size_t j = 0; j < chi.size(); ++j) EXPECT_NEAR(chi[j], S0 * e * (j + 1), 2e-3 * S0 * e * (j + 1));
}

TEST(Chi, LorentzianTimeDomainOracle) {
  // R(tau) = (A^2/2) exp(-gamma |tau|) for a Lorentzian centred at zero.
  const double A = 0.3, g = 0.05;
  const std::size_t N = 128, periods = 3;
  const SampledWaveform c = tone(1.0, kWs, 0.4, N);
  const double chi3 = chi(c, Lorentzian{A, g, 0.0}, periods);
  double direct = 0.0;
  const std::size_t L = N * periods;
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t k = 0; k < L; ++k)
      direct += c[j % N] * c[k % N] * 0.5 * A * A *
                std::exp(-g * std::abs(static_cast<double>(j) - static_cast<double>(k)) * c.dt);
  direct *= c.dt * c.dt;
  EXPECT_NEAR(chi3, direct, 1e-2 * direct);
}

TEST(Chi, AdditiveAndMonotone) {
  const SampledWaveform c = tone(40.0, kWs, 0.0);
  const PsdModel s1 = Lorentzian{1e-4, 0.01, 0.0};
  const PsdModel s2 = Lorentzian{2e-4, 0.03, 8 * kW0};
  const auto a = chi_series(c, s1, 50), b = chi_series(c, s2, 50), ab = chi_series(c, PsdSum{{s1, s2}}, 50);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_NEAR(ab[j], a[j] + b[j], 1e-12 * ab[j]);
    if (j > 0) EXPECT_GE(ab[j], ab[j - 1]);
  }
}

TEST(Protocol, CombConstraint) {
  const SampledWaveform c = tone(1.0, kWs, 0.0);
  EXPECT_NO_THROW(make_protocol(c, kWs, 0.0, 1e-4, PsdTable{}));
  try {
    make_protocol(c, kWs * 1.01, 0.0, 1e-4, PsdTable{});
    FAIL() << "expected comb error";
  } catch (const InvalidInput& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("omega_s"), std::string::npos);
    EXPECT_NE(m.find("nearest k = 5"), std::string::npos) << m;
  }
}

TEST(Probabilities, Trivial) {
  const SensingModel quiet(kT, 0.5, std::vector<double>(10, 0.0));
  const auto [pp, pm] = quiet.probabilities(1, kPi / (0.5 * kT));
  EXPECT_NEAR(pp, 1.0, 1e-15);
  EXPECT_NEAR(pm, 0.0, 1e-15);
  const SensingModel noisy(kT, 0.5, std::vector<double>(10, 0.8));
  const double v = std::exp(-0.4);
  const auto [qp, qm] = noisy.probabilities(3, 0.0);
  EXPECT_NEAR(qp, 0.5 * (1 - v), 1e-15);
  EXPECT_NEAR(qm, 0.5 * (1 + v), 1e-15);
}

TEST(Probabilities, NormalizedEverywhere) {
  Rng rng(derive_seed(3, "prob", 0));
  for (int i = 0; i < 200; ++i) {
    std::vector<double> chi(20);
    for (double& x : chi) x = 5 * uniform01(rng);
    const SensingModel m(kT, 100 * uniform01(rng), chi);
    const auto [p, q] = m.probabilities(1 + static_cast<std::size_t>(19 * uniform01(rng)), 1e-3 * uniform01(rng));
    EXPECT_GE(p, 0.0);
    EXPECT_GE(q, 0.0);
    EXPECT_NEAR(p + q, 1.0, 1e-15);
  }
}

TEST(Probabilities, PhaseMonteCarloOracle) {
  const SampledWaveform c = tone(60.0, kWs, 0.0);
  const PsdModel S = lorentz_pair(5e-4, 0.1 * kW0);
  const double alpha = aligned_phase(c, kWs);
  const SensingModel m(make_protocol(c, kWs, alpha, 1e-4, S), 40);
  const std::vector<std::size_t> readouts = {1, 5, 20, 40};
  const auto phases = phase_noise_samples(c, S, readouts, 600, 17);
  const double B = 1e-4;
  for (std::size_t j = 0; j < readouts.size(); ++j) {
    const double x = B * m.gbar() * readouts[j] * kT;
    double mean = 0.0, sq = 0.0;
    for (const auto& ph : phases) {
      const double p = 0.5 * (1 - std::cos(x + ph[j]));
      mean += p;
      sq += p * p;
    }
    mean /= phases.size();
    const double se = std::sqrt((sq / phases.size() - mean * mean) / phases.size());
    EXPECT_NEAR(m.probabilities(readouts[j], B).first, mean, 3 * se + 1e-9) << "n = " << readouts[j];
  }
}

TEST(Shots, DeterministicPattern) {
  const double gbar = 0.5;
  const SensingModel m(kT, gbar, std::vector<double>(30, 0.0));
  // B Gamma_bar T = pi: p_minus = 0 on odd readouts, 1 on even ones.
  const auto y = simulate_shots(m, kPi / (gbar * kT), 30, 99);
  for (std::size_t n = 1; n <= 30; ++n) EXPECT_EQ(y[n - 1], n % 2 == 0 ? 1 : 0);
  EXPECT_EQ(simulate_shots(m, 1e-3, 30, 5), simulate_shots(m, 1e-3, 30, 5));
}

TEST(Shots, BinomialFrequency) {
  const SensingModel m(kT, 0.5, std::vector<double>(10, 0.6));
  const double B = 0.01;
  const std::size_t n = 7, reps = 10000;
  std::size_t ones = 0;
  for (const auto& y : simulate_repetitions(m, B, 10, reps, 8)) ones += y[n - 1];
  const double p = m.probabilities(n, B).second;
  EXPECT_NEAR(static_cast<double>(ones) / reps, p, 3 * std::sqrt(p * (1 - p) / reps));
}

TEST(Estimate, RecoversNoiselessSignal) {
  const double gbar = 40.0;
  const double B = 0.3 / (gbar * kT);
  const SensingModel m(kT, gbar, std::vector<double>(300, 0.0));
  const auto y = simulate_shots(m, B, 300, 1234);
  const SensingEstimate e = estimate_B(y, m);
  EXPECT_NEAR(e.B, B, 1e-2 * B);
  EXPECT_FALSE(e.null_detection);
}

TEST(Estimate, NullDetection) {
  const SensingModel m(kT, 40.0, std::vector<double>(300, 0.0));
  const SensingEstimate e = estimate_B(simulate_shots(m, 0.0, 300, 4), m);
  EXPECT_TRUE(e.null_detection);
  EXPECT_LT(e.omega, kPi / kT / 300);
}

TEST(Estimate, ZeroGainRejected) {
  const SensingModel m(kT, 0.0, std::vector<double>(10, 0.0));
  EXPECT_THROW(estimate_B(std::vector<std::uint8_t>(10, 0), m), InvalidInput);
}

TEST(Fisher, NoiselessClosedForm) {
  const double gbar = 30.0, B = 1.3e-4;
  const SensingModel m(kT, gbar, std::vector<double>(100, 0.0));
  double expect = 0.0;
  for (int n = 1; n <= 100; ++n) expect += std::pow(gbar * n * kT, 2);
  // Readouts with sin(B Gamma n T) = 0 carry no information; none occur here.
  EXPECT_NEAR(m.fisher(B), expect, 1e-12 * expect);
}

TEST(Fisher, MatchesNumericBernoulliDerivative) {
  Rng rng(derive_seed(21, "fisher", 0));
  for (int i = 0; i < 20; ++i) {
    std::vector<double> chi(50);
    double acc = 0.0;
    for (double& x : chi) x = (acc += 0.1 * uniform01(rng));
    const double gbar = 10 + 60 * uniform01(rng);
    const SensingModel m(kT, gbar, chi);
    const double B = (0.05 + 0.9 * uniform01(rng)) * kPi / (gbar * kT);
    const double I = fisher_information(m, B);
    EXPECT_NEAR(fisher_information_numeric(m, B), I, 1e-6 * I);
  }
}

TEST(Pdd, SpectrumAndGain) {
  const double c0 = 50.0;
  const SampledWaveform c = pdd_baseline(kWs, kT, c0, 1000);
  EXPECT_NEAR(gamma_bar(c, kWs, aligned_phase(c, kWs)), 2 * c0 / kPi, 1e-3 * c0);
  const double w2 = 2 * kWs;
  EXPECT_NEAR(gamma_bar(c, w2, aligned_phase(c, w2)), 0.0, 1e-9 * c0);
  // Filter function maximum sits at the target tone.
  const FilterFunction F = filter_function(control_functions_coupling(c), uniform_grid(20 * kW0, 4001));
  const auto it = std::max_element(F.total.begin(), F.total.end());
  const double w_peak = F.grid.omega[static_cast<std::size_t>(it - F.total.begin())];
  EXPECT_NEAR(w_peak, kWs, 0.2 * kW0);
  EXPECT_NEAR(rms(c), c0, 1e-12);
}

TEST(GaussHermite, Moments) {
  const auto [x, w] = gauss_hermite(20);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += w[i];
    m2 += w[i] * std::pow(x[i], 2);
    m4 += w[i] * std::pow(x[i], 4);
    m6 += w[i] * std::pow(x[i], 6);
  }
  EXPECT_NEAR(m0, 1.0, 1e-12);
  EXPECT_NEAR(m2, 1.0, 1e-12);
  EXPECT_NEAR(m4, 3.0, 1e-11);
  EXPECT_NEAR(m6, 15.0, 1e-10);
}

TEST(BiasCorrection, QuadraticClosedForm) {
  const SampledWaveform bias(kT / 64, std::vector<double>(64, 0.0));
  const FrequencyMap sq = [](double p) { return p * p; };
  const double B = 0.02, sigma = 0.013;
  EXPECT_NEAR(mean_frequency_shift(sq, bias, kWs, 0.3, sigma, B), sigma * sigma + 0.5 * B * B, 1e-15);
  const double w_est = sigma * sigma + 0.5 * B * B;
  EXPECT_NEAR(bias_correction(sq, bias, kWs, 0.3, sigma, w_est, 0.01), B, 1e-12);
  EXPECT_NEAR(estimate_sigma(sq, bias, sigma * sigma), sigma, 1e-12);
}

TEST(BiasCorrection, LinearRegimeIsNegligible) {
  const FluxSensor dev;
  const SampledWaveform bias = tone(0.05, kWs, 0.0);
  const SampledWaveform c = sensor_coupling(dev, bias);
  const double alpha = aligned_phase(c, kWs);
  const double gbar = gamma_bar(c, kWs, alpha);
  const double B = 1e-7, sigma = 1e-8;
  const FrequencyMap w = [&](double p) { return dev.frequency(p); };
  const double w_est = mean_frequency_shift(w, bias, kWs, alpha, 0.0, B);
  const double b_lin = w_est / gbar;
  const double b_corr = bias_correction(dev, bias, kWs, alpha, sigma, w_est, b_lin);
  EXPECT_LT(std::abs(b_corr - b_lin) / B, 1e-3);
  // Without noise the correction inverts the exact average.
  EXPECT_NEAR(bias_correction(dev, bias, kWs, alpha, 0.0, w_est, b_lin), B, 1e-9 * B);
}
