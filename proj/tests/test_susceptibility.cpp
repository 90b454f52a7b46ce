#include <gtest/gtest.h>

#include "filterctl/filters.hpp"
#include "filterctl/optimize.hpp"
#include "filterctl/susceptibility.hpp"

using namespace filterctl;

namespace {

std::vector<FidelityStats> synthetic(const std::vector<double>& amps, double C, double b4, double floor = 0.0) {
  std::vector<FidelityStats> out;
  for (double a : amps) {
    FidelityStats s;
    s.A = a;
    s.mean = 1.0 - (floor + C * a * a + b4 * std::pow(a, 4));
    s.count = 1;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(FitSusceptibility, ExactQuadratic) {
  const auto sw = synthetic(log_amplitudes(1e-4, 1e-2, 9), 37.5, 0.0);
  const SusceptibilityFit f = fit_susceptibility(sw);
  EXPECT_NEAR(f.C, 37.5, 1e-10 * 37.5);
  EXPECT_EQ(f.n_points, 9u);
  EXPECT_LT(f.residual_rms, 1e-9);  // 1 - (1 - y) rounding
}

TEST(FitSusceptibility, QuarticOnsetIsCut) {
  // 1 - F = C A^2 + b4 A^4 with the quartic term taking over near A = 0.3.
  const double C = 2.0, b4 = 25.0;
  const auto sw = synthetic(log_amplitudes(1e-3, 1.0, 16), C, b4);
  const SusceptibilityFit f = fit_susceptibility(sw);
  // Everything past the point where the quartic term equals the quadratic one is dropped.
  EXPECT_LT(f.a_max, std::sqrt(C / b4));
  EXPECT_GT(f.C, C);
  EXPECT_LT(std::log10(f.C / C), 0.3);
  EXPECT_GE(f.n_points, 4u);
}

TEST(FitSusceptibility, FloorExcludesSmallAmplitudes) {
  const double floor = 1e-6;
  const auto sw = synthetic(log_amplitudes(1e-5, 1e-1, 13), 1.0, 0.0, floor);
  const SusceptibilityFit f = fit_susceptibility(sw, floor);
  EXPECT_GT(floor + f.a_min * f.a_min, 5 * floor);
  EXPECT_LT(floor + std::pow(f.a_min / std::pow(1e4, 1.0 / 12), 2), 5 * floor);
  EXPECT_NEAR(f.C, 1.0, 0.3);
}

TEST(FitSusceptibility, DiagnosticWhenWindowEmpty) {
  const auto sw = synthetic({1e-4, 2e-4, 3e-4}, 1.0, 0.0, 1e-3);
  try {
    fit_susceptibility(sw, 1e-3);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("floor"), std::string::npos);
    EXPECT_NE(m.find("quartic-onset cutoff"), std::string::npos);
  }
}

TEST(FitSusceptibility, MatchesFilterPrediction) {
  const double T = 50.0;
  const SampledWaveform w = sample(cos_pulse(kPi, T), 512);
  const SingleQubitScenario s{w};
  const PsdModel S = Lorentzian{1.0, 0.001 * kTwoPi / T, 0.0};
  const auto sweep = fidelity_sweep(s, gate_x().U, S, log_amplitudes(1e-3, 0.1, 8), 300, 41);
  const double floor = 1.0 - gate_fidelity(gate_x().U, ideal_unitary(s));
  const SusceptibilityFit f = fit_susceptibility(sweep, floor);
  const double predicted = predict_infidelity(filter_function(control_functions_single_qubit(w), default_grid(T)), S);
  EXPECT_NEAR(f.C, predicted, 0.25 * predicted);
  EXPECT_LT(f.residual_rms, 0.15);
  EXPECT_NEAR(fit_infidelity_slope(sweep, floor).slope, 2.0, 0.3);
}

TEST(FitSusceptibility, AmplitudeConventionInvariant) {
  const double T = 50.0;
  const SingleQubitScenario s{sample(cos_pulse(kPi, T), 256)};
  const PsdModel unit = Lorentzian{1.0, 0.01, 0.0};
  const auto a = fidelity_sweep(s, gate_x().U, unit, {0.01, 0.02, 0.04, 0.08}, 50, 3);
  const auto b = fidelity_sweep(s, gate_x().U, with_amplitude(unit, 2.0), {0.005, 0.01, 0.02, 0.04}, 50, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].infidelity(), b[i].infidelity(), 1e-12);
}

TEST(SusceptibilityVsWidth, NormalizedByReferenceMinimum) {
  const double T = 50.0, w0 = kTwoPi / T;
  std::vector<PulseCase> pulses = {
      {"cospi", SingleQubitScenario{sample(cos_pulse(kPi, T), 256)}, gate_x().U, false},
      {"cos3pi", SingleQubitScenario{sample(cos_pulse(3 * kPi, T), 256)}, gate_x().U, false},
  };
  WidthSweepConfig cfg;
  cfg.gammas = {0.001 * w0, 0.05 * w0};
  cfg.family = [](double g) { return PsdModel(Lorentzian{1.0, g, 0.0}); };
  cfg.amplitudes = log_amplitudes(1e-3, 0.1, 8);
  cfg.n_realizations = 60;
  cfg.reference = "cospi";
  const auto rows = susceptibility_vs_width(pulses, cfg);
  ASSERT_EQ(rows.size(), 4u);
  double ref_min = INFINITY;
  for (const auto& r : rows)
    if (r.fit.label == "cospi") ref_min = std::min(ref_min, r.C_normalized);
  EXPECT_NEAR(ref_min, 1.0, 1e-12);
  cfg.reference = "missing";
  EXPECT_THROW(susceptibility_vs_width(pulses, cfg), InvalidInput);
}

TEST(SusceptibilityVsWidth, StaticRcpDegradesFastest) {
  // Low-frequency Lorentzian family; ratio of the predicted C at the widest and narrowest gamma.
  const double T = 50.0, w0 = kTwoPi / T;
  const std::size_t n = 1024;
  OptimizerConfig cfg;
  cfg.max_iterations = 2000;
  auto opt = [&](double theta, std::vector<Band> bands) {
    const SingleQubitGateProblem p(T, n, gate_x(), bands);
    return sample(optimize(sample(cos_pulse(theta, T), n), cfg, p).final_ansatz, n);
  };
  const SampledWaveform stat = opt(kPi, {{0, 0.1 * w0}});
  const SampledWaveform low = opt(9 * kPi, {{0, 2.5 * w0}});
  auto growth = [&](const SampledWaveform& w) {
    const FilterFunction F = filter_function(control_functions_single_qubit(w), default_grid(T));
    return predict_infidelity(F, Lorentzian{1.0, 0.05 * w0, 0.0}) /
           predict_infidelity(F, Lorentzian{1.0, 0.001 * w0, 0.0});
  };
  const double g_static = growth(stat);
  EXPECT_GT(g_static, growth(low));
  EXPECT_GT(g_static, growth(sample(cos_pulse(kPi, T), n)));
  EXPECT_GT(g_static, growth(sample(cos_pulse(9 * kPi, T), n)));
}
