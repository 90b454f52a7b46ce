#include <gtest/gtest.h>

#include "filterctl/pulses.hpp"

using namespace filterctl;

namespace {

PulseAnsatz random_ansatz(Rng& rng, std::size_t nc, Envelope env, double T = 50.0) {
  PulseAnsatz a;
  a.duration = T;
  a.envelope = env;
  a.a0 = 2.0 * uniform01(rng) - 1.0;
  for (std::size_t j = 0; j < nc; ++j)
    a.harmonics.push_back({uniform01(rng), kTwoPi * uniform01(rng) - kPi});
  return a;
}

void expect_coefficients_near(const PulseAnsatz& x, const PulseAnsatz& y, double rtol) {
  const auto px = to_linear(x), py = to_linear(y);
  ASSERT_EQ(px.size(), py.size());
  double scale = 0.0;
  for (double v : px) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_NEAR(px[i], py[i], rtol * scale) << i;
}

}  // namespace

TEST(Sample, EnvelopePeak) {
  PulseAnsatz a;
  a.duration = 50.0;
  a.a0 = 1.0;
  EXPECT_DOUBLE_EQ(a(25.0), 1.0);
}

TEST(Sample, ZeroCoefficientsGiveZeroWaveform) {
  PulseAnsatz a;
  a.duration = 10.0;
  a.harmonics = {{0.0, 0.0}, {0.0, 1.0}};
  for (double v : sample(a, 64).samples) EXPECT_EQ(v, 0.0);
}

TEST(Sample, PointwiseEvaluationOracle) {
  PulseAnsatz a;
  a.duration = 50.0;
  a.harmonics = {{2.0, 0.0}};
  const double t = 12.5;
  EXPECT_NEAR(a(t), std::sin(kPi * t / 50.0) * 2.0 * std::cos(kTwoPi * t / 50.0), 1e-15);
  EXPECT_NEAR(a(t), 0.0, 1e-15);
}

TEST(Sample, UsesMidpointGrid) {
  Rng rng(11);
  const PulseAnsatz a = random_ansatz(rng, 5, Envelope::half_sine);
  const SampledWaveform w = sample(a, 100);
  EXPECT_DOUBLE_EQ(w.dt, 0.5);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_DOUBLE_EQ(w[k], a((k + 0.5) * 0.5));
  EXPECT_NEAR(w.duration(), a.duration, 1e-12);
}

TEST(Sample, RejectsBadInput) {
  PulseAnsatz a;
  a.duration = 1.0;
  a.a0 = NAN;
  EXPECT_THROW(sample(a, 16), InvalidInput);
  a.a0 = 1.0;
  EXPECT_THROW(sample(a, 1), InvalidInput);
}

TEST(Sample, HalfSineEndpointsBoundedProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const PulseAnsatz a = random_ansatz(rng, trial % 8, Envelope::half_sine, 1.0 + 100.0 * uniform01(rng));
    const std::size_t n = 16 + static_cast<std::size_t>(uniform01(rng) * 4000);
    const SampledWaveform w = sample(a, n);
    const double bound = a.max_amplitude() * std::sin(kPi * w.dt / (2.0 * a.duration));
    EXPECT_LE(std::abs(w.samples.front()), bound * (1 + 1e-12));
    EXPECT_LE(std::abs(w.samples.back()), bound * (1 + 1e-12));
  }
}

TEST(Reshape, RecoversPureHarmonic) {
  PulseAnsatz a;
  a.duration = 50.0;
  a.envelope = Envelope::none;
  a.harmonics = {{0.0, 0.0}, {1.7, 0.4}};
  const SampledWaveform w = sample(a, 4096);
  for (std::size_t keep : {2u, 3u, 7u}) {
    const PulseAnsatz r = reshape(w, keep, Envelope::none);
    ASSERT_EQ(r.harmonics.size(), keep);
    EXPECT_NEAR(r.harmonics[1].amplitude, 1.7, 1.7e-9);
    EXPECT_NEAR(r.harmonics[1].phase, 0.4, 0.4e-9);
    EXPECT_NEAR(r.a0, 0.0, 1e-12);
    EXPECT_NEAR(r.harmonics[0].amplitude, 0.0, 1e-12);
  }
}

TEST(Reshape, ConstantWaveform) {
  const SampledWaveform w(0.1, std::vector<double>(500, 3.25));
  const PulseAnsatz r = reshape(w, 4, Envelope::none);
  EXPECT_NEAR(r.a0, 3.25, 1e-12);
  for (const Harmonic& h : r.harmonics) EXPECT_NEAR(h.amplitude, 0.0, 1e-12);
}

TEST(Reshape, KeepsRequestedHarmonicCount) {
  Rng rng(3);
  std::vector<double> x(256);
  for (double& v : x) v = standard_normal(rng);
  const SampledWaveform w(0.2, x);
  EXPECT_EQ(reshape(w, 7, Envelope::half_sine).harmonics.size(), 7u);
  EXPECT_EQ(reshape(w, 7, Envelope::none).harmonics.size(), 7u);
}

TEST(Reshape, RejectsTooManyHarmonics) {
  const SampledWaveform w(1.0, std::vector<double>(10, 1.0));
  EXPECT_NO_THROW(reshape(w, 5, Envelope::none));
  EXPECT_THROW(reshape(w, 6, Envelope::none), InvalidInput);
}

TEST(Reshape, IsAProjectionProperty) {
  Rng rng(17);
  for (Envelope env : {Envelope::half_sine, Envelope::none}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> x(512);
      for (double& v : x) v = standard_normal(rng);
      const SampledWaveform w(0.1, x);
      const PulseAnsatz once = reshape(w, 7, env);
      const PulseAnsatz twice = reshape(sample(once, 512), 7, env);
      expect_coefficients_near(once, twice, 1e-9);
    }
  }
}

TEST(Reshape, SampleThenReshapeIsIdentityOnAnsatz) {
  Rng rng(23);
  for (Envelope env : {Envelope::half_sine, Envelope::none}) {
    const PulseAnsatz a = random_ansatz(rng, 7, env);
    expect_coefficients_near(reshape(sample(a, 4096), 7, env), a, 1e-9);
  }
}

TEST(RotationAngle, ConstantAndZero) {
  const double T = 40.0;
  EXPECT_NEAR(rotation_angle(SampledWaveform(T / 64, std::vector<double>(64, kPi / T))), kPi, 1e-14);
  EXPECT_EQ(rotation_angle(SampledWaveform(0.5, std::vector<double>(8, 0.0))), 0.0);
}

TEST(RotationAngle, CosPulseHasRequestedArea) {
  EXPECT_NEAR(rotation_angle(sample(cos_pulse(9 * kPi, 50.0), 4096)), 9 * kPi, 1e-12);
}

TEST(RotationAngle, RefinementConvergesProperty) {
  // Bounded here means |Omega| <= 1 rad/ns over pulses of 10 to 50 ns.
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    PulseAnsatz a = random_ansatz(rng, trial % 8, trial % 2 ? Envelope::none : Envelope::half_sine,
                                  10.0 + 40.0 * uniform01(rng));
    const double s = 1.0 / a.max_amplitude();
    a.a0 *= s;
    for (Harmonic& h : a.harmonics) h.amplitude *= s;
    EXPECT_LT(std::abs(rotation_angle(sample(a, 4096)) - rotation_angle(sample(a, 8192))), 1e-6);
  }
}

TEST(Linear, RoundTrip) {
  Rng rng(31);
  const PulseAnsatz a = random_ansatz(rng, 4, Envelope::half_sine);
  const PulseAnsatz b = from_linear(to_linear(a), a.duration, a.envelope);
  for (double t : {0.3, 7.0, 21.0, 44.4}) EXPECT_NEAR(a(t), b(t), 1e-13);
}
