#include <gtest/gtest.h>

#include "filterctl/devices.hpp"

using namespace filterctl;

namespace {
double central_diff(auto&& f, double x, double h) { return (f(x + h) - f(x - h)) / (2 * h); }
}  // namespace

TEST(Devices, SweetSpotIsQuiet) {
  const FluxoniumPair dev;
  const CzChannels ch = cz_couplings(dev, SampledWaveform(0.1, std::vector<double>(32, 0.0)));
  for (const SampledWaveform* w : {&ch.z_a, &ch.z_b, &ch.zz, &ch.omega_a, &ch.omega_b, &ch.jzz})
    for (double v : w->samples) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(FluxSensor{}.c_z(0.0), 0.0);
}

TEST(Devices, DefaultParametersAtFiveHundredthsFlux) {
  const FluxoniumPair dev;
  EXPECT_NEAR(dev.delta_a, kTwoPi, 1e-15);
  EXPECT_NEAR(dev.eta(), 1.3, 1e-15);
  EXPECT_NEAR(dev.K_a(), 20.0, 1e-12);
  const double phi = 0.05;
  const double expected = 4 * dev.ip_a * dev.ip_a * phi /
                          std::sqrt(dev.delta_a * dev.delta_a + 4 * dev.ip_a * dev.ip_a * phi * phi);
  EXPECT_NEAR(dev.c_za(phi), expected, 1e-12 * expected);
  const auto omega = [&](double p) { return qubit_frequency(dev.delta_a, dev.ip_a, p); };
  EXPECT_NEAR(dev.c_za(phi), central_diff(omega, phi, 1e-6), 1e-6 * expected);
  // Supplement parametrization Delta K^2 Phi / sqrt(1 + K^2 Phi^2).
  const double K = dev.K_a();
  EXPECT_NEAR(dev.c_za(phi), dev.delta_a * K * K * phi / std::sqrt(1 + K * K * phi * phi), 1e-12 * expected);
}

TEST(Devices, CouplingsAreOdd) {
  const FluxoniumPair dev;
  const double phi = 0.03;
  EXPECT_NEAR(dev.c_za(-phi), -dev.c_za(phi), 1e-15);
  EXPECT_NEAR(dev.c_zb(-phi), -dev.c_zb(phi), 1e-15);
  EXPECT_NEAR(dev.c_zz(-phi), -dev.c_zz(phi), 1e-15);
  const FluxSensor s;
  EXPECT_NEAR(s.c_z(-phi), -s.c_z(phi), 1e-15);
}

TEST(Devices, SensorAsymptote) {
  const FluxSensor s;
  for (double phi : {10.0, 100.0, 1e4}) EXPECT_NEAR(s.c_z(phi) / (2 * s.ip), 1.0, 2.0 / (phi * phi * 800));
  EXPECT_NEAR(s.c_z(-1e4) / (2 * s.ip), -1.0, 1e-9);
}

TEST(Devices, DerivativesMatchFiniteDifferencesProperty) {
  const FluxoniumPair dev;
  const FluxSensor sensor;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const double phi = 0.2 * uniform01(rng) - 0.1;
    const double h = 1e-6;
    const auto omega = [&](double p) { return sensor.frequency(p); };
    const double fd = central_diff(omega, phi, h);
    EXPECT_NEAR(sensor.c_z(phi), fd, 1e-6 * std::abs(fd) + 1e-9);

    const auto jzz = [&](double p) { return dev.jzz(p); };
    const double fdzz = central_diff(jzz, phi, h);
    EXPECT_NEAR(dev.c_zz(phi), fdzz, 1e-6 * std::abs(fdzz) + 1e-10);

    const auto ca = [&](double p) { return dev.c_za(p); };
    EXPECT_NEAR(dev.c_za_slope(phi), central_diff(ca, phi, h), 1e-5 * std::abs(dev.c_za_slope(phi)));
    const auto czz = [&](double p) { return dev.c_zz(p); };
    const double fd2 = central_diff(czz, phi, 1e-5);
    EXPECT_NEAR(dev.c_zz_slope(phi), fd2, 1e-5 * std::abs(fd2) + 1e-6);

    const auto oa = [&](double p) { return dev.omega_a(p); };
    EXPECT_NEAR(dev.c_za(phi), central_diff(oa, phi, h), 1e-6 * std::abs(dev.c_za(phi)) + 1e-9);
  }
}

TEST(Devices, ZzCouplingPeaksAtStationaryPoint) {
  // Equal K on both qubits makes c_zz proportional to x / (1 + x^2)^2.
  FluxoniumPair dev;
  dev.ip_b = 10.0 * dev.delta_b;
  double best = 0.0, arg = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double phi = 0.2 * i / 200000.0;
    const double v = dev.c_zz(phi);
    if (v > best) best = v, arg = phi;
  }
  const double expected = dev.delta_a / (2 * dev.ip_a * std::sqrt(3.0));
  EXPECT_NEAR(arg, expected, 2e-6);
  const double K = dev.K_a();
  EXPECT_NEAR(dev.c_zz(0.01), 2 * dev.J * K * K * 0.01 / std::pow(1 + K * K * 1e-4, 2), 1e-12);
}

TEST(Devices, FrequencyShiftIsStable) {
  const double d = kTwoPi, ip = 10 * kTwoPi;
  EXPECT_NEAR(frequency_shift(d, ip, 1e-9), 4 * ip * ip * 1e-18 / (2 * d), 1e-25);
  EXPECT_NEAR(frequency_shift(d, ip, 0.05), qubit_frequency(d, ip, 0.05) - d, 1e-12);
}

TEST(Devices, SquareCzFluxGivesQuarterPiPhase) {
  const FluxoniumPair dev;
  const double phi = square_cz_flux(dev, 20.0);
  EXPECT_NEAR(dev.jzz(phi) * 20.0, kPi / 4, 1e-12);
  EXPECT_GT(phi, 0.02);
  EXPECT_LT(phi, 0.05);
}
