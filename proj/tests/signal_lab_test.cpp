#include "kif/signal_lab.hpp"

#include <gtest/gtest.h>

using namespace kif;

namespace {

std::vector<ToneSpec> all_laws() {
  std::vector<ToneSpec> out;
  ToneSpec chirp = constant_tone(1.0, 300.0, 0.2);
  chirp.phase.kind = PhaseLaw::Kind::linear_chirp;
  chirp.phase.beta = 150.0;
  chirp.amplitude.kind = AmplitudeLaw::Kind::linear;
  chirp.amplitude.slope = -0.4;
  out.push_back(chirp);
  ToneSpec fm = constant_tone(2.0, 500.0);
  fm.phase.kind = PhaseLaw::Kind::sinusoidal_fm;
  fm.phase.beta = 0.8;
  fm.phase.rate = 3.0;
  fm.phase.theta = 0.4;
  fm.amplitude.kind = AmplitudeLaw::Kind::sinusoidal;
  fm.amplitude.depth = 0.3;
  fm.amplitude.rate = 1.5;
  out.push_back(fm);
  out.push_back(constant_tone(0.5, 100.0, -1.0));
  return out;
}

// Five-point central difference of order 1.
template <class F> auto central(F f, double t, double step) {
  return (f(t - 2 * step) - 8.0 * f(t - step) + 8.0 * f(t + step) - f(t + 2 * step)) /
         (12.0 * step);
}

} // namespace

TEST(Generate, NoiselessToneIsExact) {
  const auto g = generate(constant_tone(1.5, 200.0, 0.3), 512, White{0.0}, 9);
  for (std::size_t j = 0; j < 512; ++j)
    EXPECT_EQ(g.signal[j], 1.5 * std::cos(200.0 * static_cast<double>(j) / 512.0 + 0.3));
  EXPECT_EQ(g.truth.size(), 1u);
  EXPECT_EQ(g.truth[0].frequency[10], 200.0);
}

TEST(Generate, DeterministicForASeed) {
  const auto a = generate(all_laws(), 1000, White{0.1}, 42);
  const auto b = generate(all_laws(), 1000, White{0.1}, 42);
  const auto c = generate(all_laws(), 1000, White{0.1}, 43);
  EXPECT_EQ(a.signal.values(), b.signal.values());
  EXPECT_NE(a.signal.values(), c.signal.values());
  EXPECT_THROW(generate(all_laws(), 8, White{0.1}, 1), InvalidArgument);
}

TEST(Generate, ColoredNoiseLagOneCorrelation) {
  const StationaryLag model{{1.0, 0.6, 0.25}, 1.0};
  std::mt19937_64 rng(5);
  const std::size_t n = 1000000;
  const auto e = generate_noise(model, n, rng);
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    c0 += e[j] * e[j];
    c1 += e[j] * e[j + 1];
  }
  const double r1 = c1 / c0;
  // Bartlett standard error of a lag-one autocorrelation.
  const double se = std::sqrt((1.0 + 2.0 * (0.6 * 0.6 + 0.25 * 0.25)) / n);
  EXPECT_NEAR(r1, 0.6, 3.0 * se);
}

TEST(Generate, SpectralNoiseVariance) {
  const Spectral model{[](double w) { return 0.5 * (1.0 + 0.8 * std::cos(w)); }};
  std::mt19937_64 rng(6);
  const auto e = generate_noise(model, 200000, rng);
  double v = 0.0;
  for (double x : e)
    v += x * x / e.size();
  EXPECT_NEAR(v, 0.5, 0.02);
}

TEST(Generate, RejectsIndefiniteLagCovariance) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(generate_noise(StationaryLag{{1.0, 0.9, -0.9}, 1.0}, 100, rng), InvalidCovariance);
  EXPECT_THROW(generate_noise(HilbertPhase{1.0, 0.1}, 100, rng), InvalidArgument);
}

TEST(SignalLab, ClosedFormDerivativesAreConsistent) {
  const double step = 1e-4;
  for (const auto& s : all_laws())
    for (double t : {0.1, 0.37, 0.8}) {
      for (int k = 0; k < 3; ++k) {
        const double fd = central([&](double x) { return s.phase.derivative(x, k); }, t, step);
        EXPECT_NEAR(fd, s.phase.derivative(t, k + 1),
                    1e-8 * std::max(1.0, std::abs(s.phase.derivative(t, k + 1))));
        const double fa = central([&](double x) { return s.amplitude.derivative(x, k); }, t, step);
        EXPECT_NEAR(fa, s.amplitude.derivative(t, k + 1),
                    1e-8 * std::max(1.0, std::abs(s.amplitude.derivative(t, k + 1))));
      }
      EXPECT_DOUBLE_EQ(s.frequency(t), s.phase.derivative(t, 1));
      const double wo = 0.9 * s.phase.omega;
      for (int k = 0; k < 3; ++k) {
        const cplx fd = central(
          [&](double x) { return s.demodulated_phasor_derivative(x, k, wo, 0.1); }, t, step);
        const cplx exact = s.demodulated_phasor_derivative(t, k + 1, wo, 0.1);
        EXPECT_LT(std::abs(fd - exact), 1e-8 * std::max(1.0, std::abs(exact)));
      }
    }
  EXPECT_THROW(all_laws()[0].demodulated_phasor_derivative(0.1, 4, 0.0), InvalidArgument);
}

TEST(Oracle, LinearAndConstantInputs) {
  std::vector<double> lin(50), flat(50, 3.0);
  for (std::size_t j = 0; j < lin.size(); ++j)
    lin[j] = 2.0 + 0.5 * j * 0.01;
  const auto d = oracle_finite_difference_derivative(lin, 1, 0.01);
  for (double v : d)
    EXPECT_NEAR(v, 0.5, 1e-10);
  for (int q : {1, 2, 3})
    for (double v : oracle_finite_difference_derivative(flat, q, 0.01))
      EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(Oracle, SineSecondDerivative) {
  const double step = 1e-3;
  std::vector<double> y(1001);
  for (std::size_t j = 0; j < y.size(); ++j)
    y[j] = std::sin(2 * pi * j * step);
  const auto d = oracle_finite_difference_derivative(y, 2, step);
  const double bound = 4.0 * std::pow(pi, 4) * step * step * 2.0;
  for (std::size_t j = 1; j + 1 < y.size(); ++j)
    EXPECT_NEAR(d[j], -4 * pi * pi * std::sin(2 * pi * j * step), bound);
}

TEST(Oracle, FornbergWeights) {
  const auto w = finite_difference_weights(0.0, {-1.0, 0.0, 1.0}, 2);
  EXPECT_NEAR(w[0], 1.0, 1e-14);
  EXPECT_NEAR(w[1], -2.0, 1e-14);
  EXPECT_NEAR(w[2], 1.0, 1e-14);
}

TEST(Seeds, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}
