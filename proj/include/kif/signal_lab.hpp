#pragma once

#include "kif/core.hpp"
#include "kif/covariance.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace kif {

//! A(t): constant a0, linear a0 + slope t, or a0 (1 + depth sin(2 pi rate t + phase)).
struct AmplitudeLaw {
  enum class Kind { constant, linear, sinusoidal };
  Kind kind = Kind::constant;
  double a0 = 1.0;
  double slope = 0.0;
  double depth = 0.0;
  double rate = 0.0; ///< cycles per unit time
  double phase = 0.0;

  /// k-th time derivative, k >= 0.
  double derivative(double t, int k) const {
    switch (kind) {
    case Kind::constant:
      return k == 0 ? a0 : 0.0;
    case Kind::linear:
      return k == 0 ? a0 + slope * t : (k == 1 ? slope : 0.0);
    case Kind::sinusoidal: {
      const double w = 2.0 * pi * rate;
      // d^k/dt^k sin(x) = sin(x + k pi / 2)
      const double osc = std::pow(w, k) * std::sin(w * t + phase + k * pi / 2.0);
      return k == 0 ? a0 * (1.0 + depth * osc) : a0 * depth * osc;
    }
    }
    return 0.0;
  }
  double operator()(double t) const { return derivative(t, 0); }
};

//! phi(t) = omega t + phi0 + { 0 | beta t^2 / 2 | beta sin(2 pi rate t + theta) }.
struct PhaseLaw {
  enum class Kind { tone, linear_chirp, sinusoidal_fm };
  Kind kind = Kind::tone;
  double omega = 0.0; ///< rad/unit time
  double phi0 = 0.0;
  double beta = 0.0; ///< chirp rate (rad/unit time^2) or FM phase deviation (rad)
  double rate = 0.0; ///< FM cycles per unit time
  double theta = 0.0;

  double derivative(double t, int k) const {
    double base = k == 0 ? omega * t + phi0 : (k == 1 ? omega : 0.0);
    switch (kind) {
    case Kind::tone:
      return base;
    case Kind::linear_chirp:
      return base + (k == 0 ? 0.5 * beta * t * t : (k == 1 ? beta * t : (k == 2 ? beta : 0.0)));
    case Kind::sinusoidal_fm: {
      const double w = 2.0 * pi * rate;
      return base + beta * std::pow(w, k) * std::sin(w * t + theta + k * pi / 2.0);
    }
    }
    return base;
  }
  double operator()(double t) const { return derivative(t, 0); }
};

struct ToneSpec {
  AmplitudeLaw amplitude;
  PhaseLaw phase;

  double value(double t) const { return amplitude(t) * std::cos(phase(t)); }
  double frequency(double t) const { return phase.derivative(t, 1); }

  /// d^k/dt^k exp(i phi~(t)) for k = 0..3, where phi~ = phi - w_o t - phi_o.
  cplx demodulated_phasor_derivative(double t, int k, double center_frequency,
                                     double phase_offset = 0.0) const {
    const cplx e = std::polar(1.0, phase(t) - center_frequency * t - phase_offset);
    const double d1 = phase.derivative(t, 1) - center_frequency;
    const double d2 = phase.derivative(t, 2);
    const double d3 = phase.derivative(t, 3);
    const cplx i(0.0, 1.0);
    switch (k) {
    case 0:
      return e;
    case 1:
      return i * d1 * e;
    case 2:
      return (i * d2 - d1 * d1) * e;
    case 3:
      return (i * d3 - 3.0 * d1 * d2 - i * d1 * d1 * d1) * e;
    default:
      throw InvalidArgument("phasor derivatives are available up to order 3");
    }
  }
};

inline ToneSpec constant_tone(double amplitude, double omega, double phi0 = 0.0) {
  ToneSpec s;
  s.amplitude.a0 = amplitude;
  s.phase.omega = omega;
  s.phase.phi0 = phi0;
  return s;
}

//! Ground truth of one tone on the sample grid.
struct ToneTruth {
  std::vector<double> amplitude;
  std::vector<double> phase;
  std::vector<double> frequency;
};

struct GeneratedSignal {
  SampledSignal signal;
  std::vector<ToneTruth> truth;
  std::vector<double> noise;
};

namespace detail {

// Stationary Gaussian noise with lag covariance `lags` (lags[0] = variance)
// by circulant embedding; exact when the embedding is nonnegative definite.
inline std::vector<double> circulant_noise(const std::vector<double>& eigenvalues, std::size_t n,
                                           std::mt19937_64& rng) {
  const std::size_t m = eigenvalues.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<cplx> w(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double a = normal(rng);
    const double b = normal(rng);
    w[k] = std::sqrt(std::max(eigenvalues[k], 0.0) / static_cast<double>(m)) * cplx(a, b);
  }
  Eigen::FFT<double> fft;
  std::vector<cplx> y;
  fft.fwd(y, w);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = y[j].real();
  return out;
}

inline std::size_t embedding_size(std::size_t n) {
  std::size_t m = 1;
  while (m < 2 * n)
    m <<= 1;
  return m;
}

} // namespace detail

/// Noise realization of length n. White, StationaryLag and Spectral models are supported.
inline std::vector<double> generate_noise(const CovarianceModel& noise, std::size_t n,
                                          std::mt19937_64& rng) {
  validate(noise);
  if (const auto* w = std::get_if<White>(&noise)) {
    std::normal_distribution<double> normal(0.0, std::sqrt(w->variance));
    std::vector<double> e(n);
    for (auto& v : e)
      v = w->variance > 0.0 ? normal(rng) : 0.0;
    return e;
  }
  if (std::holds_alternative<HilbertPhase>(noise))
    throw InvalidArgument("HilbertPhase describes derived errors and cannot be sampled directly");

  const std::size_t m = detail::embedding_size(n);
  std::vector<double> lambda(m);
  if (const auto* s = std::get_if<Spectral>(&noise)) {
    for (std::size_t k = 0; k < m; ++k) {
      double w = 2.0 * pi * static_cast<double>(k) / static_cast<double>(m);
      if (w > pi)
        w -= 2.0 * pi;
      lambda[k] = s->density(w);
    }
  } else {
    std::vector<double> c(m, 0.0);
    for (std::size_t j = 0; j <= m / 2; ++j) {
      const double r = lag_covariance(noise, static_cast<long>(j));
      c[j] = r;
      if (j > 0)
        c[m - j] = r;
    }
    Eigen::FFT<double> fft;
    std::vector<cplx> spec;
    fft.fwd(spec, c);
    double top = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      lambda[k] = spec[k].real();
      top = std::max(top, std::abs(lambda[k]));
    }
    for (double l : lambda)
      if (l < -1e-10 * top)
        throw InvalidCovariance("lag covariance is not positive semidefinite on the embedding");
  }
  return detail::circulant_noise(lambda, n, rng);
}

/// y_j = sum_l A_l(t_j) cos(phi_l(t_j)) + e_j on t_j = j / N; deterministic for a given seed.
inline GeneratedSignal generate(const std::vector<ToneSpec>& tones, std::size_t n,
                                const CovarianceModel& noise, std::uint64_t seed) {
  if (n < 16)
    throw InvalidArgument("generate needs N >= 16");
  std::mt19937_64 rng(seed);
  GeneratedSignal out;
  out.noise = generate_noise(noise, n, rng);
  std::vector<double> y = out.noise;
  for (const auto& tone : tones) {
    ToneTruth truth;
    truth.amplitude.resize(n);
    truth.phase.resize(n);
    truth.frequency.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double t = static_cast<double>(j) / static_cast<double>(n);
      truth.amplitude[j] = tone.amplitude(t);
      truth.phase[j] = tone.phase(t);
      truth.frequency[j] = tone.frequency(t);
      y[j] += truth.amplitude[j] * std::cos(truth.phase[j]);
    }
    out.truth.push_back(std::move(truth));
  }
  out.signal = SampledSignal(std::move(y));
  return out;
}

inline GeneratedSignal generate(const ToneSpec& tone, std::size_t n, const CovarianceModel& noise,
                                std::uint64_t seed) {
  return generate(std::vector<ToneSpec>{tone}, n, noise, seed);
}

//! Seed of replication `index` derived from a base seed (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Finite-difference weights for the `order`-th derivative at `x0` from
/// the nodes `x` (Fornberg's recursion).
inline std::vector<double> finite_difference_weights(double x0, const std::vector<double>& x,
                                                     int order) {
  const int n = static_cast<int>(x.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(order + 1, 0.0));
  double c1 = 1.0;
  double c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i)
    w[i] = c[i][order];
  return w;
}

/// q-th derivative of equally spaced samples with O(step^2) error: central
/// stencils in the interior, shifted (q + 2)-point stencils near the ends.
inline std::vector<double> oracle_finite_difference_derivative(const std::vector<double>& values,
                                                               int q, double step) {
  if (q < 0)
    throw InvalidArgument("derivative order must be >= 0");
  if (q == 0)
    return values;
  const int half = (q + 1) / 2;
  const auto n = static_cast<int>(values.size());
  const int width = std::max(2 * half + 1, q + 2);
  if (n < width)
    throw InsufficientData("too few samples for the finite-difference stencil");
  std::vector<double> out(values.size());
  for (int i = 0; i < n; ++i) {
    int lo, hi;
    if (i - half >= 0 && i + half < n) {
      lo = i - half;
      hi = i + half;
    } else {
      lo = std::clamp(i - width / 2, 0, n - width);
      hi = lo + width - 1;
    }
    std::vector<double> nodes;
    for (int j = lo; j <= hi; ++j)
      nodes.push_back(static_cast<double>(j - i));
    const auto w = finite_difference_weights(0.0, nodes, q);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j)
      acc += w[j - lo] * values[j];
    out[i] = acc / int_pow(step, q);
  }
  return out;
}

} // namespace kif
