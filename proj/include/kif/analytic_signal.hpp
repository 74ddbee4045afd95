#pragma once

#include "kif/core.hpp"

#include <unsupported/Eigen/FFT>

#include <vector>

namespace kif {

//! Demodulated analytic samples z~_j = z_j exp(-i(w_o t_j + phi_o)).
//! Frequencies are in radians per unit normalized time (t_j = j / N).
struct AnalyticSeries {
  std::vector<cplx> samples;
  double center_frequency = 0.0;
  double phase_offset = 0.0;
  std::size_t source_length = 0;
};

struct PhaseObservations {
  std::vector<cplx> units;
  double phase_noise_variance = 0.0;
};

/// Analytic signal x + iH[x] by the one-sided spectrum construction.
/// The real part is copied from the input, so it matches bit for bit.
/// Even lengths keep the Nyquist bin with weight 1.
inline std::vector<cplx> analytic(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4)
    throw InvalidArgument("analytic signal needs at least 4 samples");
  Eigen::FFT<double> fft;
  std::vector<cplx> spectrum;
  fft.fwd(spectrum, x);
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < n; ++k) {
    if (n % 2 == 0 && k == half)
      continue;
    spectrum[k] *= (k < (n + 1) / 2) ? 2.0 : 0.0;
  }
  std::vector<cplx> z;
  fft.inv(z, spectrum);
  for (std::size_t j = 0; j < n; ++j)
    z[j] = cplx(x[j], z[j].imag());
  return z;
}

inline std::vector<cplx> analytic(const SampledSignal& signal) { return analytic(signal.values()); }

//! Discrete Hilbert transform, the imaginary part of `analytic`.
inline std::vector<double> hilbert(const std::vector<double>& x) {
  const auto z = analytic(x);
  std::vector<double> h(z.size());
  for (std::size_t j = 0; j < z.size(); ++j)
    h[j] = z[j].imag();
  return h;
}

inline AnalyticSeries demodulate(const std::vector<cplx>& z, double center_frequency,
                                 double phase_offset) {
  const double n = static_cast<double>(z.size());
  AnalyticSeries out{std::vector<cplx>(z.size()), center_frequency, phase_offset, z.size()};
  for (std::size_t j = 0; j < z.size(); ++j)
    out.samples[j] =
      z[j] * std::polar(1.0, -(center_frequency * static_cast<double>(j) / n + phase_offset));
  return out;
}

//! Inverse of `demodulate`.
inline std::vector<cplx> remodulate(const AnalyticSeries& series) {
  const double n = static_cast<double>(series.samples.size());
  std::vector<cplx> z(series.samples.size());
  for (std::size_t j = 0; j < z.size(); ++j)
    z[j] = series.samples[j] * std::polar(1.0, series.center_frequency *
                                                   static_cast<double>(j) / n +
                                                 series.phase_offset);
  return z;
}

/// Unit phasors u_j = z~_j / |z~_j| and the phase noise variance
/// sigma_phi^2 = s^2 / (A^2 + s^2) for complex noise of per-component variance s^2.
inline PhaseObservations phase_units(const AnalyticSeries& series, double amplitude,
                                     double noise_variance) {
  if (!(amplitude > 0.0))
    throw InvalidArgument("phase_units requires amplitude > 0");
  if (!(noise_variance >= 0.0))
    throw InvalidArgument("phase_units requires noise variance >= 0");
  PhaseObservations out;
  out.units.resize(series.samples.size());
  for (std::size_t j = 0; j < series.samples.size(); ++j) {
    const double r = std::abs(series.samples[j]);
    if (r == 0.0)
      throw ZeroModulus(j);
    out.units[j] = series.samples[j] / r;
  }
  out.phase_noise_variance = noise_variance / (amplitude * amplitude + noise_variance);
  return out;
}

//! xi(lag) = 2 / (pi lag) for odd lags, 0 otherwise.
inline double hilbert_cross_covariance(long lag) {
  if (lag % 2 == 0)
    return 0.0;
  return 2.0 / (pi * static_cast<double>(lag));
}

//! Cov[e_phi_j, conj(e_phi_k)] for phase-unit errors of a tone with amplitude A.
inline cplx phase_error_covariance(double phase_j, double phase_k, long lag, double amplitude,
                                   double variance) {
  if (!(amplitude > 0.0))
    throw InvalidArgument("phase_error_covariance requires amplitude > 0");
  const double scale = variance / (amplitude * amplitude + variance);
  const double d = phase_j - phase_k;
  const cplx term = hilbert_cross_covariance(lag) * std::polar(1.0, d) * std::sin(d);
  return scale * ((lag == 0 ? 1.0 : 0.0) - term);
}

//! Full covariance matrix of the phase-unit errors, entries (j,k) as above.
inline std::vector<std::vector<cplx>> phase_error_covariance(const std::vector<double>& phases,
                                                             double amplitude, double variance) {
  const std::size_t n = phases.size();
  std::vector<std::vector<cplx>> c(n, std::vector<cplx>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      c[j][k] = phase_error_covariance(phases[j], phases[k],
                                       static_cast<long>(j) - static_cast<long>(k), amplitude,
                                       variance);
  return c;
}

} // namespace kif
