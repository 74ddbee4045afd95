#pragma once

#include "kif/adaptive.hpp"
#include "kif/analytic_signal.hpp"
#include "kif/core.hpp"
#include "kif/covariance.hpp"
#include "kif/kernel_design.hpp"
#include "kif/smoothing.hpp"

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace kif {

inline constexpr KernelOrder phasor_order{0, 2};
inline constexpr KernelOrder derivative_order{1, 3};

//! A single halfwidth for every time point. The optional curvature
//! |d^3 exp(i phi~)| only feeds the predicted loss.
struct FixedHalfwidth {
  double h = 0.05;
  std::optional<double> third_derivative{};
};

//! Halfwidth from the optimal-halfwidth law with a known |d^3 exp(i phi~)|,
//! either one value or one per sample.
struct OptimalHalfwidth {
  std::vector<double> third_derivative;
};

//! Plug-in halfwidths from a (3,5) pilot of the phase units.
struct AdaptiveHalfwidth {
  ScaleAnsatz ansatz{1.0, 0.25};
  PlugInOptions options{};
};

using HalfwidthMode = std::variant<FixedHalfwidth, OptimalHalfwidth, AdaptiveHalfwidth>;

struct IFConfig {
  double center_frequency = 0.0; ///< initial w_o, rad/unit time
  double phase_offset = 0.0;
  int max_center_iterations = 5;
  double center_tolerance = 1e-6; ///< rad/unit time
  HalfwidthMode halfwidth = FixedHalfwidth{};
  KernelShape shape = KernelShape::legendre;
  bool local_recentering = false;
  double coherence_threshold = 0.1;

  void validate() const {
    if (max_center_iterations < 1)
      throw InvalidArgument("max_center_iterations must be >= 1");
    if (!(center_tolerance > 0.0))
      throw InvalidArgument("center_tolerance must be > 0");
    if (const auto* f = std::get_if<FixedHalfwidth>(&halfwidth); f && !(f->h > 0.0))
      throw InvalidArgument("fixed halfwidth must be > 0");
    if (const auto* o = std::get_if<OptimalHalfwidth>(&halfwidth); o && o->third_derivative.empty())
      throw InvalidArgument("optimal halfwidth mode needs a third-derivative magnitude");
  }
};

struct IFEstimate {
  std::vector<double> times;
  std::vector<double> frequency; ///< rad/unit time
  std::vector<double> amplitude;
  std::vector<double> halfwidth;
  std::vector<double> predicted_loss;
  std::vector<bool> edge;
  std::vector<bool> low_coherence;
  std::vector<cplx> phasor; ///< (0,2) estimate of exp(i phi~)
  double center_frequency = 0.0;
  double phase_offset = 0.0;
  double noise_variance = 0.0;
  double phase_noise_variance = 0.0;
  std::vector<double> center_history;
  bool converged = false;

  std::size_t size() const { return times.size(); }
};

inline HalfwidthChoice if_optimal_halfwidth(double phase_noise_variance, double n,
                                            double third_derivative, double m2, double c13) {
  return optimal_halfwidth(derivative_order, phase_noise_variance, third_derivative, n, m2, c13);
}

inline double if_predicted_loss(double phase_noise_variance, double n, double third_derivative,
                                double m2, double c13) {
  return minimal_loss_value(derivative_order, phase_noise_variance, third_derivative, n, m2, c13);
}

/// Noise variance per real component, from first differences of the demodulated
/// analytic signal. Hilbert noise has lag-one cross covariance 2 sigma^2 i xi(1),
/// which after demodulation by w (rad/sample) scales E|dz|^2 by 1 - (2/pi) sin w.
inline double estimate_demodulated_noise_variance(std::span<const cplx> demodulated,
                                                  double omega_per_sample) {
  const double raw = estimate_noise_variance(demodulated) / 2.0;
  const double factor = 1.0 - hilbert_cross_covariance(1) * std::sin(omega_per_sample);
  return factor > 0.05 ? raw / factor : raw;
}

namespace detail {

inline double noise_variance_for(const std::optional<CovarianceModel>& noise,
                                 std::span<const cplx> demodulated, double omega_per_sample) {
  if (!noise)
    return estimate_demodulated_noise_variance(demodulated, omega_per_sample);
  validate(*noise);
  if (const auto* hp = std::get_if<HilbertPhase>(&*noise))
    return hp->variance;
  return spectral_level(*noise, omega_per_sample);
}

struct PassResult {
  IFEstimate est;
  double mean_offset = 0.0;
};

inline PassResult if_pass(const std::vector<cplx>& z, const IFConfig& config, double center,
                          const std::optional<CovarianceModel>& noise) {
  const std::size_t n = z.size();
  const auto nd = static_cast<double>(n);
  const AnalyticSeries series = demodulate(z, center, config.phase_offset);
  const std::span<const cplx> zt(series.samples);

  PassResult r;
  IFEstimate& e = r.est;
  e.times = grid_times(n);
  e.center_frequency = center;
  e.phase_offset = config.phase_offset;
  e.noise_variance = noise_variance_for(noise, zt, center / nd);

  double power = 0.0;
  for (const auto& v : series.samples)
    power += std::norm(v);
  power /= nd;
  const double amp = std::sqrt(std::max(power - 2.0 * e.noise_variance, 1e-12 * power));
  const PhaseObservations obs = phase_units(series, amp > 0.0 ? amp : 1.0, e.noise_variance);
  e.phase_noise_variance = obs.phase_noise_variance;
  const std::span<const cplx> u(obs.units);

  const auto c13 = continuum_constants(derivative_order);
  std::vector<double> curvature(n, -1.0);
  std::vector<double> h(n);
  std::visit(
    [&](const auto& mode) {
      using M = std::decay_t<decltype(mode)>;
      if constexpr (std::is_same_v<M, FixedHalfwidth>) {
        std::fill(h.begin(), h.end(), mode.h);
        if (mode.third_derivative)
          std::fill(curvature.begin(), curvature.end(), *mode.third_derivative);
      } else if constexpr (std::is_same_v<M, OptimalHalfwidth>) {
        if (mode.third_derivative.size() != 1 && mode.third_derivative.size() != n)
          throw InvalidArgument("third-derivative magnitudes must be one value or one per sample");
        for (std::size_t j = 0; j < n; ++j) {
          curvature[j] = std::abs(mode.third_derivative.size() == 1 ? mode.third_derivative[0]
                                                                    : mode.third_derivative[j]);
          h[j] = if_optimal_halfwidth(e.phase_noise_variance, nd, curvature[j], c13.m2, c13.C_qp).h;
        }
      } else {
        const auto plug =
          plugin_halfwidths(u, derivative_order, e.phase_noise_variance, mode.ansatz, mode.options);
        h = plug.halfwidth;
        for (std::size_t j = 0; j < n; ++j)
          curvature[j] = std::sqrt(plug.curvature[j]);
      }
    },
    config.halfwidth);

  std::vector<bool> truncated;
  const std::span<const double> times(e.times), hs(h);
  e.phasor = smooth_series(u, KernelFamily{phasor_order, config.shape}, hs, times, &truncated);
  const auto num = smooth_series(u, KernelFamily{derivative_order, config.shape}, hs, times);
  std::vector<double> modulus(n);
  for (std::size_t j = 0; j < n; ++j)
    modulus[j] = std::abs(series.samples[j]);
  e.amplitude = smooth_series(std::span<const double>(modulus),
                              KernelFamily{phasor_order, config.shape}, hs, times);

  e.frequency.resize(n);
  e.low_coherence.resize(n);
  e.predicted_loss.resize(n);
  e.edge = truncated;
  e.halfwidth = h;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const cplx den = e.phasor[j];
    const double d2 = std::norm(den);
    e.low_coherence[j] = std::sqrt(d2) < config.coherence_threshold;
    const double offset = d2 > 0.0 ? (num[j] * std::conj(den)).imag() / d2 : 0.0;
    e.frequency[j] = center + offset;
    const double variance = e.phase_noise_variance * c13.m2 / (nd * int_pow(h[j], 3));
    const double bias = curvature[j] >= 0.0 ? c13.C_qp * curvature[j] * h[j] * h[j] : 0.0;
    e.predicted_loss[j] = bias * bias + variance;
    if (!e.edge[j] && !e.low_coherence[j]) {
      sum += offset;
      ++used;
    }
  }
  r.mean_offset = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return r;
}

// One extra pass where every window is re-centered on its own frequency estimate.
inline void recenter_locally(const std::vector<cplx>& z, const IFConfig& config, IFEstimate& e) {
  const std::size_t n = z.size();
  const auto nd = static_cast<double>(n);
  const AnalyticSeries series = demodulate(z, e.center_frequency, e.phase_offset);
  const PhaseObservations obs = phase_units(series, 1.0, 0.0);
  const KernelFamily f02{phasor_order, config.shape}, f13{derivative_order, config.shape};
  std::vector<double> updated(n);
  std::vector<cplx> local;
  for (std::size_t i = 0; i < n; ++i) {
    const double shift = e.frequency[i] - e.center_frequency;
    const Window w = sample_window(e.times[i], e.halfwidth[i], n);
    local.resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double dt = (static_cast<double>(w.first + k) - static_cast<double>(i)) / nd;
      local[k] = obs.units[w.first + k] * std::polar(1.0, -shift * dt);
    }
    Window lw = w;
    lw.first = 0;
    const std::span<const cplx> lu(local);
    const cplx den = apply_kernel(f02.make(lw), lu, 0);
    const cplx num = apply_kernel(f13.make(lw), lu, 0);
    const double d2 = std::norm(den);
    updated[i] = e.frequency[i] + (d2 > 0.0 ? (num * std::conj(den)).imag() / d2 : 0.0);
  }
  e.frequency = std::move(updated);
}

} // namespace detail

/// Instantaneous frequency from an analytic signal z (one sample per grid point).
inline IFEstimate estimate_if_analytic(const std::vector<cplx>& z, const IFConfig& config,
                                       const std::optional<CovarianceModel>& noise = std::nullopt) {
  config.validate();
  if (z.size() < 16)
    throw InsufficientData("instantaneous frequency estimation needs at least 16 samples");
  double center = config.center_frequency;
  std::vector<double> history{center};
  detail::PassResult pass;
  bool converged = false;
  for (int it = 0; it < config.max_center_iterations; ++it) {
    pass = detail::if_pass(z, config, center, noise);
    if (std::abs(pass.mean_offset) < config.center_tolerance) {
      converged = true;
      break;
    }
    if (it + 1 < config.max_center_iterations) {
      center += pass.mean_offset;
      history.push_back(center);
    }
  }
  IFEstimate est = std::move(pass.est);
  est.center_history = std::move(history);
  est.converged = converged;
  if (config.local_recentering)
    detail::recenter_locally(z, config, est);
  return est;
}

/// Instantaneous frequency of a real record: analytic signal, demodulation,
/// phase units, (0,2) and (1,3) smoothing, center-frequency iteration.
inline IFEstimate estimate_if(const SampledSignal& signal, const IFConfig& config,
                              const std::optional<CovarianceModel>& noise = std::nullopt) {
  return estimate_if_analytic(analytic(signal), config, noise);
}

} // namespace kif
