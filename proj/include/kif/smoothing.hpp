#pragma once

#include "kif/core.hpp"
#include "kif/covariance.hpp"
#include "kif/kernel_design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <tuple>
#include <vector>

namespace kif {

enum class KernelShape { legendre, minimal_variance, sinusoidal_taper };

//! Recipe for the kernel used at each evaluation point. Truncated windows
//! always get the minimal-variance boundary kernel.
struct KernelFamily {
  KernelOrder order;
  KernelShape interior = KernelShape::legendre;

  Kernel make(const Window& window) const {
    if (window.truncated)
      return design_boundary_kernel(order, window);
    switch (interior) {
    case KernelShape::legendre:
      return legendre_kernel(order, window);
    case KernelShape::minimal_variance:
      return design_minimal_variance_kernel(order, window);
    case KernelShape::sinusoidal_taper: {
      // Tapers vanish one sample beyond the window on each side.
      auto k = sinusoidal_taper_kernel(order, window.size(), window.rate);
      k.offsets = window.offsets;
      k.halfwidth = window.halfwidth;
      // Re-impose the exact moments on the true offsets (differ from the taper
      // grid when the evaluation point is off-grid or the window is uneven).
      detail::project_onto_moments(order, k.offsets, k.weights);
      return detail::finish(order, window, std::move(k.weights));
    }
    }
    throw InvalidArgument("unknown kernel shape");
  }
};

/// Sign and scale turning sum_j mu_j y_j into the q-th derivative estimate.
/// With s_j = (t - t_j)/h the raw sum estimates (-h)^q g^(q)(t).
inline double derivative_scale(KernelOrder order, double halfwidth) {
  return (order.q % 2 == 0 ? 1.0 : -1.0) / int_pow(halfwidth, order.q);
}

template <class T>
T apply_kernel(const Kernel& kernel, std::span<const T> values, std::size_t first) {
  if (first + kernel.size() > values.size())
    throw InvalidArgument("kernel window exceeds the data");
  T acc{};
  for (std::size_t j = 0; j < kernel.size(); ++j)
    acc += kernel.weights[j] * values[first + j];
  return acc * derivative_scale(kernel.order, kernel.halfwidth);
}

template <class T>
T smooth_at(std::span<const T> values, const KernelFamily& family, double halfwidth, double t,
            bool* truncated = nullptr) {
  if (t < 0.0 || t > 1.0)
    throw InvalidArgument("evaluation time must lie in [0, 1]");
  const Window w = sample_window(t, halfwidth, values.size());
  if (w.size() == 0)
    throw InsufficientData("empty kernel window at t = " + std::to_string(t));
  if (truncated)
    *truncated = w.truncated;
  return apply_kernel(family.make(w), values, w.first);
}

inline double smooth_at(const SampledSignal& signal, const KernelFamily& family, double halfwidth,
                        double t) {
  return smooth_at(std::span<const double>(signal.values()), family, halfwidth, t);
}

/// Estimates at each evaluation time, with a per-time halfwidth. Interior
/// kernels are reused across points that share the same window geometry.
template <class T>
std::vector<T> smooth_series(std::span<const T> values, const KernelFamily& family,
                             std::span<const double> halfwidths, std::span<const double> times,
                             std::vector<bool>* truncated = nullptr) {
  if (halfwidths.size() != times.size() && halfwidths.size() != 1)
    throw InvalidArgument("need one halfwidth, or one per evaluation time");
  const std::size_t n = values.size();
  std::vector<T> out(times.size());
  if (truncated)
    truncated->assign(times.size(), false);
  using Key = std::tuple<double, std::size_t, double>;
  std::map<Key, Kernel> cache;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    const double h = halfwidths.size() == 1 ? halfwidths[0] : halfwidths[i];
    if (t < 0.0 || t > 1.0)
      throw InvalidArgument("evaluation time must lie in [0, 1]");
    const Window w = sample_window(t, h, n);
    if (w.size() == 0)
      throw InsufficientData("empty kernel window at t = " + std::to_string(t));
    if (truncated)
      (*truncated)[i] = w.truncated;
    if (w.truncated) {
      out[i] = apply_kernel(family.make(w), values, w.first);
      continue;
    }
    const Key key{h, w.size(), w.offsets.front()};
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, family.make(w)).first;
    out[i] = apply_kernel(it->second, values, w.first);
  }
  return out;
}

template <class T>
std::vector<T> smooth_series(std::span<const T> values, const KernelFamily& family,
                             double halfwidth, std::span<const double> times,
                             std::vector<bool>* truncated = nullptr) {
  return smooth_series(values, family, std::span<const double>(&halfwidth, 1), times, truncated);
}

inline std::vector<double> smooth_series(const SampledSignal& signal, const KernelFamily& family,
                                         double halfwidth, std::span<const double> times) {
  return smooth_series(std::span<const double>(signal.values()), family, halfwidth, times);
}

//! Options for `predicted_variance`.
struct VarianceOptions {
  double center_frequency = 0.0; ///< rad/unit time
  bool exact_spectral = false;   ///< integrate S |U|^2 instead of S(w_o) m2
};

/// Variance of the q-th derivative estimate at sample count N and halfwidth h.
/// Correlated models rescale the kernel's own quadratic form by the white-noise
/// law, so h and N enter through m2 / (N h^(2q+1)).
inline double predicted_variance(const Kernel& kernel, const CovarianceModel& covariance, double n,
                                 double halfwidth, const VarianceOptions& options = {}) {
  validate(covariance);
  if (!(halfwidth * n >= 1.0))
    throw InvalidArgument("predicted variance requires h N >= 1");
  const int q = kernel.order.q;
  const double white_law = kernel.m2 / (n * int_pow(halfwidth, 2 * q + 1));
  const double omega = options.center_frequency / n;
  const double norm2 = kernel.m2 / (kernel.rate * kernel.halfwidth);

  if (const auto* w = std::get_if<White>(&covariance))
    return w->variance * white_law;

  if (const auto* s = std::get_if<Spectral>(&covariance)) {
    if (!options.exact_spectral)
      return s->density(omega) * white_law;
    const double integral = detail::integrate_periodic([&](double w) {
                              return s->density(w) * std::norm(kernel_spectrum(kernel, w - omega));
                            }) /
                            (2.0 * pi);
    return integral / norm2 * white_law;
  }

  // Lag models: sum_jk mu_j R(j-k) mu_k exp(i w (k-j)), real by symmetry.
  const Eigen::MatrixXd r = covariance_matrix(covariance, kernel.size(), omega);
  const Eigen::Map<const Eigen::VectorXd> mu(kernel.weights.data(),
                                             static_cast<Eigen::Index>(kernel.size()));
  const double form = mu.dot(r * mu);
  return form / norm2 * white_law;
}

//! Leading bias C_qp g^(p) h^(p-q); the sign (-1)^(p-q) follows the offset convention.
inline double predicted_bias(const Kernel& kernel, double pth_derivative, double halfwidth) {
  const int d = kernel.order.p - kernel.order.q;
  const double sign = d % 2 == 0 ? 1.0 : -1.0;
  return sign * kernel.C_qp * pth_derivative * int_pow(halfwidth, d);
}

struct LossReport {
  double bias_squared = 0.0;
  double variance = 0.0;
  double total = 0.0;
  double halfwidth = 0.0;
  KernelOrder order;
  double interference = 0.0; ///< additive residual-line bias term, see multitone
};

inline LossReport expected_loss(const Kernel& kernel, const CovarianceModel& covariance,
                                double pth_derivative, double n, double halfwidth,
                                const VarianceOptions& options = {}) {
  LossReport r;
  const double b = predicted_bias(kernel, pth_derivative, halfwidth);
  r.bias_squared = b * b;
  r.variance = predicted_variance(kernel, covariance, n, halfwidth, options);
  r.total = r.bias_squared + r.variance;
  r.halfwidth = halfwidth;
  r.order = kernel.order;
  return r;
}

/// Admissible halfwidths: at least p + 1 samples per window, at most half the record.
inline double min_halfwidth(KernelOrder order, double n) { return (order.p + 1) / n; }
inline constexpr double max_halfwidth = 0.5;

struct HalfwidthChoice {
  double h = max_halfwidth;
  bool clipped = false;
  bool degenerate = false; ///< p-th derivative vanished; h is the upper clip
};

inline HalfwidthChoice clip_halfwidth(KernelOrder order, double n, double h) {
  HalfwidthChoice c{h, false, false};
  const double lo = min_halfwidth(order, n);
  if (!(c.h >= lo)) {
    c.h = lo;
    c.clipped = true;
  }
  if (c.h > max_halfwidth) {
    c.h = max_halfwidth;
    c.clipped = true;
  }
  return c;
}

/// h_o = [ (2q+1)/(2(p-q)) sigma^2 m2 / (C^2 N |g^(p)|^2) ]^(1/(2p+1)),
/// using the noise level the kernel sees near the center frequency.
inline HalfwidthChoice optimal_halfwidth(KernelOrder order, double noise_level,
                                         double pth_derivative, double n, double m2, double c_qp) {
  const int q = order.q, p = order.p;
  const double g2 = pth_derivative * pth_derivative;
  if (g2 == 0.0 || c_qp == 0.0)
    return {max_halfwidth, true, true};
  const double ratio = (2.0 * q + 1.0) / (2.0 * (p - q));
  const double h = std::pow(ratio * noise_level * m2 / (c_qp * c_qp * n * g2), 1.0 / (2 * p + 1));
  return clip_halfwidth(order, n, h);
}

inline HalfwidthChoice optimal_halfwidth(KernelOrder order, const CovarianceModel& covariance,
                                         double pth_derivative, double n, double m2, double c_qp,
                                         double center_frequency = 0.0) {
  validate(covariance);
  return optimal_halfwidth(order, spectral_level(covariance, center_frequency / n),
                           pth_derivative, n, m2, c_qp);
}

inline double loss_constant(KernelOrder order) {
  const double q = order.q, p = order.p;
  const double a = (2 * q + 1) / (2 * (p - q));
  return std::pow(a, 2 * (p - q) / (2 * p + 1)) + std::pow(1.0 / a, (2 * q + 1) / (2 * p + 1));
}

//! M_qp |C g^(p)|^(2(2q+1)/(2p+1)) (sigma^2 m2 / N)^(2(p-q)/(2p+1))
inline double minimal_loss_value(KernelOrder order, double noise_level, double pth_derivative,
                                 double n, double m2, double c_qp) {
  const double q = order.q, p = order.p;
  return loss_constant(order) *
         std::pow(std::abs(c_qp * pth_derivative), 2 * (2 * q + 1) / (2 * p + 1)) *
         std::pow(noise_level * m2 / n, 2 * (p - q) / (2 * p + 1));
}

inline double minimal_loss_value(KernelOrder order, const CovarianceModel& covariance,
                                 double pth_derivative, double n, double m2, double c_qp,
                                 double center_frequency = 0.0) {
  validate(covariance);
  return minimal_loss_value(order, spectral_level(covariance, center_frequency / n),
                            pth_derivative, n, m2, c_qp);
}

//! Default noise variance, (1 / (2(N-1))) sum (y_{j+1} - y_j)^2.
template <class T> double estimate_noise_variance(std::span<const T> values) {
  if (values.size() < 2)
    throw InsufficientData("noise estimate needs at least 2 samples");
  double acc = 0.0;
  for (std::size_t j = 1; j < values.size(); ++j)
    acc += std::norm(values[j] - values[j - 1]);
  return acc / (2.0 * static_cast<double>(values.size() - 1));
}

} // namespace kif
