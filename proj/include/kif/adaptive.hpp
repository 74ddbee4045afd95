#pragma once

#include "kif/core.hpp"
#include "kif/covariance.hpp"
#include "kif/kernel_design.hpp"
#include "kif/smoothing.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kif {

//! Prior guess |g^(p)| ~ amplitude / time^p.
struct ScaleAnsatz {
  double amplitude = 1.0;
  double time = 0.25;

  void validate() const {
    if (!(amplitude > 0.0) || !(time > 0.0) || !std::isfinite(amplitude) || !std::isfinite(time))
      throw InvalidArgument("scale ansatz needs positive, finite amplitude and time");
  }
  double derivative_scale(int p) const { return amplitude / int_pow(time, p); }
};

struct PilotStage {
  KernelOrder order;
  std::string purpose;
};

//! The ladder actually run by a multistage estimate.
struct PilotPlan {
  std::vector<PilotStage> ladder;
  double robust_halfwidth = 0.0;
};

/// m2 and C_qp of the Legendre kernel in the continuum limit (dense grid).
struct KernelConstants {
  double m2 = 0.0;
  double C_qp = 0.0;
};

inline KernelConstants continuum_constants(KernelOrder order) {
  static std::mutex guard;
  static std::map<std::pair<int, int>, KernelConstants> cache;
  std::lock_guard lock(guard);
  const auto key = std::make_pair(order.q, order.p);
  if (auto it = cache.find(key); it != cache.end())
    return it->second;
  const Kernel k = legendre_kernel(order, 1.0, 8001);
  return cache[key] = KernelConstants{k.m2, k.C_qp};
}

inline HalfwidthChoice characteristic_scale_halfwidth(const ScaleAnsatz& ansatz, KernelOrder order,
                                                      double noise_level, double n, double m2,
                                                      double c_qp) {
  ansatz.validate();
  return optimal_halfwidth(order, noise_level, ansatz.derivative_scale(order.p), n, m2, c_qp);
}

/// Estimate of the p-th derivative with a (p, p+2) kernel at the pilot halfwidth.
template <class T>
std::vector<T> pilot_derivative(std::span<const T> values, int target_p, double pilot_halfwidth,
                                std::span<const double> times) {
  const KernelOrder order(target_p, target_p + 2);
  const double reach = pilot_halfwidth * static_cast<double>(values.size());
  if (2.0 * std::floor(reach) + 1.0 < order.p + 1.0)
    throw InsufficientData("pilot window holds fewer than p + 3 samples");
  return smooth_series(values, KernelFamily{order}, pilot_halfwidth, times);
}

template <class T>
std::vector<T> pilot_derivative(std::span<const T> values, int target_p, double pilot_halfwidth) {
  const auto times = grid_times(values.size());
  return pilot_derivative(values, target_p, pilot_halfwidth, std::span<const double>(times));
}

inline double epanechnikov(double s) { return std::abs(s) <= 1.0 ? 0.75 * (1.0 - s * s) : 0.0; }

/// Local average of the squared pilot with weights G((t_i - t_j)/h), renormalized
/// over the samples inside the record. G must have unit mass on [-1, 1].
inline std::vector<double> robust_curvature(std::span<const double> squared_pilot,
                                            double robust_halfwidth,
                                            const std::function<double(double)>& g = epanechnikov) {
  // Simpson check of the unit-mass precondition.
  double mass = 0.0;
  const int m = 2000;
  for (int k = 0; k <= m; ++k) {
    const double s = -1.0 + 2.0 * k / m;
    const double w = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    mass += w * g(s);
  }
  mass *= (2.0 / m) / 3.0;
  if (std::abs(mass - 1.0) > 1e-6)
    throw InvalidArgument("robust smoothing kernel must integrate to 1");

  const std::size_t n = squared_pilot.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Window w = sample_window(static_cast<double>(i) / static_cast<double>(n),
                                   robust_halfwidth, n);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double weight = g(w.offsets[k]);
      num += weight * squared_pilot[w.first + k];
      den += weight;
    }
    out[i] = den > 0.0 ? num / den : squared_pilot[i];
  }
  return out;
}

//! Running median over `width` neighbors, shrinking at the ends.
inline std::vector<double> median_filter(std::span<const double> x, std::size_t width = 5) {
  const std::size_t half = width / 2;
  std::vector<double> out(x.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size() - 1, i + half);
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo),
               x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2),
                     buf.end());
    out[i] = buf[buf.size() / 2];
  }
  return out;
}

struct PlugInOptions {
  std::optional<double> curvature_floor{}; ///< replaces robust smoothing by max(|pilot|^2, floor)
  std::size_t median_width = 5;
};

/// Pointwise optimal halfwidths for `final_order` from squared p-th derivative magnitudes.
inline std::vector<double> plugin_from_curvature(std::span<const double> curvature2,
                                                 KernelOrder final_order, double noise_level,
                                                 double n) {
  const auto fc = continuum_constants(final_order);
  std::vector<double> h(curvature2.size());
  for (std::size_t j = 0; j < h.size(); ++j)
    h[j] = optimal_halfwidth(final_order, noise_level, std::sqrt(curvature2[j]), n, fc.m2, fc.C_qp).h;
  return h;
}

template <class T> struct PlugIn {
  PilotPlan plan;
  double pilot_halfwidth = 0.0;
  std::vector<T> pilot;
  std::vector<double> curvature; ///< smoothed |pilot|^2
  std::vector<double> halfwidth;
};

/// Halfwidths for a final (q, q+2) estimate: characteristic-scale pilot
/// halfwidth, (p, p+2) pilot derivative, robust curvature, pointwise (2.7).
template <class T>
PlugIn<T> plugin_halfwidths(std::span<const T> values, KernelOrder final_order, double noise_level,
                            const ScaleAnsatz& ansatz, const PlugInOptions& options = {}) {
  const int p = final_order.p;
  const auto n = static_cast<double>(values.size());
  const KernelOrder pilot_order(p, p + 2);
  PlugIn<T> out;
  out.plan.ladder = {{pilot_order, "pilot"}, {final_order, "final"}};

  const auto pc = continuum_constants(pilot_order);
  out.pilot_halfwidth =
    characteristic_scale_halfwidth(ansatz, pilot_order, noise_level, n, pc.m2, pc.C_qp).h;
  out.pilot = pilot_derivative(values, p, out.pilot_halfwidth);

  std::vector<double> squared(values.size());
  for (std::size_t j = 0; j < squared.size(); ++j)
    squared[j] = std::norm(out.pilot[j]);

  if (options.curvature_floor) {
    out.curvature = squared;
    for (auto& c : out.curvature)
      c = std::max(c, *options.curvature_floor);
    out.plan.robust_halfwidth = 0.0;
  } else {
    const auto raw = plugin_from_curvature(squared, final_order, noise_level, n);
    const double hbar = *std::max_element(raw.begin(), raw.end());
    out.plan.robust_halfwidth = hbar;
    out.curvature = robust_curvature(squared, hbar);
  }
  const auto h = plugin_from_curvature(out.curvature, final_order, noise_level, n);
  out.halfwidth = options.median_width > 1 ? median_filter(h, options.median_width) : h;
  return out;
}

template <class T> struct MultistageResult {
  std::vector<T> estimate;
  std::vector<double> halfwidth;
  PlugIn<T> plugin;
  double noise_level = 0.0;
};

/// Two-stage plug-in estimate of g^(q), q in {0, 1}, via the (q+2, q+4) -> (q, q+2) ladder.
/// Without an ansatz, (sample standard deviation, 1/4) is used; without a noise
/// model the first-difference estimate is used.
template <class T>
MultistageResult<T> multistage_estimate(std::span<const T> values, int final_q,
                                        std::optional<ScaleAnsatz> ansatz = std::nullopt,
                                        std::optional<CovarianceModel> noise = std::nullopt,
                                        const PlugInOptions& options = {}) {
  if (final_q != 0 && final_q != 1)
    throw InvalidArgument("multistage estimates support final q of 0 or 1");
  const std::size_t n = values.size();
  if (n < 16)
    throw InsufficientData("multistage estimate needs at least 16 samples");
  if (!ansatz) {
    T mean{};
    for (const auto& v : values)
      mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& v : values)
      var += std::norm(v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n - 1));
    ansatz = ScaleAnsatz{sd > 0.0 ? sd : 1.0, 0.25};
  }
  MultistageResult<T> out;
  out.noise_level = noise ? spectral_level(*noise, 0.0) : estimate_noise_variance(values);
  const KernelOrder final_order = KernelOrder::preferred(final_q);
  out.plugin = plugin_halfwidths(values, final_order, out.noise_level, *ansatz, options);
  out.halfwidth = out.plugin.halfwidth;
  const auto times = grid_times(n);
  out.estimate = smooth_series(values, KernelFamily{final_order}, std::span<const double>(out.halfwidth),
                               std::span<const double>(times));
  return out;
}

} // namespace kif
