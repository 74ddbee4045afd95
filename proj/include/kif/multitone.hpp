#pragma once

#include "kif/adaptive.hpp"
#include "kif/core.hpp"
#include "kif/if_estimator.hpp"
#include "kif/kernel_design.hpp"
#include "kif/smoothing.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace kif {

//! Center frequencies (rad/unit time, ascending) with a declared guard
//! bandwidth and the current reconstruction A cos(phi) of each line.
class ToneSet {
public:
  ToneSet(std::vector<double> center_frequencies, double guard_bandwidth)
    : frequencies_(std::move(center_frequencies)), guard_(guard_bandwidth),
      reconstructions_(frequencies_.size()) {
    if (frequencies_.empty())
      throw InvalidArgument("a tone set needs at least one line");
    if (!(guard_ > 0.0) || !std::isfinite(guard_))
      throw InvalidArgument("guard bandwidth must be positive and finite");
    std::sort(frequencies_.begin(), frequencies_.end());
    for (std::size_t l = 1; l < frequencies_.size(); ++l)
      if (!(frequencies_[l] - frequencies_[l - 1] > 2.0 * guard_))
        throw InvalidArgument("lines " + std::to_string(l - 1) + " and " + std::to_string(l) +
                              " are closer than twice the guard bandwidth");
  }

  std::size_t size() const { return frequencies_.size(); }
  const std::vector<double>& center_frequencies() const { return frequencies_; }
  double guard_bandwidth() const { return guard_; }

  void set_reconstruction(std::size_t line, std::vector<double> values) {
    reconstructions_.at(line) = std::move(values);
  }
  void clear_reconstruction(std::size_t line) { reconstructions_.at(line).reset(); }
  const std::optional<std::vector<double>>& reconstruction(std::size_t line) const {
    return reconstructions_.at(line);
  }

private:
  std::vector<double> frequencies_;
  double guard_;
  std::vector<std::optional<std::vector<double>>> reconstructions_;
};

/// y minus the reconstructions of every line except `exclude`, summed in
/// ascending frequency order.
inline SampledSignal corrected_dataset(const SampledSignal& y, const ToneSet& tones,
                                       std::size_t exclude) {
  if (exclude >= tones.size())
    throw InvalidArgument("line " + std::to_string(exclude) + " is not in the tone set");
  std::vector<double> out = y.values();
  for (std::size_t l = 0; l < tones.size(); ++l) {
    if (l == exclude)
      continue;
    const auto& r = tones.reconstruction(l);
    if (!r)
      throw InvalidArgument("no reconstruction for line " + std::to_string(l));
    if (r->size() != out.size())
      throw InvalidArgument("reconstruction of line " + std::to_string(l) +
                            " does not match the record length");
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] -= (*r)[j];
  }
  return SampledSignal(std::move(out));
}

/// Largest |U| over the band a residual line can occupy, [|dw| - w_b, |dw| + w_b],
/// all frequencies in rad/unit time.
inline double interference_spectrum(const Kernel& kernel, double separation, double guard,
                                    double n) {
  const double lo = std::max(std::abs(separation) - guard, 0.0);
  const double hi = std::abs(separation) + guard;
  return sidelobe_envelope(kernel, 0.5 * (lo + hi) / n, 0.5 * (hi - lo) / n);
}

//! Right-hand side of the interference test: |A_res U|.
inline double interference_bias(const Kernel& kernel, double residual_amplitude,
                                double separation, double guard, double n) {
  return std::abs(residual_amplitude) * interference_spectrum(kernel, separation, guard, n);
}

inline bool interference_negligible(const Kernel& kernel, double amplitude_pth_derivative,
                                    double residual_amplitude, double separation, double guard,
                                    double n, double margin = 5.0) {
  if (!(margin > 1.0))
    throw InvalidArgument("interference margin must exceed 1");
  const double lhs = std::abs(kernel.C_qp * amplitude_pth_derivative *
                              int_pow(kernel.halfwidth, kernel.order.p));
  return lhs > margin * interference_bias(kernel, residual_amplitude, separation, guard, n);
}

/// A cos(phi) on the grid from an IF estimate, phi integrated from the
/// frequency by the trapezoid rule and anchored at the record midpoint.
inline std::vector<double> reconstruct_line(const IFEstimate& e) {
  const std::size_t n = e.size();
  const std::size_t mid = n / 2;
  const double dt = 1.0 / static_cast<double>(n);
  std::vector<double> phase(n);
  phase[mid] = e.center_frequency * e.times[mid] + e.phase_offset + std::arg(e.phasor[mid]);
  for (std::size_t j = mid + 1; j < n; ++j)
    phase[j] = phase[j - 1] + 0.5 * dt * (e.frequency[j - 1] + e.frequency[j]);
  for (std::size_t j = mid; j-- > 0;)
    phase[j] = phase[j + 1] - 0.5 * dt * (e.frequency[j] + e.frequency[j + 1]);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = e.amplitude[j] * std::cos(phase[j]);
  return out;
}

struct MultitoneConfig {
  IFConfig line{}; ///< per-line settings; every sweep starts from the seed frequency
  double guard_bandwidth = 0.0; ///< rad/unit time
  int max_outer_iterations = 3;
  double tolerance = 1e-6; ///< max interior IF change between sweeps, rad/unit time
  double margin = 5.0;
};

struct MultitoneLine {
  IFEstimate estimate;
  std::vector<double> reconstruction;
  double interference = 0.0;      ///< largest residual-line bias bound seen by this line
  double amplitude_bias = 0.0;    ///< |C A^(p) h^p| of this line
};

struct MultitoneResult {
  std::vector<MultitoneLine> lines; ///< in the order of the seed frequencies
  std::vector<double> max_change;   ///< per outer iteration
  int iterations = 0;
  bool converged = false;
  bool tapers_engaged = false;
};

namespace detail {

inline double typical_halfwidth(const IFEstimate& e) {
  std::vector<double> h = e.halfwidth;
  std::nth_element(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(h.size() / 2), h.end());
  return h[h.size() / 2];
}

// Mean |A''| over the interior from a (2,4) pilot of the smoothed amplitude.
inline double amplitude_curvature(const IFEstimate& e, double h) {
  const auto n = static_cast<double>(e.size());
  const double pilot_h = std::clamp(2.0 * h, min_halfwidth(KernelOrder(2, 4), n) * 2.0, 0.25);
  const auto d2 = pilot_derivative(std::span<const double>(e.amplitude), 2, pilot_h);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < d2.size(); ++j) {
    if (e.times[j] < pilot_h || e.times[j] > 1.0 - pilot_h)
      continue;
    sum += std::abs(d2[j]);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

} // namespace detail

/// Iterative estimation of several separated lines. Each sweep estimates every
/// line on its corrected data set using the previous sweep's reconstructions,
/// so the result does not depend on the order of the seeds.
inline MultitoneResult estimate_multitone(const SampledSignal& y, const std::vector<double>& seeds,
                                          const MultitoneConfig& config,
                                          const std::optional<CovarianceModel>& noise = std::nullopt) {
  if (config.max_outer_iterations < 1)
    throw InvalidArgument("max_outer_iterations must be >= 1");
  if (!(config.margin > 1.0))
    throw InvalidArgument("interference margin must exceed 1");
  config.line.validate();
  ToneSet tones(seeds, config.guard_bandwidth);
  const std::size_t lines = tones.size();
  const auto n = static_cast<double>(y.size());

  // Map sorted line index back to the caller's order; ties are rejected by ToneSet.
  std::vector<std::size_t> order(lines);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return seeds[a] < seeds[b]; });

  for (std::size_t l = 0; l < lines; ++l)
    tones.set_reconstruction(l, std::vector<double>(y.size(), 0.0));

  MultitoneResult result;
  std::vector<MultitoneLine> current(lines);
  const std::vector<double>& centers = tones.center_frequencies();
  bool taper = false;

  for (int it = 0; it < config.max_outer_iterations; ++it) {
    std::vector<MultitoneLine> next(lines);
    for (std::size_t l = 0; l < lines; ++l) {
      IFConfig cfg = config.line;
      cfg.center_frequency = centers[l];
      if (taper)
        cfg.shape = KernelShape::sinusoidal_taper;
      next[l].estimate = estimate_if(corrected_dataset(y, tones, l), cfg, noise);
      next[l].reconstruction = reconstruct_line(next[l].estimate);
    }

    double change = 0.0;
    if (it > 0)
      for (std::size_t l = 0; l < lines; ++l)
        for (std::size_t j = 0; j < y.size(); ++j)
          if (!next[l].estimate.edge[j])
            change = std::max(change, std::abs(next[l].estimate.frequency[j] -
                                               current[l].estimate.frequency[j]));
    result.max_change.push_back(change);

    // Residual amplitude of each line once its reconstruction is subtracted:
    // the full amplitude on the first sweep, afterwards the noise level of the
    // (0,2) amplitude smooth.
    std::vector<double> amp(lines), resid(lines), h(lines);
    for (std::size_t l = 0; l < lines; ++l) {
      const auto& e = next[l].estimate;
      h[l] = detail::typical_halfwidth(e);
      double mean_amp = 0.0;
      for (double a : e.amplitude)
        mean_amp += a;
      amp[l] = mean_amp / n;
      const auto c02 = continuum_constants(phasor_order);
      resid[l] = std::sqrt(2.0 * e.noise_variance * c02.m2 / (n * h[l]));
    }

    bool all_negligible = true;
    for (std::size_t l = 0; l < lines; ++l) {
      const auto& e = next[l].estimate;
      const Window w = sample_window(0.5, h[l], y.size());
      const Kernel k = KernelFamily{phasor_order, taper ? KernelShape::sinusoidal_taper
                                                        : config.line.shape}
                         .make(w);
      const double curv = detail::amplitude_curvature(e, h[l]);
      next[l].amplitude_bias = std::abs(k.C_qp * curv * int_pow(k.halfwidth, k.order.p));
      for (std::size_t m = 0; m < lines; ++m) {
        if (m == l)
          continue;
        const double ra = it == 0 ? amp[m] : resid[m];
        const double sep = centers[l] - centers[m];
        next[l].interference =
          std::max(next[l].interference, interference_bias(k, ra, sep, tones.guard_bandwidth(), n));
        if (!interference_negligible(k, curv, ra, sep, tones.guard_bandwidth(), n, config.margin))
          all_negligible = false;
      }
    }

    current = std::move(next);
    for (std::size_t l = 0; l < lines; ++l)
      tones.set_reconstruction(l, current[l].reconstruction);
    result.iterations = it + 1;
    if (!all_negligible && !taper) {
      taper = true;
      result.tapers_engaged = true;
      continue;
    }
    if (it > 0 && change < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  if (lines == 1)
    result.converged = true;

  result.lines.resize(lines);
  for (std::size_t s = 0; s < lines; ++s)
    result.lines[order[s]] = std::move(current[s]);
  return result;
}

} // namespace kif
