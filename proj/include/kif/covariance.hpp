#pragma once

#include "kif/analytic_signal.hpp"
#include "kif/core.hpp"

#include <Eigen/Dense>

#include <functional>
#include <variant>
#include <vector>

namespace kif {

//! Independent noise with variance sigma^2.
struct White {
  double variance = 0.0;
};

//! Stationary noise, Cov[e_j, e_k] = variance * correlation[|j - k|]; correlation[0] == 1.
struct StationaryLag {
  std::vector<double> correlation{1.0};
  double variance = 0.0;
};

//! Stationary noise given by its spectral density on [-pi, pi] (rad/sample),
//! normalized so that white noise of variance sigma^2 has S == sigma^2.
struct Spectral {
  std::function<double(double)> density;
};

//! Phase-unit errors induced by the Hilbert transform of white noise. When
//! `phases` is non-empty it holds phi(t_j) aligned with the kernel weights and
//! the full correlated structure is used; otherwise only the diagonal.
struct HilbertPhase {
  double amplitude = 1.0;
  double variance = 0.0;
  std::vector<double> phases{};

  double phase_variance() const { return variance / (amplitude * amplitude + variance); }
};

using CovarianceModel = std::variant<White, StationaryLag, Spectral, HilbertPhase>;

/// Number of frequency points used when a spectral density is integrated.
inline constexpr int spectral_quadrature_points = 4096;

inline void validate(const CovarianceModel& model) {
  std::visit(
    [](const auto& m) {
      using M = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<M, White>) {
        if (!(m.variance >= 0.0))
          throw InvalidCovariance("white noise variance must be >= 0");
      } else if constexpr (std::is_same_v<M, StationaryLag>) {
        if (!(m.variance >= 0.0))
          throw InvalidCovariance("lag covariance variance must be >= 0");
        if (m.correlation.empty() || std::abs(m.correlation[0] - 1.0) > 1e-12)
          throw InvalidCovariance("lag correlation must start with R(0) = 1");
      } else if constexpr (std::is_same_v<M, Spectral>) {
        if (!m.density)
          throw InvalidCovariance("spectral covariance needs a density");
      } else {
        if (!(m.amplitude > 0.0))
          throw InvalidCovariance("Hilbert phase covariance needs amplitude > 0");
        if (!(m.variance >= 0.0))
          throw InvalidCovariance("Hilbert phase covariance variance must be >= 0");
      }
    },
    model);
}

namespace detail {

// Midpoint rule on the periodic interval [-pi, pi).
template <class F> double integrate_periodic(F&& f) {
  const int n = spectral_quadrature_points;
  const double dw = 2.0 * pi / n;
  double acc = 0.0;
  for (int k = 0; k < n; ++k)
    acc += f(-pi + (k + 0.5) * dw);
  return acc * dw;
}

} // namespace detail

//! Real autocovariance at an integer lag (the phase-free part for HilbertPhase).
inline double lag_covariance(const CovarianceModel& model, long lag) {
  const long d = lag < 0 ? -lag : lag;
  return std::visit(
    [d](const auto& m) -> double {
      using M = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<M, White>) {
        return d == 0 ? m.variance : 0.0;
      } else if constexpr (std::is_same_v<M, StationaryLag>) {
        return static_cast<std::size_t>(d) < m.correlation.size() ? m.variance * m.correlation[d]
                                                                  : 0.0;
      } else if constexpr (std::is_same_v<M, Spectral>) {
        return detail::integrate_periodic(
                 [&](double w) { return m.density(w) * std::cos(w * static_cast<double>(d)); }) /
               (2.0 * pi);
      } else {
        return d == 0 ? m.phase_variance() : 0.0;
      }
    },
    model);
}

//! Noise level seen by a kernel localized near `omega` (rad/sample): S(omega).
inline double spectral_level(const CovarianceModel& model, double omega) {
  return std::visit(
    [omega](const auto& m) -> double {
      using M = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<M, White>) {
        return m.variance;
      } else if constexpr (std::is_same_v<M, StationaryLag>) {
        double s = m.correlation.empty() ? 0.0 : m.correlation[0];
        for (std::size_t d = 1; d < m.correlation.size(); ++d)
          s += 2.0 * m.correlation[d] * std::cos(omega * static_cast<double>(d));
        return m.variance * s;
      } else if constexpr (std::is_same_v<M, Spectral>) {
        return m.density(omega);
      } else {
        return m.phase_variance();
      }
    },
    model);
}

//! Real symmetric covariance of `n` consecutive samples, optionally seen
//! through demodulation at `omega` (rad/sample).
inline Eigen::MatrixXd covariance_matrix(const CovarianceModel& model, std::size_t n,
                                         double omega = 0.0) {
  validate(model);
  Eigen::MatrixXd r(n, n);
  std::vector<double> lags(n);
  for (std::size_t d = 0; d < n; ++d)
    lags[d] = lag_covariance(model, static_cast<long>(d)) * std::cos(omega * static_cast<double>(d));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      r(j, k) = lags[j > k ? j - k : k - j];
  if (const auto* hp = std::get_if<HilbertPhase>(&model); hp && !hp->phases.empty()) {
    if (hp->phases.size() != n)
      throw InvalidArgument("HilbertPhase phases must match the kernel length");
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        r(j, k) = phase_error_covariance(hp->phases[j], hp->phases[k],
                                         static_cast<long>(j) - static_cast<long>(k),
                                         hp->amplitude, hp->variance)
                    .real();
  }
  return r;
}

} // namespace kif
