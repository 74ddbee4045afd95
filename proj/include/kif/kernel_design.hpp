#pragma once

#include "kif/core.hpp"
#include "kif/covariance.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace kif {

/// Largest condition number accepted for the constraint system of a design.
inline constexpr double max_design_condition = 1e12;

//! Sample positions a kernel is applied to.
//!
//! Offsets are s_j = (t - t_j) / h for consecutive samples starting at index
//! `first`; `rate` is the number of samples per unit time, so rate * halfwidth
//! is the number of samples per unit offset.
struct Window {
  std::size_t first = 0;
  std::vector<double> offsets;
  double halfwidth = 1.0;
  double rate = 1.0;
  bool truncated = false;

  std::size_t size() const { return offsets.size(); }
};

//! Window of arbitrary offsets. A zero rate is inferred from the smallest spacing.
inline Window make_window(std::vector<double> offsets, double halfwidth = 1.0, double rate = 0.0) {
  if (!(halfwidth > 0.0))
    throw InvalidArgument("halfwidth must be positive");
  if (rate <= 0.0) {
    double spacing = 0.0;
    auto sorted = offsets;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 1; j < sorted.size(); ++j) {
      const double d = sorted[j] - sorted[j - 1];
      if (d > 0.0 && (spacing == 0.0 || d < spacing))
        spacing = d;
    }
    rate = spacing > 0.0 ? 1.0 / (spacing * halfwidth) : 1.0 / halfwidth;
  }
  return {0, std::move(offsets), halfwidth, rate, false};
}

//! `count` equally spaced offsets covering [-1, 1].
inline Window uniform_window(std::size_t count, double halfwidth = 1.0) {
  if (count < 2)
    throw InvalidArgument("uniform window needs at least 2 offsets");
  std::vector<double> s(count);
  for (std::size_t j = 0; j < count; ++j)
    s[j] = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(count - 1);
  return {0, std::move(s), halfwidth, static_cast<double>(count - 1) / (2.0 * halfwidth), false};
}

namespace detail {

// Evaluation points within 1e-9 samples of a grid point are snapped onto it,
// so interior windows at grid points share bit-identical offsets.
inline double grid_position(double t, std::size_t n) {
  const double x = t * static_cast<double>(n);
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

} // namespace detail

//! Samples of the grid t_j = j / N with |t - t_j| <= h, clipped to the record.
inline Window sample_window(double t, double halfwidth, std::size_t n) {
  if (!(halfwidth > 0.0))
    throw InvalidArgument("halfwidth must be positive");
  const double x = detail::grid_position(t, n);
  const double reach = halfwidth * static_cast<double>(n);
  const double lo_f = std::ceil(x - reach - 1e-9);
  const double hi_f = std::floor(x + reach + 1e-9);
  const double last = static_cast<double>(n) - 1.0;
  Window w;
  w.halfwidth = halfwidth;
  w.rate = static_cast<double>(n);
  w.truncated = lo_f < 0.0 || hi_f > last;
  const double lo = std::max(lo_f, 0.0);
  const double hi = std::min(hi_f, last);
  if (hi < lo)
    return w;
  w.first = static_cast<std::size_t>(lo);
  const auto count = static_cast<std::size_t>(hi - lo) + 1;
  w.offsets.resize(count);
  for (std::size_t k = 0; k < count; ++k)
    w.offsets[k] = (x - (lo + static_cast<double>(k))) / reach;
  return w;
}

//! Discrete kernel of order (q,p). Weights carry the 1/(N h) normalization.
struct Kernel {
  KernelOrder order;
  std::vector<double> weights;
  std::vector<double> offsets;
  double halfwidth = 1.0;
  double rate = 1.0;
  double C_qp = 0.0; ///< p-th moment divided by p!
  double m2 = 0.0;   ///< ||mu||^2 * N h

  std::size_t size() const { return weights.size(); }
};

inline double kernel_moment(const Kernel& kernel, int m) {
  if (m < 0)
    throw InvalidArgument("moment index must be >= 0");
  double acc = 0.0;
  for (std::size_t j = 0; j < kernel.size(); ++j)
    acc += kernel.weights[j] * int_pow(kernel.offsets[j], m);
  return acc;
}

inline double kernel_m2(const Kernel& kernel) {
  double acc = 0.0;
  for (double w : kernel.weights)
    acc += w * w;
  return acc * kernel.rate * kernel.halfwidth;
}

/// U(omega) = sum_j mu_j exp(-i omega lag_j), omega in rad/sample, where
/// lag_j = s_j h N is the signed sample distance t - t_j.
inline std::vector<cplx> kernel_spectrum(const Kernel& kernel, std::span<const double> omegas) {
  std::vector<cplx> out;
  out.reserve(omegas.size());
  const double scale = kernel.halfwidth * kernel.rate;
  for (double w : omegas) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j)
      acc += kernel.weights[j] * std::polar(1.0, -w * kernel.offsets[j] * scale);
    out.push_back(acc);
  }
  return out;
}

inline cplx kernel_spectrum(const Kernel& kernel, double omega) {
  return kernel_spectrum(kernel, std::span<const double>(&omega, 1)).front();
}

//! Largest |U| over [omega - half_span, omega + half_span], sampled on `points` frequencies.
inline double sidelobe_envelope(const Kernel& kernel, double omega, double half_span,
                                int points = 65) {
  double best = 0.0;
  for (int k = 0; k < points; ++k) {
    const double w = omega - half_span + 2.0 * half_span * k / (points - 1);
    best = std::max(best, std::abs(kernel_spectrum(kernel, w)));
  }
  return best;
}

namespace detail {

inline Eigen::MatrixXd moment_matrix(const std::vector<double>& offsets, int p) {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(offsets.size()), p);
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    double v = 1.0;
    for (int m = 0; m < p; ++m) {
      s(static_cast<Eigen::Index>(j), m) = v;
      v *= offsets[j];
    }
  }
  return s;
}

inline Eigen::VectorXd moment_target(KernelOrder order) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(order.p);
  e(order.q) = factorial(order.q);
  return e;
}

inline void require_distinct(const std::vector<double>& offsets, int p) {
  auto sorted = offsets;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<int>(
    std::unique(sorted.begin(), sorted.end(),
                [](double a, double b) { return std::abs(a - b) < 1e-14; }) -
    sorted.begin());
  if (distinct < p)
    throw DesignInfeasible("kernel design needs at least " + std::to_string(p) +
                           " distinct offsets, got " + std::to_string(distinct));
}

inline void require_conditioned(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > max_design_condition)
    throw DesignInfeasible("kernel constraint system is ill-conditioned");
}

inline Kernel finish(KernelOrder order, const Window& window, std::vector<double> weights) {
  Kernel k;
  k.order = order;
  k.weights = std::move(weights);
  k.offsets = window.offsets;
  k.halfwidth = window.halfwidth;
  k.rate = window.rate;
  k.C_qp = kernel_moment(k, order.p) / factorial(order.p);
  k.m2 = kernel_m2(k);
  return k;
}

// S (S^T S)^{-1} r from a QR factorization of S, which avoids squaring the
// condition number of the moment matrix.
inline Eigen::VectorXd minimum_norm_solution(const Eigen::MatrixXd& s, const Eigen::VectorXd& r) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(s);
  const auto p = s.cols();
  const Eigen::MatrixXd upper = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(s.rows());
  y.head(p) = upper.transpose().triangularView<Eigen::Lower>().solve(r);
  return qr.householderQ() * y;
}

// Least-change correction of `mu` onto the affine set S^T mu = e.
inline void project_onto_moments(KernelOrder order, const std::vector<double>& offsets,
                                 std::vector<double>& mu) {
  const Eigen::MatrixXd s = moment_matrix(offsets, order.p);
  require_conditioned(s.transpose() * s);
  const Eigen::Map<Eigen::VectorXd> v(mu.data(), static_cast<Eigen::Index>(mu.size()));
  const Eigen::VectorXd residual = moment_target(order) - s.transpose() * v;
  const Eigen::VectorXd fix = minimum_norm_solution(s, residual);
  for (std::size_t j = 0; j < mu.size(); ++j)
    mu[j] += fix(static_cast<Eigen::Index>(j));
}

} // namespace detail

//! Kernel minimizing mu^T Rbar mu under the moment conditions, with the
//! attained minimum. Rbar must be symmetric positive definite.
struct QuadraticDesign {
  Kernel kernel;
  double objective = 0.0;
};

inline QuadraticDesign design_minimal_quadratic_kernel(KernelOrder order, const Window& window,
                                                       const Eigen::MatrixXd& rbar) {
  const auto n = static_cast<Eigen::Index>(window.size());
  if (rbar.rows() != n || rbar.cols() != n)
    throw InvalidArgument("covariance size does not match the window");
  detail::require_distinct(window.offsets, order.p);
  if (!rbar.isApprox(rbar.transpose(), 1e-12))
    throw InvalidCovariance("kernel design covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> chol(rbar);
  if (chol.info() != Eigen::Success)
    throw InvalidCovariance("kernel design covariance is not positive definite");

  const Eigen::MatrixXd s = detail::moment_matrix(window.offsets, order.p);
  const Eigen::MatrixXd rinv_s = chol.solve(s);
  const Eigen::MatrixXd m = s.transpose() * rinv_s;
  detail::require_conditioned(m);
  const Eigen::VectorXd e = detail::moment_target(order);
  const Eigen::VectorXd alpha = m.ldlt().solve(e);
  const Eigen::VectorXd mu = rinv_s * alpha;

  QuadraticDesign out;
  out.kernel = detail::finish(order, window, std::vector<double>(mu.data(), mu.data() + n));
  out.objective = e.dot(alpha);
  return out;
}

//! The identity-covariance case, solved without forming the window-sized matrix.
inline Kernel design_minimal_variance_kernel(KernelOrder order, const Window& window) {
  detail::require_distinct(window.offsets, order.p);
  const Eigen::MatrixXd s = detail::moment_matrix(window.offsets, order.p);
  detail::require_conditioned(s.transpose() * s);
  const Eigen::VectorXd mu = detail::minimum_norm_solution(s, detail::moment_target(order));
  std::vector<double> weights(mu.data(), mu.data() + mu.size());
  detail::project_onto_moments(order, window.offsets, weights);
  return detail::finish(order, window, std::move(weights));
}

/// Minimizer of the leading-order loss mu^T R mu + (g^(p) h^p / p!)^2 (mu . s^p)^2,
/// i.e. variance plus squared bias of the normalized estimate. `center_frequency`
/// (rad/unit time) applies the demodulation phase to correlated noise.
inline QuadraticDesign design_minimal_loss(KernelOrder order, const Window& window,
                                           const CovarianceModel& covariance, double curvature,
                                           double center_frequency = 0.0) {
  if (!(curvature >= 0.0))
    throw InvalidArgument("curvature magnitude must be >= 0");
  Eigen::MatrixXd rbar =
    covariance_matrix(covariance, window.size(), center_frequency / window.rate);
  const double c = curvature * int_pow(window.halfwidth, order.p) / factorial(order.p);
  if (c > 0.0) {
    Eigen::VectorXd sp(static_cast<Eigen::Index>(window.size()));
    for (std::size_t j = 0; j < window.size(); ++j)
      sp(static_cast<Eigen::Index>(j)) = int_pow(window.offsets[j], order.p);
    rbar += (c * c) * sp * sp.transpose();
  }
  return design_minimal_quadratic_kernel(order, window, rbar);
}

inline Kernel design_minimal_loss_kernel(KernelOrder order, const Window& window,
                                         const CovarianceModel& covariance, double curvature,
                                         double center_frequency = 0.0) {
  return design_minimal_loss(order, window, covariance, curvature, center_frequency).kernel;
}

//! gamma = prod_{k=1}^{q+1} (q + k) / 2
inline double legendre_gamma(int q) {
  double g = 1.0;
  for (int k = 1; k <= q + 1; ++k)
    g *= (q + k) / 2.0;
  return g;
}

//! Continuous limiting shape gamma [P_q(s) - P_{q+2}(s)] on [-1, 1].
inline double legendre_shape(int q, double s) {
  if (std::abs(s) > 1.0)
    return 0.0;
  // Bonnet recursion up to P_{q+2}.
  double prev = 1.0, cur = s, pq = q == 0 ? 1.0 : s;
  for (int k = 1; k < q + 2; ++k) {
    const double next = ((2.0 * k + 1.0) * s * cur - k * prev) / (k + 1.0);
    prev = cur;
    cur = next;
    if (k + 1 == q)
      pq = cur;
  }
  return legendre_gamma(q) * (pq - cur);
}

/// Sampled Legendre kernel on an arbitrary window, corrected by the
/// minimum-norm change that makes the moment conditions exact.
inline Kernel legendre_kernel(KernelOrder order, const Window& window) {
  if (order.p != order.q + 2)
    throw UnsupportedOrder("Legendre kernels exist only for p = q + 2");
  detail::require_distinct(window.offsets, order.p);
  const double norm = 1.0 / (window.rate * window.halfwidth);
  std::vector<double> mu(window.size());
  for (std::size_t j = 0; j < mu.size(); ++j)
    mu[j] = legendre_shape(order.q, window.offsets[j]) * norm;
  detail::project_onto_moments(order, window.offsets, mu);
  return detail::finish(order, window, std::move(mu));
}

inline Kernel legendre_kernel(KernelOrder order, double halfwidth, std::size_t grid_count) {
  if (order.p != order.q + 2)
    throw UnsupportedOrder("Legendre kernels exist only for p = q + 2");
  if (grid_count < static_cast<std::size_t>(order.p + 1))
    throw InvalidArgument("Legendre kernel needs at least p + 1 grid points");
  return legendre_kernel(order, uniform_window(grid_count, halfwidth));
}

//! Edge kernel: the minimal-variance design on the truncated window.
inline Kernel design_boundary_kernel(KernelOrder order, const Window& window) {
  if (window.size() < static_cast<std::size_t>(order.p))
    throw DesignInfeasible("boundary window holds " + std::to_string(window.size()) +
                           " samples, order needs " + std::to_string(order.p));
  return design_minimal_variance_kernel(order, window);
}

inline Kernel design_boundary_kernel(KernelOrder order, double t, double halfwidth,
                                     std::size_t n) {
  if (t < 0.0 || t > 1.0)
    throw InvalidArgument("estimation point must lie in [0, 1]");
  return design_boundary_kernel(order, sample_window(t, halfwidth, n));
}

//! v_n^(k) = sqrt(2 / (N + 1)) sin(pi k n / (N + 1)), n = 1..N.
inline std::vector<double> sinusoidal_taper(int k, std::size_t length) {
  std::vector<double> v(length);
  const double np1 = static_cast<double>(length) + 1.0;
  for (std::size_t n = 1; n <= length; ++n)
    v[n - 1] = std::sqrt(2.0 / np1) * std::sin(pi * k * static_cast<double>(n) / np1);
  return v;
}

/// Kernel built from the first p + 1 sinusoidal tapers of `length` points,
/// satisfying the moment conditions and vanishing at both support ends.
/// The support is centered, with the zero crossings at n = 0 and n = N + 1
/// mapped to offsets +-1; `rate` defaults to one sample per unit time.
inline Kernel sinusoidal_taper_kernel(KernelOrder order, std::size_t length, double rate = 1.0) {
  const int p = order.p;
  if (length < static_cast<std::size_t>(p + 1))
    throw InvalidArgument("taper kernel needs length >= p + 1");
  const double center = (static_cast<double>(length) + 1.0) / 2.0;
  Window window;
  window.rate = rate;
  window.halfwidth = center / rate;
  window.offsets.resize(length);
  for (std::size_t n = 1; n <= length; ++n)
    window.offsets[n - 1] = (center - static_cast<double>(n)) / center;

  Eigen::MatrixXd basis(static_cast<Eigen::Index>(length), p + 1);
  for (int k = 1; k <= p + 1; ++k) {
    const auto v = sinusoidal_taper(k, length);
    for (std::size_t n = 0; n < length; ++n)
      basis(static_cast<Eigen::Index>(n), k - 1) = v[n];
  }
  const Eigen::MatrixXd s = detail::moment_matrix(window.offsets, p);
  const Eigen::VectorXd e = detail::moment_target(order);
  const double tol = 1e-10;

  // Moment rows first, then the two end samples. When both ends cannot be
  // imposed together with every moment, only the leading end is kept.
  for (int ends : {2, 1}) {
    Eigen::MatrixXd a(p + ends, p + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p + ends);
    a.topRows(p) = s.transpose() * basis;
    b.head(p) = e;
    a.row(p) = basis.row(0);
    if (ends == 2)
      a.row(p + 1) = basis.row(static_cast<Eigen::Index>(length) - 1);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-12);
    if (qr.rank() < p + 1)
      continue;
    const Eigen::VectorXd coeff = qr.solve(b);
    if ((a * coeff - b).cwiseAbs().maxCoeff() > tol)
      continue;
    const Eigen::VectorXd mu = basis * coeff;
    return detail::finish(order, window, std::vector<double>(mu.data(), mu.data() + mu.size()));
  }
  throw DesignInfeasible("taper combination system is singular");
}

} // namespace kif
