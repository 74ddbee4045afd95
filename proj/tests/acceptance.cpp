// Acceptance suite: one PASS/FAIL line per criterion. `acceptance --only N`
// runs a single criterion; the exit code is nonzero if any selected one fails.

#include "benchmark.hpp"

#include <kif/kif.hpp>

#include <chrono>
#include <fstream>
#include <limits>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace kif;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  return cli::detail::loglog_slope(x, y);
}

struct Interior {
  std::size_t first, last;
  explicit Interior(std::size_t n)
    : first(static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n)))), last(n - first) {}
  double count() const { return static_cast<double>(last - first); }
};

double interior_mse(const std::vector<double>& est, const std::vector<double>& truth) {
  const Interior in(est.size());
  double acc = 0.0;
  for (std::size_t j = in.first; j < in.last; ++j)
    acc += (est[j] - truth[j]) * (est[j] - truth[j]);
  return acc / in.count();
}

// Minimizer of a parabola through the lowest grid point and its neighbours, in log h.
double parabolic_minimum(const std::vector<double>& h, const std::vector<double>& loss) {
  const auto best = static_cast<std::size_t>(std::min_element(loss.begin(), loss.end()) - loss.begin());
  if (best == 0 || best + 1 == h.size())
    return h[best];
  const double x0 = std::log(h[best - 1]), x1 = std::log(h[best]), x2 = std::log(h[best + 1]);
  const double y0 = std::log(loss[best - 1]), y1 = std::log(loss[best]), y2 = std::log(loss[best + 1]);
  const double d = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / d;
  return a > 0.0 ? std::exp(-b / (2.0 * a)) : h[best];
}

// ---------------------------------------------------------------- 1

double moment_residual(const Kernel& k) {
  double worst = 0.0;
  for (int m = 0; m < k.order.p; ++m) {
    const double target = m == k.order.q ? factorial(k.order.q) : 0.0;
    worst = std::max(worst, std::abs(kernel_moment(k, m) - target));
  }
  return worst;
}

Outcome moment_conditions() {
  const std::size_t n = 1000;
  const std::vector<KernelOrder> orders{{0, 2}, {1, 3}, {2, 4}, {0, 4}, {1, 4}, {3, 5}};
  const StationaryLag colored{{1.0, 0.5, 0.2}, 1.0};
  double worst = 0.0;
  std::size_t kernels = 0;
  const auto check = [&](const Kernel& k) {
    worst = std::max(worst, moment_residual(k));
    ++kernels;
  };
  for (const auto& order : orders) {
    for (double h : {0.01, 0.05}) {
      for (double t : {0.5, 0.5 + 0.3 / n}) {
        const Window w = sample_window(t, h, n);
        check(design_minimal_variance_kernel(order, w));
        check(design_minimal_loss_kernel(order, w, colored, 50.0, 0.3 * n));
        check(design_minimal_loss_kernel(order, w, White{0.01}, 1e3));
        if (order.p == order.q + 2)
          check(legendre_kernel(order, w));
        check(KernelFamily{order, KernelShape::sinusoidal_taper}.make(w));
      }
      check(sinusoidal_taper_kernel(order, static_cast<std::size_t>(2 * h * n) + 1, h * n));
      for (double t : {0.0, 1.0 / n, 0.3 * h, h - 1.0 / n, 1.0 - 0.5 * h, 1.0})
        check(design_boundary_kernel(order, t, h, n));
    }
  }

  // Polynomial reproduction of degree < p over the whole record, edges included.
  double poly_worst = 0.0;
  const std::vector<double> coef{0.3, -1.2, 0.8, 2.0, -1.5};
  const auto times = grid_times(n);
  for (const auto& order : orders)
    for (KernelShape shape : {KernelShape::legendre, KernelShape::minimal_variance,
                              KernelShape::sinusoidal_taper}) {
      if (shape == KernelShape::legendre && order.p != order.q + 2)
        continue;
      std::vector<double> y(n), truth(n);
      for (std::size_t j = 0; j < n; ++j) {
        double v = 0.0, d = 0.0;
        for (int i = 0; i < order.p; ++i) {
          v += coef[static_cast<std::size_t>(i)] * std::pow(times[j], i);
          if (i >= order.q)
            d += coef[static_cast<std::size_t>(i)] * factorial(i) / factorial(i - order.q) *
                 std::pow(times[j], i - order.q);
        }
        y[j] = v;
        truth[j] = d;
      }
      const auto est = smooth_series(std::span<const double>(y), KernelFamily{order, shape}, 0.05,
                                     std::span<const double>(times));
      for (std::size_t j = 0; j < n; ++j)
        poly_worst = std::max(poly_worst, std::abs(est[j] - truth[j]));
    }
  return {worst < 1e-10 && poly_worst < 1e-9,
          std::to_string(kernels) + " kernels, max moment residual " + fmt(worst) +
            " (tol 1e-10); polynomial reproduction error " + fmt(poly_worst) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------- 2

Outcome shape_recovery() {
  double worst = 0.0;
  std::string parts;
  for (int q : {0, 1}) {
    const KernelOrder order(q, q + 2);
    const Window w = uniform_window(201);
    const Kernel k = design_minimal_variance_kernel(order, w);
    const double scale = w.rate * w.halfwidth;
    double dev = 0.0, peak = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double s = w.offsets[j];
      const double shape = q == 0 ? 0.75 * (1.0 - s * s) : 3.75 * (s - s * s * s);
      peak = std::max(peak, std::abs(shape));
      dev = std::max(dev, std::abs(k.weights[j] * scale - shape));
    }
    worst = std::max(worst, dev / peak);
    parts += (parts.empty() ? "" : ", ") + std::string("(") + std::to_string(q) + "," +
             std::to_string(q + 2) + ") " + fmt(100.0 * dev / peak) + "%";
  }
  return {worst < 0.02, "max relative deviation of minimal-variance kernels from the quadratic/cubic shapes: " +
                          parts + " (tol 2%)"};
}

// ---------------------------------------------------------------- 3

Outcome variance_law() {
  const std::size_t n = 1000;
  const int reps = 2000;
  const double sigma2 = 1.0;
  double worst_z = 0.0;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2));
  std::vector<std::vector<double>> noise(reps, std::vector<double>(n));
  for (auto& e : noise)
    for (auto& v : e)
      v = normal(rng);
  for (const KernelOrder order : {KernelOrder(0, 2), KernelOrder(1, 3)})
    for (double h : {0.02, 0.05, 0.1}) {
      const KernelFamily family{order};
      double m1 = 0.0, m2 = 0.0;
      for (const auto& e : noise) {
        const double v = smooth_at(std::span<const double>(e), family, h, 0.5);
        m1 += v / reps;
        m2 += v * v / reps;
      }
      const double var = (m2 - m1 * m1) * reps / (reps - 1.0);
      const Kernel k = family.make(sample_window(0.5, h, n));
      const double predicted = predicted_variance(k, White{sigma2}, n, h);
      const double se = predicted * std::sqrt(2.0 / (reps - 1.0));
      worst_z = std::max(worst_z, std::abs(var - predicted) / se);
    }
  return {worst_z < 3.0, "largest |MC variance - predicted| = " + fmt(worst_z) +
                           " standard errors over (0,2),(1,3) x h in {0.02,0.05,0.1} (tol 3)"};
}

// ---------------------------------------------------------------- 4

Outcome bias_law() {
  const std::size_t n = 1000;
  const auto times = grid_times(n);
  double exact_worst = 0.0;
  for (const KernelOrder order : {KernelOrder(0, 2), KernelOrder(1, 3), KernelOrder(2, 4)})
    for (double h : {0.02, 0.05, 0.1}) {
      // g(t) = t^p / p!  has g^(p) = 1 and no higher terms.
      std::vector<double> y(n);
      for (std::size_t j = 0; j < n; ++j)
        y[j] = std::pow(times[j] - 0.5, order.p) / factorial(order.p) + 0.2 * times[j];
      for (double t : {0.3, 0.5, 0.71}) {
        const KernelFamily family{order};
        const double est = smooth_at(std::span<const double>(y), family, h, t);
        const double truth = std::pow(t - 0.5, order.p - order.q) / factorial(order.p - order.q) +
                             (order.q == 0 ? 0.2 * t : (order.q == 1 ? 0.2 : 0.0));
        const Kernel k = family.make(sample_window(t, h, n));
        exact_worst = std::max(exact_worst, std::abs((est - truth) - predicted_bias(k, 1.0, h)));
      }
    }

  double sine_worst = 0.0;
  std::vector<double> y(n);
  for (std::size_t j = 0; j < n; ++j)
    y[j] = std::sin(2.0 * pi * times[j]);
  for (const KernelOrder order : {KernelOrder(0, 2), KernelOrder(1, 3)})
    for (double h : {0.02, 0.035, 0.05})
      for (double t : {0.2, 0.3, 0.5, 0.75}) {
        const KernelFamily family{order};
        const double est = smooth_at(std::span<const double>(y), family, h, t);
        const double truth = std::pow(2 * pi, order.q) * std::sin(2 * pi * t + order.q * pi / 2);
        const double gp = std::pow(2 * pi, order.p) * std::sin(2 * pi * t + order.p * pi / 2);
        if (std::abs(gp) < 0.3 * std::pow(2 * pi, order.p))
          continue;
        const Kernel k = family.make(sample_window(t, h, n));
        const double predicted = predicted_bias(k, gp, h);
        sine_worst = std::max(sine_worst, std::abs((est - truth) / predicted - 1.0));
      }
  return {exact_worst < 1e-9 && sine_worst < 0.10,
          "degree-p polynomial bias error " + fmt(exact_worst) + " (tol 1e-9); sin(2 pi t) relative bias error " +
            fmt(100.0 * sine_worst) + "% for h <= 0.05 (tol 10%)"};
}

// ---------------------------------------------------------------- IF scenario for 5 and 6

//! Sinusoidal FM at SNR 20 dB with a carrier of pi/4 rad/sample.
struct FmScenario {
  std::size_t n;
  ToneSpec tone;
  double sigma2;
  std::vector<double> truth, d3;

  explicit FmScenario(std::size_t n_) : n(n_) {
    tone = constant_tone(1.0, 0.25 * pi * static_cast<double>(n));
    tone.phase.kind = PhaseLaw::Kind::sinusoidal_fm;
    tone.phase.beta = 0.5;
    tone.phase.rate = 2.0;
    sigma2 = cli::snr_noise_variance(1.0, 20.0);
    const auto times = grid_times(n);
    for (double t : times) {
      truth.push_back(tone.frequency(t));
      d3.push_back(std::abs(tone.demodulated_phasor_derivative(t, 3, tone.phase.omega)));
    }
  }

  double phase_variance() const { return sigma2 / (1.0 + sigma2); }

  double rms_d3() const {
    const Interior in(n);
    double acc = 0.0;
    for (std::size_t j = in.first; j < in.last; ++j)
      acc += d3[j] * d3[j] / in.count();
    return std::sqrt(acc);
  }

  double optimal_h() const {
    const auto c = continuum_constants(derivative_order);
    return if_optimal_halfwidth(phase_variance(), static_cast<double>(n), rms_d3(), c.m2, c.C_qp).h;
  }

  double predicted_mse(double h) const {
    const auto c = continuum_constants(derivative_order);
    const Interior in(n);
    double acc = 0.0;
    for (std::size_t j = in.first; j < in.last; ++j) {
      const double b = c.C_qp * d3[j] * h * h;
      acc += (b * b + phase_variance() * c.m2 / (static_cast<double>(n) * h * h * h)) / in.count();
    }
    return acc;
  }

  double mse(double h, int reps, std::uint64_t seed) const {
    IFConfig cfg;
    cfg.center_frequency = tone.phase.omega;
    cfg.max_center_iterations = 1;
    cfg.halfwidth = FixedHalfwidth{h};
    double acc = 0.0;
    for (int r = 0; r < reps; ++r) {
      const auto g = generate(tone, n, White{sigma2}, derive_seed(seed, static_cast<std::uint64_t>(r)));
      acc += interior_mse(estimate_if(g.signal, cfg, CovarianceModel{White{sigma2}}).frequency, truth) / reps;
    }
    return acc;
  }
};

// ---------------------------------------------------------------- 5

Outcome halfwidth_scaling() {
  // (0,2): exact finite-sample loss (squared bias of the noiseless smooth plus
  // the kernel's own variance) over a fine halfwidth grid.
  const double sigma2 = 0.01;
  std::vector<double> ns, best;
  for (std::size_t n : {250u, 500u, 1000u, 2000u, 4000u, 8000u}) {
    const auto times = grid_times(n);
    std::vector<double> y(n), truth(n);
    for (std::size_t j = 0; j < n; ++j)
      y[j] = truth[j] = std::sin(2.0 * pi * times[j]);
    const KernelFamily family{{0, 2}};
    std::vector<double> hs, loss;
    for (double h = 0.01; h <= 0.2; h *= 1.02) {
      const auto est = smooth_series(std::span<const double>(y), family, h, std::span<const double>(times));
      const Kernel k = family.make(sample_window(0.5, h, n));
      hs.push_back(h);
      loss.push_back(interior_mse(est, truth) + predicted_variance(k, White{sigma2}, n, h));
    }
    ns.push_back(static_cast<double>(n));
    best.push_back(parabolic_minimum(hs, loss));
  }
  const double s02 = loglog_slope(ns, best);

  // IF pipeline: Monte Carlo loss over halfwidths around the predicted optimum.
  std::vector<double> if_ns, if_best;
  for (std::size_t n : {1024u, 2048u, 4096u, 8192u, 16384u}) {
    const FmScenario sc(n);
    const double h0 = sc.optimal_h();
    std::vector<double> hs, loss;
    for (int k = -4; k <= 4; ++k) {
      const double h = h0 * std::pow(1.25, k);
      hs.push_back(h);
      loss.push_back(sc.mse(h, 24, derive_seed(500 + n, static_cast<std::uint64_t>(k + 4))));
    }
    if_ns.push_back(static_cast<double>(n));
    if_best.push_back(parabolic_minimum(hs, loss));
  }
  const double sif = loglog_slope(if_ns, if_best);
  return {std::abs(s02 + 0.2) <= 0.15 && std::abs(sif + 1.0 / 7.0) <= 0.2,
          "best-h slope (0,2) " + fmt(s02) + " (target -0.2 +/- 0.15); IF best-h slope " + fmt(sif) +
            " (target -0.143 +/- 0.2)"};
}

// ---------------------------------------------------------------- 6

Outcome if_error_scaling() {
  std::vector<double> ns, mse;
  double ratio_4096 = 0.0;
  for (std::size_t n : {1024u, 2048u, 4096u, 8192u, 16384u}) {
    const FmScenario sc(n);
    const double h = sc.optimal_h();
    const double m = sc.mse(h, 60, derive_seed(600, n));
    ns.push_back(static_cast<double>(n));
    mse.push_back(m);
    if (n == 4096)
      ratio_4096 = std::sqrt(m / sc.predicted_mse(h));
  }
  const double slope = loglog_slope(ns, mse);
  return {std::abs(slope + 4.0 / 7.0) <= 0.15 && ratio_4096 <= 2.0 && ratio_4096 >= 0.5,
          "MSE slope " + fmt(slope) + " (target -0.571 +/- 0.15); RMSE/predicted at N=4096 " +
            fmt(ratio_4096) + " (tol factor 2)"};
}

// ---------------------------------------------------------------- 7

Outcome hilbert_covariance() {
  const std::size_t n = 1000000;
  const double sigma2 = 1.0;
  std::mt19937_64 rng(71);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x)
    v = normal(rng);
  const auto z = analytic(x);
  // Standard errors from batch means, which absorb the correlation between products.
  const std::size_t batch = 10000, batches = n / batch;
  double worst = 0.0;
  for (long lag = 0; lag <= 5; ++lag) {
    std::vector<cplx> means(batches);
    for (std::size_t b = 0; b < batches; ++b) {
      cplx acc = 0.0;
      for (std::size_t k = b * batch; k < (b + 1) * batch && k + static_cast<std::size_t>(lag) < n; ++k)
        acc += z[k + static_cast<std::size_t>(lag)] * std::conj(z[k]);
      means[b] = acc / static_cast<double>(batch);
    }
    cplx mean = 0.0;
    for (const auto& m : means)
      mean += m / static_cast<double>(batches);
    double vr = 0.0, vi = 0.0;
    for (const auto& m : means) {
      vr += std::pow((m - mean).real(), 2) / (batches - 1.0);
      vi += std::pow((m - mean).imag(), 2) / (batches - 1.0);
    }
    const cplx expected = 2.0 * sigma2 * cplx(lag == 0 ? 1.0 : 0.0, hilbert_cross_covariance(lag));
    const double zr = std::abs(mean.real() - expected.real()) / std::sqrt(vr / batches);
    const double zi = lag == 0 ? 0.0 : std::abs(mean.imag() - expected.imag()) / std::sqrt(vi / batches);
    worst = std::max({worst, zr, zi});
  }
  const bool xi_ok = std::abs(hilbert_cross_covariance(1) - 2.0 / pi) < 1e-15 &&
                     hilbert_cross_covariance(2) == 0.0;
  return {worst < 3.0 && xi_ok, "largest deviation over lags 0-5 " + fmt(worst) +
                                  " standard errors (tol 3); xi(1) = 2/pi, xi(2) = 0: " +
                                  (xi_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- 8

Outcome multitone_separation() {
  const std::size_t n = 8192;
  const auto nd = static_cast<double>(n);
  ToneSpec a = constant_tone(1.0, 0.25 * pi * nd);
  a.phase.kind = PhaseLaw::Kind::sinusoidal_fm;
  a.phase.beta = 0.5;
  a.phase.rate = 2.0;
  a.amplitude.kind = AmplitudeLaw::Kind::sinusoidal;
  a.amplitude.depth = 0.2;
  a.amplitude.rate = 1.0;
  ToneSpec b = constant_tone(1.0, 0.55 * pi * nd, 0.7);
  b.phase.kind = PhaseLaw::Kind::sinusoidal_fm;
  b.phase.beta = 0.4;
  b.phase.rate = 1.5;
  const double sigma2 = cli::snr_noise_variance(1.0, 20.0);
  const std::vector<ToneSpec> tones{a, b};

  MultitoneConfig cfg;
  cfg.guard_bandwidth = 0.05 * pi * nd;
  cfg.max_outer_iterations = 2;
  cfg.tolerance = 1e-12;
  cfg.line.halfwidth = FixedHalfwidth{0.03};
  cfg.line.max_center_iterations = 2;
  const int reps = 4;
  double joint[2] = {0, 0}, alone[2] = {0, 0};
  bool tapers = false;
  double drop_db = std::numeric_limits<double>::infinity();
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t seed = derive_seed(800, static_cast<std::uint64_t>(r));
    const auto g = generate(tones, n, White{sigma2}, seed);
    const auto res = estimate_multitone(g.signal, {a.phase.omega, b.phase.omega}, cfg, CovarianceModel{White{sigma2}});
    tapers = tapers || res.tapers_engaged;
    for (std::size_t l = 0; l < 2; ++l) {
      joint[l] += interior_mse(res.lines[l].estimate.frequency, g.truth[l].frequency) / reps;
      // Same noise realization with the other line removed.
      std::vector<double> single = g.noise;
      for (std::size_t j = 0; j < n; ++j)
        single[j] += g.truth[l].amplitude[j] * std::cos(g.truth[l].phase[j]);
      IFConfig line = cfg.line;
      line.center_frequency = tones[l].phase.omega;
      const auto e = estimate_if(SampledSignal(single), line, CovarianceModel{White{sigma2}});
      alone[l] += interior_mse(e.frequency, g.truth[l].frequency) / reps;

      if (r == 0) {
        // Interference right-hand side for this line: sine tapers against the
        // minimal-loss kernel at the same halfwidth and curvature.
        const double h = cli::detail::median(res.lines[l].estimate.halfwidth);
        const Window w = sample_window(0.5, h, n);
        const double curv = detail::amplitude_curvature(res.lines[l].estimate, h);
        const Kernel taper = KernelFamily{phasor_order, KernelShape::sinusoidal_taper}.make(w);
        const Kernel ml = design_minimal_loss_kernel(phasor_order, w, White{sigma2}, curv);
        const double sep = tones[l].phase.omega - tones[1 - l].phase.omega;
        const double rt = interference_spectrum(taper, sep, cfg.guard_bandwidth, nd);
        const double rm = interference_spectrum(ml, sep, cfg.guard_bandwidth, nd);
        drop_db = std::min(drop_db, 20.0 * std::log10(rm / rt));
      }
    }
  }
  const double r0 = std::sqrt(joint[0] / alone[0]), r1 = std::sqrt(joint[1] / alone[1]);
  return {r0 <= 3.0 && r1 <= 3.0 && drop_db >= 20.0,
          "RMSE ratio to isolated line " + fmt(r0) + ", " + fmt(r1) + " (tol 3); interference bound drop with tapers " +
            fmt(drop_db) + " dB (tol 20 dB); tapers engaged: " + (tapers ? "yes" : "no")};
}

// ---------------------------------------------------------------- 9

Outcome adaptive_efficiency() {
  const double sigma2 = 0.01;
  std::vector<double> ratios;
  std::string parts;
  const auto c = continuum_constants({0, 2});
  for (std::size_t n : {500u, 2000u, 8000u}) {
    const auto nd = static_cast<double>(n);
    const auto times = grid_times(n);
    std::vector<double> truth(n), oracle_h(n);
    for (std::size_t j = 0; j < n; ++j) {
      truth[j] = std::exp(times[j]);
      oracle_h[j] = optimal_halfwidth({0, 2}, sigma2, truth[j], nd, c.m2, c.C_qp).h;
    }
    const int reps = n == 8000 ? 60 : 200;
    double plug = 0.0, oracle = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::mt19937_64 rng(derive_seed(900 + n, static_cast<std::uint64_t>(r)));
      auto y = generate_noise(White{sigma2}, n, rng);
      for (std::size_t j = 0; j < n; ++j)
        y[j] += truth[j];
      const auto est = multistage_estimate(std::span<const double>(y), 0, std::nullopt,
                                           CovarianceModel{White{sigma2}});
      plug += interior_mse(est.estimate, truth) / reps;
      const auto ref = smooth_series(std::span<const double>(y), KernelFamily{{0, 2}},
                                     std::span<const double>(oracle_h), std::span<const double>(times));
      oracle += interior_mse(ref, truth) / reps;
    }
    ratios.push_back(plug / oracle);
    parts += (parts.empty() ? "" : ", ") + std::string("N=") + std::to_string(n) + " " + fmt(plug / oracle);
  }
  const bool within = ratios[1] <= 2.0;
  const bool trend = ratios[1] <= ratios[0] && ratios[2] <= ratios[1];
  return {within && trend, "plug-in/oracle MSE " + parts + " (N=2000 tol 2, non-increasing: " +
                             (trend ? "yes" : "no") + ")"};
}

// ---------------------------------------------------------------- 10

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("kif_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = KIF_CLI;
  const auto run = [&](const std::string& args, const fs::path& dir) {
    fs::create_directories(dir);
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " > stdout.txt 2> stderr.txt";
    return std::system(cmd.c_str());
  };
  const auto signal = (root / "signal.csv").string();
  const auto two = (root / "two.csv").string();
  std::ofstream(root / "scenario.json")
    << R"({"schema_version": 1, "kind": "if", "seed": 5, "n": [512, 1024], "replications": 3,
          "tone": "fm,amplitude=1,omega=400,beta=0.5,rate=2", "snr_db": [20, 30], "halfwidths": [0.05, 0.08]})";
  const std::vector<std::pair<std::string, std::string>> commands{
    {"generate", "generate --n 2048 --seed 9 --tone fm,amplitude=1,omega=1600,beta=0.5,rate=2 --snr-db 20 --out g.csv"},
    {"design-kernel", "design-kernel --q 1 --halfwidth 0.03 --n 500 --t 0.01 --format json --out k.json"},
    {"smooth", "smooth --in " + signal + " --auto --out s.csv"},
    {"estimate-if", "estimate-if --in " + signal + " --omega0 1600 --auto --out if.csv"},
    {"multitone", "multitone --in " + two + " --freqs 1600,4000 --guard 300 --halfwidth 0.03 --out-prefix mt"},
    {"benchmark", "benchmark --scenario " + (root / "scenario.json").string() + " --out-dir bench --jobs 1"},
  };
  if (run("generate --n 2048 --seed 3 --tone fm,amplitude=1,omega=1600,beta=0.5,rate=2 --snr-db 20 --out signal.csv",
          root) != 0 ||
      run("generate --n 2048 --seed 4 --tone tone,amplitude=1,omega=1600 --tone tone,amplitude=0.7,omega=4000 "
          "--noise-variance 0.005 --out two.csv",
          root) != 0)
    return {false, "could not generate inputs with " + cli};

  std::string bad;
  std::size_t files = 0;
  for (const auto& [name, args] : commands) {
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    std::string second = args;
    if (name == "benchmark")
      second.replace(second.find("--jobs 1"), 8, "--jobs 3");
    if (run(args, a) != 0 || run(second, b) != 0) {
      bad += " " + name + "(exit)";
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file() || entry.path().filename() == "stderr.txt")
        continue;
      const auto rel = fs::relative(entry.path(), a);
      ++files;
      if (read_file(entry.path()) != read_file(b / rel))
        bad += " " + name + ":" + rel.string();
    }
  }
  fs::remove_all(root);
  return {bad.empty(), "6 subcommands run twice, " + std::to_string(files) + " output files compared" +
                         (bad.empty() ? ", all identical" : "; differing:" + bad)};
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::string(argv[1]) == "--only")
    only = std::atoi(argv[2]);
  const std::vector<Criterion> criteria{
    {1, "moment conditions", 10, moment_conditions},
    {2, "shape recovery", 1, shape_recovery},
    {3, "variance law", 60, variance_law},
    {4, "bias law", 10, bias_law},
    {5, "halfwidth scaling", 600, halfwidth_scaling},
    {6, "IF error scaling", 600, if_error_scaling},
    {7, "Hilbert covariance", 30, hilbert_covariance},
    {8, "multitone separation", 300, multitone_separation},
    {9, "adaptive efficiency", 600, adaptive_efficiency},
    {10, "CLI determinism", 600, cli_determinism},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (only && c.id != only)
      continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail
              << "; runtime " << fmt(secs) << " s (limit " << fmt(c.budget_s) << " s"
              << (in_time ? "" : ", exceeded") << ")" << std::endl;
  }
  return all ? 0 : 1;
}
