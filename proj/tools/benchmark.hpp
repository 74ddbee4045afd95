#pragma once

#include "cli_support.hpp"

#include <kif/kif.hpp>

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace kif::cli {

/// "fm,amplitude=1,omega=800,beta=0.5,rate=2"; kinds tone, chirp, fm.
inline ToneSpec parse_tone(const std::string& text) {
  std::stringstream in(text);
  std::string kind, field;
  std::getline(in, kind, ',');
  ToneSpec s;
  if (kind == "chirp")
    s.phase.kind = PhaseLaw::Kind::linear_chirp;
  else if (kind == "fm")
    s.phase.kind = PhaseLaw::Kind::sinusoidal_fm;
  else if (kind != "tone")
    throw ConfigError("tone '" + text + "': kind must be tone, chirp or fm");
  bool has_omega = false;
  while (std::getline(in, field, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos)
      throw ConfigError("tone '" + text + "': expected key=value, got '" + field + "'");
    const std::string key = field.substr(0, eq);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(field.substr(eq + 1), &used);
      if (used != field.size() - eq - 1)
        throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError("tone '" + text + "': " + key + " is not a number");
    }
    if (!std::isfinite(v))
      throw ConfigError("tone '" + text + "': " + key + " must be finite");
    if (key == "amplitude")
      s.amplitude.a0 = v;
    else if (key == "omega")
      s.phase.omega = v, has_omega = true;
    else if (key == "phi0")
      s.phase.phi0 = v;
    else if (key == "beta")
      s.phase.beta = v;
    else if (key == "rate")
      s.phase.rate = v;
    else if (key == "theta")
      s.phase.theta = v;
    else if (key == "slope")
      s.amplitude.kind = AmplitudeLaw::Kind::linear, s.amplitude.slope = v;
    else if (key == "depth")
      s.amplitude.kind = AmplitudeLaw::Kind::sinusoidal, s.amplitude.depth = v;
    else if (key == "amplitude_rate")
      s.amplitude.rate = v;
    else
      throw ConfigError("tone '" + text + "': unknown key " + key);
  }
  if (!has_omega)
    throw ConfigError("tone '" + text + "': omega is required");
  return s;
}

//! Noise variance per sample giving the stated SNR for a tone of amplitude A: A^2 / (2 sigma^2).
inline double snr_noise_variance(double amplitude, double snr_db) {
  return amplitude * amplitude / (2.0 * std::pow(10.0, snr_db / 10.0));
}

struct Scenario {
  enum class Kind { smoothing, instantaneous_frequency } kind = Kind::smoothing;
  std::uint64_t seed = 0;
  std::vector<std::size_t> n;
  std::vector<double> noise; ///< noise variances (smoothing) or SNRs in dB (IF)
  int replications = 1;
  double interior = 0.1;
  std::string truth = "sin";
  std::vector<double> coefficients;
  KernelOrder order{0, 2};
  ToneSpec tone;
  std::string halfwidth = "oracle"; ///< oracle | auto | a number
  std::vector<double> sweep;
  bool known_noise = true;
};

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key))
    throw ConfigError("$." + key + ": required field is missing");
  return j[key];
}

template <class T> T number(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number())
    throw ConfigError(path + ": expected a number");
  if constexpr (std::is_integral_v<T>)
    if (!v.is_number_integer())
      throw ConfigError(path + ": expected an integer");
  return v.get<T>();
}

template <class T> std::vector<T> numbers(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array() || v.empty())
    throw ConfigError(path + ": expected a non-empty array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(number<T>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

} // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  using detail::field;
  require_schema_version(j, "scenario");
  static const std::vector<std::string> known{
    "schema_version", "kind", "seed", "n", "replications", "interior", "truth", "coefficients",
    "order", "noise_variance", "tone", "snr_db", "halfwidth", "halfwidths", "known_noise"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("$." + key + ": unknown field");

  Scenario s;
  const auto& kind = field(j, "kind");
  if (kind == "smoothing")
    s.kind = Scenario::Kind::smoothing;
  else if (kind == "if")
    s.kind = Scenario::Kind::instantaneous_frequency;
  else
    throw ConfigError("$.kind: expected \"smoothing\" or \"if\"");
  const auto seed = detail::number<long long>(field(j, "seed"), "$.seed");
  if (seed < 0)
    throw ConfigError("$.seed: must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  for (long long v : detail::numbers<long long>(field(j, "n"), "$.n")) {
    if (v < 16)
      throw ConfigError("$.n: every N must be >= 16");
    s.n.push_back(static_cast<std::size_t>(v));
  }
  s.replications = detail::number<int>(field(j, "replications"), "$.replications");
  if (s.replications < 1)
    throw ConfigError("$.replications: must be >= 1");
  if (j.contains("interior")) {
    s.interior = detail::number<double>(j["interior"], "$.interior");
    if (!(s.interior >= 0.0 && s.interior < 0.45))
      throw ConfigError("$.interior: must lie in [0, 0.45)");
  }
  if (j.contains("known_noise")) {
    if (!j["known_noise"].is_boolean())
      throw ConfigError("$.known_noise: expected a boolean");
    s.known_noise = j["known_noise"].get<bool>();
  }
  if (j.contains("halfwidth")) {
    const auto& h = j["halfwidth"];
    if (h.is_number()) {
      if (!(h.get<double>() > 0.0))
        throw ConfigError("$.halfwidth: must be > 0");
      s.halfwidth = format_number(h.get<double>());
    } else if (h == "oracle" || h == "auto") {
      s.halfwidth = h.get<std::string>();
    } else {
      throw ConfigError("$.halfwidth: expected \"oracle\", \"auto\" or a number");
    }
  }
  if (j.contains("halfwidths")) {
    s.sweep = detail::numbers<double>(j["halfwidths"], "$.halfwidths");
    for (double h : s.sweep)
      if (!(h > 0.0 && h <= 0.5))
        throw ConfigError("$.halfwidths: every halfwidth must lie in (0, 0.5]");
  }

  if (s.kind == Scenario::Kind::smoothing) {
    if (j.contains("truth")) {
      if (!j["truth"].is_string())
        throw ConfigError("$.truth: expected a string");
      s.truth = j["truth"].get<std::string>();
      if (s.truth != "sin" && s.truth != "exp" && s.truth != "poly")
        throw ConfigError("$.truth: expected \"sin\", \"exp\" or \"poly\"");
    }
    if (s.truth == "poly")
      s.coefficients = detail::numbers<double>(field(j, "coefficients"), "$.coefficients");
    if (j.contains("order")) {
      const auto o = detail::numbers<int>(j["order"], "$.order");
      if (o.size() != 2)
        throw ConfigError("$.order: expected [q, p]");
      try {
        s.order = KernelOrder(o[0], o[1]);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("$.order: ") + e.what());
      }
    }
    s.noise = j.contains("noise_variance")
                ? detail::numbers<double>(j["noise_variance"], "$.noise_variance")
                : std::vector<double>{0.01};
    for (double v : s.noise)
      if (!(v >= 0.0))
        throw ConfigError("$.noise_variance: must be >= 0");
    if (s.halfwidth == "auto" && s.order.p != s.order.q + 2)
      throw ConfigError("$.halfwidth: auto needs order [q, q+2] with q in {0, 1}");
    if (s.halfwidth == "auto" && s.order.q > 1)
      throw ConfigError("$.halfwidth: auto needs order [q, q+2] with q in {0, 1}");
    if (s.halfwidth == "oracle" && s.truth == "poly" &&
        static_cast<int>(s.coefficients.size()) <= s.order.p)
      throw ConfigError("$.halfwidth: oracle needs a nonzero p-th derivative; give a number");
  } else {
    const auto& tone = field(j, "tone");
    if (!tone.is_string())
      throw ConfigError("$.tone: expected a tone string such as \"fm,amplitude=1,omega=800\"");
    try {
      s.tone = parse_tone(tone.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("$.tone: ") + e.what());
    }
    s.noise = j.contains("snr_db") ? detail::numbers<double>(j["snr_db"], "$.snr_db")
                                   : std::vector<double>{20.0};
  }
  return s;
}

//! Truth g^(k)(t) for the smoothing scenarios.
inline double smoothing_truth(const Scenario& s, double t, int k) {
  if (s.truth == "sin")
    return std::pow(2.0 * pi, k) * std::sin(2.0 * pi * t + k * pi / 2.0);
  if (s.truth == "exp")
    return std::exp(t);
  double acc = 0.0;
  for (std::size_t i = static_cast<std::size_t>(k); i < s.coefficients.size(); ++i)
    acc += s.coefficients[i] * factorial(static_cast<int>(i)) / factorial(static_cast<int>(i) - k) *
           std::pow(t, static_cast<double>(i) - k);
  return acc;
}

struct CellResult {
  std::size_t n = 0;
  double noise = 0.0; ///< variance or SNR (dB), as in the scenario
  std::string mode;
  double halfwidth = 0.0; ///< representative halfwidth of the mode (median for pointwise modes)
  double mse = 0.0;
  double predicted_mse = 0.0;
  std::vector<double> sweep_h, sweep_mse, sweep_predicted;
  double best_h = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = schema_version;
    j["n"] = n;
    j["noise"] = noise;
    j["mode"] = mode;
    j["halfwidth"] = halfwidth;
    j["mse"] = mse;
    j["rmse"] = std::sqrt(mse);
    j["predicted_mse"] = predicted_mse;
    j["predicted_rmse"] = std::sqrt(predicted_mse);
    if (!sweep_h.empty()) {
      j["sweep"] = nlohmann::json::array();
      for (std::size_t i = 0; i < sweep_h.size(); ++i)
        j["sweep"].push_back({{"h", sweep_h[i]},
                              {"mse", sweep_mse[i]},
                              {"predicted_mse", sweep_predicted[i]}});
      j["best_h"] = best_h;
    }
    return j;
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

struct Interior {
  std::size_t first = 0, last = 0;
  Interior(std::size_t n, double fraction)
    : first(static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)))),
      last(n - first) {}
};

// One estimator evaluated over the replications: returns the MSE over the interior.
template <class Estimate>
double replicate(const Scenario& s, std::size_t n, std::uint64_t cell_seed,
                 const std::function<std::vector<double>(std::size_t, std::uint64_t)>& data,
                 const std::vector<double>& truth, Estimate&& estimate) {
  const Interior in(n, s.interior);
  double acc = 0.0;
  for (int r = 0; r < s.replications; ++r) {
    const auto y = data(n, derive_seed(cell_seed, static_cast<std::uint64_t>(r)));
    const std::vector<double> est = estimate(y);
    for (std::size_t j = in.first; j < in.last; ++j)
      acc += (est[j] - truth[j]) * (est[j] - truth[j]);
  }
  return acc / (static_cast<double>(s.replications) * static_cast<double>(in.last - in.first));
}

inline CellResult smoothing_cell(const Scenario& s, std::size_t n, double sigma2,
                                 std::uint64_t cell_seed) {
  const auto nd = static_cast<double>(n);
  const auto times = grid_times(n);
  const Interior in(n, s.interior);
  std::vector<double> truth(n), gp(n);
  for (std::size_t j = 0; j < n; ++j) {
    truth[j] = smoothing_truth(s, times[j], s.order.q);
    gp[j] = smoothing_truth(s, times[j], s.order.p);
  }
  const auto data = [&](std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto y = sigma2 > 0.0 ? generate_noise(White{sigma2}, m, rng) : std::vector<double>(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      y[j] += smoothing_truth(s, times[j], 0);
    return y;
  };
  const KernelFamily family{s.order};
  const auto c = continuum_constants(s.order);
  const auto predicted = [&](double h) {
    double acc = 0.0;
    for (std::size_t j = in.first; j < in.last; ++j) {
      const double b = c.C_qp * gp[j] * int_pow(h, s.order.p - s.order.q);
      acc += b * b + sigma2 * c.m2 / (nd * int_pow(h, 2 * s.order.q + 1));
    }
    return acc / static_cast<double>(in.last - in.first);
  };
  const auto fixed = [&](double h) {
    return [&, h](const std::vector<double>& y) {
      return smooth_series(std::span<const double>(y), family, h, std::span<const double>(times));
    };
  };

  CellResult cell;
  cell.n = n;
  cell.noise = sigma2;
  cell.mode = s.halfwidth;
  if (s.halfwidth == "auto") {
    std::vector<double> hs;
    cell.mse = replicate(s, n, cell_seed, data, truth, [&](const std::vector<double>& y) {
      const auto noise = s.known_noise ? std::optional<CovarianceModel>(White{sigma2}) : std::nullopt;
      auto r = multistage_estimate(std::span<const double>(y), s.order.q, std::nullopt, noise);
      if (hs.empty())
        hs = r.halfwidth;
      return r.estimate;
    });
    cell.halfwidth = median(hs);
    cell.predicted_mse = predicted(cell.halfwidth);
  } else {
    double h = 0.0;
    if (s.halfwidth == "oracle") {
      double g2 = 0.0;
      for (std::size_t j = in.first; j < in.last; ++j)
        g2 += gp[j] * gp[j] / static_cast<double>(in.last - in.first);
      h = optimal_halfwidth(s.order, sigma2, std::sqrt(g2), nd, c.m2, c.C_qp).h;
    } else {
      h = std::stod(s.halfwidth);
    }
    cell.halfwidth = h;
    cell.mse = replicate(s, n, cell_seed, data, truth, fixed(h));
    cell.predicted_mse = predicted(h);
  }
  for (double h : s.sweep) {
    cell.sweep_h.push_back(h);
    cell.sweep_mse.push_back(replicate(s, n, cell_seed, data, truth, fixed(h)));
    cell.sweep_predicted.push_back(predicted(h));
  }
  return cell;
}

inline CellResult if_cell(const Scenario& s, std::size_t n, double snr_db, std::uint64_t cell_seed) {
  const auto nd = static_cast<double>(n);
  const auto times = grid_times(n);
  const Interior in(n, s.interior);
  const double sigma2 = snr_noise_variance(s.tone.amplitude.a0, snr_db);
  // Demodulating at the carrier: |d^3 exp(i phi~)| is what the estimator's bias sees.
  const double center = s.tone.phase.omega;
  std::vector<double> truth(n), d3(n);
  for (std::size_t j = 0; j < n; ++j) {
    truth[j] = s.tone.frequency(times[j]);
    d3[j] = std::abs(s.tone.demodulated_phasor_derivative(times[j], 3, center));
  }
  const auto data = [&](std::size_t m, std::uint64_t seed) {
    return generate(s.tone, m, White{sigma2}, seed).signal.values();
  };
  const auto c = continuum_constants(derivative_order);
  std::vector<double> phase_var(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = s.tone.amplitude(times[j]);
    phase_var[j] = sigma2 / (a * a + sigma2);
  }
  const auto predicted_at = [&](const std::function<double(std::size_t)>& h) {
    double acc = 0.0;
    for (std::size_t j = in.first; j < in.last; ++j) {
      const double b = c.C_qp * d3[j] * h(j) * h(j);
      acc += b * b + phase_var[j] * c.m2 / (nd * int_pow(h(j), 3));
    }
    return acc / static_cast<double>(in.last - in.first);
  };
  const std::optional<CovarianceModel> noise =
    s.known_noise ? std::optional<CovarianceModel>(White{sigma2}) : std::nullopt;
  const auto run = [&](HalfwidthMode mode, std::vector<double>* hs) {
    return [&, mode, hs](const std::vector<double>& y) {
      IFConfig cfg;
      cfg.center_frequency = center;
      cfg.halfwidth = mode;
      auto e = estimate_if(SampledSignal(y), cfg, noise);
      if (hs && hs->empty())
        *hs = e.halfwidth;
      return e.frequency;
    };
  };

  CellResult cell;
  cell.n = n;
  cell.noise = snr_db;
  cell.mode = s.halfwidth;
  std::vector<double> hs;
  if (s.halfwidth == "oracle")
    cell.mse = replicate(s, n, cell_seed, data, truth, run(OptimalHalfwidth{d3}, &hs));
  else if (s.halfwidth == "auto")
    cell.mse = replicate(s, n, cell_seed, data, truth, run(AdaptiveHalfwidth{}, &hs));
  else
    cell.mse = replicate(s, n, cell_seed, data, truth,
                         run(FixedHalfwidth{std::stod(s.halfwidth)}, &hs));
  cell.halfwidth = median(hs);
  cell.predicted_mse = predicted_at([&](std::size_t j) { return hs[j]; });
  for (double h : s.sweep) {
    cell.sweep_h.push_back(h);
    cell.sweep_mse.push_back(replicate(s, n, cell_seed, data, truth, run(FixedHalfwidth{h}, nullptr)));
    cell.sweep_predicted.push_back(predicted_at([h](std::size_t) { return h; }));
  }
  return cell;
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / static_cast<double>(x.size());
    my += std::log(y[i]) / static_cast<double>(y.size());
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

} // namespace detail

inline CellResult run_cell(const Scenario& s, std::size_t n_index, std::size_t noise_index) {
  const std::uint64_t cell_seed =
    derive_seed(s.seed, static_cast<std::uint64_t>(n_index * s.noise.size() + noise_index));
  CellResult cell = s.kind == Scenario::Kind::smoothing
                      ? detail::smoothing_cell(s, s.n[n_index], s.noise[noise_index], cell_seed)
                      : detail::if_cell(s, s.n[n_index], s.noise[noise_index], cell_seed);
  if (!cell.sweep_h.empty()) {
    const auto best = std::min_element(cell.sweep_mse.begin(), cell.sweep_mse.end());
    cell.best_h = cell.sweep_h[static_cast<std::size_t>(best - cell.sweep_mse.begin())];
  }
  return cell;
}

//! Runs every (N, noise) cell on up to `jobs` threads, writing each cell's
//! JSON as soon as it finishes. Results are independent of `jobs`.
inline nlohmann::json run_benchmark(const Scenario& s, const nlohmann::json& scenario_json,
                                    unsigned jobs, const std::string& out_dir) {
  const std::size_t cells = s.n.size() * s.noise.size();
  std::vector<CellResult> results(cells);
  std::vector<std::exception_ptr> errors(cells);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      try {
        results[i] = run_cell(s, i / s.noise.size(), i % s.noise.size());
        if (!out_dir.empty())
          write_atomically(std::filesystem::path(out_dir) / ("cell_" + std::to_string(i) + ".json"),
                           to_json(results[i].to_json()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells)));
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back(worker);
  for (auto& t : pool)
    t.join();
  for (const auto& e : errors)
    if (e)
      std::rethrow_exception(e);

  nlohmann::json report;
  report["schema_version"] = schema_version;
  report["scenario"] = scenario_json;
  report["cells"] = nlohmann::json::array();
  for (const auto& c : results)
    report["cells"].push_back(c.to_json());

  const int q = s.kind == Scenario::Kind::smoothing ? s.order.q : 1;
  const int p = s.kind == Scenario::Kind::smoothing ? s.order.p : 3;
  report["predicted_slopes"] = {{"mse", -2.0 * (p - q) / (2.0 * p + 1.0)},
                                {"rmse", -1.0 * (p - q) / (2.0 * p + 1.0)},
                                {"best_h", -1.0 / (2.0 * p + 1.0)}};
  report["slopes"] = nlohmann::json::array();
  if (s.n.size() >= 2)
    for (std::size_t k = 0; k < s.noise.size(); ++k) {
      std::vector<double> ns, mse, best;
      for (std::size_t i = 0; i < s.n.size(); ++i) {
        const auto& c = results[i * s.noise.size() + k];
        ns.push_back(static_cast<double>(c.n));
        mse.push_back(c.mse);
        best.push_back(c.best_h);
      }
      nlohmann::json slope{{"noise", s.noise[k]}};
      if (std::all_of(mse.begin(), mse.end(), [](double v) { return v > 0.0; })) {
        slope["mse"] = detail::loglog_slope(ns, mse);
        slope["rmse"] = 0.5 * detail::loglog_slope(ns, mse);
      }
      if (!s.sweep.empty())
        slope["best_h"] = detail::loglog_slope(ns, best);
      report["slopes"].push_back(slope);
    }
  return report;
}

inline Table cells_table(const nlohmann::json& report) {
  Table t{{"n", "noise", "halfwidth", "mse", "predicted_mse"}, std::vector<std::vector<double>>(5)};
  for (const auto& c : report["cells"]) {
    const auto add = [&](double h, double mse, double pred) {
      t.columns[0].push_back(c["n"].get<double>());
      t.columns[1].push_back(c["noise"].get<double>());
      t.columns[2].push_back(h);
      t.columns[3].push_back(mse);
      t.columns[4].push_back(pred);
    };
    add(c["halfwidth"].get<double>(), c["mse"].get<double>(), c["predicted_mse"].get<double>());
    if (c.contains("sweep"))
      for (const auto& row : c["sweep"])
        add(row["h"].get<double>(), row["mse"].get<double>(), row["predicted_mse"].get<double>());
  }
  return t;
}

} // namespace kif::cli
