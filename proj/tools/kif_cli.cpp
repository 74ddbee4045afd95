#include "benchmark.hpp"
#include "cli_support.hpp"

#include <kif/kif.hpp>

#include <CLI11.hpp>

#include <iostream>

using namespace kif;
using namespace kif::cli;

namespace {

constexpr const char* units_note =
  "Time in the input CSV may use any uniform grid; frequencies, halfwidths and derivatives are "
  "expressed in units of that time column (rad per time unit). For t_j = j/N this is normalized "
  "time on [0,1).";

KernelShape parse_shape(const std::string& s) {
  if (s == "legendre")
    return KernelShape::legendre;
  if (s == "minimal-variance")
    return KernelShape::minimal_variance;
  if (s == "taper")
    return KernelShape::sinusoidal_taper;
  throw ConfigError("unknown kernel shape " + s);
}

const std::vector<std::string> shapes{"legendre", "minimal-variance", "taper"};

//! Maps the input time column onto t_j = j/N: one user time unit is `scale` normalized units.
struct Grid {
  std::size_t n = 0;
  double scale = 1.0;
  std::vector<double> t;
};

Grid grid_of(const Series& s) {
  Grid g;
  g.n = s.t.size();
  const double dt = (s.t.back() - s.t.front()) / static_cast<double>(g.n - 1);
  g.scale = 1.0 / (static_cast<double>(g.n) * dt);
  g.t = s.t;
  return g;
}

std::optional<ScaleAnsatz> ansatz_of(const std::vector<double>& v) {
  if (v.empty())
    return std::nullopt;
  if (v.size() != 2)
    throw ConfigError("--ansatz expects A,tau");
  ScaleAnsatz a{v[0], v[1]};
  a.validate();
  return a;
}

PlugInOptions plugin_options(const std::optional<double>& floor) {
  PlugInOptions o;
  if (floor) {
    if (!(*floor >= 0.0))
      throw ConfigError("--curvature-floor must be >= 0");
    o.curvature_floor = *floor;
  }
  return o;
}

// ---------------------------------------------------------------- design-kernel

struct DesignArgs {
  int q = 0;
  std::optional<int> p;
  double halfwidth = 0.1;
  std::size_t n = 200;
  double t = 0.5;
  std::string shape = "legendre";
  double curvature = 0.0;
  double noise_variance = 1.0;
  std::string format = "csv";
  std::string out = "-";
};

void add_design(CLI::App& app, DesignArgs& a) {
  auto* sub = app.add_subcommand("design-kernel", "Design a (q,p) kernel on the sample grid");
  sub->add_option("--q", a.q, "Derivative order q")->capture_default_str();
  sub->add_option("--p", a.p, "First free moment p (default q+2)");
  sub->add_option("--halfwidth", a.halfwidth, "Halfwidth h in normalized time")->capture_default_str();
  sub->add_option("--n", a.n, "Number of samples N")->capture_default_str();
  sub->add_option("--t", a.t, "Evaluation point in [0,1]")->capture_default_str();
  sub->add_option("--shape", a.shape, "legendre | minimal-variance | taper | minimal-loss")
    ->check(CLI::IsMember({"legendre", "minimal-variance", "taper", "minimal-loss"}))
    ->capture_default_str();
  sub->add_option("--curvature", a.curvature, "|g^(p)| for minimal-loss designs")->capture_default_str();
  sub->add_option("--noise-variance", a.noise_variance, "White noise variance for minimal-loss designs")
    ->capture_default_str();
  sub->add_option("--format", a.format, "csv | json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sub->add_option("--out", a.out, "Output path, - for stdout")->capture_default_str();
}

void run_design(const DesignArgs& a) {
  require_writable_target(a.out);
  const KernelOrder order(a.q, a.p.value_or(a.q + 2));
  if (a.n < 2)
    throw ConfigError("--n must be >= 2");
  if (!(a.t >= 0.0 && a.t <= 1.0))
    throw ConfigError("--t must lie in [0,1]");
  const Window w = sample_window(a.t, a.halfwidth, a.n);
  const Kernel k = a.shape == "minimal-loss"
                     ? design_minimal_loss_kernel(order, w, White{a.noise_variance}, a.curvature)
                     : KernelFamily{order, parse_shape(a.shape)}.make(w);
  if (a.format == "csv") {
    write_atomically(a.out, to_csv({{"offset", "weight"}, {k.offsets, k.weights}}));
    return;
  }
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["q"] = order.q;
  j["p"] = order.p;
  j["h"] = a.halfwidth;
  j["n"] = a.n;
  j["t"] = a.t;
  j["shape"] = a.shape;
  j["truncated"] = w.truncated;
  j["offsets"] = k.offsets;
  j["weights"] = k.weights;
  j["C_qp"] = k.C_qp;
  j["m2"] = k.m2;
  write_atomically(a.out, to_json(j));
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tones;
  std::optional<double> noise_variance;
  std::optional<double> snr_db;
  std::string out;
  std::string truth;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* sub = app.add_subcommand("generate", "Synthesize tones in Gaussian noise on t_j = j/N");
  sub->add_option("--n", a.n, "Number of samples N")->required();
  sub->add_option("--seed", a.seed, "Random seed")->required();
  sub->add_option("--tone", a.tones,
                  "Tone as kind,key=value,...; kind tone|chirp|fm; keys amplitude, omega (rad/unit "
                  "time), phi0, beta, rate, theta, slope, depth, amplitude_rate. Repeatable.")
    ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  auto* nv = sub->add_option("--noise-variance", a.noise_variance, "White noise variance");
  sub->add_option("--snr-db", a.snr_db, "SNR of the first tone, A^2/(2 sigma^2), in dB")->excludes(nv);
  sub->add_option("--out", a.out, "Output CSV (t,y)")->required();
  sub->add_option("--truth", a.truth, "Ground-truth JSON sidecar (default: output path with .json)");
}

void run_generate(GenerateArgs a) {
  if (a.truth.empty())
    a.truth = std::filesystem::path(a.out).replace_extension(".json").string();
  require_writable_target(a.out);
  require_writable_target(a.truth);
  if (a.out == "-" || a.truth == "-")
    throw ConfigError("generate writes files; - is not accepted");
  if (a.n < 16)
    throw ConfigError("--n must be >= 16");
  std::vector<ToneSpec> tones;
  for (const auto& t : a.tones)
    tones.push_back(parse_tone(t));
  double sigma2 = a.noise_variance.value_or(0.0);
  if (a.snr_db) {
    if (tones.empty())
      throw ConfigError("--snr-db needs at least one --tone");
    sigma2 = snr_noise_variance(tones.front().amplitude.a0, *a.snr_db);
  }
  if (!(sigma2 >= 0.0))
    throw ConfigError("noise variance must be >= 0");
  const auto g = generate(tones, a.n, White{sigma2}, *a.seed);
  write_atomically(a.out, to_csv({{"t", "y"}, {grid_times(a.n), g.signal.values()}}));

  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["n"] = a.n;
  j["seed"] = *a.seed;
  j["noise_variance"] = sigma2;
  j["tones"] = nlohmann::json::array();
  for (std::size_t l = 0; l < tones.size(); ++l)
    j["tones"].push_back({{"spec", a.tones[l]},
                          {"frequency", g.truth[l].frequency},
                          {"amplitude", g.truth[l].amplitude}});
  write_atomically(a.truth, to_json(j));
}

// ---------------------------------------------------------------- smooth

struct SmoothArgs {
  std::string in, out = "-";
  int q = 0;
  std::optional<int> p;
  std::optional<double> halfwidth;
  bool automatic = false;
  std::string shape = "legendre";
  std::optional<double> noise_variance;
  std::vector<double> ansatz;
  std::optional<double> curvature_floor;
};

void add_smooth(CLI::App& app, SmoothArgs& a) {
  auto* sub = app.add_subcommand("smooth", std::string("Kernel estimate of g^(q) from (t,y). ") + units_note);
  sub->add_option("--in", a.in, "Input CSV (t,y)")->required();
  sub->add_option("--out", a.out, "Output CSV, - for stdout")->capture_default_str();
  sub->add_option("--q", a.q, "Derivative order q")->capture_default_str();
  sub->add_option("--p", a.p, "First free moment p (default q+2)");
  auto* h = sub->add_option("--halfwidth", a.halfwidth, "Fixed halfwidth");
  sub->add_flag("--auto", a.automatic, "Plug-in multistage halfwidths (q in {0,1}, p = q+2)")->excludes(h);
  sub->add_option("--shape", a.shape, "legendre | minimal-variance | taper")
    ->check(CLI::IsMember(shapes))
    ->capture_default_str();
  sub->add_option("--noise-variance", a.noise_variance,
                  "White noise variance (default: first-difference estimate)");
  sub->add_option("--ansatz", a.ansatz, "Characteristic scale A,tau for the pilot")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub->add_option("--curvature-floor", a.curvature_floor, "Floor on |g^(p)|^2 replacing robust smoothing");
}

void run_smooth(const SmoothArgs& a) {
  require_readable(a.in);
  require_writable_target(a.out);
  if (!a.halfwidth && !a.automatic)
    throw ConfigError("give --halfwidth or --auto");
  const Series s = read_series(a.in);
  const Grid g = grid_of(s);
  const KernelOrder order(a.q, a.p.value_or(a.q + 2));
  if (a.automatic && (order.q > 1 || order.p != order.q + 2))
    throw ConfigError("--auto supports q in {0,1} with p = q+2");
  const std::span<const double> y(s.y);
  const auto n = static_cast<double>(g.n);
  const double sigma2 = a.noise_variance ? *a.noise_variance : estimate_noise_variance(y);
  std::optional<ScaleAnsatz> ansatz = ansatz_of(a.ansatz);
  if (!ansatz) {
    double mean = 0.0, var = 0.0;
    for (double v : s.y)
      mean += v / n;
    for (double v : s.y)
      var += (v - mean) * (v - mean) / (n - 1.0);
    ansatz = ScaleAnsatz{var > 0.0 ? std::sqrt(var) : 1.0, 0.25};
  }
  const auto options = plugin_options(a.curvature_floor);
  const KernelFamily family{order, parse_shape(a.shape)};
  const auto times = grid_times(g.n);

  std::vector<double> estimate, halfwidths, pilot;
  if (a.automatic) {
    auto r = multistage_estimate(y, order.q, ansatz, CovarianceModel{White{sigma2}}, options);
    if (family.interior != KernelShape::legendre)
      r.estimate = smooth_series(y, family, std::span<const double>(r.halfwidth),
                                 std::span<const double>(times));
    estimate = std::move(r.estimate);
    halfwidths = std::move(r.halfwidth);
    pilot = std::move(r.plugin.pilot);
  } else {
    const double h = *a.halfwidth * g.scale;
    estimate = smooth_series(y, family, h, std::span<const double>(times));
    halfwidths.assign(g.n, h);
    pilot = plugin_halfwidths(y, order, sigma2, *ansatz, options).pilot;
  }

  std::vector<double> bias2(g.n), variance(g.n);
  const double unit = std::pow(g.scale, order.q);
  for (std::size_t j = 0; j < g.n; ++j) {
    const Kernel k = family.make(sample_window(times[j], halfwidths[j], g.n));
    const double b = predicted_bias(k, pilot[j], halfwidths[j]) * unit;
    bias2[j] = b * b;
    variance[j] = predicted_variance(k, White{sigma2}, n, halfwidths[j]) * unit * unit;
    estimate[j] *= unit;
  }
  write_atomically(a.out, to_csv({{"t", "estimate", "predicted_bias2", "predicted_variance"},
                                  {g.t, estimate, bias2, variance}}));
}

// ---------------------------------------------------------------- estimate-if

struct LineArgs {
  std::optional<double> halfwidth;
  bool automatic = false;
  int iterations = 5;
  std::optional<double> noise_variance;
  std::vector<double> ansatz;
  std::optional<double> curvature_floor;
  std::string shape = "legendre";
  double coherence_threshold = 0.1;
};

void add_line_options(CLI::App* sub, LineArgs& a) {
  auto* h = sub->add_option("--halfwidth", a.halfwidth, "Fixed halfwidth");
  sub->add_flag("--auto", a.automatic, "Plug-in halfwidths from a (3,5) pilot of the phase units")->excludes(h);
  sub->add_option("--iterations", a.iterations, "Center-frequency iterations")->capture_default_str();
  sub->add_option("--noise-variance", a.noise_variance,
                  "White noise variance of the real record (default: estimated)");
  sub->add_option("--ansatz", a.ansatz, "Characteristic scale A,tau for the pilot")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub->add_option("--curvature-floor", a.curvature_floor, "Floor on the squared pilot");
  sub->add_option("--shape", a.shape, "legendre | minimal-variance | taper")
    ->check(CLI::IsMember(shapes))
    ->capture_default_str();
  sub->add_option("--coherence-threshold", a.coherence_threshold, "Low-coherence flag threshold on |den|")
    ->capture_default_str();
}

IFConfig line_config(const LineArgs& a, const Grid& g) {
  if (!a.halfwidth && !a.automatic)
    throw ConfigError("give --halfwidth or --auto");
  IFConfig c;
  c.max_center_iterations = a.iterations;
  c.shape = parse_shape(a.shape);
  c.coherence_threshold = a.coherence_threshold;
  if (a.automatic) {
    AdaptiveHalfwidth mode;
    if (auto an = ansatz_of(a.ansatz))
      mode.ansatz = *an;
    mode.options = plugin_options(a.curvature_floor);
    c.halfwidth = mode;
  } else {
    c.halfwidth = FixedHalfwidth{*a.halfwidth * g.scale};
  }
  c.validate();
  return c;
}

std::optional<CovarianceModel> noise_of(const LineArgs& a) {
  if (!a.noise_variance)
    return std::nullopt;
  return CovarianceModel{White{*a.noise_variance}};
}

Table if_table(const IFEstimate& e, const Grid& g) {
  Table t{{"t", "if_estimate", "amplitude", "halfwidth", "predicted_loss", "edge_flag", "low_coherence_flag"},
          std::vector<std::vector<double>>(7)};
  t.columns[0] = g.t;
  for (std::size_t j = 0; j < e.size(); ++j) {
    t.columns[1].push_back(e.frequency[j] / g.scale);
    t.columns[2].push_back(e.amplitude[j]);
    t.columns[3].push_back(e.halfwidth[j] / g.scale);
    t.columns[4].push_back(e.predicted_loss[j] / (g.scale * g.scale));
    t.columns[5].push_back(e.edge[j] ? 1.0 : 0.0);
    t.columns[6].push_back(e.low_coherence[j] ? 1.0 : 0.0);
  }
  return t;
}

struct IFArgs {
  std::string in, out = "-";
  std::optional<double> omega0, f0;
  double phi0 = 0.0;
  bool local_recentering = false;
  std::optional<std::uint64_t> seed;
  LineArgs line;
};

void add_estimate_if(CLI::App& app, IFArgs& a) {
  auto* sub = app.add_subcommand("estimate-if", std::string("Instantaneous frequency of a real record. ") + units_note);
  sub->add_option("--in", a.in, "Input CSV (t,y)")->required();
  sub->add_option("--out", a.out, "Output CSV, - for stdout")->capture_default_str();
  auto* w = sub->add_option("--omega0", a.omega0, "Initial center frequency, rad per time unit");
  sub->add_option("--f0", a.f0, "Initial center frequency, cycles per time unit (Hz for t in seconds)")->excludes(w);
  sub->add_option("--phi0", a.phi0, "Demodulation phase offset, rad")->capture_default_str();
  sub->add_flag("--local-recentering", a.local_recentering, "Re-center each window on its own estimate");
  sub->add_option("--seed", a.seed, "Seed recorded for reproducibility; the estimate is deterministic");
  add_line_options(sub, a.line);
}

void run_estimate_if(const IFArgs& a) {
  require_readable(a.in);
  require_writable_target(a.out);
  if (!a.omega0 && !a.f0)
    throw ConfigError("give --omega0 or --f0");
  const Series s = read_series(a.in);
  const Grid g = grid_of(s);
  IFConfig c = line_config(a.line, g);
  c.center_frequency = (a.omega0 ? *a.omega0 : 2.0 * pi * *a.f0) / g.scale;
  c.phase_offset = a.phi0;
  c.local_recentering = a.local_recentering;
  const auto e = estimate_if(SampledSignal(s.y), c, noise_of(a.line));
  write_atomically(a.out, to_csv(if_table(e, g)));
}

// ---------------------------------------------------------------- multitone

struct MultitoneArgs {
  std::string in, out_prefix;
  std::vector<double> freqs;
  double guard = 0.0;
  int outer_iterations = 3;
  double tolerance = 1e-6;
  double margin = 5.0;
  LineArgs line;
};

void add_multitone(CLI::App& app, MultitoneArgs& a) {
  auto* sub = app.add_subcommand("multitone", std::string("Iterative estimation of separated lines. ") + units_note);
  sub->add_option("--in", a.in, "Input CSV (t,y)")->required();
  sub->add_option("--out-prefix", a.out_prefix, "Writes <prefix>_line<k>.csv and <prefix>_summary.json")->required();
  sub->add_option("--freqs", a.freqs, "Seed frequencies w1,w2,..., rad per time unit")
    ->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
    ->required();
  sub->add_option("--guard", a.guard, "Guard bandwidth, rad per time unit")->required();
  sub->add_option("--outer-iterations", a.outer_iterations, "Outer sweeps")->capture_default_str();
  sub->add_option("--tolerance", a.tolerance, "Convergence tolerance on the IF change")->capture_default_str();
  sub->add_option("--margin", a.margin, "Interference margin (> 1)")->capture_default_str();
  add_line_options(sub, a.line);
}

void run_multitone(const MultitoneArgs& a) {
  require_readable(a.in);
  require_writable_target(a.out_prefix + "_summary.json");
  const Series s = read_series(a.in);
  const Grid g = grid_of(s);
  MultitoneConfig c;
  c.line = line_config(a.line, g);
  c.guard_bandwidth = a.guard / g.scale;
  c.max_outer_iterations = a.outer_iterations;
  c.tolerance = a.tolerance / g.scale;
  c.margin = a.margin;
  std::vector<double> seeds;
  for (double f : a.freqs)
    seeds.push_back(f / g.scale);
  const auto r = estimate_multitone(SampledSignal(s.y), seeds, c, noise_of(a.line));

  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["tapers_engaged"] = r.tapers_engaged;
  std::vector<double> change;
  for (double v : r.max_change)
    change.push_back(v * g.scale);
  j["max_change"] = change;
  j["lines"] = nlohmann::json::array();
  for (std::size_t l = 0; l < r.lines.size(); ++l) {
    const auto& line = r.lines[l];
    const std::string path = a.out_prefix + "_line" + std::to_string(l) + ".csv";
    write_atomically(path, to_csv(if_table(line.estimate, g)));
    j["lines"].push_back({{"seed_frequency", a.freqs[l]},
                          {"center_frequency", line.estimate.center_frequency * g.scale},
                          {"interference_bound", line.interference * g.scale},
                          {"amplitude_bias", line.amplitude_bias},
                          {"file", std::filesystem::path(path).filename().string()}});
  }
  write_atomically(a.out_prefix + "_summary.json", to_json(j));
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkArgs {
  std::string scenario, out_dir;
  unsigned jobs = 1;
};

void add_benchmark(CLI::App& app, BenchmarkArgs& a) {
  auto* sub = app.add_subcommand("benchmark",
                                 "Monte Carlo sweep over N and noise from a JSON scenario; writes "
                                 "cell_<k>.json per cell, report.json and cells.csv");
  sub->add_option("--scenario", a.scenario, "Scenario JSON")->required();
  sub->add_option("--out-dir", a.out_dir, "Output directory")->required();
  sub->add_option("--jobs", a.jobs, "Concurrent cells")->check(CLI::PositiveNumber)->capture_default_str();
}

void run_benchmark_command(const BenchmarkArgs& a) {
  require_readable(a.scenario);
  const auto j = read_json(a.scenario);
  Scenario s;
  try {
    s = parse_scenario(j);
  } catch (const ConfigError& e) {
    throw ConfigError(a.scenario + ": " + e.what());
  }
  require_directory(a.out_dir);
  const auto report = run_benchmark(s, j, a.jobs, a.out_dir);
  write_atomically(std::filesystem::path(a.out_dir) / "report.json", to_json(report));
  write_atomically(std::filesystem::path(a.out_dir) / "cells.csv", to_csv(cells_table(report)));
}

// Splices `--config file.json` fields in front of the user's own flags.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2)
    return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  for (std::size_t i = 2; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      path = args[i].substr(9);
    else
      continue;
    const std::size_t span = args[i] == "--config" ? 2 : 1;
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + span));
    const auto extra = config_arguments(read_json(path), path, args, [&](const std::string& flag) {
      return flag != "--config" && sub->get_option_no_throw(flag) != nullptr;
    });
    args.insert(args.begin() + 2, extra.begin(), extra.end());
    break;
  }
  return args;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel estimation of functions, derivatives and instantaneous frequency"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  DesignArgs design;
  GenerateArgs gen;
  SmoothArgs smooth;
  IFArgs ifa;
  MultitoneArgs multi;
  BenchmarkArgs bench;
  add_design(app, design);
  add_generate(app, gen);
  add_smooth(app, smooth);
  add_estimate_if(app, ifa);
  add_multitone(app, multi);
  add_benchmark(app, bench);
  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--config", "JSON file of flag values (keys are flag names, plus schema_version)");

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "design-kernel")
      run_design(design);
    else if (name == "generate")
      run_generate(gen);
    else if (name == "smooth")
      run_smooth(smooth);
    else if (name == "estimate-if")
      run_estimate_if(ifa);
    else if (name == "multitone")
      run_multitone(multi);
    else
      run_benchmark_command(bench);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
