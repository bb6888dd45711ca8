// nmrse command-line tool: simulate | fit | density | study.
//
// Every command writes a JSON echo of its effective configuration next to
// its outputs; rerunning the command from that echo (--config <echo>)
// reproduces the outputs byte for byte. Execution plumbing (--out, --config,
// --threads) is deliberately not part of the echo. Exit codes: 0 success,
// 2 validation error, 3 runtime/numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmrse/estimator.hpp"
#include "nmrse/io.hpp"
#include "nmrse/noise_density.hpp"
#include "nmrse/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string default_out_dir() {
  const char* env = std::getenv("NMRSE_OUTPUT_DIR");
  return env && *env ? env : ".";
}

//! Keys every echo may carry that are not user-settable knobs.
const std::set<std::string> kMetaKeys = {"command", "derived"};

json load_config_file(const std::string& path, const std::string& command,
                      const std::set<std::string>& known_keys) {
  json cfg;
  try {
    cfg = json::parse(nmrse::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  if (!cfg.is_object()) throw std::invalid_argument("config '" + path + "': expected a JSON object");
  for (const auto& item : cfg.items()) {
    if (kMetaKeys.count(item.key())) continue;
    if (!known_keys.count(item.key()))
      throw std::invalid_argument("config '" + path + "': unknown key '" + item.key() + "'");
  }
  if (cfg.contains("command") && cfg["command"] != command)
    throw std::invalid_argument("config '" + path + "' was written by command '" +
                                cfg["command"].get<std::string>() + "', not '" + command + "'");
  return cfg;
}

std::string find_config_argument(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

void write_echo(const fs::path& out_dir, const std::string& name, const json& echo) {
  nmrse::write_text_file((out_dir / name).string(), echo.dump(2) + "\n");
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory '" + out + "'");
  return dir;
}

template <typename T>
void from_config(const json& cfg, const char* key, T& value) {
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

nmrse::KernelFamily kernel_family_from_name(const std::string& name) {
  if (name == "gaussian") return nmrse::KernelFamily::gaussian;
  if (name == "epanechnikov") return nmrse::KernelFamily::epanechnikov;
  if (name == "uniform") return nmrse::KernelFamily::uniform;
  throw std::invalid_argument("unknown kernel '" + name + "'");
}

// -- shared fit knobs ----------------------------------------------------

struct FitKnobs {
  double frac = 0.2;
  double pi_bar = 0.4;
  std::string h_rule = "local";  // local | fixed | rate
  double h_fixed = 0.1;
  double rate_c = 1.0;
  double rate_alpha = 1.0;
  int n_mc = 0;
  double pi_lo = 0.05;
  double pi_hi = 0.95;
  double loc_lo = std::numeric_limits<double>::quiet_NaN();  // nan: data-driven
  double loc_hi = std::numeric_limits<double>::quiet_NaN();
  bool strict_theta = false;
  std::string kernel = "gaussian";
};

const std::set<std::string> kFitKnobKeys = {
    "frac",   "pi_bar", "h_rule", "h_fixed",      "rate_c", "rate_alpha", "n_mc",
    "pi_lo",  "pi_hi",  "loc_lo", "loc_hi",       "strict_theta", "kernel"};

void add_fit_knob_options(CLI::App* cmd, FitKnobs& k) {
  cmd->add_option("--frac", k.frac, "Nearest-neighbor fraction for local bandwidths");
  cmd->add_option("--pi-bar", k.pi_bar, "Initial mixing proportion");
  cmd->add_option("--h-rule", k.h_rule, "Contrast bandwidth rule: local, fixed or rate")
      ->check(CLI::IsMember({"local", "fixed", "rate"}));
  cmd->add_option("--h-fixed", k.h_fixed, "Bandwidth for --h-rule fixed");
  cmd->add_option("--rate-c", k.rate_c, "Constant c in h = c n^{-1/(2 alpha + d)}");
  cmd->add_option("--rate-alpha", k.rate_alpha, "Smoothness alpha in the rate rule");
  cmd->add_option("--n-mc", k.n_mc, "Monte-Carlo frequency nodes per point (0: use n)");
  cmd->add_option("--pi-lo", k.pi_lo, "Lower proportion bound");
  cmd->add_option("--pi-hi", k.pi_hi, "Upper proportion bound");
  cmd->add_option("--loc-lo", k.loc_lo, "Lower location bound (default: data-driven)");
  cmd->add_option("--loc-hi", k.loc_hi, "Upper location bound (default: data-driven)");
  cmd->add_flag("--strict-theta", k.strict_theta,
                "Narrow the proportion box to the theoretical [0.05, 0.45]");
  cmd->add_option("--kernel", k.kernel, "Kernel family: gaussian, epanechnikov or uniform")
      ->check(CLI::IsMember({"gaussian", "epanechnikov", "uniform"}));
}

void fit_knobs_from_config(const json& cfg, FitKnobs& k) {
  from_config(cfg, "frac", k.frac);
  from_config(cfg, "pi_bar", k.pi_bar);
  from_config(cfg, "h_rule", k.h_rule);
  from_config(cfg, "h_fixed", k.h_fixed);
  from_config(cfg, "rate_c", k.rate_c);
  from_config(cfg, "rate_alpha", k.rate_alpha);
  from_config(cfg, "n_mc", k.n_mc);
  from_config(cfg, "pi_lo", k.pi_lo);
  from_config(cfg, "pi_hi", k.pi_hi);
  from_config(cfg, "loc_lo", k.loc_lo);
  from_config(cfg, "loc_hi", k.loc_hi);
  from_config(cfg, "strict_theta", k.strict_theta);
  from_config(cfg, "kernel", k.kernel);
}

json fit_knobs_to_json(const FitKnobs& k) {
  json j = {{"frac", k.frac},       {"pi_bar", k.pi_bar},   {"h_rule", k.h_rule},
            {"h_fixed", k.h_fixed}, {"rate_c", k.rate_c},   {"rate_alpha", k.rate_alpha},
            {"n_mc", k.n_mc},       {"pi_lo", k.pi_lo},     {"pi_hi", k.pi_hi},
            {"strict_theta", k.strict_theta}, {"kernel", k.kernel}};
  if (!std::isnan(k.loc_lo)) j["loc_lo"] = k.loc_lo;
  if (!std::isnan(k.loc_hi)) j["loc_hi"] = k.loc_hi;
  return j;
}

nmrse::FitOptions to_fit_options(const FitKnobs& k, const nmrse::Dataset& data,
                                 std::uint64_t seed, unsigned threads) {
  nmrse::FitOptions o;
  o.frac = k.frac;
  o.pi_bar = k.pi_bar;
  if (k.h_rule == "fixed")
    o.bandwidth = nmrse::BandwidthRule::fixed;
  else if (k.h_rule == "rate")
    o.bandwidth = nmrse::BandwidthRule::rate;
  else
    o.bandwidth = nmrse::BandwidthRule::local;
  o.h_fixed = k.h_fixed;
  o.rate_c = k.rate_c;
  o.rate_alpha = k.rate_alpha;
  o.n_mc = k.n_mc;
  o.seed = seed;
  o.threads = threads;
  o.kernel.family = kernel_family_from_name(k.kernel);
  nmrse::ParamSpace space = nmrse::auto_param_space(data, k.pi_lo, k.pi_hi);
  if (!std::isnan(k.loc_lo)) space.loc_lo = k.loc_lo;
  if (!std::isnan(k.loc_hi)) space.loc_hi = k.loc_hi;
  if (k.strict_theta) space = space.strict();
  space.validate();
  o.space = space;
  return o;
}

json space_to_json(const nmrse::ParamSpace& s) {
  return {{"pi_lo", s.pi_lo}, {"pi_hi", s.pi_hi}, {"loc_lo", s.loc_lo}, {"loc_hi", s.loc_hi}};
}

Eigen::MatrixXd parse_grid_spec(const std::string& spec) {
  double lo = 0.0, hi = 0.0;
  int count = 0;
  const auto c1 = spec.find(':');
  const auto c2 = spec.rfind(':');
  if (c1 == std::string::npos || c2 == c1)
    throw std::invalid_argument("grid spec must be lo:hi:count, got '" + spec + "'");
  lo = nmrse::parse_double(spec.substr(0, c1), "grid spec");
  hi = nmrse::parse_double(spec.substr(c1 + 1, c2 - c1 - 1), "grid spec");
  count = static_cast<int>(nmrse::parse_double(spec.substr(c2 + 1), "grid spec"));
  if (count < 1 || !(lo <= hi))
    throw std::invalid_argument("grid spec must satisfy lo <= hi and count >= 1");
  Eigen::MatrixXd grid(count, 1);
  if (count == 1)
    grid(0, 0) = lo;
  else
    grid.col(0) = Eigen::VectorXd::LinSpaced(count, lo, hi);
  return grid;
}

// -- simulate ------------------------------------------------------------

int run_simulate(const std::string& scenario, int n, std::uint64_t seed,
                 const std::string& out) {
  const nmrse::Scenario sc = nmrse::scenario_by_name(scenario);
  if (n < 1) throw std::invalid_argument("simulate: --n must be >= 1");
  const fs::path dir = prepare_out_dir(out);
  const nmrse::Dataset data = nmrse::sample_dataset(sc, n, seed);
  nmrse::write_dataset_csv((dir / "dataset.csv").string(), data);
  json echo = {{"command", "simulate"}, {"scenario", sc.name}, {"n", n}, {"seed", seed}};
  write_echo(dir, "simulate_config.json", echo);
  std::cout << "wrote " << (dir / "dataset.csv").string() << " (" << n << " rows)\n";
  return kExitOk;
}

// -- fit -----------------------------------------------------------------

nmrse::Dataset read_input_csv(const std::string& path) {
  try {
    return nmrse::read_dataset_csv(path);
  } catch (const std::exception& e) {
    throw std::invalid_argument(e.what());  // malformed input is a validation error
  }
}

int run_fit(const std::string& input, const std::string& grid_spec, const FitKnobs& knobs,
            std::uint64_t seed, unsigned threads, const std::string& out) {
  if (input.empty()) throw std::invalid_argument("fit: --input is required");
  const nmrse::Dataset data = read_input_csv(input);
  if (data.dim() != 1)
    throw std::invalid_argument("fit: --grid generation supports d = 1 inputs only");
  const Eigen::MatrixXd grid = parse_grid_spec(grid_spec);
  const nmrse::FitOptions options = to_fit_options(knobs, data, seed, threads);
  const nmrse::FitResult fit = nmrse::fit_curve(data, grid, options);

  const fs::path dir = prepare_out_dir(out);
  json result = nmrse::fit_result_to_json(fit);
  result["input"] = fs::path(input).filename().string();
  nmrse::write_text_file((dir / "fit_result.json").string(), result.dump(2) + "\n");
  nmrse::write_text_file((dir / "fit_curve.csv").string(), nmrse::fit_result_to_csv(fit));

  json echo = fit_knobs_to_json(knobs);
  echo["command"] = "fit";
  echo["input"] = input;
  echo["grid"] = grid_spec;
  echo["seed"] = seed;
  json h_per_point = json::array();
  for (const nmrse::PointFit& p : fit.points) h_per_point.push_back(p.h_used);
  echo["derived"] = {{"n", data.n()},
                     {"d", data.dim()},
                     {"n_mc_effective", options.n_mc > 0 ? options.n_mc : static_cast<int>(data.n())},
                     {"space", space_to_json(fit.space)},
                     {"h_per_point", std::move(h_per_point)}};
  write_echo(dir, "fit_config.json", echo);

  int failed = 0;
  for (const nmrse::PointFit& p : fit.points) failed += p.flags.failed;
  std::cout << "fit " << fit.points.size() << " grid points (" << failed << " failed), wrote "
            << (dir / "fit_curve.csv").string() << "\n";
  return kExitOk;
}

// -- density -------------------------------------------------------------

int run_density(const std::string& input, const std::string& fit_path,
                std::vector<double> x0_list, double h1, double h2, int y_count, int u_count,
                const std::string& out) {
  if (input.empty()) throw std::invalid_argument("density: --input is required");
  if (fit_path.empty()) throw std::invalid_argument("density: --fit is required");
  if (x0_list.empty()) throw std::invalid_argument("density: at least one --x0 is required");
  const nmrse::Dataset data = read_input_csv(input);
  json fit_json;
  try {
    fit_json = json::parse(nmrse::read_text_file(fit_path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("density: cannot parse fit JSON: " + std::string(e.what()));
  }
  if (!fit_json.contains("points"))
    throw std::invalid_argument("density: '" + fit_path + "' does not look like a fit result");

  const fs::path dir = prepare_out_dir(out);
  for (const double x0 : x0_list) {
    const json* match = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : fit_json["points"]) {
      const double x = p["x"][0].get<double>();
      const double diff = std::abs(x - x0);
      if (diff < best) {
        best = diff;
        match = &p;
      }
    }
    if (!match || best > 1e-9)
      throw std::invalid_argument("density: no fitted grid point at x0 = " +
                                  nmrse::format_double(x0));
    if ((*match)["flags"].get<std::string>().find("failed") != std::string::npos)
      throw std::runtime_error("density: the fit at x0 = " + nmrse::format_double(x0) +
                               " failed; no usable theta-hat");
    nmrse::ThetaPoint theta{(*match)["theta"]["pi"].get<double>(),
                            (*match)["theta"]["a"].get<double>(),
                            (*match)["theta"]["b"].get<double>()};
    const double h_local = (*match)["h_local"].get<double>();

    Eigen::VectorXd x0v(1);
    x0v[0] = x0;
    nmrse::DensityConfig cfg = nmrse::default_density_config(
        data, x0v, h2 > 0.0 ? h2 : h_local, y_count, u_count);
    if (h1 > 0.0) {
      cfg.h1 = h1;
      const double u_max = std::min(std::sqrt(-2.0 * std::log(1e-9)), 40.0) / cfg.h1;
      cfg.u_grid = Eigen::VectorXd::LinSpaced(u_count, -u_max, u_max);
    }
    const nmrse::LocalDensity density = nmrse::invert_and_normalize(data, theta, cfg);
    const std::string tag = "density_x0_" + nmrse::format_double(x0);
    nmrse::write_text_file((dir / (tag + ".csv")).string(), nmrse::density_to_csv(density));
    nmrse::write_text_file((dir / (tag + ".json")).string(),
                           nmrse::density_sidecar_json(density, cfg).dump(2) + "\n");
    std::cout << "wrote " << (dir / (tag + ".csv")).string()
              << " (trim_mass = " << nmrse::format_double(density.trim_mass) << ")\n";
  }

  json echo = {{"command", "density"}, {"input", input},     {"fit", fit_path},
               {"x0", x0_list},        {"h1", h1},           {"h2", h2},
               {"y_count", y_count},   {"u_count", u_count}};
  write_echo(dir, "density_config.json", echo);
  return kExitOk;
}

// -- study ---------------------------------------------------------------

int run_study(const std::string& scenario_spec, const std::vector<int>& n_list, int m_reps,
              int k_points, const FitKnobs& knobs, std::uint64_t seed, unsigned threads,
              const std::string& out) {
  if (n_list.empty()) throw std::invalid_argument("study: --n is required");
  for (const int n : n_list)
    if (n < 2) throw std::invalid_argument("study: sample sizes must be >= 2");
  if (m_reps < 1) throw std::invalid_argument("study: --M must be >= 1");
  if (k_points < 1) throw std::invalid_argument("study: --K must be >= 1");

  nmrse::StudyOptions options;
  if (scenario_spec == "all") {
    options.scenarios = {nmrse::scenario_g(), nmrse::scenario_t(), nmrse::scenario_l()};
  } else {
    std::stringstream ss(scenario_spec);
    std::string token;
    while (std::getline(ss, token, ','))
      if (!token.empty()) options.scenarios.push_back(nmrse::scenario_by_name(token));
    if (options.scenarios.empty())
      throw std::invalid_argument("study: no scenario given");
  }
  options.n_list = n_list;
  options.replications = m_reps;
  options.grid_size = k_points;
  options.master_seed = seed;
  options.threads = threads;

  // The location box defaults to data-driven per replication and N = n is
  // resolved per dataset inside the driver; translate the shared knobs.
  {
    nmrse::FitOptions fo;
    fo.frac = knobs.frac;
    fo.pi_bar = knobs.pi_bar;
    if (knobs.h_rule == "fixed")
      fo.bandwidth = nmrse::BandwidthRule::fixed;
    else if (knobs.h_rule == "rate")
      fo.bandwidth = nmrse::BandwidthRule::rate;
    else
      fo.bandwidth = nmrse::BandwidthRule::local;
    fo.h_fixed = knobs.h_fixed;
    fo.rate_c = knobs.rate_c;
    fo.rate_alpha = knobs.rate_alpha;
    fo.n_mc = knobs.n_mc;
    fo.kernel.family = kernel_family_from_name(knobs.kernel);
    fo.pi_lo = knobs.pi_lo;
    fo.pi_hi = knobs.strict_theta ? std::min(knobs.pi_hi, 0.45) : knobs.pi_hi;
    if (!std::isnan(knobs.loc_lo) && !std::isnan(knobs.loc_hi)) {
      nmrse::ParamSpace space{fo.pi_lo, fo.pi_hi, knobs.loc_lo, knobs.loc_hi};
      space.validate();
      fo.space = space;
    }
    options.fit = fo;
  }

  const fs::path dir = prepare_out_dir(out);
  const nmrse::StudyReport report = nmrse::run_study(options);

  nmrse::write_text_file((dir / "report.json").string(),
                         nmrse::study_report_to_json(report).dump(2) + "\n");
  nmrse::write_text_file((dir / "report_table.txt").string(),
                         nmrse::study_report_table(report));
  std::string timing = "scenario,n,wall_seconds\n";
  for (const nmrse::StudyCell& cell : report.cells) {
    const std::string raw_name = "raw_" + cell.scenario + "_n" + std::to_string(cell.n) + ".csv";
    nmrse::write_text_file((dir / raw_name).string(), nmrse::study_cell_raw_csv(cell));
    timing += cell.scenario + "," + std::to_string(cell.n) + "," +
              nmrse::format_double(cell.wall_seconds) + "\n";
  }
  nmrse::write_text_file((dir / "study_timing.txt").string(), timing);

  json echo = fit_knobs_to_json(knobs);
  echo["command"] = "study";
  echo["scenario"] = scenario_spec;
  echo["n"] = n_list;
  echo["M"] = m_reps;
  echo["K"] = k_points;
  echo["seed"] = seed;
  write_echo(dir, "study_config.json", echo);

  std::cout << nmrse::study_report_table(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric two-component mixture-of-regressions estimation "
               "with symmetric errors"};
  app.require_subcommand(1);

  std::string out = default_out_dir();
  unsigned threads = nmrse::default_thread_count();
  std::string config_path = find_config_argument(argc, argv);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Sample a scenario dataset to CSV");
  std::string sim_scenario = "G";
  int sim_n = 400;
  std::uint64_t sim_seed = 1;
  sim->add_option("--scenario", sim_scenario, "Scenario: G, T or L");
  sim->add_option("--n", sim_n, "Sample size");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out", out, "Output directory");
  sim->add_option("--config", config_path, "JSON config file (flags override)");
  sim->add_option("--threads", threads, "Worker threads (unused by simulate)");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the mixture curves on a testing grid");
  std::string fit_input;
  std::string fit_grid = "0.05:0.95:20";
  std::uint64_t fit_seed = 1;
  FitKnobs fit_knobs;
  fit->add_option("--input", fit_input, "Dataset CSV (last column is the response)");
  fit->add_option("--grid", fit_grid, "Testing grid lo:hi:count");
  fit->add_option("--seed", fit_seed, "RNG seed for the frequency nodes");
  add_fit_knob_options(fit, fit_knobs);
  fit->add_option("--out", out, "Output directory");
  fit->add_option("--config", config_path, "JSON config file (flags override)");
  fit->add_option("--threads", threads, "Worker threads");

  // density
  auto* dens = app.add_subcommand("density", "Recover the local error density at x0");
  std::string dens_input, dens_fit;
  std::vector<double> dens_x0;
  double dens_h1 = 0.0, dens_h2 = 0.0;
  int dens_y_count = 512, dens_u_count = 4096;
  dens->add_option("--input", dens_input, "Dataset CSV used for the fit");
  dens->add_option("--fit", dens_fit, "fit_result.json from a prior fit");
  dens->add_option("--x0", dens_x0, "Target design point(s)")->delimiter(',');
  dens->add_option("--h1", dens_h1, "Frequency-smoothing bandwidth (0: automatic)");
  dens->add_option("--h2", dens_h2, "Design-space bandwidth (0: fit's h_local at x0)");
  dens->add_option("--y-count", dens_y_count, "Evaluation grid size");
  dens->add_option("--u-count", dens_u_count, "Inversion grid size");
  dens->add_option("--out", out, "Output directory");
  dens->add_option("--config", config_path, "JSON config file (flags override)");
  dens->add_option("--threads", threads, "Worker threads (unused by density)");

  // study
  auto* study = app.add_subcommand("study", "Replication study reproducing the RASE tables");
  std::string study_scenario = "all";
  std::vector<int> study_n = {400, 800, 1200};
  int study_m = 20, study_k = 20;
  std::uint64_t study_seed = 1;
  FitKnobs study_knobs;
  study->add_option("--scenario", study_scenario, "G, T, L, a comma list, or all");
  study->add_option("--n", study_n, "Sample sizes (comma separated)")->delimiter(',');
  study->add_option("--M", study_m, "Replications per (scenario, n)");
  study->add_option("--K", study_k, "Testing grid size; points are k/K");
  study->add_option("--seed", study_seed, "Master seed");
  add_fit_knob_options(study, study_knobs);
  study->add_option("--out", out, "Output directory");
  study->add_option("--config", config_path, "JSON config file (flags override)");
  study->add_option("--threads", threads, "Worker threads");

  // Apply config-file defaults before parsing so flags override them.
  try {
    if (!config_path.empty()) {
      // Identify the subcommand from argv (config echoes carry it too).
      std::string command;
      for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "simulate" || a == "fit" || a == "density" || a == "study") {
          command = a;
          break;
        }
      }
      if (command == "simulate") {
        const json cfg = load_config_file(config_path, "simulate", {"scenario", "n", "seed"});
        from_config(cfg, "scenario", sim_scenario);
        from_config(cfg, "n", sim_n);
        from_config(cfg, "seed", sim_seed);
      } else if (command == "fit") {
        std::set<std::string> keys = kFitKnobKeys;
        keys.insert({"input", "grid", "seed"});
        const json cfg = load_config_file(config_path, "fit", keys);
        from_config(cfg, "input", fit_input);
        from_config(cfg, "grid", fit_grid);
        from_config(cfg, "seed", fit_seed);
        fit_knobs_from_config(cfg, fit_knobs);
      } else if (command == "density") {
        const json cfg = load_config_file(
            config_path, "density",
            {"input", "fit", "x0", "h1", "h2", "y_count", "u_count"});
        from_config(cfg, "input", dens_input);
        from_config(cfg, "fit", dens_fit);
        from_config(cfg, "x0", dens_x0);
        from_config(cfg, "h1", dens_h1);
        from_config(cfg, "h2", dens_h2);
        from_config(cfg, "y_count", dens_y_count);
        from_config(cfg, "u_count", dens_u_count);
      } else if (command == "study") {
        std::set<std::string> keys = kFitKnobKeys;
        keys.insert({"scenario", "n", "M", "K", "seed"});
        const json cfg = load_config_file(config_path, "study", keys);
        from_config(cfg, "scenario", study_scenario);
        from_config(cfg, "n", study_n);
        from_config(cfg, "M", study_m);
        from_config(cfg, "K", study_k);
        from_config(cfg, "seed", study_seed);
        fit_knobs_from_config(cfg, study_knobs);
      }
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_scenario, sim_n, sim_seed, out);
    if (fit->parsed()) return run_fit(fit_input, fit_grid, fit_knobs, fit_seed, threads, out);
    if (dens->parsed())
      return run_density(dens_input, dens_fit, dens_x0, dens_h1, dens_h2, dens_y_count,
                         dens_u_count, out);
    if (study->parsed())
      return run_study(study_scenario, study_n, study_m, study_k, study_knobs, study_seed,
                       threads, out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
