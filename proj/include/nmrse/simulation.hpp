// Data-generating processes for the simulation study, truth evaluation,
// RASE / squared-deviation-variance metrics, and the replication driver.
// All three shipped scenarios share the mixing proportion
//   pi(x) = (sin(3 pi x) - 1)/15 + 0.4
// on [0,1] with a uniform design, and differ in locations and noise family.

#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmrse/estimator.hpp"
#include "nmrse/model.hpp"
#include "nmrse/parallel.hpp"
#include "nmrse/rng.hpp"

namespace nmrse {

enum class NoiseFamily { gaussian_scale, student_df, laplace_scale };

//! A data-generating process on [0,1]: curve functions plus a symmetric
//! noise family with a design-dependent parameter.
struct Scenario {
  std::string name;
  std::function<double(double)> pi_fn, a_fn, b_fn;
  NoiseFamily noise = NoiseFamily::gaussian_scale;
  std::function<double(double)> noise_param;  // sigma(x), df(x) or nu(x)
};

inline double shared_mixing_proportion(double x) {
  return (std::sin(3.0 * M_PI * x) - 1.0) / 15.0 + 0.4;
}

inline Scenario scenario_g() {
  return {"G",
          shared_mixing_proportion,
          [](double x) { return 4.0 - 2.0 * std::sin(2.0 * M_PI * x); },
          [](double x) { return 1.5 * std::cos(3.0 * M_PI * x) - 3.0; },
          NoiseFamily::gaussian_scale,
          [](double x) { return 0.9 * std::exp(x); }};
}

inline Scenario scenario_t() {
  return {"T",
          shared_mixing_proportion,
          [](double x) { return 3.0 - 2.0 * std::sin(2.0 * M_PI * x); },
          [](double x) { return 1.5 * std::cos(3.0 * M_PI * x) - 2.0; },
          NoiseFamily::student_df,
          [](double x) { return -5.0 * x + 8.0; }};
}

inline Scenario scenario_l() {
  return {"L",
          shared_mixing_proportion,
          [](double x) { return 5.0 - 3.0 * std::sin(2.0 * M_PI * x); },
          [](double x) { return 2.0 * std::cos(3.0 * M_PI * x) - 4.0; },
          NoiseFamily::laplace_scale,
          [](double x) { return x + 1.0; }};
}

inline Scenario scenario_by_name(const std::string& name) {
  if (name == "G" || name == "g") return scenario_g();
  if (name == "T" || name == "t") return scenario_t();
  if (name == "L" || name == "l") return scenario_l();
  throw std::invalid_argument("unknown scenario '" + name + "', expected G, T or L");
}

inline void validate_scenario(const Scenario& sc) {
  for (int i = 0; i <= 100; ++i) {
    const double x = static_cast<double>(i) / 100.0;
    const double p = sc.pi_fn(x);
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("scenario: pi(x) must map [0,1] into (0,1)");
    if (!(sc.noise_param(x) > 0.0))
      throw std::invalid_argument("scenario: noise scale/df must be positive on [0,1]");
    if (!std::isfinite(sc.a_fn(x)) || !std::isfinite(sc.b_fn(x)))
      throw std::invalid_argument("scenario: location functions must be finite on [0,1]");
  }
}

//! theta(x) = (pi(x), a(x), b(x)) by direct evaluation.
inline ThetaPoint true_theta(const Scenario& sc, double x) {
  return {sc.pi_fn(x), sc.a_fn(x), sc.b_fn(x)};
}

inline double noise_draw(Rng& rng, NoiseFamily family, double param) {
  switch (family) {
    case NoiseFamily::gaussian_scale:
      return param * rng.normal();
    case NoiseFamily::student_df:
      return rng.student_t(param);
    case NoiseFamily::laplace_scale:
      return rng.laplace(param);
  }
  return 0.0;
}

struct LabeledSample {
  Dataset data;
  std::vector<int> component;  // 1 where W(x)=1 (location a), else 0
};

//! Draws (X_i, Y_i): X uniform on [0,1], W ~ Bernoulli(pi(X)), and
//! Y = a(X) + eps or b(X) + eps by W, with eps from the scenario's family
//! at X. Deterministic per seed; the component labels are kept for
//! diagnostics and tests.
inline LabeledSample sample_dataset_labeled(const Scenario& sc, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
  validate_scenario(sc);
  Rng rng(seed);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  std::vector<int> component(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double xi = rng.uniform();
    const bool w = rng.bernoulli(sc.pi_fn(xi));
    const double eps = noise_draw(rng, sc.noise, sc.noise_param(xi));
    x(i, 0) = xi;
    y[i] = (w ? sc.a_fn(xi) : sc.b_fn(xi)) + eps;
    component[static_cast<std::size_t>(i)] = w ? 1 : 0;
  }
  return {Dataset(std::move(x), std::move(y)), std::move(component)};
}

inline Dataset sample_dataset(const Scenario& sc, int n, std::uint64_t seed) {
  return sample_dataset_labeled(sc, n, seed).data;
}

//! Root-average-squared error of one estimated curve over the testing grid.
inline double rase(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth) {
  if (estimates.size() != truth.size() || estimates.size() < 1)
    throw std::invalid_argument("rase: estimate/truth grids differ in length");
  return std::sqrt((estimates - truth).squaredNorm() / static_cast<double>(truth.size()));
}

//! Mean over replications (rows) of the per-replication RASE.
inline double rase(const Eigen::MatrixXd& estimates, const Eigen::VectorXd& truth) {
  if (estimates.cols() != truth.size() || estimates.rows() < 1)
    throw std::invalid_argument("rase: estimate/truth grids differ in length");
  double acc = 0.0;
  for (Eigen::Index z = 0; z < estimates.rows(); ++z)
    acc += rase(estimates.row(z).transpose().eval(), truth);
  return acc / static_cast<double>(estimates.rows());
}

//! Averaged variance of the squared deviations: per grid point the sample
//! variance across replications of R^{[z]}(k), averaged over the grid.
//! Input rows are replications, columns grid points, entries the squared
//! deviations R^{[z]}(k).
inline double squared_dev_variance(const Eigen::MatrixXd& squared_devs) {
  const Eigen::Index m = squared_devs.rows();
  const Eigen::Index k = squared_devs.cols();
  if (m < 2) throw std::invalid_argument("squared_dev_variance: need M >= 2 replications");
  if (k < 1) throw std::invalid_argument("squared_dev_variance: need K >= 1 grid points");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mean = squared_devs.col(j).mean();
    acc += (squared_devs.col(j).array() - mean).square().sum() / static_cast<double>(m - 1);
  }
  return acc / static_cast<double>(k);
}

struct ReplicationOutcome {
  int replication = 0;           // 1-based
  std::uint64_t seed = 0;        // replication master seed
  bool failed = false;           // any grid point failed
  FitResult fit;
};

//! Metrics and raw per-replication results for one (scenario, n) block.
struct StudyCell {
  std::string scenario;
  int n = 0;
  int replications = 0;  // requested M
  int failures = 0;      // excluded replications
  double rase_pi = 0.0, rase_a = 0.0, rase_b = 0.0;
  double ase_pi = 0.0, ase_a = 0.0, ase_b = 0.0;  // mean average squared error
  double sigma2_pi = 0.0, sigma2_a = 0.0, sigma2_b = 0.0;
  std::vector<std::uint64_t> seeds;
  double wall_seconds = 0.0;  // diagnostics only; not part of replayable output
  Eigen::VectorXd grid;                  // testing points x_k = k/K
  Eigen::VectorXd pi_true, a_true, b_true;
  std::vector<ReplicationOutcome> raw;
};

struct StudyReport {
  std::vector<StudyCell> cells;
};

struct StudyOptions {
  std::vector<Scenario> scenarios;
  std::vector<int> n_list;
  int replications = 20;  // M
  int grid_size = 20;     // K testing points x_k = k/K
  std::uint64_t master_seed = 1;
  FitOptions fit;
  unsigned threads = 1;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

//! Cell seeds depend on (master, scenario name, n) rather than position in
//! the sweep, so a single-cell run reproduces the sweep's cell exactly.
inline std::uint64_t cell_seed(std::uint64_t master, const std::string& scenario, int n) {
  return derive_seed(derive_seed(master, fnv1a(scenario)),
                     static_cast<std::uint64_t>(n));
}

}  // namespace detail

//! Runs the full pipeline per replication (sample -> fit_curve) for every
//! (scenario, n) pair and assembles the metrics. Replications run in
//! parallel with per-replication derived seeds; failed replications are
//! excluded from the metrics and counted.
inline StudyReport run_study(const StudyOptions& options) {
  if (options.replications < 1)
    throw std::invalid_argument("run_study: need at least one replication");
  if (options.grid_size < 1) throw std::invalid_argument("run_study: need K >= 1");
  StudyReport report;
  const int k_points = options.grid_size;
  Eigen::MatrixXd grid(k_points, 1);
  for (int k = 0; k < k_points; ++k)
    grid(k, 0) = static_cast<double>(k + 1) / static_cast<double>(k_points);

  for (const Scenario& sc : options.scenarios) {
    for (const int n : options.n_list) {
      const auto start_time = std::chrono::steady_clock::now();
      StudyCell cell;
      cell.scenario = sc.name;
      cell.n = n;
      cell.replications = options.replications;
      cell.grid = grid.col(0);
      cell.pi_true.resize(k_points);
      cell.a_true.resize(k_points);
      cell.b_true.resize(k_points);
      for (int k = 0; k < k_points; ++k) {
        const ThetaPoint t = true_theta(sc, grid(k, 0));
        cell.pi_true[k] = t.pi;
        cell.a_true[k] = t.a;
        cell.b_true[k] = t.b;
      }

      const std::uint64_t block_seed = detail::cell_seed(options.master_seed, sc.name, n);
      cell.raw.resize(static_cast<std::size_t>(options.replications));
      parallel_for(static_cast<std::size_t>(options.replications), options.threads,
                   [&](std::size_t z) {
                     ReplicationOutcome& out = cell.raw[z];
                     out.replication = static_cast<int>(z) + 1;
                     out.seed = derive_seed(block_seed, z);
                     FitOptions fit_options = options.fit;
                     fit_options.threads = 1;
                     fit_options.seed = derive_seed(out.seed, 1);
                     const Dataset data = sample_dataset(sc, n, derive_seed(out.seed, 0));
                     out.fit = fit_curve(data, grid, fit_options);
                     for (const PointFit& p : out.fit.points)
                       if (p.flags.failed) out.failed = true;
                   });

      for (const ReplicationOutcome& out : cell.raw) cell.seeds.push_back(out.seed);
      std::vector<const ReplicationOutcome*> kept;
      for (const ReplicationOutcome& out : cell.raw)
        if (!out.failed) kept.push_back(&out);
      cell.failures = options.replications - static_cast<int>(kept.size());

      const auto metric = [&](auto field_of, const Eigen::VectorXd& truth, double& rase_out,
                              double& ase_out, double& sigma2_out) {
        const auto m = static_cast<Eigen::Index>(kept.size());
        if (m == 0) {
          rase_out = std::numeric_limits<double>::quiet_NaN();
          ase_out = std::numeric_limits<double>::quiet_NaN();
          sigma2_out = std::numeric_limits<double>::quiet_NaN();
          return;
        }
        Eigen::MatrixXd estimates(m, k_points);
        for (Eigen::Index z = 0; z < m; ++z)
          for (int k = 0; k < k_points; ++k)
            estimates(z, k) = field_of(kept[static_cast<std::size_t>(z)]->fit.points
                                           [static_cast<std::size_t>(k)].theta);
        rase_out = rase(estimates, truth);
        const Eigen::MatrixXd devs =
            (estimates.rowwise() - truth.transpose()).array().square();
        ase_out = devs.mean();
        if (m >= 2) {
          sigma2_out = squared_dev_variance(devs);
        } else {
          sigma2_out = std::numeric_limits<double>::quiet_NaN();
        }
      };
      metric([](const ThetaPoint& t) { return t.pi; }, cell.pi_true, cell.rase_pi,
             cell.ase_pi, cell.sigma2_pi);
      metric([](const ThetaPoint& t) { return t.a; }, cell.a_true, cell.rase_a,
             cell.ase_a, cell.sigma2_a);
      metric([](const ThetaPoint& t) { return t.b; }, cell.b_true, cell.rase_b,
             cell.ase_b, cell.sigma2_b);

      cell.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace nmrse
