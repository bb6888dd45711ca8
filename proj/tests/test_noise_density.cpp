#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "nmrse/noise_density.hpp"
#include "nmrse/simulation.hpp"

using namespace nmrse;

namespace {

Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

double trapezoid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
    acc += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
  return acc;
}

DensityConfig small_config(double x0, double h1, double h2) {
  DensityConfig cfg;
  cfg.x0 = vec1(x0);
  cfg.h1 = h1;
  cfg.h2 = h2;
  cfg.u_grid = Eigen::VectorXd::LinSpaced(801, -8.0 / h1, 8.0 / h1);
  cfg.y_grid = Eigen::VectorXd::LinSpaced(201, -8.0, 8.0);
  return cfg;
}

}  // namespace

TEST_CASE("q_fourier basics") {
  CHECK(q_fourier(KernelFamily::gaussian, 0.0) == 1.0);
  CHECK(q_fourier(KernelFamily::gaussian, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(q_fourier(KernelFamily::epanechnikov, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q_fourier(KernelFamily::uniform, 0.0) == doctest::Approx(1.0).epsilon(1e-8));
  // epanechnikov FT at pi: 3(sin v - v cos v)/v^3 with v = pi
  CHECK(q_fourier(KernelFamily::epanechnikov, M_PI) ==
        doctest::Approx(3.0 * M_PI / (M_PI * M_PI * M_PI)).epsilon(1e-10));
}

TEST_CASE("design_density concentrated and empty cases") {
  const Dataset all_at(Eigen::MatrixXd::Constant(5, 1, 0.5), Eigen::VectorXd::LinSpaced(5, -1, 1));
  DensityConfig cfg = small_config(0.5, 0.5, 0.2);
  CHECK(design_density(all_at, cfg) ==
        doctest::Approx(0.3989422804014327 / 0.2).epsilon(1e-12));

  DensityConfig compact = cfg;
  compact.design_kernel = {KernelFamily::epanechnikov, 1};
  compact.x0 = vec1(10.0);
  CHECK(design_density(all_at, compact) == 0.0);
}

TEST_CASE("design_density estimates a uniform design near one") {
  const Dataset data = sample_dataset(scenario_g(), 500, 2024);  // X ~ U[0,1]
  DensityConfig cfg = small_config(0.5, 0.5, 0.1);
  CHECK(std::abs(design_density(data, cfg) - 1.0) < 0.15);
}

TEST_CASE("fourier_numerator at u = 0 equals the design density exactly") {
  const Dataset data = sample_dataset(scenario_g(), 200, 5);
  const DensityConfig cfg = small_config(0.5, 0.4, 0.1);
  const ThetaPoint theta{0.3, 4.0, -3.0};
  const std::complex<double> phi0 = fourier_numerator(data, theta, cfg, 0.0);
  CHECK(phi0.real() / design_density(data, cfg) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(phi0.imag() == 0.0);
}

TEST_CASE("fourier_numerator conjugate symmetry") {
  const Dataset data = sample_dataset(scenario_g(), 150, 6);
  const DensityConfig cfg = small_config(0.5, 0.4, 0.1);
  const ThetaPoint theta{0.3, 4.0, -3.0};
  for (const double u : {0.3, 1.1, 2.7, 4.0}) {
    const auto plus = fourier_numerator(data, theta, cfg, u);
    const auto minus = fourier_numerator(data, theta, cfg, -u);
    CHECK(minus.real() == doctest::Approx(plus.real()).epsilon(1e-12));
    CHECK(minus.imag() == doctest::Approx(-plus.imag()).epsilon(1e-12));
  }
}

TEST_CASE("fourier_numerator single-observation closed form") {
  Eigen::MatrixXd x(1, 1);
  x << 0.5;
  Eigen::VectorXd y(1);
  y << 0.0;
  const Dataset data(x, y);
  const DensityConfig cfg = small_config(0.5, 0.4, 0.2);
  const ThetaPoint theta{0.3, 0.0, 0.0};  // M(theta, u) = 1 for all u
  for (const double u : {0.0, 0.9, 2.2}) {
    const auto phi = fourier_numerator(data, theta, cfg, u);
    const double expected =
        q_fourier(KernelFamily::gaussian, cfg.h1 * u) * (0.3989422804014327 / cfg.h2);
    CHECK(phi.real() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(phi.imag()) < 1e-15);
  }
}

TEST_CASE("fourier_numerator rejects a degenerate transfer") {
  const Dataset data = sample_dataset(scenario_g(), 50, 7);
  const DensityConfig cfg = small_config(0.5, 0.4, 0.1);
  CHECK_THROWS_AS(fourier_numerator(data, {0.5, 0.0, M_PI}, cfg, 1.0), std::domain_error);
}

TEST_CASE("invert_and_normalize recovers a symmetric local density on scenario G") {
  const Scenario sc = scenario_g();
  const Dataset data = sample_dataset(sc, 2000, 41);
  const ThetaPoint truth = true_theta(sc, 0.5);
  DensityConfig cfg = default_density_config(data, vec1(0.5), 0.08);
  // symmetric y-grid so f(y) and f(-y) share nodes
  const double sigma_half = 0.9 * std::exp(0.5);
  cfg.y_grid = Eigen::VectorXd::LinSpaced(513, -6.0 * sigma_half, 6.0 * sigma_half);
  const LocalDensity density = invert_and_normalize(data, truth, cfg);

  CHECK(trapezoid(density.y_grid, density.values) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(density.values.minCoeff() >= 0.0);

  const double peak = density.values.maxCoeff();
  double symmetry_defect = 0.0;
  const Eigen::Index m = density.y_grid.size();
  for (Eigen::Index j = 0; j < m; ++j)
    symmetry_defect =
        std::max(symmetry_defect, std::abs(density.values[j] - density.values[m - 1 - j]));
  CHECK(symmetry_defect < 0.1 * peak);
  CHECK(density.trim_mass < 0.05);
  CHECK(density.imag_residual < 1e-2 * peak);
}

TEST_CASE("invert_and_normalize error paths") {
  const Dataset data = sample_dataset(scenario_g(), 300, 42);
  const ThetaPoint truth = true_theta(scenario_g(), 0.5);

  DensityConfig far = small_config(80.0, 0.4, 0.05);  // vanishing design density
  CHECK_THROWS_WITH_AS(invert_and_normalize(data, truth, far),
                       doctest::Contains("vanishing design density"), std::runtime_error);

  DensityConfig narrow = small_config(0.5, 0.4, 0.1);
  narrow.u_grid = Eigen::VectorXd::LinSpaced(21, -0.4, 0.4);  // edge mass still large
  CHECK_THROWS_WITH_AS(invert_and_normalize(data, truth, narrow),
                       doctest::Contains("window too narrow"), std::runtime_error);

  DensityConfig asym = small_config(0.5, 0.4, 0.1);
  asym.u_grid = Eigen::VectorXd::LinSpaced(100, -1.0, 3.0);
  CHECK_THROWS_AS(invert_and_normalize(data, truth, asym), std::invalid_argument);
}

TEST_CASE("default_density_config produces a usable configuration") {
  const Dataset data = sample_dataset(scenario_g(), 500, 43);
  const DensityConfig cfg = default_density_config(data, vec1(0.5), 0.1);
  CHECK(cfg.h1 > 0.0);
  CHECK(cfg.h2 == 0.1);
  CHECK(cfg.u_grid.size() == 4096);
  CHECK(cfg.y_grid.size() == 512);
  CHECK(cfg.u_grid[0] == doctest::Approx(-cfg.u_grid[cfg.u_grid.size() - 1]));
  // Q* at the grid edge is at the 1e-9 truncation level
  CHECK(q_fourier(KernelFamily::gaussian, cfg.h1 * cfg.u_grid[0]) ==
        doctest::Approx(1e-9).epsilon(0.01));
  cfg.validate(data);
}
