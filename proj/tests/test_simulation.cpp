#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nmrse/simulation.hpp"

using namespace nmrse;

namespace {

// influence-function standard error of the sample skewness / kurtosis of a
// zero-symmetric sample (test-only; estimates the sampling noise from the
// draws themselves, valid for heavy tails where normal-theory rules fail)
double skewness(const Eigen::VectorXd& x, double* se_out) {
  const double m2 = x.array().square().mean();
  const double m3 = x.array().cube().mean();
  const double skew = m3 / std::pow(m2, 1.5);
  const Eigen::ArrayXd g =
      (x.array().cube() - m3 - 1.5 * m3 / m2 * (x.array().square() - m2)) / std::pow(m2, 1.5);
  *se_out = std::sqrt(g.square().mean() / static_cast<double>(x.size()));
  return skew;
}

double kurtosis(const Eigen::VectorXd& x, double* se_out) {
  const double m2 = x.array().square().mean();
  const double m4 = x.array().pow(4).mean();
  const double kurt = m4 / (m2 * m2);
  const Eigen::ArrayXd g =
      (x.array().pow(4) - m4 - 2.0 * m4 / m2 * (x.array().square() - m2)) / (m2 * m2);
  *se_out = std::sqrt(g.square().mean() / static_cast<double>(x.size()));
  return kurt;
}

}  // namespace

TEST_CASE("true_theta direct evaluations") {
  const ThetaPoint g_mid = true_theta(scenario_g(), 0.5);
  CHECK(g_mid.pi == doctest::Approx(4.0 / 15.0).epsilon(1e-14));
  CHECK(g_mid.a == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(g_mid.b == doctest::Approx(-3.0).epsilon(1e-14));

  CHECK(true_theta(scenario_g(), 1.0 / 6.0).pi == doctest::Approx(0.4).epsilon(1e-14));

  const ThetaPoint t0 = true_theta(scenario_t(), 0.0);
  CHECK(t0.pi == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(t0.a == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(t0.b == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("scenario lookup and validation") {
  CHECK(scenario_by_name("G").name == "G");
  CHECK(scenario_by_name("t").name == "T");
  CHECK(scenario_by_name("L").noise == NoiseFamily::laplace_scale);
  CHECK_THROWS_AS(scenario_by_name("X"), std::invalid_argument);

  Scenario bad = scenario_g();
  bad.pi_fn = [](double) { return 1.0; };
  CHECK_THROWS_AS(validate_scenario(bad), std::invalid_argument);
  Scenario bad2 = scenario_g();
  bad2.noise_param = [](double) { return 0.0; };
  CHECK_THROWS_AS(validate_scenario(bad2), std::invalid_argument);
}

TEST_CASE("sample_dataset determinism and shape") {
  const Dataset a = sample_dataset(scenario_t(), 200, 42);
  const Dataset b = sample_dataset(scenario_t(), 200, 42);
  CHECK((a.y() - b.y()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.x() - b.x()).cwiseAbs().maxCoeff() == 0.0);
  const Dataset c = sample_dataset(scenario_t(), 200, 43);
  CHECK((a.y() - c.y()).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.n() == 200);
  CHECK(a.dim() == 1);
  CHECK_THROWS_AS(sample_dataset(scenario_t(), 0, 1), std::invalid_argument);
}

TEST_CASE("nearly degenerate scenario collapses the responses to zero") {
  // The invariants require pi in (0,1) and a positive scale, so the closest
  // admissible scenario to (pi = 1, zero noise) is used.
  Scenario sc;
  sc.name = "custom";
  sc.pi_fn = [](double) { return 1.0 - 0x1.0p-52; };
  sc.a_fn = [](double) { return 0.0; };
  sc.b_fn = [](double) { return 100.0; };
  sc.noise = NoiseFamily::gaussian_scale;
  sc.noise_param = [](double) { return 1e-300; };
  const Dataset data = sample_dataset(sc, 200, 7);
  CHECK(data.y().cwiseAbs().maxCoeff() < 1e-250);
}

TEST_CASE("stratified component means match the location function") {
  const LabeledSample sample = sample_dataset_labeled(scenario_g(), 10000, 77);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < sample.data.n(); ++i) {
    if (sample.component[static_cast<std::size_t>(i)] == 1 && sample.data.x()(i, 0) < 0.01) {
      sum += sample.data.y()[i];
      ++count;
    }
  }
  REQUIRE(count > 5);
  const double sigma0 = 0.9;  // G noise scale at x = 0
  CHECK(std::abs(sum / count - 4.0) < 3.0 * sigma0 / std::sqrt(static_cast<double>(count)));
}

TEST_CASE("student noise with df = 8 has the analytic kurtosis") {
  Rng rng(314);
  const int n = 100000;
  Eigen::VectorXd draws(n);
  for (int i = 0; i < n; ++i) draws[i] = rng.student_t(8.0);
  double se = 0.0;
  const double kurt = kurtosis(draws, &se);
  CHECK(std::abs(kurt - 4.5) < 3.0 * se);
}

TEST_CASE("noise draws are symmetric for every scenario family") {
  for (const Scenario& sc : {scenario_g(), scenario_t(), scenario_l()}) {
    Rng rng(2718);
    const double x = 0.2;  // T: df = 7, all moments needed for the se exist
    const int n = 100000;
    Eigen::VectorXd draws(n);
    for (int i = 0; i < n; ++i) draws[i] = noise_draw(rng, sc.noise, sc.noise_param(x));
    double se = 0.0;
    const double skew = skewness(draws, &se);
    CHECK(std::abs(skew) < 4.0 * se);
  }
}

TEST_CASE("laplace noise variance matches 2 nu^2") {
  Rng rng(999);
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = rng.laplace(1.5);
    acc += d * d;
  }
  CHECK(acc / n == doctest::Approx(2.0 * 1.5 * 1.5).epsilon(0.03));
}

TEST_CASE("rase trivial examples") {
  Eigen::VectorXd truth(4);
  truth << 1.0, 2.0, 3.0, 4.0;
  CHECK(rase(truth, truth) == 0.0);
  const Eigen::VectorXd shifted = truth.array() + 0.3;
  CHECK(rase(shifted, truth) == doctest::Approx(0.3).epsilon(1e-12));
  Eigen::MatrixXd two(2, 4);
  two.row(0) = truth.transpose().array() + 0.2;
  two.row(1) = truth.transpose().array() - 0.6;
  CHECK(rase(two, truth) == doctest::Approx(0.5 * (0.2 + 0.6)).epsilon(1e-12));
  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(rase(wrong, truth), std::invalid_argument);
}

TEST_CASE("squared_dev_variance examples") {
  Eigen::MatrixXd same(3, 4);
  same.setConstant(0.75);  // dyadic so the column mean is exact
  CHECK(squared_dev_variance(same) == 0.0);

  Eigen::MatrixXd r(2, 1);
  r << 0.0, 2.0;
  CHECK(squared_dev_variance(r) == doctest::Approx(2.0).epsilon(1e-12));

  Eigen::MatrixXd single(1, 4);
  CHECK_THROWS_AS(squared_dev_variance(single), std::invalid_argument);
}

TEST_CASE("metrics are invariant to replication order") {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> d(0.0, 2.0);
  Eigen::MatrixXd estimates(6, 5);
  Eigen::VectorXd truth(5);
  for (int k = 0; k < 5; ++k) truth[k] = d(gen);
  for (int z = 0; z < 6; ++z)
    for (int k = 0; k < 5; ++k) estimates(z, k) = d(gen);
  Eigen::MatrixXd permuted(6, 5);
  const int order[6] = {3, 0, 5, 1, 4, 2};
  for (int z = 0; z < 6; ++z) permuted.row(z) = estimates.row(order[z]);
  CHECK(rase(permuted, truth) == doctest::Approx(rase(estimates, truth)).epsilon(1e-12));
  const Eigen::MatrixXd devs = (estimates.rowwise() - truth.transpose()).array().square();
  const Eigen::MatrixXd devs_p = (permuted.rowwise() - truth.transpose()).array().square();
  CHECK(squared_dev_variance(devs_p) ==
        doctest::Approx(squared_dev_variance(devs)).epsilon(1e-12));
}

TEST_CASE("run_study with M = 1, K = 1 reduces to a single fit's squared errors") {
  StudyOptions options;
  options.scenarios = {scenario_g()};
  options.n_list = {150};
  options.replications = 1;
  options.grid_size = 1;
  options.master_seed = 31;
  const StudyReport report = run_study(options);
  REQUIRE(report.cells.size() == 1);
  const StudyCell& cell = report.cells[0];
  REQUIRE(cell.raw.size() == 1);
  CHECK(cell.grid[0] == 1.0);  // x_k = k/K with K = 1
  const ThetaPoint truth = true_theta(scenario_g(), 1.0);
  const ThetaPoint& est = cell.raw[0].fit.points[0].theta;
  CHECK(cell.rase_pi == doctest::Approx(std::abs(est.pi - truth.pi)).epsilon(1e-12));
  CHECK(cell.rase_a == doctest::Approx(std::abs(est.a - truth.a)).epsilon(1e-12));
  CHECK(cell.rase_b == doctest::Approx(std::abs(est.b - truth.b)).epsilon(1e-12));
  CHECK(std::isnan(cell.sigma2_a));  // needs M >= 2
  CHECK(cell.failures == 0);
}

TEST_CASE("run_study is deterministic and reproduces single cells inside sweeps") {
  StudyOptions options;
  options.scenarios = {scenario_g(), scenario_t()};
  options.n_list = {80, 120};
  options.replications = 2;
  options.grid_size = 3;
  options.master_seed = 7;
  options.threads = 2;
  const StudyReport sweep = run_study(options);
  REQUIRE(sweep.cells.size() == 4);

  StudyOptions single = options;
  single.scenarios = {scenario_t()};
  single.n_list = {120};
  single.threads = 1;
  const StudyReport alone = run_study(single);
  REQUIRE(alone.cells.size() == 1);
  const StudyCell* in_sweep = nullptr;
  for (const StudyCell& c : sweep.cells)
    if (c.scenario == "T" && c.n == 120) in_sweep = &c;
  REQUIRE(in_sweep != nullptr);
  CHECK(alone.cells[0].rase_a == in_sweep->rase_a);
  CHECK(alone.cells[0].rase_pi == in_sweep->rase_pi);
  CHECK(alone.cells[0].seeds == in_sweep->seeds);
}

TEST_CASE("run_study metrics are stable across master seeds") {
  StudyOptions options;
  options.scenarios = {scenario_g()};
  options.n_list = {300};
  options.replications = 8;
  options.grid_size = 5;
  options.master_seed = 1;
  options.threads = 2;
  const double rase_1 = run_study(options).cells[0].rase_a;
  options.master_seed = 2;
  const double rase_2 = run_study(options).cells[0].rase_a;
  CHECK(std::abs(rase_1 - rase_2) < 0.5 * std::max(rase_1, rase_2));
}
