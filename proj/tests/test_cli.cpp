#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nmrse/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCli = NMRSE_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nmrse_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) { return nmrse::read_text_file(p.string()); }

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("simulate writes the dataset with a header and is byte-deterministic") {
  const fs::path a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
  REQUIRE(run("simulate --scenario G --n 400 --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("simulate --scenario G --n 400 --seed 7 --out " + b.string()) == 0);
  const std::string csv = slurp(a / "dataset.csv");
  CHECK(count_lines(csv) == 401);  // header + 400 rows
  CHECK(csv.substr(0, 4) == "x,y\n");
  CHECK(csv == slurp(b / "dataset.csv"));
  CHECK(slurp(a / "simulate_config.json") == slurp(b / "simulate_config.json"));

  const nmrse::Dataset data = nmrse::read_dataset_csv((a / "dataset.csv").string());
  CHECK(data.n() == 400);
}

TEST_CASE("simulate validates its arguments") {
  const fs::path dir = fresh_dir("sim_bad");
  CHECK(run("simulate --scenario T --n 0 --out " + dir.string()) == 2);
  CHECK(run("simulate --scenario Q --n 10 --out " + dir.string()) == 2);
  CHECK(run("simulate --bogus-flag 1 --out " + dir.string()) == 2);
}

TEST_CASE("fit round-trips a simulate output and honors the grid spec") {
  const fs::path dir = fresh_dir("fit");
  REQUIRE(run("simulate --scenario G --n 300 --seed 3 --out " + dir.string()) == 0);
  REQUIRE(run("fit --input " + (dir / "dataset.csv").string() +
              " --grid 0.05:0.95:20 --seed 5 --out " + dir.string()) == 0);
  const std::string csv = slurp(dir / "fit_curve.csv");
  CHECK(count_lines(csv) == 21);  // header + 20 grid rows
  const json result = json::parse(slurp(dir / "fit_result.json"));
  CHECK(result["points"].size() == 20);
  for (const auto& p : result["points"]) {
    CHECK(p["theta"]["pi"].get<double>() >= 0.05);
    CHECK(p["theta"]["pi"].get<double>() <= 0.95);
  }
  const json echo = json::parse(slurp(dir / "fit_config.json"));
  CHECK(echo["command"] == "fit");
  CHECK(echo["seed"] == 5);
  CHECK(echo["derived"]["n"] == 300);
}

TEST_CASE("fit replays byte-identically from its config echo across thread counts") {
  const fs::path dir = fresh_dir("fit_replay");
  REQUIRE(run("simulate --scenario T --n 250 --seed 11 --out " + dir.string()) == 0);
  const std::string input = (dir / "dataset.csv").string();
  const fs::path out1 = fresh_dir("fit_replay_1"), out2 = fresh_dir("fit_replay_2");
  REQUIRE(run("fit --input " + input + " --grid 0.2:0.8:4 --seed 9 --threads 1 --out " +
              out1.string()) == 0);
  REQUIRE(run("fit --config " + (out1 / "fit_config.json").string() +
              " --threads 3 --out " + out2.string()) == 0);
  CHECK(slurp(out1 / "fit_curve.csv") == slurp(out2 / "fit_curve.csv"));
  CHECK(slurp(out1 / "fit_result.json") == slurp(out2 / "fit_result.json"));
  CHECK(slurp(out1 / "fit_config.json") == slurp(out2 / "fit_config.json"));
}

TEST_CASE("config files with unknown keys or the wrong command are rejected") {
  const fs::path dir = fresh_dir("cfg_bad");
  nmrse::write_text_file((dir / "bad.json").string(), "{\"scenario\":\"G\",\"oops\":1}\n");
  CHECK(run("simulate --config " + (dir / "bad.json").string() + " --out " + dir.string()) == 2);
  nmrse::write_text_file((dir / "wrong.json").string(), "{\"command\":\"fit\"}\n");
  CHECK(run("simulate --config " + (dir / "wrong.json").string() + " --out " + dir.string()) ==
        2);
  nmrse::write_text_file((dir / "mangled.json").string(), "{not json\n");
  CHECK(run("simulate --config " + (dir / "mangled.json").string() + " --out " + dir.string()) ==
        2);
}

TEST_CASE("density emits one CSV per x0 with a unit-integral estimate") {
  const fs::path dir = fresh_dir("density");
  REQUIRE(run("simulate --scenario G --n 500 --seed 21 --out " + dir.string()) == 0);
  REQUIRE(run("fit --input " + (dir / "dataset.csv").string() +
              " --grid 0.25:0.75:3 --seed 2 --out " + dir.string()) == 0);
  REQUIRE(run("density --input " + (dir / "dataset.csv").string() + " --fit " +
              (dir / "fit_result.json").string() + " --x0 0.25,0.75 --out " + dir.string()) ==
          0);
  CHECK(fs::exists(dir / "density_x0_0.25.csv"));
  CHECK(fs::exists(dir / "density_x0_0.75.csv"));
  CHECK(fs::exists(dir / "density_x0_0.25.json"));

  // trapezoid integral of the f_hat column is 1
  std::ifstream f(dir / "density_x0_0.25.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "y,f_hat");
  std::vector<double> ys, fs_;
  while (std::getline(f, line)) {
    const auto comma = line.find(',');
    ys.push_back(std::stod(line.substr(0, comma)));
    fs_.push_back(std::stod(line.substr(comma + 1)));
  }
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < ys.size(); ++i)
    integral += 0.5 * (fs_[i] + fs_[i + 1]) * (ys[i + 1] - ys[i]);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

  const json sidecar = json::parse(slurp(dir / "density_x0_0.25.json"));
  CHECK(sidecar["trim_mass"].get<double>() >= 0.0);
  CHECK(sidecar["trim_mass"].get<double>() < 0.2);

  // a requested x0 without a fitted grid point is an error
  CHECK(run("density --input " + (dir / "dataset.csv").string() + " --fit " +
            (dir / "fit_result.json").string() + " --x0 0.33 --out " + dir.string()) == 2);
}

TEST_CASE("study emits report, table and raw dumps; cells recompute from the dump") {
  const fs::path dir = fresh_dir("study");
  REQUIRE(run("study --scenario G --n 120 --M 3 --K 4 --seed 5 --threads 2 --out " +
              dir.string()) == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "report_table.txt"));
  CHECK(fs::exists(dir / "raw_G_n120.csv"));
  CHECK(fs::exists(dir / "study_config.json"));
  CHECK(fs::exists(dir / "study_timing.txt"));

  const json report = json::parse(slurp(dir / "report.json"));
  REQUIRE(report["cells"].size() == 1);
  const auto& cell = report["cells"][0];

  // independent recomputation of RASE and sigma2 from the raw dump
  std::ifstream raw(dir / "raw_G_n120.csv");
  std::string line;
  std::getline(raw, line);
  CHECK(line == "replication,grid_index,x,pi_hat,a_hat,b_hat,pi_true,a_true,b_true,flags");
  std::vector<std::vector<double>> r_a(3, std::vector<double>(4, 0.0));
  while (std::getline(raw, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const int z = std::stoi(fields[0]) - 1;
    const int k = std::stoi(fields[1]) - 1;
    const double a_hat = std::stod(fields[4]);
    const double a_true = std::stod(fields[7]);
    r_a[static_cast<std::size_t>(z)][static_cast<std::size_t>(k)] =
        (a_hat - a_true) * (a_hat - a_true);
  }
  double rase_sum = 0.0;
  for (const auto& row : r_a) {
    double m = 0.0;
    for (const double v : row) m += v;
    rase_sum += std::sqrt(m / 4.0);
  }
  CHECK(cell["rase"]["a"].get<double>() == doctest::Approx(rase_sum / 3.0).epsilon(1e-12));

  double sigma2 = 0.0;
  for (int k = 0; k < 4; ++k) {
    double mean = 0.0;
    for (int z = 0; z < 3; ++z) mean += r_a[static_cast<std::size_t>(z)][static_cast<std::size_t>(k)];
    mean /= 3.0;
    double var = 0.0;
    for (int z = 0; z < 3; ++z) {
      const double d = r_a[static_cast<std::size_t>(z)][static_cast<std::size_t>(k)] - mean;
      var += d * d;
    }
    sigma2 += var / 2.0;
  }
  CHECK(cell["sigma2"]["a"].get<double>() == doctest::Approx(sigma2 / 4.0).epsilon(1e-12));
}

TEST_CASE("study replays byte-identically from its echo, any worker count") {
  const fs::path out1 = fresh_dir("study_replay_1"), out2 = fresh_dir("study_replay_2");
  REQUIRE(run("study --scenario T --n 100 --M 2 --K 3 --seed 9 --threads 1 --out " +
              out1.string()) == 0);
  REQUIRE(run("study --config " + (out1 / "study_config.json").string() +
              " --threads 2 --out " + out2.string()) == 0);
  CHECK(slurp(out1 / "report.json") == slurp(out2 / "report.json"));
  CHECK(slurp(out1 / "report_table.txt") == slurp(out2 / "report_table.txt"));
  CHECK(slurp(out1 / "raw_T_n100.csv") == slurp(out2 / "raw_T_n100.csv"));
  CHECK(slurp(out1 / "study_config.json") == slurp(out2 / "study_config.json"));
  // study_timing.txt is documented as non-deterministic diagnostics
}

TEST_CASE("study scenario 'all' with several sizes emits one block per pair") {
  const fs::path dir = fresh_dir("study_all");
  REQUIRE(run("study --scenario all --n 60,80 --M 1 --K 2 --seed 3 --threads 2 --out " +
              dir.string()) == 0);
  const json report = json::parse(slurp(dir / "report.json"));
  CHECK(report["cells"].size() == 6);  // 3 scenarios x 2 sizes
  for (const std::string sc : {"G", "T", "L"})
    for (const std::string n : {"60", "80"})
      CHECK(fs::exists(dir / ("raw_" + sc + "_n" + n + ".csv")));
}

TEST_CASE("NMRSE_OUTPUT_DIR provides the default output directory") {
  const fs::path dir = fresh_dir("envdir");
  const std::string cmd = "NMRSE_OUTPUT_DIR=" + dir.string() + " " + std::string(kCli) +
                          " simulate --scenario L --n 20 --seed 1 >/dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(fs::exists(dir / "dataset.csv"));
}

TEST_CASE("malformed dataset CSV errors carry line numbers") {
  const fs::path dir = fresh_dir("bad_csv");
  nmrse::write_text_file((dir / "bad.csv").string(), "x,y\n0.1,1.0\n0.2\n");
  CHECK(run("fit --input " + (dir / "bad.csv").string() + " --grid 0.2:0.8:2 --out " +
            dir.string()) == 2);
  try {
    nmrse::read_dataset_csv((dir / "bad.csv").string());
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}
