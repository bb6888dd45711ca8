// CSV and JSON serialization: dataset ingestion, fit results, local
// densities and study reports. CSV dialect: comma-separated, '.' decimal,
// mandatory header row, UTF-8. Doubles are printed in shortest
// round-trip form so rewriting a parsed file is byte-stable.

#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "nmrse/estimator.hpp"
#include "nmrse/model.hpp"
#include "nmrse/noise_density.hpp"
#include "nmrse/simulation.hpp"

namespace nmrse {

//! Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw std::runtime_error(context + ": cannot parse number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

//! Dataset CSV: header x,y (d = 1) or x1,...,xd,y; one observation per row.
inline std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  if (data.dim() == 1) {
    out += "x,y\n";
  } else {
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      out += "x" + std::to_string(j + 1) + ",";
    out += "y\n";
  }
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      out += format_double(data.x()(i, j)) + ",";
    out += format_double(data.y()[i]) + "\n";
  }
  return out;
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

//! Parses a dataset CSV (last column is the response). Errors carry the
//! offending line number.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error(path + ":1: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2)
    throw std::runtime_error(path + ":1: need at least two columns (design..., response)");
  const auto d = static_cast<Eigen::Index>(header.size()) - 1;

  std::vector<double> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    const std::string context = path + ":" + std::to_string(line_no);
    for (Eigen::Index j = 0; j < d; ++j)
      xs.push_back(parse_double(fields[static_cast<std::size_t>(j)], context));
    ys.push_back(parse_double(fields.back(), context));
  }
  if (ys.empty()) throw std::runtime_error(path + ": no data rows");
  const auto n = static_cast<Eigen::Index>(ys.size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = xs[static_cast<std::size_t>(i * d + j)];
    y[i] = ys[static_cast<std::size_t>(i)];
  }
  return Dataset(std::move(x), std::move(y));
}

// -- fit results --------------------------------------------------------

inline nlohmann::json theta_to_json(const ThetaPoint& t) {
  return {{"pi", t.pi}, {"a", t.a}, {"b", t.b}};
}

inline nlohmann::json fit_result_to_json(const FitResult& fit) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t k = 0; k < fit.points.size(); ++k) {
    const PointFit& p = fit.points[k];
    nlohmann::json jp;
    jp["x"] = nlohmann::json::array();
    for (Eigen::Index j = 0; j < fit.grid.cols(); ++j)
      jp["x"].push_back(fit.grid(static_cast<Eigen::Index>(k), j));
    jp["theta"] = theta_to_json(p.theta);
    jp["contrast"] = p.contrast_value;
    jp["iterations"] = p.iterations;
    jp["evaluations"] = p.evaluations;
    jp["h_local"] = p.h_local;
    jp["h_used"] = p.h_used;
    jp["flags"] = p.flags.to_string();
    if (p.flags.failed) jp["error"] = p.error;
    points.push_back(std::move(jp));
  }
  return {{"space",
           {{"pi_lo", fit.space.pi_lo},
            {"pi_hi", fit.space.pi_hi},
            {"loc_lo", fit.space.loc_lo},
            {"loc_hi", fit.space.loc_hi}}},
          {"pi_bar", fit.init.pi_bar},
          {"points", std::move(points)}};
}

inline std::string fit_result_to_csv(const FitResult& fit) {
  std::string out =
      "x,pi_hat,a_hat,b_hat,contrast,iterations,h_local,h_used,flags\n";
  for (std::size_t k = 0; k < fit.points.size(); ++k) {
    const PointFit& p = fit.points[k];
    out += format_double(fit.grid(static_cast<Eigen::Index>(k), 0)) + ",";
    out += format_double(p.theta.pi) + "," + format_double(p.theta.a) + "," +
           format_double(p.theta.b) + ",";
    out += format_double(p.contrast_value) + "," + std::to_string(p.iterations) + ",";
    out += format_double(p.h_local) + "," + format_double(p.h_used) + ",";
    out += p.flags.to_string() + "\n";
  }
  return out;
}

// -- local densities ----------------------------------------------------

inline std::string density_to_csv(const LocalDensity& density) {
  std::string out = "y,f_hat\n";
  for (Eigen::Index j = 0; j < density.y_grid.size(); ++j)
    out += format_double(density.y_grid[j]) + "," + format_double(density.values[j]) + "\n";
  return out;
}

inline nlohmann::json density_sidecar_json(const LocalDensity& density,
                                           const DensityConfig& cfg) {
  return {{"x0", cfg.x0[0]},
          {"h1", cfg.h1},
          {"h2", cfg.h2},
          {"u_min", cfg.u_grid[0]},
          {"u_max", cfg.u_grid[cfg.u_grid.size() - 1]},
          {"u_count", cfg.u_grid.size()},
          {"y_count", cfg.y_grid.size()},
          {"normalization", density.normalization},
          {"trim_mass", density.trim_mass},
          {"imag_residual", density.imag_residual}};
}

// -- study reports ------------------------------------------------------

//! Raw per-replication dump for one (scenario, n) block; one row per
//! (replication, grid point), auditable independently of the report.
inline std::string study_cell_raw_csv(const StudyCell& cell) {
  std::string out =
      "replication,grid_index,x,pi_hat,a_hat,b_hat,pi_true,a_true,b_true,flags\n";
  for (const ReplicationOutcome& rep : cell.raw) {
    for (Eigen::Index k = 0; k < cell.grid.size(); ++k) {
      const PointFit& p = rep.fit.points[static_cast<std::size_t>(k)];
      out += std::to_string(rep.replication) + "," + std::to_string(k + 1) + ",";
      out += format_double(cell.grid[k]) + ",";
      out += format_double(p.theta.pi) + "," + format_double(p.theta.a) + "," +
             format_double(p.theta.b) + ",";
      out += format_double(cell.pi_true[k]) + "," + format_double(cell.a_true[k]) + "," +
             format_double(cell.b_true[k]) + ",";
      out += p.flags.to_string() + "\n";
    }
  }
  return out;
}

inline nlohmann::json study_report_to_json(const StudyReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const StudyCell& cell : report.cells) {
    nlohmann::json jc;
    jc["scenario"] = cell.scenario;
    jc["n"] = cell.n;
    jc["replications"] = cell.replications;
    jc["failures"] = cell.failures;
    jc["rase"] = {{"pi", cell.rase_pi}, {"a", cell.rase_a}, {"b", cell.rase_b}};
    jc["ase"] = {{"pi", cell.ase_pi}, {"a", cell.ase_a}, {"b", cell.ase_b}};
    jc["sigma2"] = {{"pi", cell.sigma2_pi}, {"a", cell.sigma2_a}, {"b", cell.sigma2_b}};
    jc["seeds"] = cell.seeds;
    cells.push_back(std::move(jc));
  }
  return {{"cells", std::move(cells)}};
}

//! Human-readable table in the usual simulation-report layout, one block
//! per scenario with an NMR-SE row per sample size.
inline std::string study_report_table(const StudyReport& report) {
  auto fmt3 = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
  };
  std::string out;
  std::string current;
  for (const StudyCell& cell : report.cells) {
    if (cell.scenario != current) {
      current = cell.scenario;
      if (!out.empty()) out += "\n";
      out += "Scenario " + current + "\n";
      out += "Sample size    Method   RASE_pi (s2_pi)   RASE_a (s2_a)     RASE_b (s2_b)\n";
    }
    char line[160];
    std::snprintf(line, sizeof(line), "n = %-9d %-8s %s (%s)     %s (%s)     %s (%s)\n",
                  cell.n, "NMR-SE", fmt3(cell.rase_pi).c_str(), fmt3(cell.sigma2_pi).c_str(),
                  fmt3(cell.rase_a).c_str(), fmt3(cell.sigma2_a).c_str(),
                  fmt3(cell.rase_b).c_str(), fmt3(cell.sigma2_b).c_str());
    out += line;
  }
  return out;
}

}  // namespace nmrse
