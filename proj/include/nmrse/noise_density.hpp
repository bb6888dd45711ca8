// Plug-in Fourier-inversion estimator of the local symmetric error density
// f_{x0}. In the Fourier domain
//   phi*_n(u) = (1/n) sum_k Q*(h1 u) e^{iuY_k} / M(theta-hat, u) K_{h2}(X_k - x0),
// the density is recovered by numerical inversion on a symmetric frequency
// grid, f_n(y) = (1/2pi) int e^{-iuy} phi*_n(u) du / l_n(x0), then truncated
// to its nonnegative part and renormalized to unit integral.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "nmrse/kernels.hpp"
#include "nmrse/model.hpp"

namespace nmrse {

//! Fourier transform of the univariate smoothing kernel Q.
inline double q_fourier(KernelFamily family, double v) {
  switch (family) {
    case KernelFamily::gaussian:
      return std::exp(-0.5 * v * v);
    case KernelFamily::epanechnikov: {
      if (std::abs(v) < 1e-4) return 1.0 - v * v / 10.0;  // series near zero
      return 3.0 * (std::sin(v) - v * std::cos(v)) / (v * v * v);
    }
    case KernelFamily::uniform: {
      if (std::abs(v) < 1e-8) return 1.0;
      return std::sin(v) / v;
    }
  }
  return 0.0;
}

struct DensityConfig {
  Eigen::VectorXd x0;
  double h1 = 0.0;  // frequency-smoothing kernel Q scale
  double h2 = 0.0;  // design-space kernel scale
  KernelFamily q_family = KernelFamily::gaussian;
  Kernel design_kernel{KernelFamily::gaussian, 1};
  Eigen::VectorXd y_grid;  // evaluation grid for the density
  Eigen::VectorXd u_grid;  // inversion grid, symmetric about 0

  void validate(const Dataset& data) const {
    if (!(h1 > 0.0 && h2 > 0.0))
      throw std::invalid_argument("DensityConfig: bandwidths must be positive");
    if (x0.size() != data.dim())
      throw std::invalid_argument("DensityConfig: x0 dimension does not match the dataset");
    if (y_grid.size() < 2 || u_grid.size() < 2)
      throw std::invalid_argument("DensityConfig: grids need at least two nodes");
    const double asym = std::abs(u_grid[0] + u_grid[u_grid.size() - 1]);
    if (asym > 1e-9 * std::abs(u_grid[u_grid.size() - 1]))
      throw std::invalid_argument("DensityConfig: u_grid must be symmetric about 0");
  }
};

//! Estimated local error density on y_grid, trimmed and renormalized.
struct LocalDensity {
  Eigen::VectorXd y_grid;
  Eigen::VectorXd values;      // f-hat >= 0, trapezoid integral 1
  double normalization = 0.0;  // integral of the positive part before scaling
  double trim_mass = 0.0;      // integral of the discarded negative part
  double imag_residual = 0.0;  // max |Im| of the inversion before discarding
};

namespace detail {

inline Eigen::VectorXd design_weights(const Dataset& data, const DensityConfig& cfg) {
  Kernel k = cfg.design_kernel;
  k.dim = static_cast<int>(data.dim());
  Eigen::VectorXd kappa(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    kappa[i] = scaled_kernel(k, cfg.h2, (data.x().row(i).transpose() - cfg.x0).eval());
  return kappa;
}

}  // namespace detail

//! Kernel density estimate l_n(x0) of the design density.
inline double design_density(const Dataset& data, const DensityConfig& cfg) {
  return detail::design_weights(data, cfg).mean();
}

//! phi*_n(u): the smoothed empirical characteristic function of the errors,
//! divided through the transfer function at theta-hat.
inline std::complex<double> fourier_numerator(const Dataset& data, const ThetaPoint& theta_hat,
                                              const DensityConfig& cfg, double u) {
  const std::complex<double> m = transfer(theta_hat, u);
  if (std::abs(m) < kDegenerateTransferTol)
    throw std::domain_error("fourier_numerator: degenerate transfer function, |M(t,u)| < 1e-12");
  const Eigen::VectorXd kappa = detail::design_weights(data, cfg);
  double re = 0.0, im = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    re += kappa[i] * std::cos(u * data.y()[i]);
    im += kappa[i] * std::sin(u * data.y()[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(data.n());
  return q_fourier(cfg.q_family, cfg.h1 * u) * std::complex<double>(re * inv_n, im * inv_n) / m;
}

//! Full inversion: numerical inverse Fourier transform on u_grid, truncation
//! of the negative part, renormalization to unit integral.
inline LocalDensity invert_and_normalize(const Dataset& data, const ThetaPoint& theta_hat,
                                         const DensityConfig& cfg) {
  cfg.validate(data);
  const Eigen::VectorXd kappa = detail::design_weights(data, cfg);
  const double ell = kappa.mean();
  if (!(ell > 1e-8))
    throw std::runtime_error("invert_and_normalize: vanishing design density at x0");

  // phi*_n over the inversion grid, one pass of trig sums per node.
  const Eigen::Index n_u = cfg.u_grid.size();
  Eigen::VectorXcd phi(n_u);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  for (Eigen::Index g = 0; g < n_u; ++g) {
    const double u = cfg.u_grid[g];
    const std::complex<double> m = transfer(theta_hat, u);
    if (std::abs(m) < kDegenerateTransferTol)
      throw std::domain_error("invert_and_normalize: degenerate transfer function on the u-grid");
    double re = 0.0, im = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      re += kappa[i] * std::cos(u * data.y()[i]);
      im += kappa[i] * std::sin(u * data.y()[i]);
    }
    phi[g] = q_fourier(cfg.q_family, cfg.h1 * u) *
             std::complex<double>(re * inv_n, im * inv_n) / m;
  }

  const double edge = std::max(std::abs(phi[0]), std::abs(phi[n_u - 1]));
  if (!(edge < 1e-4 * ell))
    throw std::runtime_error(
        "invert_and_normalize: inversion window too narrow, |phi*| at the grid edge exceeds "
        "1e-4 * |phi*(0)|");

  Eigen::VectorXd trap(n_u);
  for (Eigen::Index g = 0; g < n_u; ++g) {
    double w = 0.0;
    if (g > 0) w += 0.5 * (cfg.u_grid[g] - cfg.u_grid[g - 1]);
    if (g + 1 < n_u) w += 0.5 * (cfg.u_grid[g + 1] - cfg.u_grid[g]);
    trap[g] = w;
  }

  const Eigen::Index n_y = cfg.y_grid.size();
  Eigen::VectorXd f_raw(n_y);
  double imag_residual = 0.0;
  const double scale = 1.0 / (2.0 * M_PI * ell);
  for (Eigen::Index j = 0; j < n_y; ++j) {
    const double y = cfg.y_grid[j];
    double re = 0.0, im = 0.0;
    for (Eigen::Index g = 0; g < n_u; ++g) {
      const double u = cfg.u_grid[g];
      const double cu = std::cos(u * y);
      const double su = std::sin(u * y);
      // e^{-iuy} phi(u)
      re += trap[g] * (cu * phi[g].real() + su * phi[g].imag());
      im += trap[g] * (cu * phi[g].imag() - su * phi[g].real());
    }
    f_raw[j] = re * scale;
    imag_residual = std::max(imag_residual, std::abs(im * scale));
  }

  LocalDensity out;
  out.y_grid = cfg.y_grid;
  out.imag_residual = imag_residual;
  Eigen::VectorXd positive = f_raw.cwiseMax(0.0);
  double pos_mass = 0.0, neg_mass = 0.0;
  for (Eigen::Index j = 0; j + 1 < n_y; ++j) {
    const double dy = cfg.y_grid[j + 1] - cfg.y_grid[j];
    pos_mass += 0.5 * (positive[j] + positive[j + 1]) * dy;
    neg_mass += 0.5 * (std::max(0.0, -f_raw[j]) + std::max(0.0, -f_raw[j + 1])) * dy;
  }
  if (!(pos_mass > 0.0))
    throw std::runtime_error("invert_and_normalize: inverted density has no positive part");
  out.normalization = pos_mass;
  out.trim_mass = neg_mass;
  out.values = positive / pos_mass;
  return out;
}

//! Defaults for the bandwidths and grids: h2 from the estimator's local
//! bandwidth at x0, h1 by a Silverman-type rule on the effective local
//! sample size, u-window where Q* falls below 1e-9, y-window the response
//! range widened by three response standard deviations. The paper-level
//! theory does not prescribe these; they are heuristics.
inline DensityConfig default_density_config(const Dataset& data, const Eigen::VectorXd& x0,
                                            double h_local, int y_count = 512,
                                            int u_count = 4096) {
  DensityConfig cfg;
  cfg.x0 = x0;
  cfg.h2 = h_local;
  if (!(cfg.h2 > 0.0))
    throw std::invalid_argument("default_density_config: h_local must be positive");
  const double mean = data.y().mean();
  const double sd = std::sqrt((data.y().array() - mean).square().sum() /
                              std::max<Eigen::Index>(1, data.n() - 1));
  const Eigen::VectorXd kappa = detail::design_weights(data, cfg);
  const double kappa_max = kappa.maxCoeff();
  const double effective_n = (kappa_max > 0.0) ? kappa.sum() / kappa_max : 1.0;
  cfg.h1 = 1.06 * std::max(sd, 1e-8) * std::pow(std::max(effective_n, 2.0), -0.2);
  const double u_max = std::min(std::sqrt(-2.0 * std::log(1e-9)), 40.0) / cfg.h1;
  cfg.u_grid = Eigen::VectorXd::LinSpaced(u_count, -u_max, u_max);
  cfg.y_grid = Eigen::VectorXd::LinSpaced(y_count, data.y().minCoeff() - 3.0 * sd,
                                          data.y().maxCoeff() + 3.0 * sd);
  return cfg;
}

}  // namespace nmrse
