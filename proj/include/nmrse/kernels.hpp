// Smoothing kernels (product form across coordinates), bandwidth scaling,
// and the frequency-weight density w with its sampler.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "nmrse/rng.hpp"

namespace nmrse {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

enum class KernelFamily { gaussian, epanechnikov, uniform };

//! Product kernel over `dim` coordinates; each family integrates to one per
//! coordinate and has finite integrals of |K|, K^2 and K^4.
struct Kernel {
  KernelFamily family = KernelFamily::gaussian;
  int dim = 1;
};

inline double kernel_value_1d(KernelFamily family, double v) {
  switch (family) {
    case KernelFamily::gaussian:
      return kInvSqrt2Pi * std::exp(-0.5 * v * v);
    case KernelFamily::epanechnikov:
      return (std::abs(v) <= 1.0) ? 0.75 * (1.0 - v * v) : 0.0;
    case KernelFamily::uniform:
      return (std::abs(v) <= 1.0) ? 0.5 : 0.0;
  }
  return 0.0;
}

inline double kernel_value(const Kernel& k, const Eigen::VectorXd& v) {
  if (v.size() != k.dim)
    throw std::invalid_argument("kernel_value: argument dimension does not match kernel dimension");
  double out = 1.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    out *= kernel_value_1d(k.family, v[j]);
    if (out == 0.0) return 0.0;
  }
  return out;
}

//! K_h(v) = h^{-d} K(v / h).
inline double scaled_kernel(const Kernel& k, double h, const Eigen::VectorXd& v) {
  if (!(h > 0.0)) throw std::invalid_argument("scaled_kernel: bandwidth must be positive");
  return kernel_value(k, v / h) / std::pow(h, k.dim);
}

inline double scaled_kernel(const Kernel& k, double h, double v) {
  if (k.dim != 1)
    throw std::invalid_argument("scaled_kernel: scalar argument requires dim == 1");
  if (!(h > 0.0)) throw std::invalid_argument("scaled_kernel: bandwidth must be positive");
  return kernel_value_1d(k.family, v / h) / h;
}

//! Frequency-weight density for the Monte-Carlo contrast integral. The
//! default is the mixture 0.1 N(0,1) + 0.9 Uniform[-2,2]; a tabulated
//! density on a grid is accepted as a custom alternative.
class WeightDensity {
public:
  enum class Family { gauss_uniform_mix, tabulated };

  static WeightDensity gauss_uniform_mix() { return WeightDensity(); }

  //! Piecewise-linear density on a strictly increasing grid; values are
  //! renormalized to integrate to one.
  static WeightDensity tabulated(const Eigen::VectorXd& grid, const Eigen::VectorXd& values) {
    if (grid.size() < 2 || grid.size() != values.size())
      throw std::invalid_argument("WeightDensity::tabulated: need matching grid/values with >= 2 nodes");
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
        throw std::invalid_argument("WeightDensity::tabulated: density values must be finite and nonnegative");
      if (i > 0 && !(grid[i] > grid[i - 1]))
        throw std::invalid_argument("WeightDensity::tabulated: grid must be strictly increasing");
    }
    WeightDensity w;
    w.family_ = Family::tabulated;
    w.grid_ = grid;
    w.values_ = values;
    double total = 0.0;
    for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
      total += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
    if (!(total > 0.0))
      throw std::invalid_argument("WeightDensity::tabulated: density integrates to zero");
    w.values_ /= total;
    w.cdf_.resize(grid.size());
    w.cdf_[0] = 0.0;
    for (Eigen::Index i = 1; i < grid.size(); ++i)
      w.cdf_[i] = w.cdf_[i - 1] +
                  0.5 * (w.values_[i - 1] + w.values_[i]) * (grid[i] - grid[i - 1]);
    w.cdf_[grid.size() - 1] = 1.0;
    return w;
  }

  Family family() const { return family_; }
  const Eigen::VectorXd& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  const Eigen::VectorXd& cumulative() const { return cdf_; }

private:
  Family family_ = Family::gauss_uniform_mix;
  Eigen::VectorXd grid_, values_, cdf_;
};

inline double weight_pdf(const WeightDensity& w, double u) {
  if (w.family() == WeightDensity::Family::gauss_uniform_mix) {
    const double normal_part = 0.1 * kInvSqrt2Pi * std::exp(-0.5 * u * u);
    const double uniform_part = (std::abs(u) <= 2.0) ? 0.9 * 0.25 : 0.0;
    return normal_part + uniform_part;
  }
  const Eigen::VectorXd& g = w.grid();
  if (u <= g[0] || u >= g[g.size() - 1]) {
    if (u == g[0]) return w.values()[0];
    if (u == g[g.size() - 1]) return w.values()[g.size() - 1];
    return 0.0;
  }
  Eigen::Index hi = 1;
  while (g[hi] < u) ++hi;
  const double s = (u - g[hi - 1]) / (g[hi] - g[hi - 1]);
  return (1.0 - s) * w.values()[hi - 1] + s * w.values()[hi];
}

inline double weight_cdf(const WeightDensity& w, double u) {
  if (w.family() == WeightDensity::Family::gauss_uniform_mix) {
    double uniform_part = (u + 2.0) / 4.0;
    uniform_part = std::min(1.0, std::max(0.0, uniform_part));
    return 0.1 * normal_cdf(u) + 0.9 * uniform_part;
  }
  const Eigen::VectorXd& g = w.grid();
  if (u <= g[0]) return 0.0;
  if (u >= g[g.size() - 1]) return 1.0;
  Eigen::Index hi = 1;
  while (g[hi] < u) ++hi;
  const double dx = u - g[hi - 1];
  const double slope = (w.values()[hi] - w.values()[hi - 1]) / (g[hi] - g[hi - 1]);
  const double f_at_u = w.values()[hi - 1] + slope * dx;
  return w.cumulative()[hi - 1] + 0.5 * (w.values()[hi - 1] + f_at_u) * dx;
}

//! i.i.d. draws from w. Mixture sampling picks the component with a
//! Bernoulli(0.1) draw and inverts within the component, so one seeded
//! stream reproduces the sample exactly.
inline Eigen::VectorXd weight_sample(const WeightDensity& w, int n_draws, std::uint64_t seed) {
  if (n_draws < 1)
    throw std::invalid_argument("weight_sample: n_draws must be >= 1");
  Rng rng(seed);
  Eigen::VectorXd out(n_draws);
  if (w.family() == WeightDensity::Family::gauss_uniform_mix) {
    for (int i = 0; i < n_draws; ++i) {
      const bool normal_component = rng.bernoulli(0.1);
      const double u = rng.uniform();
      out[i] = normal_component ? inverse_normal_cdf(u) : -2.0 + 4.0 * u;
    }
    return out;
  }
  const Eigen::VectorXd& g = w.grid();
  const Eigen::VectorXd& f = w.values();
  const Eigen::VectorXd& cdf = w.cumulative();
  for (int i = 0; i < n_draws; ++i) {
    const double target = rng.uniform();
    Eigen::Index hi = 1;
    while (cdf[hi] < target && hi + 1 < cdf.size()) ++hi;
    const double cell = g[hi] - g[hi - 1];
    const double mass = target - cdf[hi - 1];
    const double f0 = f[hi - 1];
    const double slope = (f[hi] - f0) / cell;
    double s;
    if (std::abs(slope) < 1e-300) {
      s = (f0 > 0.0) ? mass / f0 : 0.5 * cell;
    } else {
      const double disc = std::max(0.0, f0 * f0 + 2.0 * slope * mass);
      s = (-f0 + std::sqrt(disc)) / slope;
    }
    out[i] = g[hi - 1] + std::min(cell, std::max(0.0, s));
  }
  return out;
}

}  // namespace nmrse
