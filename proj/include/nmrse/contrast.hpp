// Empirical contrast machinery. The population contrast
//   S(t) = int Im^2( g*_{x0}(u) / M(t,u) ) l^2(x0) w(u) du
// is estimated by the U-statistic
//   S_n(t) = -1/(4n(n-1)) sum_{j != k} int Z_k(t,u,h) Z_j(t,u,h) w(u) du,
// with Z_k(t,u,h) = (e^{iuY_k}/M(t,u) - e^{-iuY_k}/M(t,-u)) K_h(X_k - x0),
// and in practice by its Monte-Carlo version over w-distributed nodes U_r.
//
// Each Z_k is purely imaginary, Z_k = i z_k with
//   z_k = 2 Im(e^{iuY_k}/M(t,u)) kappa_k
//       = 2 kappa_k [pi sin(u(Y_k - a)) + (1-pi) sin(u(Y_k - b))] / |M(t,u)|^2,
// so sum_{j != k} Z_k Z_j = (sum_k z_k)^2 - sum_k z_k^2 up to the sign from
// i^2, and both pieces reduce through double-angle identities to sums that
// do not involve t:
//   S_u = sum kappa_k sin(u Y_k),    C_u = sum kappa_k cos(u Y_k),
//   D_u = sum kappa_k^2 cos(2u Y_k), E_u = sum kappa_k^2 sin(2u Y_k),
//   K2  = sum kappa_k^2.
// The evaluator caches these per frequency node once, which makes one
// contrast evaluation O(N) instead of O(n^2 N). The algebra is exact; the
// test suite pins it against the unreduced double-loop at 1e-12 relative.
//
// All sums run in dataset index order and the node reduction in node index
// order, so results are bitwise reproducible for any thread count.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "nmrse/kernels.hpp"
#include "nmrse/model.hpp"

namespace nmrse {

//! Evaluation context for one target design point.
struct ContrastConfig {
  Eigen::VectorXd x0;
  double h = 0.0;
  Kernel kernel{KernelFamily::gaussian, 1};
  WeightDensity weight = WeightDensity::gauss_uniform_mix();
  int n_mc = 0;  // number N of Monte-Carlo frequency nodes
  std::uint64_t seed = 0;
};

//! Deterministic frequency grid with combined weights (quadrature
//! coefficient times w-density); used by the dense-grid fallback and the
//! test oracles.
struct FrequencyQuadrature {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

inline FrequencyQuadrature trapezoid_quadrature(const WeightDensity& w, double lo,
                                                double hi, int count) {
  if (!(lo < hi) || count < 2)
    throw std::invalid_argument("trapezoid_quadrature: need lo < hi and count >= 2");
  FrequencyQuadrature q;
  q.nodes = Eigen::VectorXd::LinSpaced(count, lo, hi);
  q.weights.resize(count);
  const double step = (hi - lo) / (count - 1);
  for (int g = 0; g < count; ++g) {
    const double coeff = (g == 0 || g == count - 1) ? 0.5 * step : step;
    q.weights[g] = coeff * weight_pdf(w, q.nodes[g]);
  }
  return q;
}

//! Real coefficient z with Z_k = i z, i.e. z = 2 Im(e^{iuy}/M(t,u)) kappa.
inline double z_term(const ThetaPoint& t, double u, double y, double kappa) {
  const std::complex<double> m = transfer(t, u);
  if (std::abs(m) < kDegenerateTransferTol)
    throw std::domain_error("z_term: degenerate transfer function, |M(t,u)| < 1e-12");
  const std::complex<double> e{std::cos(u * y), std::sin(u * y)};
  return 2.0 * std::imag(e / m) * kappa;
}

namespace detail {

// (sum_k z_k)^2 - sum_k z_k^2 at frequency u from the cached tables. The
// expression tree is arranged so the label swap (pi,a,b) -> (1-pi,b,a)
// permutes commutative operands only, and every u-odd factor appears in
// products of two, keeping the value even in u down to the last bit.
inline double pair_sum_from_tables(const ThetaPoint& t, double u, double s_tab,
                                   double c_tab, double d_tab, double e_tab,
                                   double k2) {
  const double p = t.pi;
  const double q = 1.0 - t.pi;
  const double ca = std::cos(u * t.a);
  const double sa = std::sin(u * t.a);
  const double cb = std::cos(u * t.b);
  const double sb = std::sin(u * t.b);
  const double cos_diff = ca * cb + sa * sb;  // cos(u(a-b))
  const double m2 = p * p + q * q + 2.0 * p * q * cos_diff;
  if (m2 < kDegenerateTransferTol * kDegenerateTransferTol)
    throw std::domain_error("contrast: degenerate transfer function, |M(t,u)| < 1e-12");
  const double sum_z = 2.0 * (p * (s_tab * ca - c_tab * sa) + q * (s_tab * cb - c_tab * sb)) / m2;
  const double c2a = 2.0 * ca * ca - 1.0;
  const double s2a = 2.0 * sa * ca;
  const double c2b = 2.0 * cb * cb - 1.0;
  const double s2b = 2.0 * sb * cb;
  const double cos_sum = ca * cb - sa * sb;  // cos(u(a+b))
  const double sin_sum = sa * cb + ca * sb;  // sin(u(a+b))
  const double sum_z2 = (0.5 * (p * p) * (k2 - d_tab * c2a - e_tab * s2a) +
                         0.5 * (q * q) * (k2 - d_tab * c2b - e_tab * s2b) +
                         (p * q) * (k2 * cos_diff - d_tab * cos_sum - e_tab * sin_sum)) *
                        4.0 / (m2 * m2);
  return sum_z * sum_z - sum_z2;
}

}  // namespace detail

//! Immutable evaluator of S_n at one (x0, h): caches the kernel weights
//! kappa_k = K_h(X_k - x0) and one w-distributed node sample U_1..U_N, so
//! every parameter evaluation during a minimization sees the same smooth
//! deterministic surface (common random numbers).
class ContrastEvaluator {
public:
  ContrastEvaluator(const Dataset& data, ContrastConfig config)
      : config_(std::move(config)), n_(data.n()) {
    if (n_ < 2)
      throw std::invalid_argument("ContrastEvaluator: insufficient data, the U-statistic needs n >= 2");
    if (config_.n_mc < 1)
      throw std::invalid_argument("ContrastEvaluator: n_mc must be >= 1");
    if (config_.x0.size() != data.dim())
      throw std::invalid_argument("ContrastEvaluator: x0 dimension does not match the dataset");
    if (!(config_.h > 0.0))
      throw std::invalid_argument("ContrastEvaluator: bandwidth must be positive");
    Kernel k = config_.kernel;
    k.dim = static_cast<int>(data.dim());

    y_ = data.y();
    kappa_.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      kappa_[i] = scaled_kernel(k, config_.h, (data.x().row(i).transpose() - config_.x0).eval());
    positive_weights_ = (kappa_.array() > 0.0).count();

    nodes_ = weight_sample(config_.weight, config_.n_mc, config_.seed);
    s_tab_.resize(nodes_.size());
    c_tab_.resize(nodes_.size());
    d_tab_.resize(nodes_.size());
    e_tab_.resize(nodes_.size());
    k2_ = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) k2_ += kappa_[i] * kappa_[i];
    for (Eigen::Index r = 0; r < nodes_.size(); ++r) {
      double s = 0.0, c = 0.0, d = 0.0, e = 0.0;
      const double u = nodes_[r];
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double si = std::sin(u * y_[i]);
        const double ci = std::cos(u * y_[i]);
        const double k2i = kappa_[i] * kappa_[i];
        s += kappa_[i] * si;
        c += kappa_[i] * ci;
        d += k2i * (2.0 * ci * ci - 1.0);
        e += k2i * (2.0 * si * ci);
      }
      s_tab_[r] = s;
      c_tab_[r] = c;
      d_tab_[r] = d;
      e_tab_[r] = e;
    }
  }

  //! Monte-Carlo contrast S^MC_n(t) over the cached nodes. Deterministic:
  //! two calls with the same t are bitwise identical.
  double mc_contrast(const ThetaPoint& t) const {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < nodes_.size(); ++r)
      acc += detail::pair_sum_from_tables(t, nodes_[r], s_tab_[r], c_tab_[r],
                                          d_tab_[r], e_tab_[r], k2_);
    return acc * pair_scale() / static_cast<double>(nodes_.size());
  }

  //! Per-node contributions whose mean is mc_contrast; exposed for
  //! Monte-Carlo standard-error estimates.
  Eigen::VectorXd node_contributions(const ThetaPoint& t) const {
    Eigen::VectorXd out(nodes_.size());
    for (Eigen::Index r = 0; r < nodes_.size(); ++r)
      out[r] = detail::pair_sum_from_tables(t, nodes_[r], s_tab_[r], c_tab_[r],
                                            d_tab_[r], e_tab_[r], k2_) *
               pair_scale();
    return out;
  }

  double mc_standard_error(const ThetaPoint& t) const {
    const Eigen::VectorXd c = node_contributions(t);
    if (c.size() < 2) return 0.0;
    const double mean = c.mean();
    const double var = (c.array() - mean).square().sum() / static_cast<double>(c.size() - 1);
    return std::sqrt(var / static_cast<double>(c.size()));
  }

  //! S_n(t) with the u-integral on a deterministic quadrature grid instead
  //! of the Monte-Carlo nodes.
  double empirical_contrast(const ThetaPoint& t, const FrequencyQuadrature& quad) const {
    if (quad.nodes.size() != quad.weights.size() || quad.nodes.size() < 1)
      throw std::invalid_argument("empirical_contrast: malformed quadrature");
    double acc = 0.0;
    for (Eigen::Index g = 0; g < quad.nodes.size(); ++g) {
      const double u = quad.nodes[g];
      double s = 0.0, c = 0.0, d = 0.0, e = 0.0;
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double si = std::sin(u * y_[i]);
        const double ci = std::cos(u * y_[i]);
        const double k2i = kappa_[i] * kappa_[i];
        s += kappa_[i] * si;
        c += kappa_[i] * ci;
        d += k2i * (2.0 * ci * ci - 1.0);
        e += k2i * (2.0 * si * ci);
      }
      acc += quad.weights[g] * detail::pair_sum_from_tables(t, u, s, c, d, e, k2_);
    }
    return acc * pair_scale();
  }

  //! Central finite-difference gradient of mc_contrast, component-wise step.
  Eigen::Vector3d gradient_fd(const ThetaPoint& t, double step) const {
    if (!(step > 0.0)) throw std::invalid_argument("gradient_fd: step must be positive");
    Eigen::Vector3d g;
    const Eigen::Vector3d v = t.vector();
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d up = v, dn = v;
      up[i] += step;
      dn[i] -= step;
      g[i] = (mc_contrast(ThetaPoint::from_vector(up)) -
              mc_contrast(ThetaPoint::from_vector(dn))) /
             (2.0 * step);
    }
    return g;
  }

  //! Smallest |M(t, U_r)|^2 over the cached nodes. Near-zero values mark the
  //! resonance region (pi near 1/2 with u (a - b) near an odd multiple of pi)
  //! where the U-statistic's variance explodes; the optimizer uses this to
  //! keep out of it.
  double min_transfer_sq(const ThetaPoint& t) const {
    const double p = t.pi;
    const double q = 1.0 - t.pi;
    double m2_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < nodes_.size(); ++r) {
      const double u = nodes_[r];
      const double cos_diff = std::cos(u * t.a) * std::cos(u * t.b) +
                              std::sin(u * t.a) * std::sin(u * t.b);
      m2_min = std::min(m2_min, p * p + q * q + 2.0 * p * q * cos_diff);
    }
    return m2_min;
  }

  const ContrastConfig& config() const { return config_; }
  Eigen::Index n() const { return n_; }
  const Eigen::VectorXd& kernel_weights() const { return kappa_; }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& responses() const { return y_; }

  //! False when fewer than two observations carry positive kernel weight;
  //! the contrast is then identically zero around x0.
  bool has_local_mass() const { return positive_weights_ >= 2; }

  //! Kernel-weighted standard deviation of the responses; scales the
  //! optimizer's initial simplex in the location directions.
  double weighted_response_sd() const {
    const double total = kappa_.sum();
    if (!(total > 0.0)) return 0.0;
    const double mean = kappa_.dot(y_) / total;
    const double var = (kappa_.array() * (y_.array() - mean).square()).sum() / total;
    return std::sqrt(std::max(0.0, var));
  }

private:
  double pair_scale() const {
    return 1.0 / (4.0 * static_cast<double>(n_) * static_cast<double>(n_ - 1));
  }

  ContrastConfig config_;
  Eigen::Index n_ = 0;
  Eigen::VectorXd y_, kappa_, nodes_;
  Eigen::VectorXd s_tab_, c_tab_, d_tab_, e_tab_;
  double k2_ = 0.0;
  Eigen::Index positive_weights_ = 0;
};

}  // namespace nmrse
