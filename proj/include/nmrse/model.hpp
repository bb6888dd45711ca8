// Parameter space and the transfer function M(t,u) of the two-component
// mixture-of-regressions model with symmetric errors. The response at a
// design point x is a(x) + eps or b(x) + eps with probability pi(x) /
// 1 - pi(x); the characteristic function of the response given {X = x}
// factors as M(theta(x), u) * f_x^*(u) with f_x^* real by symmetry, which is
// what the contrast machinery exploits.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace nmrse {

//! |M| below this is treated as a degenerate transfer function (possible
//! only outside the theoretical parameter space).
inline constexpr double kDegenerateTransferTol = 1e-12;

//! Euclidean parameter t = (pi, a, b) at one design point.
struct ThetaPoint {
  double pi = 0.5;
  double a = 0.0;
  double b = 0.0;

  //! Label-swapped representation (1 - pi, b, a) of the same mixture.
  ThetaPoint swapped() const { return {1.0 - pi, b, a}; }

  bool finite() const {
    return std::isfinite(pi) && std::isfinite(a) && std::isfinite(b);
  }

  Eigen::Vector3d vector() const { return {pi, a, b}; }
  static ThetaPoint from_vector(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

//! Search box for the minimizer. The default proportion bounds are the
//! practical [0.05, 0.95]; the theoretical identifiability region needs
//! pi <= P < 1/2, available via strict().
struct ParamSpace {
  double pi_lo = 0.05;
  double pi_hi = 0.95;
  double loc_lo = -1.0;
  double loc_hi = 1.0;

  void validate() const {
    if (!(0.0 < pi_lo && pi_lo <= pi_hi && pi_hi < 1.0))
      throw std::invalid_argument("ParamSpace: need 0 < pi_lo <= pi_hi < 1");
    if (!(loc_lo < loc_hi))
      throw std::invalid_argument("ParamSpace: need loc_lo < loc_hi");
  }

  bool contains(const ThetaPoint& t) const {
    return t.pi >= pi_lo && t.pi <= pi_hi && t.a >= loc_lo && t.a <= loc_hi &&
           t.b >= loc_lo && t.b <= loc_hi;
  }

  ThetaPoint clamp(const ThetaPoint& t) const {
    auto clip = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };
    return {clip(t.pi, pi_lo, pi_hi), clip(t.a, loc_lo, loc_hi), clip(t.b, loc_lo, loc_hi)};
  }

  //! Narrows the proportion to the theoretical side [0.05, 0.45].
  ParamSpace strict() const { return {pi_lo, std::min(pi_hi, 0.45), loc_lo, loc_hi}; }
};

struct Observation {
  Eigen::VectorXd x;
  double y = 0.0;
};

//! Sample of n observations (X_i, Y_i), X_i in R^d, Y_i real.
class Dataset {
public:
  Dataset() = default;

  Dataset(Eigen::MatrixXd x, Eigen::VectorXd y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() != y_.size())
      throw std::invalid_argument("Dataset: design and response sizes differ");
    if (y_.size() < 1) throw std::invalid_argument("Dataset: need at least one observation");
    if (x_.cols() < 1) throw std::invalid_argument("Dataset: design dimension must be >= 1");
    if (!x_.allFinite() || !y_.allFinite())
      throw std::invalid_argument("Dataset: all coordinates must be finite");
  }

  static Dataset from_observations(const std::vector<Observation>& obs) {
    if (obs.empty()) throw std::invalid_argument("Dataset: need at least one observation");
    const Eigen::Index d = obs.front().x.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(obs.size()), d);
    Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs[i].x.size() != d)
        throw std::invalid_argument("Dataset: observations have mixed dimensions");
      x.row(static_cast<Eigen::Index>(i)) = obs[i].x.transpose();
      y[static_cast<Eigen::Index>(i)] = obs[i].y;
    }
    return Dataset(std::move(x), std::move(y));
  }

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index dim() const { return x_.cols(); }
  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  Observation observation(Eigen::Index i) const { return {x_.row(i).transpose(), y_[i]}; }

private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
};

//! Transfer function M(t,u) = pi e^{iua} + (1-pi) e^{iub}. Total in (t,u);
//! satisfies M(t,-u) = conj(M(t,u)) and |M| >= |1 - 2 pi|.
inline std::complex<double> transfer(const ThetaPoint& t, double u) {
  const double q = 1.0 - t.pi;
  return {t.pi * std::cos(u * t.a) + q * std::cos(u * t.b),
          t.pi * std::sin(u * t.a) + q * std::sin(u * t.b)};
}

//! Im(g_star / M(t,u)): zero for all u exactly at the true parameter (up to
//! label swap) when g_star is the conditional characteristic function.
inline double imag_ratio(const ThetaPoint& t, std::complex<double> g_star, double u) {
  const std::complex<double> m = transfer(t, u);
  if (std::abs(m) < kDegenerateTransferTol)
    throw std::domain_error("imag_ratio: degenerate transfer function, |M(t,u)| < 1e-12");
  return std::imag(g_star / m);
}

}  // namespace nmrse
