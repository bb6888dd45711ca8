// Derivative-free Nelder-Mead minimization over a box. Trial points leaving
// the box are folded back by mirror reflection, which keeps the search
// surface continuous at the bounds.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nmrse {

//! Mirror-reflects each coordinate into [lower, upper] (triangle-wave fold,
//! period 2 * width), so arbitrarily large excursions map back inside.
inline Eigen::VectorXd reflect_into_box(Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double lo = lower[i], hi = upper[i];
    const double width = hi - lo;
    if (!(width > 0.0)) {
      x[i] = lo;
      continue;
    }
    if (x[i] >= lo && x[i] <= hi) continue;
    double t = std::fmod(x[i] - lo, 2.0 * width);
    if (t < 0.0) t += 2.0 * width;
    x[i] = lo + ((t <= width) ? t : 2.0 * width - t);
  }
  return x;
}

struct NelderMeadOptions {
  double diameter_tol = 1e-5;
  int max_iterations = 500;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

//! Minimizes f over the box [lower, upper] starting from `start` with an
//! axis-aligned initial simplex of the given step sizes. Stops when the
//! simplex diameter drops below diameter_tol, when the surface is exactly
//! flat across the simplex, or at max_iterations. The best vertex value is
//! monotone non-increasing, so the result never exceeds f(start).
template <typename F>
NelderMeadResult nelder_mead(F&& f, const Eigen::VectorXd& start,
                             const Eigen::VectorXd& steps, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper,
                             const NelderMeadOptions& opt = {}) {
  const Eigen::Index dim = start.size();
  if (steps.size() != dim || lower.size() != dim || upper.size() != dim)
    throw std::invalid_argument("nelder_mead: dimension mismatch");
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(lower[i] <= upper[i])) throw std::invalid_argument("nelder_mead: invalid box");

  NelderMeadResult res;
  const auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    return f(x);
  };

  std::vector<Eigen::VectorXd> vertex(static_cast<std::size_t>(dim) + 1);
  std::vector<double> value(static_cast<std::size_t>(dim) + 1);
  vertex[0] = reflect_into_box(start, lower, upper);
  value[0] = eval(vertex[0]);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::VectorXd v = vertex[0];
    v[i] += (steps[i] != 0.0) ? steps[i] : 1.0;
    vertex[static_cast<std::size_t>(i) + 1] = reflect_into_box(std::move(v), lower, upper);
    value[static_cast<std::size_t>(i) + 1] = eval(vertex[static_cast<std::size_t>(i) + 1]);
  }

  std::vector<std::size_t> order(vertex.size());
  const auto sort_order = [&]() {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
  };
  const auto diameter = [&]() {
    double d = 0.0;
    for (std::size_t i = 0; i < vertex.size(); ++i)
      for (std::size_t j = i + 1; j < vertex.size(); ++j)
        d = std::max(d, (vertex[i] - vertex[j]).norm());
    return d;
  };

  constexpr double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  for (;;) {
    sort_order();
    const std::size_t best = order.front(), worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];
    if (value[worst] - value[best] == 0.0 || diameter() < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opt.max_iterations) break;
    ++res.iterations;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] != worst) centroid += vertex[order[i]];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected =
        reflect_into_box(centroid + alpha * (centroid - vertex[worst]), lower, upper);
    const double f_reflected = eval(reflected);

    if (f_reflected < value[best]) {
      const Eigen::VectorXd expanded =
          reflect_into_box(centroid + gamma * (centroid - vertex[worst]), lower, upper);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < value[worst];
    const Eigen::VectorXd contracted = reflect_into_box(
        outside ? (centroid + rho * (reflected - centroid)).eval()
                : (centroid + rho * (vertex[worst] - centroid)).eval(),
        lower, upper);
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {  // shrink toward best
      if (order[i] == best) continue;
      vertex[order[i]] = reflect_into_box(
          vertex[best] + sigma * (vertex[order[i]] - vertex[best]), lower, upper);
      value[order[i]] = eval(vertex[order[i]]);
    }
  }

  sort_order();
  res.x = vertex[order.front()];
  res.value = value[order.front()];
  return res;
}

}  // namespace nmrse
