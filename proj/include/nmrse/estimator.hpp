// Pointwise estimation pipeline: pilot kernel regression over the design
// points, above/below classification into the two location groups,
// group-wise Nadaraya-Watson initial curves with nearest-neighbor local
// bandwidths, then box-constrained Nelder-Mead minimization of the
// Monte-Carlo contrast at each testing point.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nmrse/contrast.hpp"
#include "nmrse/kernels.hpp"
#include "nmrse/model.hpp"
#include "nmrse/optim.hpp"
#include "nmrse/parallel.hpp"

namespace nmrse {

//! Output of the initialization steps: pilot curve at the design points,
//! group labels, and per-testing-point initial locations and bandwidths.
struct InitState {
  Eigen::VectorXd pilot_curve;    // m-bar at each design point
  std::vector<int> labels;        // 1 <-> location a, 2 <-> location b
  Eigen::VectorXd a_bar, b_bar;   // initial locations per testing point
  Eigen::VectorXd h1, h2;         // group-local bandwidths per testing point
  Eigen::VectorXd h_local;        // min(h1, h2) per testing point
  double pi_bar = 0.4;
};

struct PointFlags {
  bool label_switch_suspect = false;
  bool merge_suspect = false;
  bool boundary_hit = false;
  bool failed = false;

  std::string to_string() const {
    std::string s;
    auto add = [&s](const char* tag) {
      if (!s.empty()) s += ';';
      s += tag;
    };
    if (label_switch_suspect) add("label_switch");
    if (merge_suspect) add("merge");
    if (boundary_hit) add("boundary");
    if (failed) add("failed");
    return s;
  }
};

struct PointFit {
  ThetaPoint theta;
  double contrast_value = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int evaluations = 0;
  double h_local = std::numeric_limits<double>::quiet_NaN();
  double h_used = std::numeric_limits<double>::quiet_NaN();
  PointFlags flags;
  std::string error;  // nonempty iff flags.failed
};

//! Per-grid-point estimates over a testing grid.
struct FitResult {
  Eigen::MatrixXd grid;  // K x d testing points
  std::vector<PointFit> points;
  ParamSpace space;
  InitState init;
};

enum class BandwidthRule { local, fixed, rate };

struct FitOptions {
  double frac = 0.1;    // nearest-neighbor fraction for all bandwidths
  double pi_bar = 0.4;  // initial mixing proportion
  std::optional<ParamSpace> space;  // default: data-driven location box
  double pi_lo = 0.05, pi_hi = 0.95;  // proportion bounds for the default box
  BandwidthRule bandwidth = BandwidthRule::local;
  double h_fixed = 0.1;
  double rate_c = 1.0;      // h = rate_c * n^{-1/(2 rate_alpha + d)}
  double rate_alpha = 1.0;
  //! Cap on the nearest-neighbor bandwidth, h_cap_c * n^{-1/(2 alpha + d)}.
  //! The one-sided windows at the design boundary double the neighbor
  //! distance and the resulting smoothing bias; the cap restores the rate
  //! there. 0 disables; applies to the `local` rule only.
  double h_cap_c = 0.5;
  //! Barrier threshold for min_r |M(t, U_r)|^2 during the search. The
  //! practical proportion box reaches pi = 1/2, where the contrast's
  //! realized values dive to large negative noise whenever a frequency node
  //! resonates with u (a - b); the barrier excludes only that sliver.
  double degenerate_guard = 1e-3;
  bool two_stage = true;   // coarse pass at 2h before the target-h pass
  bool multistart = true;  // add a kernel-weighted-quantile start
  int n_mc = 0;             // Monte-Carlo nodes per point; 0 means N = n
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Kernel kernel{KernelFamily::gaussian, 1};
  WeightDensity weight = WeightDensity::gauss_uniform_mix();
  NelderMeadOptions nm{};
};

namespace detail {

//! Distance from `point` to its k-th nearest row of `points` (self-distances
//! of zero are tolerated by expanding k past exact ties at zero).
inline double knn_distance(const Eigen::MatrixXd& points, const Eigen::VectorXd& point,
                           Eigen::Index k) {
  const Eigen::Index m = points.rows();
  if (m < 1) throw std::invalid_argument("knn_distance: empty point set");
  std::vector<double> dist(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i)
    dist[static_cast<std::size_t>(i)] = (points.row(i).transpose() - point).norm();
  k = std::clamp<Eigen::Index>(k, 1, m);
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  double d = dist[static_cast<std::size_t>(k - 1)];
  while (d == 0.0 && k < m) {
    std::nth_element(dist.begin(), dist.begin() + k, dist.end());
    d = dist[static_cast<std::size_t>(k)];
    ++k;
  }
  if (d == 0.0)
    throw std::invalid_argument("degenerate design: all points within the neighborhood coincide");
  return d;
}

inline double nadaraya_watson(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                              const Eigen::VectorXd& x0, double h, const Kernel& kernel) {
  Kernel k = kernel;
  k.dim = static_cast<int>(xs.cols());
  for (int attempt = 0; attempt < 8; ++attempt) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const double w = scaled_kernel(k, h, (xs.row(i).transpose() - x0).eval());
      num += w * ys[i];
      den += w;
    }
    if (den > 0.0 && std::isfinite(num / den)) return num / den;
    h *= 1.5;  // compact kernel with all mass on the boundary: widen
  }
  throw std::runtime_error("nadaraya_watson: no kernel mass near the evaluation point");
}

}  // namespace detail

//! Initialization step 1: Nadaraya-Watson pilot m-bar at every design point,
//! local bandwidth the distance to the ceil(frac*n)-th nearest neighbor.
inline Eigen::VectorXd pilot_regression(const Dataset& data, double frac = 0.2,
                                        const Kernel& kernel = {}) {
  const Eigen::Index n = data.n();
  if (n < 10) throw std::invalid_argument("pilot_regression: need n >= 10");
  if (!(frac > 0.0 && frac <= 1.0))
    throw std::invalid_argument("pilot_regression: frac must lie in (0, 1]");
  const auto k = static_cast<Eigen::Index>(std::ceil(frac * static_cast<double>(n)));
  Eigen::VectorXd curve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = data.x().row(i).transpose();
    const double h = detail::knn_distance(data.x(), xi, std::min(k + 1, n));  // +1 skips self
    curve[i] = detail::nadaraya_watson(data.x(), data.y(), xi, h, kernel);
  }
  return curve;
}

//! Initialization step 2: group 1 iff y_i > m-bar(x_i), ties to group 2.
inline std::vector<int> classify(const Dataset& data, const Eigen::VectorXd& pilot) {
  if (pilot.size() != data.n())
    throw std::invalid_argument("classify: pilot curve size does not match the dataset");
  std::vector<int> labels(static_cast<std::size_t>(data.n()));
  Eigen::Index ones = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    labels[static_cast<std::size_t>(i)] = (data.y()[i] > pilot[i]) ? 1 : 2;
    ones += (labels[static_cast<std::size_t>(i)] == 1);
  }
  if (ones == 0 || ones == data.n())
    throw std::runtime_error("classify: classification left one group empty");
  return labels;
}

struct GroupCurves {
  Eigen::VectorXd a_bar, b_bar;  // per testing point
  Eigen::VectorXd h1, h2;        // group-local bandwidths per testing point
};

//! Initialization steps 3-4: group-wise Nadaraya-Watson curves at the
//! testing points with group-local nearest-neighbor bandwidths.
inline GroupCurves group_smooth(const Dataset& data, const std::vector<int>& labels,
                                const Eigen::MatrixXd& grid, double frac = 0.2,
                                const Kernel& kernel = {}) {
  if (labels.size() != static_cast<std::size_t>(data.n()))
    throw std::invalid_argument("group_smooth: labels size does not match the dataset");
  if (grid.rows() < 1) throw std::invalid_argument("group_smooth: empty testing grid");
  if (grid.cols() != data.dim())
    throw std::invalid_argument("group_smooth: grid dimension does not match the dataset");

  std::vector<Eigen::Index> idx1, idx2;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    (labels[static_cast<std::size_t>(i)] == 1 ? idx1 : idx2).push_back(i);
  if (idx1.empty() || idx2.empty())
    throw std::runtime_error("group_smooth: one group is empty");

  auto gather = [&data](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(idx.size()), data.dim());
    Eigen::VectorXd ys(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      xs.row(static_cast<Eigen::Index>(j)) = data.x().row(idx[j]);
      ys[static_cast<Eigen::Index>(j)] = data.y()[idx[j]];
    }
    return std::make_pair(std::move(xs), std::move(ys));
  };
  const auto [x1, y1] = gather(idx1);
  const auto [x2, y2] = gather(idx2);

  GroupCurves out;
  const Eigen::Index k_points = grid.rows();
  out.a_bar.resize(k_points);
  out.b_bar.resize(k_points);
  out.h1.resize(k_points);
  out.h2.resize(k_points);
  const auto neighbors = [frac](Eigen::Index group_n) {
    return std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::ceil(frac * static_cast<double>(group_n))), 1, group_n);
  };
  for (Eigen::Index g = 0; g < k_points; ++g) {
    const Eigen::VectorXd xg = grid.row(g).transpose();
    out.h1[g] = detail::knn_distance(x1, xg, neighbors(x1.rows()));
    out.h2[g] = detail::knn_distance(x2, xg, neighbors(x2.rows()));
    out.a_bar[g] = detail::nadaraya_watson(x1, y1, xg, out.h1[g], kernel);
    out.b_bar[g] = detail::nadaraya_watson(x2, y2, xg, out.h2[g], kernel);
  }
  return out;
}

//! Data-driven location box: the response range widened by 5% on each side.
inline ParamSpace auto_param_space(const Dataset& data, double pi_lo = 0.05,
                                   double pi_hi = 0.95) {
  const double y_min = data.y().minCoeff();
  const double y_max = data.y().maxCoeff();
  const double margin = 0.05 * std::max(y_max - y_min, 1.0);
  return {pi_lo, pi_hi, y_min - margin, y_max + margin};
}

//! Runs initialization steps 1-5 for a testing grid.
inline InitState initialize(const Dataset& data, const Eigen::MatrixXd& grid,
                            const FitOptions& options = {}) {
  InitState init;
  init.pilot_curve = pilot_regression(data, options.frac, options.kernel);
  init.labels = classify(data, init.pilot_curve);
  GroupCurves curves = group_smooth(data, init.labels, grid, options.frac, options.kernel);
  init.a_bar = std::move(curves.a_bar);
  init.b_bar = std::move(curves.b_bar);
  init.h1 = std::move(curves.h1);
  init.h2 = std::move(curves.h2);
  init.h_local = init.h1.cwiseMin(init.h2);
  init.pi_bar = options.pi_bar;
  return init;
}

namespace detail {

//! Quantile of the responses under the kernel weights.
inline double weighted_quantile(const Eigen::VectorXd& y, const Eigen::VectorXd& w, double q) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return y[a] < y[b]; });
  const double total = w.sum();
  if (!(total > 0.0)) return y[idx[idx.size() / 2]];
  double acc = 0.0;
  for (const Eigen::Index i : idx) {
    acc += w[i];
    if (acc >= q * total) return y[i];
  }
  return y[idx.back()];
}

//! One box-constrained Nelder-Mead run on the guarded contrast surface.
inline NelderMeadResult minimize_contrast(const ContrastEvaluator& evaluator,
                                          const ParamSpace& space, const ThetaPoint& start,
                                          double step_scale, double degenerate_guard,
                                          const NelderMeadOptions& nm_options) {
  const double spread = evaluator.weighted_response_sd();
  const double loc_step =
      std::max(step_scale * spread, 0.01 * (space.loc_hi - space.loc_lo));
  Eigen::Vector3d steps(0.1, loc_step, loc_step);
  Eigen::Vector3d lower(space.pi_lo, space.loc_lo, space.loc_lo);
  Eigen::Vector3d upper(space.pi_hi, space.loc_hi, space.loc_hi);
  const auto objective = [&](const Eigen::VectorXd& v) {
    const ThetaPoint t = ThetaPoint::from_vector(v);
    if (degenerate_guard > 0.0 && evaluator.min_transfer_sq(t) < degenerate_guard)
      return 1e10;  // resonance barrier
    const double value = evaluator.mc_contrast(t);
    if (!std::isfinite(value))
      throw std::runtime_error("fit_point: non-finite contrast during the search");
    return value;
  };
  return nelder_mead(objective, start.vector(), steps, lower, upper, nm_options);
}

}  // namespace detail

//! Minimizes the Monte-Carlo contrast at one testing point from the given
//! start, inside the box. The default search is staged: a coarse pass at
//! twice the bandwidth locates the basin (optionally from an extra
//! kernel-weighted-quantile start), then the target-bandwidth pass polishes
//! every candidate; the best final vertex wins. The raw start is always
//! among the target-pass candidates, so the attained value never exceeds
//! the value at init. Flags describe the usual failure modes of the
//! unconstrained-style search: proximity to the box (boundary_hit),
//! near-degenerate mixtures (merge_suspect), and an a/b order flip relative
//! to the initialization (label_switch_suspect).
inline PointFit fit_point(const Dataset& data, const Eigen::VectorXd& x0,
                          const ThetaPoint& init, double h_local, const ParamSpace& space,
                          const FitOptions& options = {}) {
  space.validate();
  if (!space.contains(init))
    throw std::invalid_argument("fit_point: initial point lies outside the parameter box");

  ContrastConfig cfg;
  cfg.x0 = x0;
  const double rate_h =
      std::pow(static_cast<double>(data.n()),
               -1.0 / (2.0 * options.rate_alpha + static_cast<double>(data.dim())));
  switch (options.bandwidth) {
    case BandwidthRule::fixed:
      cfg.h = options.h_fixed;
      break;
    case BandwidthRule::rate:
      cfg.h = options.rate_c * rate_h;
      break;
    case BandwidthRule::local:
      cfg.h = (options.h_cap_c > 0.0) ? std::min(h_local, options.h_cap_c * rate_h) : h_local;
      break;
  }
  cfg.kernel = options.kernel;
  cfg.weight = options.weight;
  cfg.n_mc = (options.n_mc > 0) ? options.n_mc : static_cast<int>(data.n());
  cfg.seed = options.seed;
  const ContrastEvaluator evaluator(data, cfg);

  std::vector<ThetaPoint> starts{init};
  if (options.multistart) {
    const Eigen::VectorXd& kappa = evaluator.kernel_weights();
    const double upper_loc =
        detail::weighted_quantile(data.y(), kappa, 1.0 - 0.5 * init.pi);
    const double lower_loc =
        detail::weighted_quantile(data.y(), kappa, 0.5 * (1.0 - init.pi));
    starts.push_back(space.clamp(ThetaPoint{init.pi, upper_loc, lower_loc}));
  }

  int iterations = 0, evaluations = 0;
  std::vector<ThetaPoint> final_starts = starts;
  if (options.two_stage) {
    ContrastConfig coarse = cfg;
    coarse.h = 2.0 * cfg.h;
    const ContrastEvaluator coarse_evaluator(data, coarse);
    for (const ThetaPoint& s : starts) {
      const NelderMeadResult r = detail::minimize_contrast(
          coarse_evaluator, space, s, 0.5, options.degenerate_guard, options.nm);
      iterations += r.iterations;
      evaluations += r.evaluations;
      final_starts.push_back(ThetaPoint::from_vector(r.x));
    }
  }

  NelderMeadResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < final_starts.size(); ++s) {
    const double step_scale = (options.two_stage && s >= starts.size()) ? 0.15 : 0.5;
    const NelderMeadResult r = detail::minimize_contrast(
        evaluator, space, final_starts[s], step_scale, options.degenerate_guard, options.nm);
    iterations += r.iterations;
    evaluations += r.evaluations;
    if (best.x.size() == 0 || r.value < best.value) best = r;
  }

  PointFit fit;
  fit.theta = space.clamp(ThetaPoint::from_vector(best.x));
  fit.contrast_value = best.value;
  fit.iterations = iterations;
  fit.evaluations = evaluations;
  fit.h_local = h_local;
  fit.h_used = cfg.h;
  const double edge = 1e-3;
  fit.flags.boundary_hit = (fit.theta.pi - space.pi_lo < edge) ||
                           (space.pi_hi - fit.theta.pi < edge) ||
                           (fit.theta.a - space.loc_lo < edge) ||
                           (space.loc_hi - fit.theta.a < edge) ||
                           (fit.theta.b - space.loc_lo < edge) ||
                           (space.loc_hi - fit.theta.b < edge);
  fit.flags.merge_suspect = fit.theta.pi < 0.07 || fit.theta.pi > 0.93 ||
                            std::abs(fit.theta.a - fit.theta.b) <
                                0.1 * (space.loc_hi - space.loc_lo);
  fit.flags.label_switch_suspect = (init.a > init.b) && (fit.theta.a < fit.theta.b);
  return fit;
}

//! Full pipeline: one initialization pass, then an independent contrast
//! minimization per testing point (parallelizable; point k uses the seed
//! derived from (options.seed, k), so results do not depend on scheduling).
//! Per-point errors become failure flags instead of aborting the curve.
inline FitResult fit_curve(const Dataset& data, const Eigen::MatrixXd& grid,
                           const FitOptions& options = {}) {
  if (grid.rows() < 1) throw std::invalid_argument("fit_curve: empty testing grid");
  FitResult result;
  result.grid = grid;
  result.space =
      options.space ? *options.space : auto_param_space(data, options.pi_lo, options.pi_hi);
  result.space.validate();
  result.init = initialize(data, grid, options);
  result.points.resize(static_cast<std::size_t>(grid.rows()));

  const ParamSpace& space = result.space;
  const InitState& init = result.init;
  parallel_for(static_cast<std::size_t>(grid.rows()), options.threads, [&](std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    FitOptions point_options = options;
    point_options.seed = derive_seed(options.seed, k);
    PointFit& fit = result.points[k];
    try {
      const ThetaPoint start = space.clamp(
          ThetaPoint{init.pi_bar, init.a_bar[kk], init.b_bar[kk]});
      fit = fit_point(data, grid.row(kk).transpose(), start, init.h_local[kk], space,
                      point_options);
    } catch (const std::exception& e) {
      fit.flags.failed = true;
      fit.error = e.what();
      fit.h_local = init.h_local[kk];
    }
  });
  return result;
}

}  // namespace nmrse
