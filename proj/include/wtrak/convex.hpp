#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wtrak/feature_matrix.hpp"
#include "wtrak/parallel.hpp"
#include "wtrak/rng.hpp"
#include "wtrak/trak.hpp"

namespace wtrak {

enum class LossKind { ridge_regression, l2_logistic_regression };

inline const char* loss_name(LossKind k) {
  return k == LossKind::ridge_regression ? "ridge" : "logistic";
}

// Per-sample loss with the regularizer absorbed, so the empirical risk is a
// plain mean and every per-sample Hessian is PD:
//   ridge:    0.5 (x.theta - y)^2        + 0.5 reg ||theta||^2
//   logistic: ln(1 + exp(-s x.theta))    + 0.5 reg ||theta||^2,  s = 2y - 1
struct ConvexLossSpec {
  LossKind kind = LossKind::ridge_regression;
  double reg_strength = 1e-2;
  Index feature_dim = 0;

  void validate() const {
    require(reg_strength > 0.0, Errc::bad_spec, "reg_strength must be > 0");
    require(feature_dim >= 1, Errc::bad_spec, "feature_dim must be >= 1");
  }
};

struct DataPoint {
  Vector x;
  double y = 0.0;
};

namespace detail {

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double softplus(double t) {  // ln(1 + e^t), overflow-safe
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline void check_label(const ConvexLossSpec& spec, double y) {
  if (spec.kind == LossKind::l2_logistic_regression)
    require(y == 0.0 || y == 1.0, Errc::bad_labels,
            "logistic labels must be exactly 0 or 1");
}

inline double point_loss(const ConvexLossSpec& spec, const Vector& theta,
                         const Vector& x, double y) {
  const double reg = 0.5 * spec.reg_strength * theta.squaredNorm();
  const double f = x.dot(theta);
  if (spec.kind == LossKind::ridge_regression) {
    const double r = f - y;
    return 0.5 * r * r + reg;
  }
  const double s = 2.0 * y - 1.0;
  return softplus(-s * f) + reg;
}

inline Vector point_grad(const ConvexLossSpec& spec, const Vector& theta,
                         const Vector& x, double y) {
  const double f = x.dot(theta);
  if (spec.kind == LossKind::ridge_regression)
    return (f - y) * x + spec.reg_strength * theta;
  const double s = 2.0 * y - 1.0;
  return -s * sigmoid(-s * f) * x + spec.reg_strength * theta;
}

inline Matrix point_hess(const ConvexLossSpec& spec, const Vector& theta,
                         const Vector& x, double /*y*/) {
  const Index p = x.size();
  Matrix reg = spec.reg_strength * Matrix::Identity(p, p);
  if (spec.kind == LossKind::ridge_regression) return x * x.transpose() + reg;
  const double f = x.dot(theta);
  const double w = sigmoid(f) * sigmoid(-f);
  return w * (x * x.transpose()) + reg;
}

constexpr double kStationarityTol = 1e-10;
// Predicted decreases below this fraction of |objective| are smaller than the
// rounding noise of the objective sum, so a sufficient-decrease test can no
// longer measure progress.
constexpr double kFlatSlopeTol = 1e-13;
constexpr int kNewtonBudget = 500;

// Damped Newton on a weighted empirical risk. Deterministic: fixed start,
// fixed Armijo schedule, serial accumulation order.
inline Vector newton_fit(const ConvexLossSpec& spec, const Matrix& x,
                         const Vector& y, const Vector& weights,
                         const Vector* warm_start = nullptr) {
  const Index n = x.rows();
  const Index p = x.cols();
  Vector theta = warm_start ? *warm_start : Vector::Zero(p);

  auto objective = [&](const Vector& th) {
    double obj = 0.0;
    for (Index k = 0; k < n; ++k)
      if (weights[k] != 0.0)
        obj += weights[k] * point_loss(spec, th, x.row(k).transpose(), y[k]);
    return obj;
  };

  for (int it = 0; it < kNewtonBudget; ++it) {
    Vector g = Vector::Zero(p);
    Matrix h = Matrix::Zero(p, p);
    for (Index k = 0; k < n; ++k) {
      if (weights[k] == 0.0) continue;
      const Vector xk = x.row(k).transpose();
      g += weights[k] * point_grad(spec, theta, xk, y[k]);
      h += weights[k] * point_hess(spec, theta, xk, y[k]);
    }
    if (g.norm() <= kStationarityTol * (1.0 + theta.norm())) return theta;

    const Vector step = h.ldlt().solve(g);
    const double slope = g.dot(step);
    const double base = objective(theta);
    // Warm starts can land next to the optimizer with the gradient still above
    // kStationarityTol while the objective is already flat to rounding along
    // the Newton direction. Backtracking would thrash on noise forever; one
    // undamped polish step is the best double precision can do, and it drops
    // the gradient to its rounding floor.
    if (!(slope > kFlatSlopeTol * (1.0 + std::abs(base)))) {
      if (slope > 0.0) theta -= step;
      return theta;
    }
    double alpha = 1.0;
    while (alpha > 1e-12 &&
           objective(theta - alpha * step) > base - 1e-4 * alpha * slope)
      alpha *= 0.5;
    theta -= alpha * step;
  }
  raise(Errc::non_convergence, "Newton failed stationarity within budget");
}

}  // namespace detail

// Raw-data-space row (x, y_weight * y): the ground metric for diameters,
// Wasserstein radii and kernel Lipschitz quotients.
inline Matrix raw_points(const Matrix& x, const Vector& y, double y_weight) {
  Matrix z(x.rows(), x.cols() + 1);
  z.leftCols(x.cols()) = x;
  z.col(x.cols()) = y_weight * y;
  return z;
}

inline double pairwise_diameter(const Matrix& z) {
  double best = 0.0;
  for (Index a = 0; a < z.rows(); ++a)
    for (Index b = a + 1; b < z.rows(); ++b)
      best = std::max(best, (z.row(a) - z.row(b)).norm());
  return best;
}

// Fitted convex model plus everything the sensitivity machinery reuses:
// per-sample gradients and Hessians at theta_hat, the pooled Hessian and its
// inverse, and the raw-space diameter.
struct ConvexModelFit {
  ConvexLossSpec spec;
  Vector theta_hat;
  Matrix grads;                  // n x p, row i = g_i
  std::vector<Matrix> hessians;  // n of p x p
  Matrix h;                      // pooled (1/n) sum H_i
  Matrix h_inv;
  Matrix x;                      // n x p training inputs
  Vector y;                      // n training targets
  double y_weight = 1.0;
  double diameter = 0.0;         // of raw_points(x, y, y_weight)
  std::string dataset_ref;

  Index n() const { return x.rows(); }
  Index p() const { return x.cols(); }

  DataPoint point(Index i) const {
    require(i >= 0 && i < n(), Errc::index_out_of_range,
            "train index out of range");
    return DataPoint{x.row(i).transpose(), y[i]};
  }

  Vector grad_at(const DataPoint& z) const {
    require(z.x.size() == p(), Errc::dimension_mismatch,
            "data point dimension does not match fit");
    detail::check_label(spec, z.y);
    return detail::point_grad(spec, theta_hat, z.x, z.y);
  }

  Matrix hess_at(const DataPoint& z) const {
    require(z.x.size() == p(), Errc::dimension_mismatch,
            "data point dimension does not match fit");
    detail::check_label(spec, z.y);
    return detail::point_hess(spec, theta_hat, z.x, z.y);
  }

  double loss_at(const Vector& theta, const DataPoint& z) const {
    detail::check_label(spec, z.y);
    return detail::point_loss(spec, theta, z.x, z.y);
  }
};

namespace detail {

inline ConvexModelFit finish_fit(const ConvexLossSpec& spec, const Matrix& x,
                                 const Vector& y, const Vector& theta,
                                 double y_weight, std::string dataset_ref) {
  const Index n = x.rows();
  ConvexModelFit fit;
  fit.spec = spec;
  fit.theta_hat = theta;
  fit.x = x;
  fit.y = y;
  fit.y_weight = y_weight;
  fit.dataset_ref = std::move(dataset_ref);
  fit.grads = Matrix(n, x.cols());
  fit.hessians.reserve(static_cast<std::size_t>(n));
  Matrix pooled = Matrix::Zero(x.cols(), x.cols());
  for (Index i = 0; i < n; ++i) {
    const Vector xi = x.row(i).transpose();
    fit.grads.row(i) = point_grad(spec, theta, xi, y[i]).transpose();
    fit.hessians.push_back(point_hess(spec, theta, xi, y[i]));
    pooled += fit.hessians.back();
  }
  fit.h = pooled / static_cast<double>(n);
  fit.h_inv = fit.h.ldlt().solve(Matrix::Identity(x.cols(), x.cols()));
  fit.diameter = pairwise_diameter(raw_points(x, y, y_weight));

  // A fit that fails first-order optimality is rejected, never used.
  const double resid = (fit.grads.colwise().mean()).norm();
  require(resid <= 1e-6 * (1.0 + theta.norm()), Errc::non_convergence,
          "fit rejected: stationarity residual " + std::to_string(resid));
  return fit;
}

}  // namespace detail

inline ConvexModelFit fit_convex(const FeatureMatrix& data,
                                 const ConvexLossSpec& spec,
                                 double y_weight = 1.0,
                                 std::string dataset_ref = {}) {
  data.validate();
  spec.validate();
  require(data.n() >= 2, Errc::too_few_points, "need at least 2 samples");
  require(data.d() == spec.feature_dim, Errc::dimension_mismatch,
          "data dimension does not match loss spec");
  require(data.has_labels(), Errc::bad_labels, "fit requires labeled data");
  const Vector& y = *data.labels;
  if (spec.kind == LossKind::l2_logistic_regression)
    require(data.labels_binary(), Errc::bad_labels,
            "logistic labels must be exactly 0 or 1");

  const Index n = data.n();
  Vector theta;
  if (spec.kind == LossKind::ridge_regression) {
    // Closed form: (X^T X / n + reg I) theta = X^T y / n.
    const Matrix a = data.values.transpose() * data.values / double(n) +
                     spec.reg_strength * Matrix::Identity(data.d(), data.d());
    theta = a.ldlt().solve(data.values.transpose() * y / double(n));
  } else {
    theta = detail::newton_fit(spec, data.values, y,
                               Vector::Constant(n, 1.0 / double(n)));
  }
  return detail::finish_fit(spec, data.values, y, theta, y_weight,
                            std::move(dataset_ref));
}

// I(P_n) for training point i against z_test: -g_test^T H^{-1} g_i.
inline double classical_influence(const ConvexModelFit& fit, Index i,
                                  const DataPoint& z_test) {
  require(i >= 0 && i < fit.n(), Errc::index_out_of_range,
          "train index out of range");
  const Vector g_i = fit.grads.row(i).transpose();
  return -fit.grad_at(z_test).dot(fit.h_inv * g_i);
}

// dtheta/dt when mass moves toward delta_z: -H^{-1} g_z.
inline Vector param_sensitivity(const ConvexModelFit& fit, const DataPoint& z) {
  return -(fit.h_inv * fit.grad_at(z));
}

struct SensitivityEval {
  Index z_index = -1;
  double s_h = 0.0;
  double s_g = 0.0;
  double s = 0.0;  // s_h + s_g, by construction
};

// Complete kernel for the influence value: the Hessian part tracks the
// curvature shift H_z - H, the gradient part tracks the motion of theta_hat
// through both gradient arguments. w carries the opposite sign of
// param_sensitivity here; the interval construction relies on that.
inline SensitivityEval sensitivity_kernel(const ConvexModelFit& fit, Index i,
                                          const DataPoint& z_test,
                                          const DataPoint& z,
                                          Index z_index = -1) {
  require(i >= 0 && i < fit.n(), Errc::index_out_of_range,
          "train index out of range");
  const Vector u = fit.h_inv * fit.grad_at(z_test);
  const Vector v = fit.h_inv * fit.grads.row(i).transpose();
  const Vector w = fit.h_inv * fit.grad_at(z);
  const Matrix h_z = fit.hess_at(z);
  SensitivityEval e;
  e.z_index = z_index;
  e.s_h = u.dot((h_z - fit.h) * v);
  e.s_g = w.dot(fit.hess_at(z_test) * v) +
          u.dot(fit.hessians[static_cast<std::size_t>(i)] * w);
  e.s = e.s_h + e.s_g;
  return e;
}

// Max pairwise difference quotient of the kernel over raw data points.
// sample_budget = 0 means the exhaustive O(n^2) scan; a positive budget
// samples that many pairs deterministically and is a lower estimate.
inline double kernel_lipschitz(const std::vector<double>& s_values,
                               const Matrix& points,
                               std::uint64_t sample_budget = 0,
                               std::uint64_t seed = 0) {
  const Index n = points.rows();
  require(static_cast<Index>(s_values.size()) == n, Errc::dimension_mismatch,
          "one kernel value per point required");
  require(n >= 2, Errc::too_few_points, "need at least 2 points");

  auto quotient = [&](Index j, Index k) {
    const double dist = (points.row(j) - points.row(k)).norm();
    require(dist > 1e-12, Errc::duplicate_points,
            "duplicate raw points defeat the difference quotient");
    return std::abs(s_values[static_cast<std::size_t>(j)] -
                    s_values[static_cast<std::size_t>(k)]) /
           dist;
  };

  double best = 0.0;
  const std::uint64_t total =
      static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  if (sample_budget == 0 || sample_budget >= total) {
    for (Index j = 0; j < n; ++j)
      for (Index k = j + 1; k < n; ++k) best = std::max(best, quotient(j, k));
    return best;
  }
  Rng rng(seed);
  for (std::uint64_t s = 0; s < sample_budget; ++s) {
    const Index j = static_cast<Index>(rng.next_below(n));
    Index k = static_cast<Index>(rng.next_below(n - 1));
    if (k >= j) ++k;
    best = std::max(best, quotient(j, k));
  }
  return best;
}

// Robust influence interval in the raw data space: I +- epsilon * L_S with
// L_S estimated from the kernel evaluated at every training point.
inline RobustInterval wrif_interval(const ConvexModelFit& fit, Index i,
                                    const DataPoint& z_test, double epsilon,
                                    std::uint64_t sample_budget = 0,
                                    std::uint64_t seed = 0,
                                    std::string test_id = {}) {
  require(epsilon >= 0.0, Errc::negative_epsilon, "epsilon must be >= 0");
  const double nominal = classical_influence(fit, i, z_test);
  std::vector<double> s(static_cast<std::size_t>(fit.n()));
  for (Index j = 0; j < fit.n(); ++j)
    s[static_cast<std::size_t>(j)] =
        sensitivity_kernel(fit, i, z_test, fit.point(j), j).s;
  const Matrix pts = raw_points(fit.x, fit.y, fit.y_weight);
  const double lip = kernel_lipschitz(s, pts, sample_budget, seed);
  return make_interval(nominal, lip, epsilon, Metric::euclidean,
                       std::move(test_id), std::to_string(i));
}

// Actual leave-one-out test-loss change from a fresh fit on the n-1 points.
inline double loo_influence_oracle(const FeatureMatrix& data,
                                   const ConvexLossSpec& spec, Index i,
                                   const DataPoint& z_test) {
  data.validate();
  require(data.n() >= 3, Errc::too_few_points,
          "leave-one-out needs at least 3 samples");
  require(i >= 0 && i < data.n(), Errc::index_out_of_range,
          "train index out of range");
  const ConvexModelFit full = fit_convex(data, spec);
  Vector weights = Vector::Constant(data.n(), 1.0 / double(data.n() - 1));
  weights[i] = 0.0;
  const Vector theta_wo = detail::newton_fit(spec, data.values, *data.labels,
                                             weights, &full.theta_hat);
  return full.loss_at(theta_wo, z_test) - full.loss_at(full.theta_hat, z_test);
}

// Transport bound for removing one of n points: diam / n.
inline double loo_wasserstein_bound(const FeatureMatrix& data,
                                    double y_weight = 1.0) {
  data.validate();
  require(data.n() >= 2, Errc::too_few_points, "need at least 2 samples");
  require(data.has_labels(), Errc::bad_labels, "labeled data required");
  const Matrix z = raw_points(data.values, *data.labels, y_weight);
  return pairwise_diameter(z) / static_cast<double>(data.n());
}

struct CoverageResult {
  double fraction = 0.0;        // LOO influence value inside the interval
  std::size_t pairs = 0;
  double sign_agreement = 0.0;  // diagnostic: sign(LOO loss change) vs -(1/n)I
  double diameter = 0.0;
  double epsilon = 0.0;
};

// For every (train i, test t): build the W-RIF interval and check that the
// influence value recomputed under the leave-one-out distribution lands
// inside. The raw loss-change oracle is tracked as a sign diagnostic only.
inline CoverageResult coverage_check(const FeatureMatrix& data,
                                     const ConvexLossSpec& spec, double epsilon,
                                     const std::vector<DataPoint>& test_points,
                                     double y_weight = 1.0,
                                     unsigned threads = 0) {
  data.validate();
  require(!test_points.empty(), Errc::too_few_points, "no test points");
  require(data.n() >= 3, Errc::too_few_points,
          "leave-one-out needs at least 3 samples");
  require(epsilon >= 0.0, Errc::negative_epsilon, "epsilon must be >= 0");
  const double bound = loo_wasserstein_bound(data, y_weight);
  require(epsilon >= bound, Errc::bad_spec,
          "epsilon below the leave-one-out transport bound diam/n");

  const ConvexModelFit fit = fit_convex(data, spec, y_weight);
  const Index n = fit.n();
  const Index m = static_cast<Index>(test_points.size());
  const Matrix pts = raw_points(fit.x, fit.y, y_weight);

  // Pairwise raw distances once; reused by every (i, t) quotient scan.
  Matrix dist(n, n);
  for (Index a = 0; a < n; ++a) {
    dist(a, a) = 0.0;
    for (Index b = a + 1; b < n; ++b) {
      const double dd = (pts.row(a) - pts.row(b)).norm();
      require(dd > 1e-12, Errc::duplicate_points,
              "duplicate raw points defeat the difference quotient");
      dist(a, b) = dist(b, a) = dd;
    }
  }

  // w_j = H^{-1} g_j doubles as v_i = H^{-1} g_i.
  Matrix w(n, fit.p());
  for (Index j = 0; j < n; ++j)
    w.row(j) = (fit.h_inv * fit.grads.row(j).transpose()).transpose();

  // One LOO refit per training point, shared across test points.
  std::vector<Vector> theta_wo(static_cast<std::size_t>(n));
  std::vector<Matrix> h_wo_inv(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t ii) {
    const Index i = static_cast<Index>(ii);
    Vector weights = Vector::Constant(n, 1.0 / double(n - 1));
    weights[i] = 0.0;
    const Vector th = detail::newton_fit(spec, fit.x, fit.y, weights,
                                         &fit.theta_hat);
    Matrix pooled = Matrix::Zero(fit.p(), fit.p());
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      pooled += detail::point_hess(spec, th, fit.x.row(j).transpose(), fit.y[j]);
    }
    pooled /= static_cast<double>(n - 1);
    theta_wo[ii] = th;
    h_wo_inv[ii] = pooled.ldlt().solve(Matrix::Identity(fit.p(), fit.p()));
  });

  std::vector<std::uint8_t> inside(static_cast<std::size_t>(n * m), 0);
  std::vector<std::uint8_t> agree(static_cast<std::size_t>(n * m), 0);
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t tt) {
    const DataPoint& zt = test_points[tt];
    const Vector g_test = fit.grad_at(zt);
    const Matrix h_test = fit.hess_at(zt);
    const Vector u = fit.h_inv * g_test;
    std::vector<double> s(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const Vector v = w.row(i).transpose();
      const Vector h_test_v = h_test * v;
      const Vector hi_u =
          fit.hessians[static_cast<std::size_t>(i)].transpose() * u;
      const Vector hv = fit.h * v;
      for (Index j = 0; j < n; ++j) {
        const Vector wj = w.row(j).transpose();
        // u^T (H_j - H) v + w_j^T H_test v + u^T H_i w_j
        s[static_cast<std::size_t>(j)] =
            u.dot(fit.hessians[static_cast<std::size_t>(j)] * v) - u.dot(hv) +
            wj.dot(h_test_v) + hi_u.dot(wj);
      }
      double lip = 0.0;
      for (Index a = 0; a < n; ++a)
        for (Index b = a + 1; b < n; ++b)
          lip = std::max(lip, std::abs(s[static_cast<std::size_t>(a)] -
                                       s[static_cast<std::size_t>(b)]) /
                                  dist(a, b));
      const double nominal = -g_test.dot(v);

      // Influence value under the leave-one-out distribution.
      const Vector& th = theta_wo[static_cast<std::size_t>(i)];
      const Vector g_test_wo = detail::point_grad(fit.spec, th, zt.x, zt.y);
      const Vector g_i_wo =
          detail::point_grad(fit.spec, th, fit.x.row(i).transpose(), fit.y[i]);
      const double loo_value =
          -g_test_wo.dot(h_wo_inv[static_cast<std::size_t>(i)] * g_i_wo);

      const std::size_t slot = tt * static_cast<std::size_t>(n) +
                               static_cast<std::size_t>(i);
      inside[slot] = (loo_value >= nominal - epsilon * lip &&
                      loo_value <= nominal + epsilon * lip);

      const double dloss =
          fit.loss_at(th, zt) - fit.loss_at(fit.theta_hat, zt);
      const double first_order = -nominal / static_cast<double>(n);
      agree[slot] = ((dloss > 0.0) == (first_order > 0.0) &&
                     (dloss < 0.0) == (first_order < 0.0));
    }
  });

  CoverageResult r;
  r.pairs = inside.size();
  std::size_t in_count = 0, ag_count = 0;
  for (std::size_t k = 0; k < inside.size(); ++k) {
    in_count += inside[k];
    ag_count += agree[k];
  }
  r.fraction = double(in_count) / double(r.pairs);
  r.sign_agreement = double(ag_count) / double(r.pairs);
  r.diameter = fit.diameter;
  r.epsilon = epsilon;
  return r;
}

// Influence value recomputed at the mixture (1-t) P_n + t delta_z; the
// finite-difference oracle for the sensitivity kernel divides its change by t.
inline double mixture_influence(const FeatureMatrix& data,
                                const ConvexLossSpec& spec, const DataPoint& z,
                                double t, Index i, const DataPoint& z_test) {
  data.validate();
  require(t >= 0.0 && t < 1.0, Errc::bad_spec, "mixture weight t in [0,1)");
  require(i >= 0 && i < data.n(), Errc::index_out_of_range,
          "train index out of range");
  const ConvexModelFit full = fit_convex(data, spec);
  const Index n = data.n();
  Matrix x(n + 1, data.d());
  x.topRows(n) = data.values;
  x.row(n) = z.x.transpose();
  Vector y(n + 1);
  y.head(n) = *data.labels;
  y[n] = z.y;
  Vector weights(n + 1);
  weights.head(n).setConstant((1.0 - t) / double(n));
  weights[n] = t;
  const Vector theta = detail::newton_fit(spec, x, y, weights, &full.theta_hat);

  Matrix h = Matrix::Zero(data.d(), data.d());
  for (Index k = 0; k < n + 1; ++k)
    h += weights[k] * detail::point_hess(spec, theta, x.row(k).transpose(), y[k]);
  const Vector g_test = detail::point_grad(spec, theta, z_test.x, z_test.y);
  const Vector g_i =
      detail::point_grad(spec, theta, data.values.row(i).transpose(),
                         (*data.labels)[i]);
  return -g_test.dot(h.ldlt().solve(g_i));
}

}  // namespace wtrak
