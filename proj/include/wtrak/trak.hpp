#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wtrak/covariance.hpp"
#include "wtrak/feature_matrix.hpp"

namespace wtrak {

enum class Metric { natural, euclidean };

inline const char* metric_name(Metric m) {
  return m == Metric::natural ? "natural" : "euclidean";
}

// Attribution score tau = phi_test^T Q^{-1} phi_i.
inline double trak_score(const CovarianceModel& model, const Vector& phi_test,
                         const Vector& phi_i) {
  model.check_dim(phi_test.size(), "trak_score");
  model.check_dim(phi_i.size(), "trak_score");
  return phi_test.dot(model.q_inv * phi_i);
}

// k-th entry: (1/lambda_k) <phi_test, e_k> <phi_i, e_k>. Sums to trak_score.
inline std::vector<double> spectral_decompose_trak(const CovarianceModel& model,
                                                   const Vector& phi_test,
                                                   const Vector& phi_i) {
  model.check_dim(phi_test.size(), "spectral_decompose_trak");
  model.check_dim(phi_i.size(), "spectral_decompose_trak");
  const Vector a = model.eigenvectors.transpose() * phi_test;
  const Vector b = model.eigenvectors.transpose() * phi_i;
  std::vector<double> out(static_cast<std::size_t>(model.dim()));
  for (Index k = 0; k < model.dim(); ++k)
    out[static_cast<std::size_t>(k)] = a[k] * b[k] / model.eigenvalues[k];
  return out;
}

// Leverage of a point under the model geometry: SI = phi^T Q^{-1} phi.
inline double self_influence(const CovarianceModel& model, const Vector& phi) {
  model.check_dim(phi.size(), "self_influence");
  return std::max(phi.dot(model.q_inv * phi), 0.0);
}

// Clamp a test point's self-influence at twice the training maximum so an
// out-of-distribution query cannot inflate its certificate unboundedly.
inline double cap_ood(double si_test_raw, double si_train_max) {
  require(si_test_raw >= 0.0 && si_train_max >= 0.0, Errc::negative_input,
          "cap_ood: self-influence values must be >= 0");
  return std::min(si_test_raw, 2.0 * si_train_max);
}

// Worst-case score change per unit of Natural-metric perturbation budget.
// r_whit is the whitened radius of the training set, max_j sqrt(SI(z_j)).
inline double natural_lipschitz(double si_test_capped, double si_i,
                                double r_whit) {
  require(si_test_capped >= 0.0 && si_i >= 0.0 && r_whit >= 0.0,
          Errc::negative_input, "natural_lipschitz: inputs must be >= 0");
  return 2.0 * std::sqrt(si_test_capped) * std::sqrt(si_i) * r_whit;
}

// Euclidean analogue, same derivation carried out in raw coordinates;
// r_euc is the raw radius max_j ||phi_j||.
inline double euclidean_lipschitz(const CovarianceModel& model,
                                  const Vector& phi_test, const Vector& phi_i,
                                  double r_euc) {
  model.check_dim(phi_test.size(), "euclidean_lipschitz");
  model.check_dim(phi_i.size(), "euclidean_lipschitz");
  require(r_euc >= 0.0, Errc::negative_input,
          "euclidean_lipschitz: radius must be >= 0");
  return 2.0 * (model.q_inv * phi_test).norm() * (model.q_inv * phi_i).norm() *
         r_euc;
}

struct RobustInterval {
  double nominal = 0.0;
  double lipschitz = 0.0;
  double epsilon = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  Metric metric = Metric::natural;
  std::string test_id;
  std::string train_id;
};

inline RobustInterval make_interval(double nominal, double lipschitz,
                                    double epsilon, Metric metric,
                                    std::string test_id = {},
                                    std::string train_id = {}) {
  require(epsilon >= 0.0, Errc::negative_epsilon, "epsilon must be >= 0");
  require(lipschitz >= 0.0, Errc::negative_input, "lipschitz must be >= 0");
  RobustInterval iv;
  iv.nominal = nominal;
  iv.lipschitz = lipschitz;
  iv.epsilon = epsilon;
  iv.lo = nominal - epsilon * lipschitz;
  iv.hi = nominal + epsilon * lipschitz;
  iv.metric = metric;
  iv.test_id = std::move(test_id);
  iv.train_id = std::move(train_id);
  return iv;
}

struct SelfInfluenceRecord {
  std::string id;
  double raw = 0.0;
  double capped = 0.0;  // equals raw on the training side; cap is test-only
};

// Interval matrices in structure-of-arrays layout: row = test point,
// column = training point. Avoids m*n small records for batch work.
struct BatchIntervals {
  Metric metric = Metric::natural;
  double epsilon = 0.0;
  Matrix nominal;    // m x n
  Matrix lipschitz;  // m x n
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;

  Index tests() const { return nominal.rows(); }
  Index trains() const { return nominal.cols(); }

  RobustInterval at(Index t, Index i) const {
    require(t >= 0 && t < tests() && i >= 0 && i < trains(),
            Errc::index_out_of_range, "BatchIntervals::at");
    return make_interval(nominal(t, i), lipschitz(t, i), epsilon, metric,
                         test_ids[static_cast<std::size_t>(t)],
                         train_ids[static_cast<std::size_t>(i)]);
  }
};

// Binds a covariance model to its training rows and caches the per-row
// quantities every certificate needs: self-influences, inverse-image norms,
// and the two training radii. Test points never enter the radii.
class TrakEngine {
 public:
  TrakEngine(const FeatureMatrix& train, double lambda)
      : TrakEngine(build_covariance(train, lambda), train) {}

  TrakEngine(CovarianceModel model, const FeatureMatrix& train)
      : model_(std::move(model)), train_(train) {
    train_.validate();
    model_.check_dim(train_.d(), "TrakEngine");
    const Index n = train_.n();
    si_train_.resize(n);
    qinv_norm_train_.resize(n);
    const Matrix qinv_phi = train_.values * model_.q_inv;  // rows: (Q^{-1} phi_i)^T
    for (Index i = 0; i < n; ++i) {
      si_train_[i] = std::max(train_.values.row(i).dot(qinv_phi.row(i)), 0.0);
      qinv_norm_train_[i] = qinv_phi.row(i).norm();
    }
    si_train_max_ = si_train_.maxCoeff();
    r_whit_ = std::sqrt(si_train_max_);
    r_euc_ = train_.values.rowwise().norm().maxCoeff();
  }

  const CovarianceModel& model() const { return model_; }
  const FeatureMatrix& train() const { return train_; }
  const Vector& si_train() const { return si_train_; }
  double si_train_max() const { return si_train_max_; }
  double r_whit() const { return r_whit_; }
  double r_euc() const { return r_euc_; }

  Vector train_row(Index i) const {
    require(i >= 0 && i < train_.n(), Errc::index_out_of_range,
            "train index out of range");
    return train_.values.row(i).transpose();
  }

  double lipschitz_for(const Vector& phi_test, Index i, Metric metric,
                       bool apply_cap = true) const {
    require(i >= 0 && i < train_.n(), Errc::index_out_of_range,
            "train index out of range");
    if (metric == Metric::natural) {
      double si_t = self_influence(model_, phi_test);
      if (apply_cap) si_t = cap_ood(si_t, si_train_max_);
      return natural_lipschitz(si_t, si_train_[i], r_whit_);
    }
    return euclidean_lipschitz(model_, phi_test, train_row(i), r_euc_);
  }

  // One certified interval: nominal score +- epsilon * L, with the
  // out-of-distribution cap applied on the Natural side unless disabled.
  RobustInterval interval(const Vector& phi_test, Index i, double epsilon,
                          Metric metric, bool apply_cap = true,
                          std::string test_id = {}) const {
    require(epsilon >= 0.0, Errc::negative_epsilon, "epsilon must be >= 0");
    const double nominal = trak_score(model_, phi_test, train_row(i));
    const double lip = lipschitz_for(phi_test, i, metric, apply_cap);
    return make_interval(nominal, lip, epsilon, metric, std::move(test_id),
                         train_.ids[static_cast<std::size_t>(i)]);
  }

  Matrix nominal_scores(const FeatureMatrix& test) const {
    model_.check_dim(test.d(), "nominal_scores");
    return test.values * model_.q_inv * train_.values.transpose();
  }

  BatchIntervals batch(const FeatureMatrix& test, double epsilon, Metric metric,
                       bool apply_cap = true) const {
    require(epsilon >= 0.0, Errc::negative_epsilon, "epsilon must be >= 0");
    model_.check_dim(test.d(), "batch");
    BatchIntervals b;
    b.metric = metric;
    b.epsilon = epsilon;
    b.test_ids = test.ids;
    b.train_ids = train_.ids;
    b.nominal = nominal_scores(test);
    const Index m = test.n();
    const Index n = train_.n();
    Vector left(m);
    Vector right(n);
    if (metric == Metric::natural) {
      for (Index t = 0; t < m; ++t) {
        double si_t = self_influence(model_, test.values.row(t).transpose());
        if (apply_cap) si_t = cap_ood(si_t, si_train_max_);
        left[t] = 2.0 * std::sqrt(si_t) * r_whit_;
      }
      right = si_train_.cwiseSqrt();
    } else {
      const Matrix qinv_test = test.values * model_.q_inv;
      for (Index t = 0; t < m; ++t)
        left[t] = 2.0 * qinv_test.row(t).norm() * r_euc_;
      for (Index i = 0; i < n; ++i) right[i] = qinv_norm_train_[i];
    }
    b.lipschitz = left * right.transpose();
    return b;
  }

  std::vector<SelfInfluenceRecord> test_self_influence(
      const FeatureMatrix& test) const {
    std::vector<SelfInfluenceRecord> out;
    out.reserve(static_cast<std::size_t>(test.n()));
    for (Index t = 0; t < test.n(); ++t) {
      SelfInfluenceRecord rec;
      rec.id = test.ids[static_cast<std::size_t>(t)];
      rec.raw = self_influence(model_, test.values.row(t).transpose());
      rec.capped = cap_ood(rec.raw, si_train_max_);
      out.push_back(std::move(rec));
    }
    return out;
  }

 private:
  CovarianceModel model_;
  FeatureMatrix train_;
  Vector si_train_;
  Vector qinv_norm_train_;
  double si_train_max_ = 0.0;
  double r_whit_ = 0.0;
  double r_euc_ = 0.0;
};

}  // namespace wtrak
