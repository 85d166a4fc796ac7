#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "wtrak/errors.hpp"
#include "wtrak/feature_matrix.hpp"

namespace wtrak {

// Regularized second-moment geometry: Q = (1/n) sum phi phi^T + lambda I.
// Everything downstream (scores, whitening, Lipschitz constants, spectra)
// queries this object; it is immutable after construction and safe to share.
//
// Inverse and inverse square root come from the symmetric eigendecomposition
// rather than a Cholesky solve because the spectrum itself is a required
// diagnostic output. Negative round-off eigenvalues are clamped to zero
// before lambda is added.
struct CovarianceModel {
  Matrix q;                  // d x d, symmetric
  double lambda = 0.0;
  Vector eigenvalues;        // descending, of the regularized Q
  Matrix eigenvectors;       // columns follow eigenvalue order
  Matrix q_inv;
  Matrix q_inv_sqrt;
  double raw_min_eigenvalue = 0.0;  // smallest eigenvalue before clamp+lambda

  Index dim() const { return q.rows(); }

  double condition_number() const {
    return eigenvalues[0] / eigenvalues[eigenvalues.size() - 1];
  }

  void check_dim(Index d, const char* who) const {
    require(d == dim(), Errc::dimension_mismatch,
            std::string(who) + ": vector dimension does not match covariance");
  }
};

namespace detail {

inline CovarianceModel finish_model(const Matrix& second_moment, double lambda) {
  const Index d = second_moment.rows();
  Matrix sym = 0.5 * (second_moment + second_moment.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  require(es.info() == Eigen::Success, Errc::non_convergence,
          "eigendecomposition failed");

  CovarianceModel m;
  m.lambda = lambda;
  m.raw_min_eigenvalue = es.eigenvalues()[0];  // ascending order
  if (lambda == 0.0) {
    const double lmax = es.eigenvalues()[d - 1];
    require(es.eigenvalues()[0] > 1e-12 * lmax, Errc::singular_covariance,
            "lambda = 0 and covariance is numerically rank-deficient");
  }

  // Reverse to descending and regularize the clamped spectrum.
  m.eigenvalues = Vector(d);
  m.eigenvectors = Matrix(d, d);
  for (Index k = 0; k < d; ++k) {
    const Index src = d - 1 - k;
    m.eigenvalues[k] = std::max(es.eigenvalues()[src], 0.0) + lambda;
    m.eigenvectors.col(k) = es.eigenvectors().col(src);
  }
  m.q = sym + lambda * Matrix::Identity(d, d);

  const Vector inv = m.eigenvalues.cwiseInverse();
  const Vector inv_sqrt = m.eigenvalues.cwiseSqrt().cwiseInverse();
  m.q_inv = m.eigenvectors * inv.asDiagonal() * m.eigenvectors.transpose();
  m.q_inv_sqrt =
      m.eigenvectors * inv_sqrt.asDiagonal() * m.eigenvectors.transpose();
  return m;
}

}  // namespace detail

inline CovarianceModel build_covariance(const FeatureMatrix& features,
                                        double lambda) {
  features.validate();
  require(lambda >= 0.0, Errc::negative_input, "lambda must be >= 0");
  const double n = static_cast<double>(features.n());
  Matrix second = features.values.transpose() * features.values / n;
  return detail::finish_model(second, lambda);
}

// Exogenous geometry: treat `q_raw + lambda I` as the covariance. Used when
// the metric is prescribed rather than estimated from the rows at hand.
inline CovarianceModel covariance_from_matrix(const Matrix& q_raw,
                                              double lambda = 0.0) {
  require(q_raw.rows() == q_raw.cols(), Errc::dimension_mismatch,
          "covariance matrix must be square");
  require(q_raw.allFinite(), Errc::non_finite_input,
          "covariance matrix contains non-finite values");
  require(lambda >= 0.0, Errc::negative_input, "lambda must be >= 0");
  return detail::finish_model(q_raw, lambda);
}

// psi = Q^{-1/2} phi. ||psi||^2 is the self-influence of phi.
inline Vector whiten(const CovarianceModel& model, const Vector& phi) {
  model.check_dim(phi.size(), "whiten");
  return model.q_inv_sqrt * phi;
}

// Mahalanobis distance induced by Q^{-1}; equals the Euclidean distance of
// the whitened vectors.
inline double natural_distance(const CovarianceModel& model, const Vector& phi,
                               const Vector& phi2) {
  model.check_dim(phi.size(), "natural_distance");
  model.check_dim(phi2.size(), "natural_distance");
  const Vector delta = phi - phi2;
  const double q = delta.dot(model.q_inv * delta);
  return std::sqrt(std::max(q, 0.0));
}

struct SpectrumReport {
  std::vector<double> eigenvalues;               // descending
  double condition_number = 1.0;                 // of the regularized Q
  double raw_min_eigenvalue = 0.0;
  std::vector<double> euclidean_amplification;   // lambda_max / lambda_k
  std::vector<double> natural_amplification;     // identically 1
  double reduction_prediction = 1.0;             // sqrt(condition_number)
};

// Per-eigendirection worst-case amplification of a Euclidean certificate,
// relative to the top eigendirection; the Natural metric holds it at 1.
inline SpectrumReport spectrum_report(const CovarianceModel& model) {
  SpectrumReport r;
  const Index d = model.dim();
  r.eigenvalues.resize(static_cast<std::size_t>(d));
  r.euclidean_amplification.resize(static_cast<std::size_t>(d));
  r.natural_amplification.assign(static_cast<std::size_t>(d), 1.0);
  const double lmax = model.eigenvalues[0];
  for (Index k = 0; k < d; ++k) {
    r.eigenvalues[static_cast<std::size_t>(k)] = model.eigenvalues[k];
    r.euclidean_amplification[static_cast<std::size_t>(k)] =
        lmax / model.eigenvalues[k];
  }
  r.condition_number = model.condition_number();
  r.raw_min_eigenvalue = model.raw_min_eigenvalue;
  r.reduction_prediction = std::sqrt(r.condition_number);
  return r;
}

}  // namespace wtrak
