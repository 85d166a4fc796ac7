#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wtrak/feature_matrix.hpp"
#include "wtrak/rng.hpp"

namespace wtrak {

enum class SynthKind { spectrum_controlled, two_cluster_labels };

struct SynthSpec {
  SynthKind kind = SynthKind::spectrum_controlled;
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  double kappa = 1.0;            // spectrum_controlled: target condition number
  double separation = 0.0;       // two_cluster_labels: distance between means
  double corruption_rate = 0.0;  // two_cluster_labels: label flip fraction
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1 && d >= 1, Errc::bad_spec, "n and d must be >= 1");
    if (kind == SynthKind::spectrum_controlled) {
      require(kappa >= 1.0, Errc::bad_spec, "kappa must be >= 1");
      require(d >= 2, Errc::bad_spec,
              "spectrum-controlled generator needs d >= 2");
    } else {
      require(separation >= 0.0, Errc::bad_spec, "separation must be >= 0");
      require(corruption_rate >= 0.0 && corruption_rate < 0.5, Errc::bad_spec,
              "corruption_rate must lie in [0, 0.5)");
    }
  }
};

namespace detail {

inline void fill_gaussian(Matrix& m, Rng& rng) {
  double g0, g1;
  Index k = 0;
  const Index total = m.size();
  while (k + 1 < total) {
    rng.next_gaussian_pair(g0, g1);
    m(k / m.cols(), k % m.cols()) = g0;
    m((k + 1) / m.cols(), (k + 1) % m.cols()) = g1;
    k += 2;
  }
  if (k < total) m(k / m.cols(), k % m.cols()) = rng.next_gaussian();
}

// Haar-ish rotation: QR of a Gaussian matrix with column signs fixed by the
// diagonal of R, so the factorization (and the fixture) is unique.
inline Matrix random_rotation(Index d, Rng rng) {
  Matrix g(d, d);
  fill_gaussian(g, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR();
  for (Index k = 0; k < d; ++k)
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  return q;
}

}  // namespace detail

// Smallest population eigenvalue of the spectrum-controlled generator. The
// spectrum runs log-uniformly over [base, base * kappa]; anchoring the low
// end (rather than the top) keeps whitened and raw data radii on comparable
// scales, so the measured Euclidean/Natural reduction tracks sqrt(kappa).
inline constexpr double kSpectrumBaseEigenvalue = 0.04;

// Zero-mean Gaussian rows whose population covariance has a log-uniform
// spectrum spanning exactly kappa, in a seeded random orientation.
inline FeatureMatrix generate_spectrum_features(const SynthSpec& spec) {
  spec.validate();
  require(spec.kind == SynthKind::spectrum_controlled, Errc::bad_spec,
          "spec kind must be spectrum_controlled");
  const Index n = static_cast<Index>(spec.n);
  const Index d = static_cast<Index>(spec.d);

  Vector scale(d);
  for (Index k = 0; k < d; ++k) {
    const double expo = double(d - 1 - k) / double(d - 1);  // 1 -> 0
    scale[k] = std::sqrt(kSpectrumBaseEigenvalue * std::pow(spec.kappa, expo));
  }
  const Matrix rot = detail::random_rotation(d, Rng::stream(spec.seed, 1));

  Matrix z(n, d);
  Rng rows = Rng::stream(spec.seed, 2);
  detail::fill_gaussian(z, rows);
  return make_features(z * scale.asDiagonal() * rot.transpose());
}

struct SynthDataset {
  FeatureMatrix features;               // labels = post-flip classes {0,1}
  std::vector<std::uint64_t> flipped;   // indices whose label was inverted
  std::vector<bool> is_flipped;         // size n mask of the same set
};

// Two isotropic Gaussian clusters at the given mean separation along the
// first axis, class = parity of the row index, then exactly
// floor(corruption_rate * n) labels inverted (indices recorded).
inline SynthDataset generate_label_noise_dataset(const SynthSpec& spec) {
  spec.validate();
  require(spec.kind == SynthKind::two_cluster_labels, Errc::bad_spec,
          "spec kind must be two_cluster_labels");
  const Index n = static_cast<Index>(spec.n);
  const Index d = static_cast<Index>(spec.d);

  Matrix x(n, d);
  Rng rows = Rng::stream(spec.seed, 2);
  detail::fill_gaussian(x, rows);
  Vector y(n);
  const double half = 0.5 * spec.separation;
  for (Index i = 0; i < n; ++i) {
    const bool hi = (i % 2) == 1;
    x(i, 0) += hi ? half : -half;
    y[i] = hi ? 1.0 : 0.0;
  }

  const std::uint64_t k =
      static_cast<std::uint64_t>(spec.corruption_rate * double(spec.n));
  SynthDataset out;
  out.flipped = Rng::stream(spec.seed, 3).choose(spec.n, k);
  out.is_flipped.assign(static_cast<std::size_t>(n), false);
  for (std::uint64_t idx : out.flipped) {
    y[static_cast<Index>(idx)] = 1.0 - y[static_cast<Index>(idx)];
    out.is_flipped[static_cast<std::size_t>(idx)] = true;
  }
  out.features = make_features(std::move(x), std::move(y));
  return out;
}

}  // namespace wtrak
