#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wtrak/rng.hpp"
#include "wtrak/synth.hpp"
#include "wtrak/trak.hpp"

using wtrak::FeatureMatrix;
using wtrak::Index;
using wtrak::Matrix;
using wtrak::Metric;
using wtrak::Vector;

namespace {

Vector gaussian_vector(Index d, std::uint64_t seed) {
  wtrak::Rng rng(seed);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = rng.next_gaussian();
  return v;
}

FeatureMatrix gaussian_features(Index n, Index d, std::uint64_t seed) {
  wtrak::Rng rng(seed);
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = rng.next_gaussian();
  return wtrak::make_features(std::move(m));
}

FeatureMatrix head_rows(const FeatureMatrix& fm, Index m) {
  return wtrak::make_features(fm.values.topRows(m));
}

// Square root of Q rebuilt from the stored eigensystem; used to map a
// whitened-space ball onto feature space when sampling perturbations.
Matrix q_sqrt(const wtrak::CovarianceModel& model) {
  Vector s(model.dim());
  for (Index k = 0; k < model.dim(); ++k) s[k] = std::sqrt(model.eigenvalues[k]);
  return model.eigenvectors * s.asDiagonal() * model.eigenvectors.transpose();
}

}  // namespace

TEST_CASE("trak score examples") {
  const auto id = wtrak::covariance_from_matrix(Matrix::Identity(2, 2));
  Vector t(2), i(2);
  t << 1, 0;
  i << 0.5, 0;
  CHECK(wtrak::trak_score(id, t, i) == Catch::Approx(0.5).margin(1e-14));
  CHECK(wtrak::trak_score(id, t, Vector::Zero(2)) == 0.0);

  const auto fm = gaussian_features(30, 4, 3);
  const auto model = wtrak::build_covariance(fm, 1e-3);
  const Vector a = gaussian_vector(4, 10);
  const Vector b = gaussian_vector(4, 11);
  // Oracle: solve Q x = b densely instead of using the cached inverse.
  const Vector x = model.q.fullPivLu().solve(b);
  const double oracle = a.dot(x);
  CHECK(std::abs(wtrak::trak_score(model, a, b) - oracle) <=
        1e-10 * (1.0 + std::abs(oracle)));
}

TEST_CASE("spectral decomposition of the score") {
  SECTION("identity covariance gives coordinate products") {
    const auto id = wtrak::covariance_from_matrix(Matrix::Identity(3, 3));
    const Vector a = gaussian_vector(3, 1);
    const Vector b = gaussian_vector(3, 2);
    const auto parts = wtrak::spectral_decompose_trak(id, a, b);
    double sum = 0.0;
    for (double p : parts) sum += p;
    CHECK(sum == Catch::Approx(a.dot(b)).epsilon(1e-10));
  }
  SECTION("contributions sum to the score") {
    const auto fm = gaussian_features(40, 6, 9);
    const auto model = wtrak::build_covariance(fm, 1e-4);
    const Vector a = gaussian_vector(6, 21);
    const Vector b = gaussian_vector(6, 22);
    const auto parts = wtrak::spectral_decompose_trak(model, a, b);
    double sum = 0.0;
    for (double p : parts) sum += p;
    const double score = wtrak::trak_score(model, a, b);
    CHECK(std::abs(sum - score) <= 1e-8 * (1.0 + std::abs(score)));
  }
  SECTION("weak eigendirection amplifies its lone contribution") {
    Matrix q = Matrix::Zero(2, 2);
    q(0, 0) = 1.0;
    q(1, 1) = 1e-4;
    const auto model = wtrak::covariance_from_matrix(q);
    Vector e2(2);
    e2 << 0, 1;
    const auto parts = wtrak::spectral_decompose_trak(model, e2, e2);
    CHECK(parts[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(parts[1] == Catch::Approx(1e4).epsilon(1e-10));
  }
}

TEST_CASE("self influence examples") {
  const auto id = wtrak::covariance_from_matrix(Matrix::Identity(2, 2));
  Vector phi(2);
  phi << 3, 4;
  CHECK(wtrak::self_influence(id, phi) == Catch::Approx(25.0).margin(1e-12));
  CHECK(wtrak::self_influence(id, Vector::Zero(2)) == 0.0);

  const auto fm = gaussian_features(50, 5, 17);
  const auto model = wtrak::build_covariance(fm, 1e-4);
  const Vector v = gaussian_vector(5, 8);
  const double si = wtrak::self_influence(model, v);
  const double wn = wtrak::whiten(model, v).squaredNorm();
  CHECK(std::abs(si - wn) <= 1e-10 * (1.0 + si));
}

TEST_CASE("ood cap table") {
  CHECK(wtrak::cap_ood(10.0, 3.0) == 6.0);
  CHECK(wtrak::cap_ood(1.0, 3.0) == 1.0);
  CHECK(wtrak::cap_ood(6.0, 3.0) == 6.0);
  CHECK_THROWS_AS(wtrak::cap_ood(-1.0, 3.0), wtrak::Error);
}

TEST_CASE("lipschitz constant formulas") {
  CHECK(wtrak::natural_lipschitz(4.0, 9.0, 2.0) == Catch::Approx(24.0));
  CHECK(wtrak::natural_lipschitz(4.0, 0.0, 2.0) == 0.0);
  CHECK_THROWS_AS(wtrak::natural_lipschitz(-1.0, 1.0, 1.0), wtrak::Error);

  SECTION("metrics coincide under the identity covariance") {
    const auto id = wtrak::covariance_from_matrix(Matrix::Identity(4, 4));
    const Vector t = gaussian_vector(4, 31);
    const Vector i = gaussian_vector(4, 32);
    const double r = 1.7;
    const double euc = wtrak::euclidean_lipschitz(id, t, i, r);
    const double nat = wtrak::natural_lipschitz(wtrak::self_influence(id, t),
                                                wtrak::self_influence(id, i), r);
    CHECK(std::abs(euc - nat) <= 1e-10 * (1.0 + euc));
  }
  SECTION("weak direction inflates the euclidean constant") {
    Matrix q = Matrix::Zero(2, 2);
    q(0, 0) = 1.0;
    q(1, 1) = 1e-4;
    const auto model = wtrak::covariance_from_matrix(q);
    Vector e2(2);
    e2 << 0, 1;
    CHECK(wtrak::euclidean_lipschitz(model, e2, e2, 1.0) ==
          Catch::Approx(2e8).epsilon(1e-10));
  }
}

TEST_CASE("interval construction") {
  const auto iv = wtrak::make_interval(1.5, 2.0, 0.25, Metric::natural);
  CHECK(iv.lo == 1.5 - 0.25 * 2.0);
  CHECK(iv.hi == 1.5 + 0.25 * 2.0);
  CHECK(iv.lo <= iv.nominal);
  CHECK(iv.nominal <= iv.hi);
  CHECK_THROWS_AS(wtrak::make_interval(0.0, 1.0, -0.1, Metric::natural),
                  wtrak::Error);

  const auto degenerate = wtrak::make_interval(0.7, 5.0, 0.0, Metric::euclidean);
  CHECK(degenerate.lo == 0.7);
  CHECK(degenerate.hi == 0.7);
}

TEST_CASE("engine interval on the unit-circle fixture") {
  // Four unit-norm rows under Q = I: nominal 1, SI 1, radius 1, L = 2.
  Matrix rows(4, 2);
  rows << 1, 0, 0, 1, -1, 0, 0, -1;
  const wtrak::TrakEngine engine(
      wtrak::covariance_from_matrix(Matrix::Identity(2, 2)),
      wtrak::make_features(rows));
  Vector test(2);
  test << 1, 0;
  const auto iv = engine.interval(test, 0, 0.1, Metric::natural);
  CHECK(iv.nominal == Catch::Approx(1.0).margin(1e-12));
  CHECK(iv.lipschitz == Catch::Approx(2.0).margin(1e-12));
  CHECK(iv.lo == Catch::Approx(0.8).margin(1e-12));
  CHECK(iv.hi == Catch::Approx(1.2).margin(1e-12));

  const auto zero = engine.interval(test, 0, 0.0, Metric::natural);
  CHECK(zero.lo == zero.hi);
  CHECK(zero.lo == zero.nominal);
}

TEST_CASE("engine caches match their definitions") {
  const auto train = gaussian_features(40, 3, 51);
  const wtrak::TrakEngine engine(train, 1e-3);
  CHECK(engine.r_euc() ==
        Catch::Approx(train.values.rowwise().norm().maxCoeff()));
  double simax = 0.0;
  for (Index i = 0; i < train.n(); ++i) {
    const double si =
        wtrak::self_influence(engine.model(), train.values.row(i).transpose());
    CHECK(engine.si_train()[i] == Catch::Approx(si).margin(1e-12));
    simax = std::max(simax, si);
  }
  CHECK(engine.si_train_max() == Catch::Approx(simax));
  CHECK(engine.r_whit() == Catch::Approx(std::sqrt(simax)));

  const auto recs = engine.test_self_influence(head_rows(train, 5));
  for (const auto& rec : recs) {
    CHECK(rec.capped <= rec.raw);
    CHECK(rec.capped <= 2.0 * engine.si_train_max());
  }
}

TEST_CASE("batch intervals agree with the scalar path") {
  const auto train = gaussian_features(25, 4, 61);
  const auto test = gaussian_features(6, 4, 62);
  const wtrak::TrakEngine engine(train, 1e-3);
  for (Metric metric : {Metric::natural, Metric::euclidean}) {
    const auto b = engine.batch(test, 0.2, metric);
    REQUIRE(b.tests() == 6);
    REQUIRE(b.trains() == 25);
    for (Index t = 0; t < 6; ++t)
      for (Index i = 0; i < 25; ++i) {
        const auto one =
            engine.interval(test.values.row(t).transpose(), i, 0.2, metric);
        CHECK(b.nominal(t, i) == Catch::Approx(one.nominal).margin(1e-12));
        CHECK(b.lipschitz(t, i) ==
              Catch::Approx(one.lipschitz).epsilon(1e-12).margin(1e-12));
      }
  }
}

TEST_CASE("intervals widen monotonically in the radius") {
  const auto train = gaussian_features(20, 3, 71);
  const wtrak::TrakEngine engine(train, 1e-3);
  const Vector test = gaussian_vector(3, 72);
  double prev_width = -1.0;
  for (double eps : {0.0, 0.1, 0.5, 1.0, 3.0}) {
    const auto iv = engine.interval(test, 4, eps, Metric::natural);
    const double width = iv.hi - iv.lo;
    CHECK(width >= prev_width);
    prev_width = width;
  }
}

TEST_CASE("sampled perturbations never escape the certified interval") {
  const auto spec = [] {
    wtrak::SynthSpec s;
    s.kind = wtrak::SynthKind::spectrum_controlled;
    s.n = 300;
    s.d = 6;
    s.kappa = 100.0;
    s.seed = 77;
    return s;
  }();
  const auto train = wtrak::generate_spectrum_features(spec);
  const wtrak::TrakEngine engine(train, 1e-4);
  const auto& model = engine.model();
  const Vector phi_test = train.values.row(3).transpose();
  const Index i = 7;
  const Vector phi_i = train.values.row(i).transpose();
  const double eps = 0.05;
  wtrak::Rng rng(909);

  SECTION("natural ball") {
    const auto iv = engine.interval(phi_test, i, eps, Metric::natural);
    const Matrix root = q_sqrt(model);
    for (int s = 0; s < 1000; ++s) {
      Vector dir(6);
      for (Index k = 0; k < 6; ++k) dir[k] = rng.next_gaussian();
      dir.normalize();
      const double radius = eps * std::pow(rng.next_double(), 1.0 / 6.0);
      const Vector moved = phi_i + root * (radius * dir);
      REQUIRE(wtrak::natural_distance(model, moved, phi_i) <= eps * (1 + 1e-9));
      const double score = wtrak::trak_score(model, phi_test, moved);
      CHECK(score >= iv.lo);
      CHECK(score <= iv.hi);
    }
  }
  SECTION("euclidean ball") {
    const auto iv = engine.interval(phi_test, i, eps, Metric::euclidean);
    for (int s = 0; s < 1000; ++s) {
      Vector dir(6);
      for (Index k = 0; k < 6; ++k) dir[k] = rng.next_gaussian();
      dir.normalize();
      const double radius = eps * std::pow(rng.next_double(), 1.0 / 6.0);
      const Vector moved = phi_i + radius * dir;
      const double score = wtrak::trak_score(model, phi_test, moved);
      CHECK(score >= iv.lo);
      CHECK(score <= iv.hi);
    }
  }
}

TEST_CASE("halfwidth ratio tracks the square root of the condition number") {
  wtrak::SynthSpec spec;
  spec.kind = wtrak::SynthKind::spectrum_controlled;
  spec.n = 2000;
  spec.d = 20;
  spec.kappa = 1e4;
  spec.seed = 5;
  const auto train = wtrak::generate_spectrum_features(spec);
  const wtrak::TrakEngine engine(train, 1e-4);
  const auto test = head_rows(train, 8);
  const double nat = engine.batch(test, 1.0, Metric::natural).lipschitz.maxCoeff();
  const double euc =
      engine.batch(test, 1.0, Metric::euclidean).lipschitz.maxCoeff();
  const double ratio = euc / nat;
  const double root_kappa = 100.0;
  CHECK(ratio >= 0.3 * root_kappa);
  CHECK(ratio <= 3.0 * root_kappa);
}

TEST_CASE("uncapped variant skips the test-side clamp") {
  const auto train = gaussian_features(30, 3, 81);
  const wtrak::TrakEngine engine(train, 1e-3);
  // A test point far outside the training cloud triggers the cap.
  Vector far = 100.0 * gaussian_vector(3, 82).normalized();
  const double raw = wtrak::self_influence(engine.model(), far);
  REQUIRE(raw > 2.0 * engine.si_train_max());
  const double capped = engine.lipschitz_for(far, 0, Metric::natural, true);
  const double uncapped = engine.lipschitz_for(far, 0, Metric::natural, false);
  CHECK(capped < uncapped);
  const double expected_capped = wtrak::natural_lipschitz(
      wtrak::cap_ood(raw, engine.si_train_max()), engine.si_train()[0],
      engine.r_whit());
  CHECK(capped == Catch::Approx(expected_capped));
}

TEST_CASE("engine index and dimension validation") {
  const auto train = gaussian_features(10, 3, 91);
  const wtrak::TrakEngine engine(train, 1e-3);
  const Vector test = gaussian_vector(3, 92);
  CHECK_THROWS_AS(engine.interval(test, 10, 0.1, Metric::natural), wtrak::Error);
  CHECK_THROWS_AS(engine.interval(test, -1, 0.1, Metric::natural), wtrak::Error);
  CHECK_THROWS_AS(engine.interval(gaussian_vector(4, 93), 0, 0.1,
                                  Metric::natural),
                  wtrak::Error);
  CHECK_THROWS_AS(engine.interval(test, 0, -0.1, Metric::natural), wtrak::Error);
}
