#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wtrak/anomaly.hpp"
#include "wtrak/experiment.hpp"
#include "wtrak/rng.hpp"
#include "wtrak/synth.hpp"

using wtrak::FeatureMatrix;
using wtrak::Index;
using wtrak::Matrix;
using wtrak::Vector;

namespace {

Matrix gaussian_rows(Index n, Index d, std::uint64_t seed) {
  wtrak::Rng rng(seed);
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) m(i, j) = rng.next_gaussian();
  return m;
}

std::vector<std::size_t> argsort_desc(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

}  // namespace

TEST_CASE("anomaly scores under an identity covariance are squared norms") {
  const auto fm = wtrak::make_features(gaussian_rows(20, 3, 9));
  const auto model = wtrak::covariance_from_matrix(Matrix::Identity(3, 3));
  const auto recs = wtrak::score_anomalies(model, fm);
  REQUIRE(recs.size() == 20);
  for (Index i = 0; i < 20; ++i) {
    const auto& r = recs[std::size_t(i)];
    CHECK(r.id == std::to_string(i));
    CHECK(r.raw == Catch::Approx(fm.values.row(i).squaredNorm()).margin(1e-12));
    CHECK(r.capped == r.raw);  // cap applies to held-out points only
  }
}

TEST_CASE("identical rows share one anomaly score") {
  Matrix rows(5, 2);
  for (Index i = 0; i < 5; ++i) rows.row(i) << 1.0, 2.0;
  const auto fm = wtrak::make_features(rows);
  const auto model = wtrak::build_covariance(fm, 0.1);
  const auto recs = wtrak::score_anomalies(model, fm);
  for (std::size_t k = 1; k < recs.size(); ++k)
    CHECK(recs[k].raw == Catch::Approx(recs[0].raw).margin(1e-12));
}

TEST_CASE("duplicating a point deflates its own self-influence") {
  const Matrix base = gaussian_rows(30, 3, 17);
  Vector probe(3);
  probe << 2, 0, 0;

  auto with_copies = [&](Index copies) {
    Matrix all(30 + copies, 3);
    all.topRows(30) = base;
    for (Index c = 0; c < copies; ++c) all.row(30 + c) = probe.transpose();
    const auto fm = wtrak::make_features(all);
    const auto model = wtrak::build_covariance(fm, 1e-4);
    return wtrak::self_influence(model, probe);
  };
  CHECK(with_copies(8) < with_copies(1));
}

TEST_CASE("auroc") {
  using wtrak::auroc;
  CHECK(auroc({3, 2, 1, 0}, {true, true, false, false}) == 1.0);
  CHECK(auroc({1, 1, 1, 1}, {true, false, true, false}) == 0.5);
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) ==
        Catch::Approx(0.75));
  // One tied positive-negative pair counts half.
  CHECK(auroc({0, 1, 1, 2}, {false, false, true, true}) ==
        Catch::Approx(0.875));

  SECTION("invariant under monotone transforms") {
    wtrak::Rng rng(31);
    std::vector<double> s(60);
    std::vector<bool> y(60);
    for (std::size_t k = 0; k < 60; ++k) {
      s[k] = rng.next_gaussian();
      y[k] = rng.next_double() < 0.4;
    }
    std::vector<double> es(60);
    for (std::size_t k = 0; k < 60; ++k) es[k] = std::exp(s[k]);
    CHECK(auroc(es, y) == Catch::Approx(auroc(s, y)).margin(1e-12));
  }
  SECTION("degenerate label sets are rejected") {
    try {
      auroc({1, 2}, {true, true});
      FAIL("expected single_class");
    } catch (const wtrak::Error& e) {
      CHECK(e.code() == wtrak::Errc::single_class);
    }
    CHECK_THROWS_AS(auroc({1, 2, 3}, {true, false}), wtrak::Error);
  }
}

TEST_CASE("average precision") {
  using wtrak::average_precision;
  CHECK(average_precision({4, 3, 2, 1}, {true, true, false, false}) == 1.0);
  CHECK(average_precision({5, 4, 3, 2, 1},
                          {false, false, false, false, true}) ==
        Catch::Approx(0.2));
  // Hits at ranks 1, 3, 4: mean of 1, 2/3, 3/4.
  CHECK(average_precision({0.9, 0.8, 0.7, 0.6, 0.5, 0.4},
                          {true, false, true, true, false, false}) ==
        Catch::Approx(29.0 / 36.0));
}

TEST_CASE("top-k recall") {
  using wtrak::topk_recall;
  const std::vector<double> s{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  const std::vector<bool> top_two{true, true, false, false, false,
                                  false, false, false, false, false};
  CHECK(topk_recall(s, top_two, 1.0) == 1.0);
  CHECK(topk_recall(s, top_two, 0.2) == 1.0);
  CHECK(topk_recall(s, top_two, 0.1) == Catch::Approx(0.5));

  SECTION("monotone in the fraction") {
    wtrak::Rng rng(77);
    std::vector<double> sc(50);
    std::vector<bool> y(50);
    for (std::size_t k = 0; k < 50; ++k) {
      sc[k] = rng.next_gaussian();
      y[k] = rng.next_double() < 0.3;
    }
    double prev = 0.0;
    for (double f : {0.1, 0.2, 0.3, 0.5, 0.8, 1.0}) {
      const double r = topk_recall(sc, y, f);
      CHECK(r >= prev);
      prev = r;
    }
    CHECK(prev == 1.0);
  }
  SECTION("random labels recall the base rate on average") {
    std::vector<double> sc(100);
    for (std::size_t k = 0; k < 100; ++k) sc[k] = double(100 - k);
    wtrak::Rng rng(123);
    double sum = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<bool> y(100, false);
      for (auto idx : rng.choose(100, 10)) y[std::size_t(idx)] = true;
      sum += topk_recall(sc, y, 0.2);
    }
    const double mean = sum / 1000.0;
    CHECK(mean >= 0.15);
    CHECK(mean <= 0.25);
  }
}

TEST_CASE("roc and pr curves") {
  const std::vector<double> s{0.9, 0.7, 0.5, 0.3};
  const std::vector<bool> y{true, false, true, false};
  const auto roc = wtrak::roc_points(s, y);
  REQUIRE(roc.size() >= 2);
  CHECK(roc.front().x == 0.0);
  CHECK(roc.front().y == 0.0);
  CHECK(roc.back().x == 1.0);
  CHECK(roc.back().y == 1.0);
  for (std::size_t k = 1; k < roc.size(); ++k) {
    CHECK(roc[k].x >= roc[k - 1].x);
    CHECK(roc[k].y >= roc[k - 1].y);
  }
  const auto pr = wtrak::pr_points(s, y);
  REQUIRE(pr.size() == 4);
  CHECK(pr.front().y == 1.0);        // first retrieved item is a hit
  CHECK(pr.back().x == 1.0);         // all positives recovered at the end
  CHECK(pr.back().y == Catch::Approx(0.5));
}

TEST_CASE("anomaly report on a hand fixture") {
  const std::vector<double> si{5, 1, 1, 1};
  const std::vector<bool> corrupted{true, false, false, false};
  const auto r = wtrak::evaluate_anomalies(si, corrupted, 0.25);
  CHECK(r.auroc == 1.0);
  CHECK(r.average_precision == 1.0);
  CHECK(r.mean_separation == Catch::Approx(5.0));
  CHECK(r.flip_count == 1);
  CHECK(r.n == 4);
  CHECK(r.corruption_rate == 0.25);
  CHECK(r.topk_recall.at(0.1) == 1.0);
  CHECK(r.topk_recall.at(0.2) == 1.0);
  CHECK(r.topk_recall.at(0.3) == 1.0);
  CHECK_FALSE(r.tie_policy.empty());

  try {
    wtrak::evaluate_anomalies(si, {false, false, false, false}, 0.0);
    FAIL("expected single_class");
  } catch (const wtrak::Error& e) {
    CHECK(e.code() == wtrak::Errc::single_class);
  }
}

TEST_CASE("self-influence ranking is scale free") {
  const Matrix x = gaussian_rows(40, 4, 51);
  const double c = 7.0;
  const auto m1 = wtrak::build_covariance(wtrak::make_features(x), 1e-3);
  const auto m2 =
      wtrak::build_covariance(wtrak::make_features(Matrix(c * x)), c * c * 1e-3);
  for (Index i = 0; i < 40; ++i) {
    const double a = wtrak::self_influence(m1, x.row(i).transpose());
    const double b =
        wtrak::self_influence(m2, Vector(c * x.row(i).transpose()));
    CHECK(b == Catch::Approx(a).margin(1e-10));
  }
}

TEST_CASE("certificate width ranks training points exactly like self-influence") {
  const auto fm = wtrak::make_features(gaussian_rows(60, 5, 83));
  const wtrak::TrakEngine engine(fm, 1e-4);
  const Vector test = fm.values.row(0).transpose();
  std::vector<double> width(60), si(60);
  for (Index i = 0; i < 60; ++i) {
    width[std::size_t(i)] =
        engine.lipschitz_for(test, i, wtrak::Metric::natural);
    si[std::size_t(i)] = engine.si_train()[i];
  }
  CHECK(argsort_desc(width) == argsort_desc(si));
}

TEST_CASE("label noise experiment") {
  wtrak::SynthSpec spec;
  spec.kind = wtrak::SynthKind::two_cluster_labels;
  spec.d = 2;

  SECTION("clean data has no positive class to score") {
    spec.n = 50;
    spec.separation = 4.0;
    spec.corruption_rate = 0.0;
    spec.seed = 1;
    try {
      wtrak::label_noise_experiment(spec);
      FAIL("expected single_class");
    } catch (const wtrak::Error& e) {
      CHECK(e.code() == wtrak::Errc::single_class);
    }
  }

  SECTION("flipped labels surface at the top of the ranking") {
    spec.n = 2000;
    spec.separation = 6.0;
    spec.corruption_rate = 0.1;
    spec.seed = 6;
    const auto run = wtrak::label_noise_experiment(spec);
    CHECK(run.report.n == 2000);
    CHECK(run.report.flip_count == 200);
    CHECK(run.report.corruption_rate == 0.1);
    CHECK(run.si.size() == 2000);
    CHECK(run.grad_features.values.rows() == 2000);
    CHECK(std::count(run.corrupted.begin(), run.corrupted.end(), true) == 200);

    CHECK(run.report.auroc >= 0.9);
    CHECK(run.report.mean_separation > 1.5);
    CHECK(run.report.topk_recall.at(0.2) >= 0.8);
    CHECK(run.report.average_precision >= 0.5);
  }
}
