#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "wtrak/parallel.hpp"
#include "wtrak/rng.hpp"
#include "wtrak/trak.hpp"

namespace wtrak {

// A ranking pair survives every perturbation in the ball iff the intervals
// are disjoint. Touching endpoints do not certify.
inline bool certify_pair(const RobustInterval& a, const RobustInterval& b) {
  require(a.metric == b.metric, Errc::mixed_metric,
          "cannot compare intervals under different metrics");
  require(a.epsilon == b.epsilon, Errc::mixed_epsilon,
          "cannot compare intervals at different radii");
  return a.hi < b.lo || b.hi < a.lo;
}

struct CertificationSeries {
  Metric metric = Metric::natural;
  std::vector<double> fractions;  // one per grid epsilon
  double l_max = 0.0;
  double l_mean = 0.0;
};

struct CertificationReport {
  std::vector<double> epsilon_grid;
  std::vector<CertificationSeries> series;
  std::size_t pair_count = 0;      // total pairs evaluated across test points
  std::size_t pairs_per_test = 0;
  bool sampled = false;
  std::optional<double> reduction_ratio;  // L_euc_max / L_nat_max

  const CertificationSeries* find(Metric m) const {
    for (const auto& s : series)
      if (s.metric == m) return &s;
    return nullptr;
  }
};

// Certified fraction per grid epsilon, aggregated as the unweighted mean of
// per-test-point fractions. All C(n,2) pairs are used up to `pair_budget`
// total comparisons; beyond that each test point gets an equal share of
// pairs drawn by stratified sampling over rank-distance bands (a monotone
// proxy for score gap). Allocation is proportional to each band's share of
// the C(n,2) population with at least one draw per band, and draws inside a
// band follow the population law, so the sampled fractions estimate the
// exhaustive ones while the far tail stays represented. The pair set is
// drawn once per test point and reused across the grid and both metrics,
// which makes the monotonicity of the frontier exact rather than
// statistical.
inline CertificationReport certification_frontier(
    const Matrix& nominal,
    const std::vector<std::pair<Metric, Matrix>>& lipschitz,
    const std::vector<double>& grid, std::uint64_t pair_budget = 2'000'000,
    std::uint64_t seed = 0, unsigned threads = 0) {
  require(!grid.empty(), Errc::empty_grid, "epsilon grid is empty");
  for (std::size_t g = 0; g + 1 < grid.size(); ++g)
    require(grid[g] <= grid[g + 1], Errc::bad_spec,
            "epsilon grid must be sorted ascending");
  require(grid.front() >= 0.0, Errc::negative_epsilon,
          "epsilon grid must be non-negative");
  require(!lipschitz.empty(), Errc::missing_series, "no metric series given");
  const Index m = nominal.rows();
  const Index n = nominal.cols();
  require(n >= 2, Errc::too_few_points,
          "need at least 2 training scores per test point");
  for (const auto& [metric, lip] : lipschitz) {
    (void)metric;
    require(lip.rows() == m && lip.cols() == n, Errc::dimension_mismatch,
            "lipschitz matrix shape does not match nominal scores");
  }

  const std::uint64_t all_pairs =
      static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  const std::uint64_t total = all_pairs * static_cast<std::uint64_t>(m);
  const bool sampled = total > pair_budget;

  // Rank-distance bands [1,2), [2,4), ... shared by every test point. A pair
  // at rank distance g exists in n - g positions, which fixes each band's
  // population and the within-band law.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bands;
  std::vector<std::uint64_t> band_alloc;
  std::vector<std::vector<std::uint64_t>> band_prefix;
  std::uint64_t per_test = all_pairs;
  if (sampled) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    for (std::uint64_t lo = 1; lo < un; lo *= 2)
      bands.emplace_back(lo, std::min(lo * 2, un));
    std::vector<std::uint64_t> pop(bands.size());
    band_prefix.resize(bands.size());
    for (std::size_t b = 0; b < bands.size(); ++b) {
      auto& prefix = band_prefix[b];
      prefix.reserve(static_cast<std::size_t>(bands[b].second - bands[b].first));
      std::uint64_t acc = 0;
      for (std::uint64_t g = bands[b].first; g < bands[b].second; ++g)
        prefix.push_back(acc += un - g);
      pop[b] = acc;
    }
    // Proportional allocation of the per-test share, largest remainder first,
    // floor of one draw per band.
    const std::uint64_t share = std::max<std::uint64_t>(pair_budget / m, 1);
    band_alloc.resize(bands.size());
    std::vector<std::pair<double, std::size_t>> remainder(bands.size());
    std::uint64_t used = 0;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      const double exact =
          double(share) * double(pop[b]) / double(all_pairs);
      band_alloc[b] = std::max<std::uint64_t>(
          static_cast<std::uint64_t>(exact), 1);
      used += band_alloc[b];
      remainder[b] = {exact - double(band_alloc[b]), b};
    }
    std::sort(remainder.begin(), remainder.end(),
              [](const auto& a, const auto& c) {
                return a.first > c.first || (a.first == c.first && a.second < c.second);
              });
    for (std::size_t r = 0; used < share && r < remainder.size(); ++r, ++used)
      ++band_alloc[remainder[r].second];
    per_test = 0;
    for (const std::uint64_t a : band_alloc) per_test += a;
  }

  // fractions[test][metric][grid]
  std::vector<std::vector<std::vector<double>>> frac(
      static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t t) {
    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(static_cast<std::size_t>(per_test));
    if (!sampled) {
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    } else {
      // Rank the training scores for this test point, then draw each pair as
      // (rank distance, position): the distance comes from the band's
      // population law via its prefix table, the position is uniform.
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return nominal(static_cast<Index>(t), a) < nominal(static_cast<Index>(t), b);
      });
      Rng rng = Rng::stream(seed, t);
      for (std::size_t b = 0; b < bands.size(); ++b) {
        const auto& prefix = band_prefix[b];
        for (std::uint64_t s = 0; s < band_alloc[b]; ++s) {
          const std::uint64_t u = rng.next_below(prefix.back());
          const std::size_t idx =
              std::upper_bound(prefix.begin(), prefix.end(), u) - prefix.begin();
          const std::uint64_t gap = bands[b].first + idx;
          const std::uint64_t a =
              rng.next_below(static_cast<std::uint64_t>(n) - gap);
          pairs.emplace_back(order[static_cast<std::size_t>(a)],
                             order[static_cast<std::size_t>(a + gap)]);
        }
      }
    }

    std::vector<double> gaps(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p)
      gaps[p] = std::abs(nominal(static_cast<Index>(t), pairs[p].first) -
                         nominal(static_cast<Index>(t), pairs[p].second));

    auto& per_metric = frac[t];
    per_metric.resize(lipschitz.size());
    std::vector<double> lsum(pairs.size());
    for (std::size_t s = 0; s < lipschitz.size(); ++s) {
      const Matrix& lip = lipschitz[s].second;
      for (std::size_t p = 0; p < pairs.size(); ++p)
        lsum[p] = lip(static_cast<Index>(t), pairs[p].first) +
                  lip(static_cast<Index>(t), pairs[p].second);
      per_metric[s].resize(grid.size());
      for (std::size_t g = 0; g < grid.size(); ++g) {
        std::size_t certified = 0;
        for (std::size_t p = 0; p < pairs.size(); ++p)
          certified += gaps[p] > grid[g] * lsum[p];
        per_metric[s][g] = double(certified) / double(pairs.size());
      }
    }
  });

  CertificationReport report;
  report.epsilon_grid = grid;
  report.pairs_per_test = static_cast<std::size_t>(per_test);
  report.pair_count =
      static_cast<std::size_t>(per_test) * static_cast<std::size_t>(m);
  report.sampled = sampled;
  for (std::size_t s = 0; s < lipschitz.size(); ++s) {
    CertificationSeries series;
    series.metric = lipschitz[s].first;
    series.fractions.assign(grid.size(), 0.0);
    for (Index t = 0; t < m; ++t)
      for (std::size_t g = 0; g < grid.size(); ++g)
        series.fractions[g] += frac[static_cast<std::size_t>(t)][s][g];
    for (auto& f : series.fractions) f /= double(m);
    series.l_max = lipschitz[s].second.maxCoeff();
    series.l_mean = lipschitz[s].second.mean();
    report.series.push_back(std::move(series));
  }
  const auto* nat = report.find(Metric::natural);
  const auto* euc = report.find(Metric::euclidean);
  if (nat && euc && nat->l_max > 0.0)
    report.reduction_ratio = euc->l_max / nat->l_max;
  return report;
}

struct ComparisonTable {
  double l_nat_max = 0.0, l_nat_mean = 0.0;
  double l_euc_max = 0.0, l_euc_mean = 0.0;
  double reduction_ratio = 0.0;
  double reduction_prediction = 0.0;  // sqrt(kappa) from the spectrum side
  double agreement_factor = 0.0;      // ratio / prediction
  double reference_epsilon = 0.0;
  double certified_natural = 0.0;     // at the reference epsilon
  double certified_euclidean = 0.0;

  std::string to_text() const {
    std::ostringstream os;
    os << "metric      L_max         L_mean        certified@eps=" << reference_epsilon
       << "\n";
    os << "natural     " << l_nat_max << "  " << l_nat_mean << "  "
       << certified_natural << "\n";
    os << "euclidean   " << l_euc_max << "  " << l_euc_mean << "  "
       << certified_euclidean << "\n";
    os << "reduction ratio " << reduction_ratio << " vs predicted "
       << reduction_prediction << " (agreement " << agreement_factor << ")\n";
    return os.str();
  }
};

// Side-by-side summary of the two certificates; the measured reduction is
// cross-checked against the spectral prediction sqrt(kappa).
inline ComparisonTable compare_metrics(const CertificationReport& report,
                                       double reduction_prediction) {
  const auto* nat = report.find(Metric::natural);
  const auto* euc = report.find(Metric::euclidean);
  require(nat != nullptr && euc != nullptr, Errc::missing_series,
          "comparison requires both metric series");
  ComparisonTable t;
  t.l_nat_max = nat->l_max;
  t.l_nat_mean = nat->l_mean;
  t.l_euc_max = euc->l_max;
  t.l_euc_mean = euc->l_mean;
  t.reduction_ratio = report.reduction_ratio.value_or(0.0);
  t.reduction_prediction = reduction_prediction;
  t.agreement_factor =
      reduction_prediction > 0.0 ? t.reduction_ratio / reduction_prediction : 0.0;
  const std::size_t ref = report.epsilon_grid.size() / 2;
  t.reference_epsilon = report.epsilon_grid[ref];
  t.certified_natural = nat->fractions[ref];
  t.certified_euclidean = euc->fractions[ref];
  return t;
}

}  // namespace wtrak
