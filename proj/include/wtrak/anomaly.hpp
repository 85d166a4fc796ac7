#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "wtrak/covariance.hpp"
#include "wtrak/trak.hpp"

namespace wtrak {

// Training-side leverage scores; never capped (the cap is a test-point rule).
inline std::vector<SelfInfluenceRecord> score_anomalies(
    const CovarianceModel& model, const FeatureMatrix& features) {
  features.validate();
  model.check_dim(features.d(), "score_anomalies");
  std::vector<SelfInfluenceRecord> out;
  out.reserve(static_cast<std::size_t>(features.n()));
  for (Index i = 0; i < features.n(); ++i) {
    SelfInfluenceRecord rec;
    rec.id = features.ids[static_cast<std::size_t>(i)];
    rec.raw = self_influence(model, features.values.row(i).transpose());
    rec.capped = rec.raw;
    out.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

inline void check_two_classes(const std::vector<bool>& labels) {
  bool pos = false, neg = false;
  for (bool b : labels) (b ? pos : neg) = true;
  require(pos && neg, Errc::single_class,
          "metric undefined with a single class present");
}

// Indices sorted by descending score; stable, so exact ties keep input order.
inline std::vector<std::size_t> rank_desc(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return idx;
}

}  // namespace detail

// Mann-Whitney formulation via average ranks; tied pairs contribute 1/2.
inline double auroc(const std::vector<double>& scores,
                    const std::vector<bool>& labels) {
  require(scores.size() == labels.size() && !scores.empty(),
          Errc::dimension_mismatch, "scores and labels must align");
  detail::check_two_classes(labels);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t j = k;
    while (j < idx.size() && scores[idx[j]] == scores[idx[k]]) ++j;
    const double avg_rank = 0.5 * (double(k + 1) + double(j));  // 1-based
    for (std::size_t q = k; q < j; ++q)
      if (labels[idx[q]]) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    k = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

// Step-wise average precision over the ranked list: mean of precision@k over
// the positive positions. Ties resolved by stable input order.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<bool>& labels) {
  require(scores.size() == labels.size() && !scores.empty(),
          Errc::dimension_mismatch, "scores and labels must align");
  detail::check_two_classes(labels);
  const auto idx = detail::rank_desc(scores);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (labels[idx[k]]) {
      ++hits;
      ap += double(hits) / double(k + 1);
    }
  }
  return ap / double(hits);
}

// Recall of positives within the top ceil(fraction * n) scored rows.
inline double topk_recall(const std::vector<double>& scores,
                          const std::vector<bool>& labels, double fraction) {
  require(scores.size() == labels.size() && !scores.empty(),
          Errc::dimension_mismatch, "scores and labels must align");
  require(fraction > 0.0 && fraction <= 1.0, Errc::bad_spec,
          "fraction must lie in (0, 1]");
  detail::check_two_classes(labels);
  const auto idx = detail::rank_desc(scores);
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * double(scores.size())));
  std::size_t n_pos = 0, hits = 0;
  for (std::size_t q = 0; q < idx.size(); ++q) {
    if (labels[idx[q]]) {
      ++n_pos;
      if (q < k) ++hits;
    }
  }
  return double(hits) / double(n_pos);
}

struct CurvePoint {
  double x = 0.0;  // fpr (ROC) or recall (PR)
  double y = 0.0;  // tpr (ROC) or precision (PR)
};

// ROC steps at each distinct threshold, (0,0) through (1,1).
inline std::vector<CurvePoint> roc_points(const std::vector<double>& scores,
                                          const std::vector<bool>& labels) {
  detail::check_two_classes(labels);
  const auto idx = detail::rank_desc(scores);
  std::size_t n_pos = 0;
  for (bool b : labels) n_pos += b;
  const std::size_t n_neg = labels.size() - n_pos;
  std::vector<CurvePoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t j = k;
    while (j < idx.size() && scores[idx[j]] == scores[idx[k]]) ++j;
    for (std::size_t q = k; q < j; ++q) (labels[idx[q]] ? tp : fp)++;
    pts.push_back({double(fp) / double(n_neg), double(tp) / double(n_pos)});
    k = j;
  }
  return pts;
}

inline std::vector<CurvePoint> pr_points(const std::vector<double>& scores,
                                         const std::vector<bool>& labels) {
  detail::check_two_classes(labels);
  const auto idx = detail::rank_desc(scores);
  std::size_t n_pos = 0;
  for (bool b : labels) n_pos += b;
  std::vector<CurvePoint> pts;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (labels[idx[k]]) ++tp;
    pts.push_back({double(tp) / double(n_pos), double(tp) / double(k + 1)});
  }
  return pts;
}

struct AnomalyReport {
  double auroc = 0.0;
  double average_precision = 0.0;
  std::map<double, double> topk_recall;  // fraction -> recall
  double mean_separation = 0.0;          // mean SI corrupt / mean SI clean
  double corruption_rate = 0.0;
  std::size_t n = 0;
  std::size_t flip_count = 0;
  std::string tie_policy = "stable_input_order";
};

inline AnomalyReport evaluate_anomalies(const std::vector<double>& si,
                                        const std::vector<bool>& corrupted,
                                        double corruption_rate) {
  AnomalyReport r;
  r.n = si.size();
  r.corruption_rate = corruption_rate;
  r.auroc = auroc(si, corrupted);
  r.average_precision = average_precision(si, corrupted);
  for (double f : {0.1, 0.2, 0.3}) r.topk_recall[f] = topk_recall(si, corrupted, f);
  double sum_pos = 0.0, sum_neg = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < si.size(); ++k)
    if (corrupted[k]) {
      sum_pos += si[k];
      ++n_pos;
    } else {
      sum_neg += si[k];
    }
  r.flip_count = n_pos;
  const double mean_pos = sum_pos / double(n_pos);
  const double mean_neg = sum_neg / double(si.size() - n_pos);
  r.mean_separation = mean_pos / mean_neg;
  return r;
}

}  // namespace wtrak
