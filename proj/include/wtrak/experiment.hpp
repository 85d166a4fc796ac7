#pragma once

#include <utility>
#include <vector>

#include "wtrak/anomaly.hpp"
#include "wtrak/convex.hpp"
#include "wtrak/synth.hpp"

namespace wtrak {

struct AnomalyRun {
  AnomalyReport report;
  std::vector<double> si;         // self-influence per training row
  std::vector<bool> corrupted;    // ground-truth flip mask
  FeatureMatrix grad_features;    // per-sample loss gradients at theta_hat
  CovarianceModel model;
};

// Label-noise detection pipeline, fully deterministic in the generator seed:
// generate the two-cluster data, fit the logistic model, take per-sample
// loss gradients at theta_hat as the feature map, build the regularized
// covariance, and rank by self-influence.
inline AnomalyRun label_noise_experiment(const SynthSpec& spec,
                                         double reg_strength = 1e-2,
                                         double lambda = 1e-4) {
  require(spec.kind == SynthKind::two_cluster_labels, Errc::bad_spec,
          "label-noise experiment needs the two-cluster generator");
  const SynthDataset data = generate_label_noise_dataset(spec);

  ConvexLossSpec loss;
  loss.kind = LossKind::l2_logistic_regression;
  loss.reg_strength = reg_strength;
  loss.feature_dim = data.features.d();
  const ConvexModelFit fit = fit_convex(data.features, loss);

  AnomalyRun run;
  run.grad_features.values = fit.grads;
  run.grad_features.ids = data.features.ids;
  run.model = build_covariance(run.grad_features, lambda);

  const auto records = score_anomalies(run.model, run.grad_features);
  run.si.reserve(records.size());
  for (const auto& rec : records) run.si.push_back(rec.raw);
  run.corrupted = data.is_flipped;
  run.report = evaluate_anomalies(run.si, run.corrupted, spec.corruption_rate);
  return run;
}

}  // namespace wtrak
