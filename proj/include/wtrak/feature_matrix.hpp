#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "wtrak/errors.hpp"

namespace wtrak {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// One row per sample: a gradient-feature vector, an id, and (optionally) a
// label. Labels double as regression targets (real) or anomaly/class flags
// ({0,1}); which interpretation applies is up to the consumer.
struct FeatureMatrix {
  Matrix values;                 // n x d
  std::vector<std::string> ids;  // size n, unique
  std::optional<Vector> labels;  // size n when present

  Index n() const { return values.rows(); }
  Index d() const { return values.cols(); }

  bool has_labels() const { return labels.has_value(); }

  // True when every label is exactly 0 or 1 (binary-file and logistic contract).
  bool labels_binary() const {
    if (!labels) return false;
    for (Index i = 0; i < labels->size(); ++i) {
      const double y = (*labels)[i];
      if (y != 0.0 && y != 1.0) return false;
    }
    return true;
  }

  void validate() const {
    require(values.rows() >= 1 && values.cols() >= 1, Errc::bad_spec,
            "feature matrix must be at least 1x1");
    require(values.allFinite(), Errc::non_finite_input,
            "feature matrix contains non-finite values");
    require(static_cast<Index>(ids.size()) == values.rows(), Errc::bad_spec,
            "id count does not match row count");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      require(seen.insert(id).second, Errc::bad_spec, "duplicate row id: " + id);
    if (labels) {
      require(labels->size() == values.rows(), Errc::bad_labels,
              "label count does not match row count");
      require(labels->allFinite(), Errc::non_finite_input,
              "labels contain non-finite values");
    }
  }
};

inline std::vector<std::string> default_ids(Index n) {
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i);
  return ids;
}

inline FeatureMatrix make_features(Matrix values,
                                   std::optional<Vector> labels = std::nullopt) {
  FeatureMatrix f;
  f.values = std::move(values);
  f.ids = default_ids(f.values.rows());
  f.labels = std::move(labels);
  f.validate();
  return f;
}

}  // namespace wtrak
