#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pddn {

/// PD is the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  void add(bool truth_pd, bool predicted_pd);
  std::int64_t total() const noexcept { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Ratios are empty when their denominator is zero.
struct Metrics {
  ConfusionCounts counts;
  std::optional<double> acc;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> auc;
};

Metrics compute_metrics(const ConfusionCounts& counts);

/// Area under the ROC curve by threshold sweep with trapezoidal integration
/// (equal to the Mann-Whitney statistic with half credit for ties). Throws
/// SingleClass unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const bool> positive);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  /// Predict PD when score >= threshold; the first point uses +infinity.
  double threshold = 0.0;
};

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive);

}  // namespace pddn
