#include "pddn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pddn/error.hpp"

namespace pddn {

void ConfusionCounts::add(bool truth_pd, bool predicted_pd) {
  if (truth_pd) {
    predicted_pd ? ++tp : ++fn;
  } else {
    predicted_pd ? ++fp : ++tn;
  }
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  tn += other.tn;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.counts = c;
  m.acc = ratio(c.tp + c.tn, c.total());
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  return m;
}

namespace {

struct Sweep {
  std::vector<std::int64_t> tp;  // cumulative, one entry per distinct threshold plus the origin
  std::vector<std::int64_t> fp;
  std::vector<double> threshold;
  std::int64_t positives = 0;
  std::int64_t negatives = 0;
};

Sweep sweep(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw Error(Errc::LengthMismatch, "scores and labels differ in length");
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(Errc::NonFinite, "ROC score is not finite");
  }
  Sweep out;
  for (bool p : positive) p ? ++out.positives : ++out.negatives;
  if (out.positives == 0 || out.negatives == 0) {
    throw Error(Errc::SingleClass, "ROC needs at least one positive and one negative sample");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  out.tp.push_back(0);
  out.fp.push_back(0);
  out.threshold.push_back(std::numeric_limits<double>::infinity());
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      positive[order[i]] ? ++tp : ++fp;
      ++i;
    }
    out.tp.push_back(tp);
    out.fp.push_back(fp);
    out.threshold.push_back(s);
  }
  return out;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  const Sweep s = sweep(scores, positive);
  // Twice the trapezoid area in count units stays integral.
  std::int64_t twice_area = 0;
  for (std::size_t i = 1; i < s.tp.size(); ++i) {
    twice_area += (s.fp[i] - s.fp[i - 1]) * (s.tp[i] + s.tp[i - 1]);
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(s.positives) * static_cast<double>(s.negatives));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  const Sweep s = sweep(scores, positive);
  std::vector<RocPoint> points;
  points.reserve(s.tp.size());
  for (std::size_t i = 0; i < s.tp.size(); ++i) {
    points.push_back({static_cast<double>(s.fp[i]) / static_cast<double>(s.negatives),
                      static_cast<double>(s.tp[i]) / static_cast<double>(s.positives), s.threshold[i]});
  }
  return points;
}

}  // namespace pddn
