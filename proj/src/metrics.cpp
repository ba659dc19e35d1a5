#include "hypnorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hypnorm/error.hpp"

namespace hypnorm::metrics {

double interval_half_width(double value, std::size_t n) {
  if (n == 0) return 0.0;
  return 1.96 * std::sqrt(std::max(0.0, value * (1.0 - value)) / static_cast<double>(n));
}

MetricReport accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<char>& mask) {
  if (predictions.size() != labels.size() || mask.size() != labels.size()) {
    throw InvalidArgument("accuracy: predictions, labels and mask must have equal length");
  }
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    correct += predictions[i] == labels[i];
  }
  if (n == 0) throw InvalidArgument("accuracy: empty mask");
  MetricReport r{"accuracy", static_cast<double>(correct) / static_cast<double>(n), n, std::nullopt};
  r.half_width = interval_half_width(r.value, n);
  return r;
}

MetricReport roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // sum of positive ranks with ties given their average rank
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++pos;
      } else if (labels[order[k]] != 0) {
        throw InvalidArgument("roc_auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("roc_auc: both classes must be present");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  MetricReport r{"roc_auc", (rank_sum - p * (p + 1.0) / 2.0) / (p * q), scores.size(), std::nullopt};
  r.half_width = interval_half_width(r.value, scores.size());
  return r;
}

}  // namespace hypnorm::metrics
