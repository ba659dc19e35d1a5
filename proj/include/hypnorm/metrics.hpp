#pragma once

#include <optional>
#include <string>
#include <vector>

namespace hypnorm::metrics {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::size_t count = 0;
  /// 1.96 * sqrt(v (1 - v) / n).
  std::optional<double> half_width;
};

double interval_half_width(double value, std::size_t n);

/// Fraction of masked entries with predictions[i] == labels[i].
MetricReport accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<char>& mask);

/// Mann-Whitney statistic P(score+ > score-) + P(tie)/2.
MetricReport roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace hypnorm::metrics
