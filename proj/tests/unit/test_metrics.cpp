#include <gtest/gtest.h>

#include "hypnorm/error.hpp"
#include "hypnorm/metrics.hpp"

using namespace hypnorm;
using namespace hypnorm::metrics;

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy({1, 2, 3}, {1, 2, 3}, {1, 1, 1}).value, 1.0);
  auto r = accuracy({0, 1, 0}, {0, 1, 1}, {1, 1, 1});
  EXPECT_NEAR(r.value, 0.6666666667, 1e-10);
  EXPECT_EQ(r.count, 3u);
  ASSERT_TRUE(r.half_width.has_value());
  EXPECT_NEAR(*r.half_width, interval_half_width(2.0 / 3.0, 3), 1e-15);
}

TEST(Accuracy, MaskSelectsEntries) {
  EXPECT_EQ(accuracy({0, 9, 0}, {0, 1, 1}, {1, 0, 0}).value, 1.0);
  EXPECT_THROW(accuracy({0}, {0}, {0}), InvalidArgument);
  EXPECT_THROW(accuracy({0, 1}, {0}, {1}), InvalidArgument);
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}).value, 1.0);
  EXPECT_EQ(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}).value, 0.5);
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}).value, 0.75);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {1, 1}), InvalidArgument);
}

TEST(RocAuc, MatchesPairCount) {
  std::vector<double> s{0.3, 0.3, 0.9, 0.1, 0.5, 0.5, 0.7};
  std::vector<int> y{1, 0, 1, 0, 0, 1, 0};
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  EXPECT_DOUBLE_EQ(roc_auc(s, y).value, num / den);
}

TEST(Interval, HalfWidth) {
  EXPECT_NEAR(interval_half_width(0.5, 100), 1.96 * 0.05, 1e-15);
  EXPECT_EQ(interval_half_width(1.0, 10), 0.0);
}
