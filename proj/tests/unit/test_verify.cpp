#include <gtest/gtest.h>

#include "hypnorm/error.hpp"
#include "hypnorm/verify.hpp"

using namespace hypnorm;
using namespace hypnorm::verify;

TEST(Verify, QuickProfilePasses) {
  auto report = run_suite(Profile::Quick, 1);
  for (const auto& f : report.failures()) ADD_FAILURE() << f;
  EXPECT_TRUE(report.passed());
  EXPECT_GT(report.checks.size(), 40u);
  auto j = report.to_json();
  EXPECT_EQ(j["profile"], "quick");
  EXPECT_FALSE(j.contains("seconds"));
}

TEST(Verify, DefaultSizes) {
  EXPECT_EQ(sizes(Profile::Default).geometry_cases, 10000u);
  EXPECT_EQ(sizes(Profile::Default).lemma_inputs, 100u);
  EXPECT_EQ(sizes(Profile::Default).grad_points, 100u);
  EXPECT_EQ(parse_profile("quick"), Profile::Quick);
  EXPECT_THROW(parse_profile("exhaustive"), InvalidArgument);
}

TEST(Verify, MidpointChecksAreExact) {
  for (const auto& c : midpoint_checks()) {
    EXPECT_TRUE(c.passed) << c.name;
    EXPECT_EQ(c.threshold, 0.0) << c.name;
  }
}

TEST(Verify, ChainGapIsInformational) {
  bool saw_info = false;
  for (const auto& c : theorem1_checks(10, 2)) {
    if (!c.hard) saw_info = true;
    else EXPECT_TRUE(c.passed) << c.name;
  }
  EXPECT_TRUE(saw_info);
}
