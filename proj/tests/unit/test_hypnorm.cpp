#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/geometry.hpp"
#include "hypnorm/gradcheck.hpp"
#include "hypnorm/hypnorm.hpp"
#include "hypnorm/scalar_math.hpp"

using namespace hypnorm;
using namespace hypnorm::norm;

namespace {

Vec ball_point(std::size_t d, double c, double max_t, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, max_t);
  Vec v(d);
  for (double& x : v) x = n(rng);
  const double k = u(rng) / (std::sqrt(c) * math::norm(v));
  for (double& x : v) x *= k;
  return v;
}

}  // namespace

TEST(NormConfig, Validation) {
  EXPECT_THROW((NormConfig{0.0, 1.0}).validate(), InvalidArgument);
  EXPECT_THROW((NormConfig{1.0, -1.0}).validate(), InvalidArgument);
  EXPECT_EQ(NormConfig::default_scale(0.3), 5.0);
  EXPECT_EQ(NormConfig::default_scale(0.5), 5.0);
  EXPECT_EQ(NormConfig::default_scale(1.5), 3.0);
  EXPECT_EQ(NormConfig::default_scale(1.0), 1.0);
  EXPECT_EQ(parse_placement("middle"), Placement::Middle);
  EXPECT_THROW(parse_placement("everywhere"), InvalidArgument);
}

TEST(Omega, Examples) {
  EXPECT_EQ(omega(Vec{0.0, 0.0}, 1.0), 1.0);
  EXPECT_NEAR(omega(Vec{1.0, 0.0}, 1.0), 0.7615941560, 1e-10);
  EXPECT_NEAR(omega(Vec{0.0, 2.0}, 0.25), 0.7615941560, 1e-10);
}

// Property: omega lies in (0, 1] and never increases with |x|.
TEST(Omega, BoundedAndMonotone) {
  double prev = 1.0;
  for (int i = 0; i <= 2000; ++i) {
    const double r = std::pow(10.0, -12.0 + 15.0 * i / 2000.0);
    const double w = omega(Vec{r}, 0.7);
    EXPECT_GT(w, 0.0);
    EXPECT_LE(w, 1.0);
    EXPECT_LE(w, prev);
    prev = w;
  }
}

TEST(ApplyNorm, Examples) {
  NormConfig unit{1.0, 1.0};
  EXPECT_EQ(apply_norm(Vec{0.0, 0.0}, NormConfig{0.3, 5.0}), (Vec{0.0, 0.0}));
  auto y = apply_norm(Vec{0.5, 0.0}, unit);
  EXPECT_NEAR(y[0], 0.4621171573, 1e-10);
  EXPECT_EQ(y[1], 0.0);
}

// Property: apply_norm with s = 1 equals exp0, keeps direction, and stays under s/sqrt(c).
TEST(ApplyNorm, MatchesExpMapAndBoundsRadius) {
  std::mt19937_64 rng(1);
  for (double c : {0.3, 1.0, 1.5}) {
    for (int i = 0; i < 500; ++i) {
      Vec x = ball_point(5, c, 12.0, rng);
      auto y = apply_norm(x, NormConfig{c, 1.0});
      auto e = geo::exp_map_origin(x, geo::Curvature(c));
      for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(y[k], e.coords()[k], 1e-12);
      auto ys = apply_norm(x, NormConfig{c, 3.0});
      EXPECT_LT(math::norm(ys), 3.0 / std::sqrt(c));
      EXPECT_NEAR(math::dot(ys, x) / (math::norm(ys) * math::norm(x)), 1.0, 1e-12);
    }
  }
}

TEST(ApplyNorm, GraphNodeGradient) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  ad::Graph g;
  auto x = g.input("x", {4, 3}, true);
  auto loss = g.sum(g.mul(apply_norm(g, x, NormConfig{1.0, 1.0}), g.constant(ad::Tensor({4, 3}, 0.7))));
  for (int trial = 0; trial < 100; ++trial) {
    ad::Tensor xv({4, 3});
    for (double& v : xv.storage()) v = n(rng);
    auto r = ad::finite_diff_check(g, ad::Bindings().bind("x", xv), loss, "x", {1e-6, 1e-5});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
}

TEST(ApplyNorm, ArgmaxIsInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    Vec x(6);
    for (double& v : x) v = n(rng);
    auto y = apply_norm(x, NormConfig{0.3, 5.0});
    EXPECT_EQ(std::max_element(x.begin(), x.end()) - x.begin(), std::max_element(y.begin(), y.end()) - y.begin());
  }
}

TEST(OmegaCascade, Examples) {
  EXPECT_THROW(omega_cascade({}, 1.0), InvalidArgument);
  Vec f{0.6, 0.8};
  EXPECT_DOUBLE_EQ(omega_cascade({f}, 1.0), omega(f, 1.0));
  EXPECT_EQ(omega_cascade({{0.0, 0.0}, {0.0}}, 1.0), 1.0);
  EXPECT_NEAR(omega_cascade({{1.0, 0.0}, {0.0, 1.0}}, 1.0), 0.5800256583, 1e-10);
}

TEST(CascadeCollapse, SingleLayerIsExact) {
  std::mt19937_64 rng(4);
  auto layer = DenseMap::random(4, 4, 0.8, 5);
  std::vector<Vec> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(ball_point(4, 1.0, std::tanh(1.5), rng));
  auto r = verify_lemma2({layer}, pts, 1.0);
  EXPECT_EQ(r.max_deviation, 0.0);
  EXPECT_EQ(r.inputs, 100u);
}

TEST(CascadeCollapse, ChainedEqualsCollapsed) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {2u, 3u, 5u}) {
    std::vector<DenseMap> layers;
    for (std::size_t i = 0; i < n; ++i) layers.push_back(DenseMap::random(4, 4, 0.8, 100 + i));
    std::vector<Vec> pts;
    for (int i = 0; i < 100; ++i) pts.push_back(ball_point(4, 0.5, std::tanh(1.5), rng));
    EXPECT_LE(verify_lemma2(layers, pts, 0.5).max_deviation, 1e-9) << n;
  }
}

TEST(CascadeCollapse, HoldsWithNonlinearLayers) {
  std::mt19937_64 rng(6);
  std::vector<DenseMap> layers{DenseMap::random(3, 5, 0.8, 1, Activation::Tanh, true),
                               DenseMap::random(5, 4, 0.8, 2, Activation::LeakyRelu, true),
                               DenseMap::random(4, 3, 0.8, 3, Activation::None, true)};
  std::vector<Vec> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(ball_point(3, 1.0, std::tanh(1.5), rng));
  EXPECT_LE(verify_lemma2(layers, pts, 1.0).max_deviation, 1e-9);
}

TEST(CascadeCollapse, IncompatibleShapesAreAnError) {
  std::vector<DenseMap> layers{DenseMap::random(3, 4, 1.0, 1), DenseMap::random(5, 2, 1.0, 2)};
  EXPECT_THROW(verify_lemma2(layers, {{0.1, 0.1, 0.1}}, 1.0), ShapeError);
}

TEST(LinearChainBound, SingleLayerAndZeroInput) {
  auto layer = DenseMap::random(3, 3, 1.0, 7);
  auto r = verify_theorem1({layer}, {{0.3, -1.0, 2.0}, {0.0, 0.0, 0.0}}, 1.0);
  EXPECT_LE(r.max_deviation_cascade, 1e-12);
  for (double v : r.samples[1].chain) EXPECT_EQ(v, 0.0);
  for (double v : r.samples[1].cascade) EXPECT_EQ(v, 0.0);
}

TEST(LinearChainBound, NonlinearLayersAreRejected) {
  std::vector<DenseMap> layers{DenseMap::random(3, 3, 1.0, 1, Activation::Relu)};
  EXPECT_THROW(verify_theorem1(layers, {{1.0, 0.0, 0.0}}, 1.0), InvalidArgument);
  std::vector<DenseMap> biased{DenseMap::random(3, 3, 1.0, 1, Activation::None, true)};
  EXPECT_THROW(verify_theorem1(biased, {{1.0, 0.0, 0.0}}, 1.0), InvalidArgument);
}

TEST(LinearChainBound, LiteralFormOnlyForSquareLayers) {
  std::vector<DenseMap> square{DenseMap::random(3, 3, 1.0, 1), DenseMap::random(3, 3, 1.0, 2)};
  std::vector<DenseMap> rect{DenseMap::random(3, 4, 1.0, 1), DenseMap::random(4, 2, 1.0, 2)};
  EXPECT_TRUE(verify_theorem1(square, {{1.0, 0.5, 0.0}}, 1.0).max_deviation_literal.has_value());
  EXPECT_FALSE(verify_theorem1(rect, {{1.0, 0.5, 0.0}}, 1.0).max_deviation_literal.has_value());
}
