#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/gradcheck.hpp"
#include "hypnorm/graph.hpp"

using namespace hypnorm;
using namespace hypnorm::ad;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t({r, c});
  for (double& v : t.storage()) v = n(rng);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndValueCount) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), 6u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, SparseMatrixSortsAndSumsDuplicates) {
  SparseMatrix m(2, 2, {{1, 0, 1.0}, {0, 1, 2.0}, {1, 0, 0.5}});
  ASSERT_EQ(m.nnz(), 2u);
  EXPECT_EQ(m.entries()[0].row, 0u);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.transposed().at(0, 1), 1.5);
}

TEST(Forward, TanhOfZero) {
  Graph g;
  auto x = g.input("x", {1});
  auto y = g.tanh(x);
  Tensor xv = Tensor::vector({0.0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_EQ(ev.value(y)[0], 0.0);
}

TEST(Forward, SumOfSquares) {
  Graph g;
  auto x = g.input("x", {3}, true);
  auto s = g.sum(g.mul(x, x));
  Tensor xv = Tensor::vector({1, 2, 3});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_DOUBLE_EQ(ev.value(s).item(), 14.0);
  auto grads = backward(g, ev, s);
  ASSERT_EQ(grads.count("x"), 1u);
  EXPECT_DOUBLE_EQ(grads["x"][0], 2.0);
  EXPECT_DOUBLE_EQ(grads["x"][1], 4.0);
  EXPECT_DOUBLE_EQ(grads["x"][2], 6.0);
}

TEST(Forward, IdentityMatmul) {
  Graph g;
  auto i = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto x = g.input("x", {2, 1});
  auto y = g.matmul(i, x);
  Tensor xv = Tensor::matrix(2, 1, {3, 7});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_EQ(ev.value(y)[0], 3.0);
  EXPECT_EQ(ev.value(y)[1], 7.0);
}

TEST(Backward, TanhSlopeAtZero) {
  Graph g;
  auto x = g.input("x", {1}, true);
  auto y = g.sum(g.tanh(x));
  Tensor xv = Tensor::vector({0.0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_DOUBLE_EQ(backward(g, ev, y)["x"][0], 1.0);
}

TEST(Backward, NormGradient) {
  Graph g;
  auto x = g.input("x", {2}, true);
  auto n = g.norm_l2(x);
  Tensor xv = Tensor::vector({3, 4});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_DOUBLE_EQ(ev.value(n).item(), 5.0);
  auto gx = backward(g, ev, n)["x"];
  EXPECT_NEAR(gx[0], 0.6, 1e-15);
  EXPECT_NEAR(gx[1], 0.8, 1e-15);
}

TEST(Backward, NormOfZeroHasZeroGradient) {
  Graph g;
  auto x = g.input("x", {3}, true);
  auto n = g.norm_l2(x);
  Tensor xv = Tensor::vector({0, 0, 0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_EQ(ev.value(n).item(), 0.0);
  auto grads = backward(g, ev, n);
  for (double v : grads["x"].values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, FanOutAccumulates) {
  Graph g;
  auto x = g.input("x", {1}, true);
  auto y = g.sum(g.add(g.scale(x, 3.0), g.mul(x, x)));
  Tensor xv = Tensor::vector({2.0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_DOUBLE_EQ(backward(g, ev, y)["x"][0], 7.0);
}

TEST(Backward, Errors) {
  Graph g;
  auto x = g.input("x", {2}, true);
  auto y = g.tanh(x);
  Evaluation empty;
  EXPECT_THROW(backward(g, empty, y), InvalidArgument);
  Tensor xv = Tensor::vector({1, 2});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_THROW(backward(g, ev, y), ShapeError);
}

TEST(Forward, ShapeErrorsNameTheNode) {
  Graph g;
  auto a = g.input("a", {2, 3});
  auto b = g.input("b", {2, 3});
  EXPECT_THROW(g.matmul(a, b), ShapeError);
  g.add(a, b);
  Tensor wrong({3, 2});
  Tensor ok({2, 3});
  try {
    forward(g, Bindings().bind("a", wrong).bind("b", ok));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("a"), std::string::npos);
  }
  EXPECT_THROW(forward(g, Bindings().bind("a", ok)), ShapeError);
}

TEST(Forward, NonFiniteOutputIsNumericError) {
  Graph g;
  auto x = g.input("x", {1});
  g.log(x);
  Tensor xv = Tensor::vector({-1.0});
  EXPECT_THROW(forward(g, Bindings().bind("x", xv)), NumericError);
}

TEST(Forward, ArtanhClampsAtTheBoundary) {
  Graph g;
  auto x = g.input("x", {2});
  auto y = g.artanh(x);
  Tensor xv = Tensor::vector({1.0, -1.0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_TRUE(ev.value(y).all_finite());
  EXPECT_NEAR(ev.value(y)[0], std::atanh(1.0 - 1e-15), 1e-9);
}

TEST(GradCheck, SquareAtThree) {
  Graph g;
  auto x = g.input("x", {1}, true);
  auto y = g.sum(g.square(x));
  Tensor xv = Tensor::vector({3.0});
  GradCheckOptions opt;
  opt.epsilon = 1e-5;
  opt.tolerance = 1e-6;
  auto r = finite_diff_check(g, Bindings().bind("x", xv), y, "x", opt);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.coords[0].analytic, 6.0, 1e-12);
  EXPECT_NEAR(r.coords[0].numeric, 6.0, 6e-6);
}

TEST(GradCheck, TanhAtZero) {
  Graph g;
  auto x = g.input("x", {1}, true);
  auto y = g.sum(g.tanh(x));
  Tensor xv = Tensor::vector({0.0});
  auto r = finite_diff_check(g, Bindings().bind("x", xv), y, "x", {1e-6, 1e-6});
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.coords[0].numeric, 1.0, 1e-6);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // relu at its kink: the one-sided analytic value disagrees with the central difference
  Graph g;
  auto x = g.input("x", {1}, true);
  auto y = g.sum(g.relu(x));
  Tensor xv = Tensor::vector({0.0});
  auto r = finite_diff_check(g, Bindings().bind("x", xv), y, "x");
  EXPECT_FALSE(r.passed);
}

TEST(GradCheck, NonFinitePerturbationReportsCoordinate) {
  Graph g;
  auto x = g.input("x", {2}, true);
  auto y = g.sum(g.log(x));
  Tensor xv = Tensor::vector({1.0, 1e-9});
  auto r = finite_diff_check(g, Bindings().bind("x", xv), y, "x", {1e-6, 1e-5});
  EXPECT_FALSE(r.passed);
  ASSERT_TRUE(r.failed_index.has_value());
  EXPECT_EQ(*r.failed_index, 1u);
}

// Property: every smooth primitive agrees with central differences at random points.
TEST(GradCheck, SmoothPrimitivesAtRandomPoints) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    auto a = g.input("a", {3, 4}, true);
    auto b = g.input("b", {4, 2}, true);
    auto pos = g.input("p", {3, 4}, true);
    auto h = g.matmul(g.tanh(a), b);
    auto sm = g.softmax_rows(h);
    auto t1 = g.sum(g.mul(sm, g.sigmoid(h)));
    auto t2 = g.mean(g.log(pos));
    auto t3 = g.sum(g.sqrt(pos));
    auto t4 = g.sum(g.exp(g.scale(a, 0.3)));
    auto t5 = g.sum(g.norm_l2(a, Axis::Rows));
    auto t6 = g.sum(g.artanh(g.scale(g.tanh(a), 0.9)));
    auto t7 = g.sum(g.log_sigmoid(h));
    auto t8 = g.sum(g.concat_cols({h, g.div(h, g.shift(g.square(h), 1.0))}));
    auto loss = g.add(g.add(g.add(t1, t2), g.add(t3, t4)), g.add(g.add(t5, t6), g.add(t7, t8)));
    Tensor av = random_matrix(3, 4, rng), bv = random_matrix(4, 2, rng), pv({3, 4});
    for (double& v : pv.storage()) v = u(rng);
    Bindings bind;
    bind.bind("a", av).bind("b", bv).bind("p", pv);
    for (const auto& r : finite_diff_check_all(g, bind, loss, {1e-6, 1e-5})) {
      EXPECT_TRUE(r.passed) << r.input << " max rel " << r.max_rel_error;
    }
  }
}

TEST(GradCheck, SparseAndIndexOpsAtRandomPoints) {
  std::mt19937_64 rng(5);
  auto adj = std::make_shared<const SparseMatrix>(
      4, 4, std::vector<SparseEntry>{{0, 0, 0.5}, {0, 1, 0.5}, {1, 2, 1.0}, {2, 3, 0.3}, {3, 0, 0.7}, {3, 3, 0.2}});
  auto idx = std::make_shared<const Index>(Index{0, 2, 2, 3, 1});
  auto seg = std::make_shared<const Index>(Index{0, 0, 1, 1, 1});
  Graph g;
  auto x = g.input("x", {4, 3}, true);
  auto h = g.spmm(adj, x);
  auto gathered = g.gather_rows(h, idx);
  auto att = g.segment_softmax(g.row_sum(gathered), seg, 2);
  auto back = g.scatter_add_rows(g.mul(gathered, att), seg, 2);
  auto normed = g.hyp_norm_rows(back, 0.7, 2.0);
  auto logm = g.log_map0_rows(g.hyp_norm_rows(h, 1.3, 1.0), 1.3);
  auto loss = g.add(g.sum(g.square(normed)), g.sum(g.mul(logm, logm)));
  for (int trial = 0; trial < 20; ++trial) {
    Tensor xv = random_matrix(4, 3, rng);
    auto r = finite_diff_check(g, Bindings().bind("x", xv), loss, "x", {1e-6, 1e-5});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
}

TEST(GradCheck, CrossEntropy) {
  std::mt19937_64 rng(9);
  auto labels = std::make_shared<const Index>(Index{2, 0, 1});
  Graph g;
  auto x = g.input("x", {3, 3}, true);
  auto loss = g.softmax_cross_entropy(x, labels);
  Tensor xv = random_matrix(3, 3, rng);
  EXPECT_TRUE(finite_diff_check(g, Bindings().bind("x", xv), loss, "x").passed);
}

// Property: softmax rows are a probability distribution.
TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(3);
  Graph g;
  auto x = g.input("x", {50, 7});
  auto y = g.softmax_rows(x);
  Tensor xv = random_matrix(50, 7, rng, 30.0);
  auto ev = forward(g, Bindings().bind("x", xv));
  const Tensor& s = ev.value(y);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double total = 0.0;
    for (double v : s.row(r)) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Graph g;
  auto x = g.input("x", {1, 3});
  auto y = g.softmax_rows(x);
  Tensor xv = Tensor::matrix({{1000.0, 1000.0, -1000.0}});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_NEAR(ev.value(y)[0], 0.5, 1e-15);
  EXPECT_EQ(ev.value(y)[2], 0.0);
}

TEST(Dropout, PreservesExpectation) {
  Graph g;
  auto x = g.input("x", {1, 4});
  auto y = g.dropout(x, 0.6);
  Tensor xv = Tensor::matrix({{1.0, -2.0, 0.5, 3.0}});
  Bindings b;
  b.bind("x", xv);
  std::vector<double> mean(4, 0.0);
  const int trials = 100000;
  for (int s = 0; s < trials; ++s) {
    auto ev = forward(g, b, {true, static_cast<std::uint64_t>(s)});
    for (int i = 0; i < 4; ++i) mean[i] += ev.value(y)[i];
  }
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(mean[i] / trials, xv[i], 0.01 * std::fabs(xv[i]));
  auto eval = forward(g, b, {false, 0});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(eval.value(y)[i], xv[i]);
}

TEST(Determinism, IdenticalSeedsGiveIdenticalBits) {
  std::mt19937_64 rng(1);
  Graph g;
  auto x = g.input("x", {8, 8});
  auto y = g.softmax_rows(g.dropout(g.tanh(x), 0.5));
  Tensor xv = random_matrix(8, 8, rng);
  Bindings b;
  b.bind("x", xv);
  auto e1 = forward(g, b, {true, 42});
  auto e2 = forward(g, b, {true, 42});
  auto e3 = forward(g, b, {true, 43});
  EXPECT_EQ(e1.value(y).storage(), e2.value(y).storage());
  EXPECT_NE(e1.value(y).storage(), e3.value(y).storage());
}

TEST(ClampMin, PassesGradientAboveTheFloor) {
  Graph g;
  auto x = g.input("x", {2}, true);
  auto y = g.sum(g.clamp_min(x, 0.5));
  Tensor xv = Tensor::vector({0.1, 2.0});
  auto ev = forward(g, Bindings().bind("x", xv));
  EXPECT_DOUBLE_EQ(ev.value(y).item(), 2.5);
  auto gx = backward(g, ev, y)["x"];
  EXPECT_EQ(gx[0], 0.0);
  EXPECT_EQ(gx[1], 1.0);
}
