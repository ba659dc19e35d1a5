#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hypnorm/error.hpp"
#include "hypnorm/gradcheck.hpp"
#include "hypnorm/multirel.hpp"

using namespace hypnorm;
using namespace hypnorm::kg;

namespace {

KGConfig config(ScorerKind kind, std::size_t dim, bool biases = false) {
  KGConfig cfg;
  cfg.kind = kind;
  cfg.dim = dim;
  cfg.biases = biases;
  cfg.negatives = 3;
  return cfg;
}

void randomize(optim::ParameterStore& params, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (auto& p : params.all())
    for (double& v : p.value.storage()) v = n(rng);
}

}  // namespace

TEST(Mure, OneDimensionalScore) {
  KGModel m(config(ScorerKind::Mure, 1), 2, 1, 0);
  m.params().value("Rd")[0] = 2.0;
  m.params().value("E")[0] = 1.0;
  m.params().value("E")[1] = 1.0;
  m.params().value("rv")[0] = 0.5;
  EXPECT_DOUBLE_EQ(m.score({0, 0, 1}), -0.25);
}

TEST(Mure, IdentityRelationScoresZero) {
  KGModel m(config(ScorerKind::Mure, 3), 2, 1, 0);
  auto& rd = m.params().value("Rd");
  rd.fill(1.0);
  m.params().value("rv").fill(0.0);
  auto e = m.params().value("E").row(0);
  std::copy(e.begin(), e.end(), m.params().value("E").row(1).begin());
  EXPECT_EQ(m.score({0, 0, 1}), -0.0);
}

TEST(Murp, CoincidentPointsScoreZero) {
  KGModel m(config(ScorerKind::Murp, 2), 2, 1, 0);
  m.params().value("Rd").fill(1.0);
  m.params().value("rv").fill(0.0);
  auto& e = m.params().value("E");
  e.at(0, 0) = e.at(1, 0) = 0.3;
  e.at(0, 1) = e.at(1, 1) = -0.4;
  EXPECT_NEAR(m.score({0, 0, 1}), 0.0, 1e-14);
}

TEST(ScoreNorm, Examples) {
  EXPECT_EQ(score_norm(0.0, 1.0), 0.0);
  EXPECT_NEAR(score_norm(-0.25, 1.0), -0.2449186624, 1e-10);
  // tanh(100) rounds to 1 in double precision; the quoted -0.9999999959 is tanh(~9.9)
  EXPECT_NEAR(score_norm(-100.0, 1.0), -0.9999999959, 1e-8);
  EXPECT_EQ(score_norm(-100.0, 1.0), -1.0);
}

// Property: score_norm is strictly increasing, so rankings are unchanged.
TEST(ScoreNorm, RankingEqualsMure) {
  auto mure_cfg = config(ScorerKind::Mure, 6, true);
  KGModel mure(mure_cfg, 40, 3, 1);
  randomize(mure.params(), 2, 0.7);
  auto sn_cfg = mure_cfg;
  sn_cfg.kind = ScorerKind::Nmur;
  sn_cfg.mode = NmurMode::ScoreNorm;
  KGModel nmur(sn_cfg, mure.params());
  std::vector<Triple> test;
  for (std::size_t i = 0; i < 30; ++i) test.push_back({i, i % 3, (i * 7 + 3) % 40});
  TripleSet filter(test.begin(), test.end());
  auto a = rank_evaluate(test, mure, filter);
  auto b = rank_evaluate(test, nmur, filter);
  EXPECT_EQ(a.ranks, b.ranks);
  std::vector<double> s1(40), s2(40);
  mure.score_tails(0, 1, s1);
  nmur.score_tails(0, 1, s2);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j) {
      if (s1[i] < s1[j]) {
        EXPECT_LE(s2[i], s2[j]);
      }
    }
}

TEST(EmbedNorm, SidesStayBounded) {
  auto cfg = config(ScorerKind::Nmur, 4);
  cfg.mode = NmurMode::EmbedNorm;
  cfg.scale = 2.0;
  cfg.distance = Distance::L2;
  KGModel m(cfg, 5, 1, 0);
  randomize(m.params(), 3, 50.0);
  // |a - b| <= 2 s / sqrt(c), so phi >= -(2 s)^2
  for (std::size_t h = 0; h < 5; ++h)
    for (std::size_t t = 0; t < 5; ++t) EXPECT_GE(m.score({h, 0, t}), -16.0);
}

TEST(Scorers, GraphMatchesDirectScores) {
  for (auto kind : {ScorerKind::Mure, ScorerKind::Murp, ScorerKind::Nmur}) {
    for (auto mode : {NmurMode::ScoreNorm, NmurMode::EmbedNorm}) {
      auto cfg = config(kind, 5, true);
      cfg.mode = mode;
      KGModel m(cfg, 10, 2, 4);
      randomize(m.params(), 5, 0.2);
      auto heads = std::make_shared<const ad::Index>(ad::Index{0, 3, 9});
      auto rels = std::make_shared<const ad::Index>(ad::Index{1, 0, 1});
      auto tails = std::make_shared<const ad::Index>(ad::Index{2, 3, 5});
      ad::Graph g;
      auto s = m.build_scores(g, heads, rels, tails);
      ad::Bindings b;
      m.params().bind_all(b);
      auto ev = ad::forward(g, b);
      std::vector<double> row(10);
      for (std::size_t i = 0; i < 3; ++i) {
        const Triple t{(*heads)[i], (*rels)[i], (*tails)[i]};
        EXPECT_NEAR(ev.value(s)[i], m.score(t), 1e-12) << to_string(kind);
        m.score_tails(t.h, t.r, row);
        EXPECT_NEAR(row[t.t], m.score(t), 1e-12);
        m.score_heads(t.r, t.t, row);
        EXPECT_NEAR(row[t.h], m.score(t), 1e-12);
      }
    }
  }
}

TEST(Scorers, GradientsMatchFiniteDifferences) {
  for (auto kind : {ScorerKind::Mure, ScorerKind::Murp, ScorerKind::Nmur}) {
    for (auto dist : {Distance::L1, Distance::L2}) {
      auto cfg = config(kind, 4, true);
      cfg.distance = dist;
      KGModel m(cfg, 6, 2, 4);
      randomize(m.params(), 6, 0.15);
      auto heads = std::make_shared<const ad::Index>(ad::Index{0, 1, 4});
      auto rels = std::make_shared<const ad::Index>(ad::Index{1, 0, 1});
      auto tails = std::make_shared<const ad::Index>(ad::Index{2, 5, 3});
      ad::Graph g;
      auto loss = g.sum(m.build_scores(g, heads, rels, tails));
      ad::Bindings b;
      m.params().bind_all(b);
      for (const auto& r : ad::finite_diff_check_all(g, b, loss, {1e-6, 1e-4})) {
        EXPECT_TRUE(r.passed) << to_string(kind) << " " << r.input << " " << r.max_rel_error;
      }
    }
  }
}

TEST(NegativeSample, DeterministicAndCorrupting) {
  std::mt19937_64 a(9), b(9);
  Triple t{1, 0, 2};
  auto na = negative_sample(t, 5, a, 50);
  auto nb = negative_sample(t, 5, b, 50);
  EXPECT_EQ(na, nb);
  for (const auto& n : na) {
    EXPECT_EQ(n.r, 0u);
    EXPECT_TRUE(n.h == t.h || n.t == t.t);
    EXPECT_LT(n.h, 50u);
    EXPECT_LT(n.t, 50u);
  }
  std::mt19937_64 c(9);
  EXPECT_EQ(negative_sample(t, 1, c, 50).size(), 1u);
  EXPECT_THROW(negative_sample(t, 1, c, 1), InvalidArgument);
}

TEST(TrainStep, LossAtZeroScores) {
  auto cfg = config(ScorerKind::Mure, 3);
  KGModel m(cfg, 5, 1, 0);
  for (auto& p : m.params().all()) p.value.fill(0.0);
  optim::Optimizer opt({optim::Method::Adam, 0.01});
  std::mt19937_64 rng(1);
  const double loss = kg_train_step({{0, 0, 1}, {2, 0, 3}}, m, opt, rng);
  EXPECT_NEAR(loss, (1 + 3) * std::log(2.0), 1e-12);
}

TEST(TrainStep, LossDecreasesOnATinyKG) {
  auto cfg = config(ScorerKind::Nmur, 8);
  cfg.negatives = 5;
  KGModel m(cfg, 12, 2, 1);
  optim::Optimizer opt({optim::Method::Adam, 0.05});
  std::mt19937_64 rng(2);
  std::vector<Triple> batch;
  for (std::size_t i = 0; i + 1 < 12; ++i) batch.push_back({i, i % 2, i + 1});
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const double l = kg_train_step(batch, m, opt, rng);
    if (step == 0) first = l;
    last = l;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Ranking, MetricsFromRanks) {
  auto r = metrics_from_ranks({1, 2, 4});
  EXPECT_NEAR(r.mrr, 0.5833333333, 1e-10);
  EXPECT_NEAR(r.hits3, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.hits10, 1.0);
  auto ones = metrics_from_ranks({1, 1, 1});
  EXPECT_EQ(ones.mrr, 1.0);
  EXPECT_EQ(ones.hits1, 1.0);
  EXPECT_THROW(metrics_from_ranks({}), InvalidArgument);
}

TEST(Ranking, FilteredRankIgnoresOtherTrueAnswers) {
  KGModel m(config(ScorerKind::Mure, 1), 4, 1, 0);
  m.params().value("Rd")[0] = 1.0;
  m.params().value("rv")[0] = 0.0;
  auto& e = m.params().value("E");
  e[0] = 0.0;
  e[1] = 0.1;
  e[2] = 0.05;
  e[3] = 3.0;
  // tail query (0, 0, ?): entity 0 scores best, then 2, then 1
  TripleSet unfiltered{{0, 0, 1}};
  auto raw = rank_evaluate({{0, 0, 1}}, m, unfiltered);
  EXPECT_EQ(raw.ranks[0], 3u);
  TripleSet filtered{{0, 0, 1}, {0, 0, 0}, {0, 0, 2}};
  EXPECT_EQ(rank_evaluate({{0, 0, 1}}, m, filtered).ranks[0], 1u);
  EXPECT_THROW(rank_evaluate({}, m, filtered), InvalidArgument);
}

TEST(Ranking, TiesCountAgainstTheAnswer) {
  KGModel m(config(ScorerKind::Mure, 1), 3, 1, 0);
  for (auto& p : m.params().all()) p.value.fill(0.0);
  TripleSet filter{{0, 0, 1}};
  EXPECT_EQ(rank_evaluate({{0, 0, 1}}, m, filter).ranks[0], 3u);
}

TEST(Ranking, ThreadCountDoesNotChangeRanks) {
  KGModel m(config(ScorerKind::Nmur, 4, true), 30, 2, 3);
  randomize(m.params(), 4, 0.5);
  std::vector<Triple> test;
  for (std::size_t i = 0; i < 25; ++i) test.push_back({i, i % 2, 29 - i});
  TripleSet filter(test.begin(), test.end());
  EXPECT_EQ(rank_evaluate(test, m, filter, 1).ranks, rank_evaluate(test, m, filter, 4).ranks);
}
