#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hypnorm/data.hpp"
#include "hypnorm/graph.hpp"
#include "hypnorm/optim.hpp"
#include "hypnorm/parameters.hpp"

namespace hypnorm::kg {

using data::Triple;

enum class ScorerKind { Mure, Murp, Nmur };
enum class NmurMode { ScoreNorm, EmbedNorm };
enum class Distance { L1, L2 };

ScorerKind parse_scorer(const std::string& text);
std::string to_string(ScorerKind k);
NmurMode parse_nmur_mode(const std::string& text);
std::string to_string(NmurMode m);
Distance parse_distance(const std::string& text);

struct KGConfig {
  ScorerKind kind = ScorerKind::Nmur;
  NmurMode mode = NmurMode::EmbedNorm;
  std::size_t dim = 40;
  double curvature = 1.0;
  /// Output scale of the normalization (NMuR only).
  double scale = 1.0;
  bool biases = true;
  Distance distance = Distance::L1;
  std::size_t negatives = 50;
  std::size_t batch = 128;

  void validate() const;
};

/// s * tanh(sqrt(c) phi) / sqrt(c), i.e. s * sign(phi) tanh(sqrt(c)|phi|)/sqrt(c).
double score_norm(double phi, double c, double s = 1.0);

/// Entity table "E", relation translations "rv", relation diagonals "Rd", and
/// optional per-entity biases "bh", "bt". MuRP tags E and rv as ball points.
class KGModel {
 public:
  KGModel(KGConfig cfg, std::size_t num_entities, std::size_t num_relations, std::uint64_t seed);
  /// Reuses existing parameters under a (possibly different) scorer.
  KGModel(KGConfig cfg, optim::ParameterStore params);

  const KGConfig& config() const noexcept { return cfg_; }
  optim::ParameterStore& params() noexcept { return params_; }
  const optim::ParameterStore& params() const noexcept { return params_; }
  std::size_t num_entities() const { return params_.value("E").rows(); }
  std::size_t num_relations() const { return params_.value("Rd").rows(); }

  /// Scores [m, 1] for the index triples (heads[i], rels[i], tails[i]).
  ad::NodeId build_scores(ad::Graph& g, const ad::IndexPtr& heads, const ad::IndexPtr& rels,
                          const ad::IndexPtr& tails) const;

  double score(const Triple& t) const;
  /// out[e] = score(h, r, e) for every entity e.
  void score_tails(std::size_t h, std::size_t r, std::span<double> out) const;
  /// out[e] = score(e, r, t) for every entity e.
  void score_heads(std::size_t r, std::size_t t, std::span<double> out) const;

  /// Keys whose order equals the exact order of the scores. They are the
  /// scores themselves, except under score_norm where the pre-compression
  /// MuRE score is used: the compression is strictly increasing but its
  /// double-precision tanh saturates into ties.
  void rank_keys_tails(std::size_t h, std::size_t r, std::span<double> out) const;
  void rank_keys_heads(std::size_t r, std::size_t t, std::span<double> out) const;

 private:
  void init(std::size_t num_entities, std::size_t num_relations, std::uint64_t seed);
  ad::NodeId param(ad::Graph& g, const std::string& name) const;
  /// Transformed head and translated tail for the raw scorers.
  std::vector<double> head_side(std::size_t h, std::size_t r) const;
  std::vector<double> tail_side(std::size_t r, std::size_t t) const;
  double finish(std::span<const double> a, std::span<const double> b, std::size_t h, std::size_t t, bool key) const;
  void fill_tails(std::size_t h, std::size_t r, std::span<double> out, bool key) const;
  void fill_heads(std::size_t r, std::size_t t, std::span<double> out, bool key) const;

  KGConfig cfg_;
  optim::ParameterStore params_;
};

/// k corrupted copies: head or tail (fair coin) replaced by a uniform entity;
/// a corruption equal to the original is redrawn once, then kept.
std::vector<Triple> negative_sample(const Triple& triple, std::size_t k, std::mt19937_64& rng,
                                    std::size_t num_entities);

/// Mean over positives of -log sigmoid(pos) - sum log sigmoid(-neg), then one optimizer step.
double kg_train_step(const std::vector<Triple>& batch, KGModel& model, optim::Optimizer& opt, std::mt19937_64& rng);

struct RankReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::vector<std::size_t> ranks;
};

RankReport metrics_from_ranks(std::vector<std::size_t> ranks);

using TripleSet = std::unordered_set<Triple, data::TripleHash>;

/// Filtered ranking of both the true tail and the true head of every test
/// triple; ties count against the true answer. `threads` = 0 picks the
/// hardware concurrency. Ranks are stored in test order (tail, head).
RankReport rank_evaluate(const std::vector<Triple>& test, const KGModel& model, const TripleSet& filter,
                         std::size_t threads = 1);

}  // namespace hypnorm::kg
