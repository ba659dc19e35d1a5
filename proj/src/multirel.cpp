#include "hypnorm/multirel.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "hypnorm/error.hpp"
#include "hypnorm/geometry.hpp"
#include "hypnorm/geometry_graph.hpp"
#include "hypnorm/hypnorm.hpp"
#include "hypnorm/scalar_math.hpp"

namespace hypnorm::kg {

namespace gn = geo::nodes;

ScorerKind parse_scorer(const std::string& text) {
  if (text == "mure") return ScorerKind::Mure;
  if (text == "murp") return ScorerKind::Murp;
  if (text == "nmur") return ScorerKind::Nmur;
  throw InvalidArgument("unknown KG model '" + text + "' (mure, murp, nmur)");
}

std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::Mure: return "mure";
    case ScorerKind::Murp: return "murp";
    case ScorerKind::Nmur: return "nmur";
  }
  return "mure";
}

NmurMode parse_nmur_mode(const std::string& text) {
  if (text == "score_norm" || text == "score-norm") return NmurMode::ScoreNorm;
  if (text == "embed_norm" || text == "embed-norm") return NmurMode::EmbedNorm;
  throw InvalidArgument("unknown NMuR mode '" + text + "' (score_norm, embed_norm)");
}

std::string to_string(NmurMode m) { return m == NmurMode::ScoreNorm ? "score_norm" : "embed_norm"; }

Distance parse_distance(const std::string& text) {
  if (text == "l1" || text == "L1") return Distance::L1;
  if (text == "l2" || text == "L2") return Distance::L2;
  throw InvalidArgument("unknown distance '" + text + "' (l1, l2)");
}

void KGConfig::validate() const {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  if (!(curvature > 0.0)) throw InvalidArgument("curvature must be positive");
  if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
  if (negatives == 0) throw InvalidArgument("negative count must be at least 1");
  if (batch == 0) throw InvalidArgument("batch size must be positive");
}

double score_norm(double phi, double c, double s) {
  const double sc = std::sqrt(c);
  const double mag = std::tanh(sc * std::fabs(phi)) / sc;
  return s * (phi < 0 ? -mag : mag);
}

KGModel::KGModel(KGConfig cfg, std::size_t num_entities, std::size_t num_relations, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (num_entities < 2 || num_relations < 1) throw InvalidArgument("KG needs at least 2 entities and 1 relation");
  init(num_entities, num_relations, seed);
}

KGModel::KGModel(KGConfig cfg, optim::ParameterStore params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  for (const char* name : {"E", "rv", "Rd"}) {
    if (!params_.contains(name)) throw InvalidArgument(std::string("KG parameters lack '") + name + "'");
  }
  if (cfg_.biases && (!params_.contains("bh") || !params_.contains("bt"))) {
    throw InvalidArgument("KG parameters lack biases");
  }
  if (params_.value("E").cols() != cfg_.dim) throw InvalidArgument("KG parameter width differs from dim");
}

void KGModel::init(std::size_t ne, std::size_t nr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> small(0.0, 1e-3);
  std::uniform_real_distribution<double> diag(-1.0, 1.0);
  const bool ball = cfg_.kind == ScorerKind::Murp;
  const auto tag = ball ? optim::ManifoldTag::ball(cfg_.curvature) : optim::ManifoldTag::euclidean();

  ad::Tensor e({ne, cfg_.dim});
  for (double& v : e.values()) v = small(rng);
  ad::Tensor rv({nr, cfg_.dim});
  for (double& v : rv.values()) v = small(rng);
  ad::Tensor rd({nr, cfg_.dim});
  for (double& v : rd.values()) v = diag(rng);
  params_.add("E", std::move(e), tag);
  params_.add("rv", std::move(rv), tag);
  params_.add("Rd", std::move(rd));
  if (cfg_.biases) {
    params_.add("bh", ad::Tensor({ne, 1}));
    params_.add("bt", ad::Tensor({ne, 1}));
  }
}

ad::NodeId KGModel::param(ad::Graph& g, const std::string& name) const {
  if (auto id = g.find_input(name)) return *id;
  return g.input(name, params_.value(name).shape(), true);
}

ad::NodeId KGModel::build_scores(ad::Graph& g, const ad::IndexPtr& heads, const ad::IndexPtr& rels,
                                 const ad::IndexPtr& tails) const {
  const double c = cfg_.curvature;
  const ad::NodeId E = param(g, "E");
  const ad::NodeId eh = g.gather_rows(E, heads);
  const ad::NodeId et = g.gather_rows(E, tails);
  const ad::NodeId rd = g.gather_rows(param(g, "Rd"), rels);
  const ad::NodeId rv = g.gather_rows(param(g, "rv"), rels);

  ad::NodeId dist;
  if (cfg_.kind == ScorerKind::Murp) {
    const ad::NodeId a = gn::project(g, gn::diag_matvec(g, eh, rd, c), c);
    const ad::NodeId b = gn::project(g, gn::mobius_add(g, et, rv, c), c);
    dist = gn::distance(g, a, b, c);
  } else {
    ad::NodeId a = g.mul(rd, eh);
    ad::NodeId b = g.add(et, rv);
    if (cfg_.kind == ScorerKind::Nmur && cfg_.mode == NmurMode::EmbedNorm) {
      const norm::NormConfig nc{c, cfg_.scale, norm::Placement::Final};
      a = norm::apply_norm(g, a, nc);
      b = norm::apply_norm(g, b, nc);
    }
    const ad::NodeId diff = g.sub(a, b);
    dist = cfg_.distance == Distance::L1 ? g.norm_l1(diff, ad::Axis::Rows) : g.norm_l2(diff, ad::Axis::Rows);
  }
  ad::NodeId phi = g.neg(g.square(dist));
  if (cfg_.biases) {
    phi = g.add(phi, g.add(g.gather_rows(param(g, "bh"), heads), g.gather_rows(param(g, "bt"), tails)));
  }
  if (cfg_.kind == ScorerKind::Nmur && cfg_.mode == NmurMode::ScoreNorm) {
    const double sc = std::sqrt(c);
    phi = g.scale(g.tanh(g.scale(phi, sc)), cfg_.scale / sc);
  }
  return phi;
}

std::vector<double> KGModel::head_side(std::size_t h, std::size_t r) const {
  auto e = params_.value("E").row(h);
  auto rd = params_.value("Rd").row(r);
  if (cfg_.kind == ScorerKind::Murp) {
    const geo::Curvature c(cfg_.curvature);
    std::vector<double> lg = geo::log_map_origin(geo::PoincarePoint::projected({e.begin(), e.end()}, c));
    for (std::size_t i = 0; i < lg.size(); ++i) lg[i] *= rd[i];
    return geo::exp_map_origin(lg, c).coords();
  }
  std::vector<double> a(e.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rd[i] * e[i];
  if (cfg_.kind == ScorerKind::Nmur && cfg_.mode == NmurMode::EmbedNorm) {
    a = norm::apply_norm(a, {cfg_.curvature, cfg_.scale, norm::Placement::Final});
  }
  return a;
}

std::vector<double> KGModel::tail_side(std::size_t r, std::size_t t) const {
  auto e = params_.value("E").row(t);
  auto rv = params_.value("rv").row(r);
  if (cfg_.kind == ScorerKind::Murp) {
    const geo::Curvature c(cfg_.curvature);
    return geo::mobius_add(geo::PoincarePoint::projected({e.begin(), e.end()}, c),
                           geo::PoincarePoint::projected({rv.begin(), rv.end()}, c))
        .coords();
  }
  std::vector<double> b(e.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = e[i] + rv[i];
  if (cfg_.kind == ScorerKind::Nmur && cfg_.mode == NmurMode::EmbedNorm) {
    b = norm::apply_norm(b, {cfg_.curvature, cfg_.scale, norm::Placement::Final});
  }
  return b;
}

double KGModel::finish(std::span<const double> a, std::span<const double> b, std::size_t h, std::size_t t,
                       bool key) const {
  double dist = 0.0;
  if (cfg_.kind == ScorerKind::Murp) {
    const geo::Curvature c(cfg_.curvature);
    dist = geo::hyperbolic_distance(geo::PoincarePoint::projected({a.begin(), a.end()}, c),
                                    geo::PoincarePoint::projected({b.begin(), b.end()}, c));
  } else if (cfg_.distance == Distance::L1) {
    for (std::size_t i = 0; i < a.size(); ++i) dist += std::fabs(a[i] - b[i]);
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
    dist = std::sqrt(dist);
  }
  double phi = -dist * dist;
  if (cfg_.biases) phi += params_.value("bh")[h] + params_.value("bt")[t];
  if (!key && cfg_.kind == ScorerKind::Nmur && cfg_.mode == NmurMode::ScoreNorm) {
    phi = score_norm(phi, cfg_.curvature, cfg_.scale);
  }
  return phi;
}

double KGModel::score(const Triple& t) const {
  if (t.h >= num_entities() || t.t >= num_entities() || t.r >= num_relations()) {
    throw InvalidArgument("triple id out of range");
  }
  return finish(head_side(t.h, t.r), tail_side(t.r, t.t), t.h, t.t, false);
}

void KGModel::fill_tails(std::size_t h, std::size_t r, std::span<double> out, bool key) const {
  if (out.size() != num_entities()) throw ShapeError("score_tails", "output must hold one score per entity");
  const auto a = head_side(h, r);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = finish(a, tail_side(r, e), h, e, key);
}

void KGModel::fill_heads(std::size_t r, std::size_t t, std::span<double> out, bool key) const {
  if (out.size() != num_entities()) throw ShapeError("score_heads", "output must hold one score per entity");
  const auto b = tail_side(r, t);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = finish(head_side(e, r), b, e, t, key);
}

void KGModel::score_tails(std::size_t h, std::size_t r, std::span<double> out) const { fill_tails(h, r, out, false); }
void KGModel::score_heads(std::size_t r, std::size_t t, std::span<double> out) const { fill_heads(r, t, out, false); }
void KGModel::rank_keys_tails(std::size_t h, std::size_t r, std::span<double> out) const { fill_tails(h, r, out, true); }
void KGModel::rank_keys_heads(std::size_t r, std::size_t t, std::span<double> out) const { fill_heads(r, t, out, true); }

std::vector<Triple> negative_sample(const Triple& triple, std::size_t k, std::mt19937_64& rng,
                                    std::size_t num_entities) {
  if (k == 0) throw InvalidArgument("negative_sample needs k >= 1");
  if (num_entities < 2) throw InvalidArgument("negative_sample needs at least 2 entities");
  std::uniform_int_distribution<std::size_t> ent(0, num_entities - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<Triple> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Triple c = triple;
    const bool head = coin(rng);
    (head ? c.h : c.t) = ent(rng);
    if (c == triple) (head ? c.h : c.t) = ent(rng);
    out.push_back(c);
  }
  return out;
}

double kg_train_step(const std::vector<Triple>& batch, KGModel& model, optim::Optimizer& opt, std::mt19937_64& rng) {
  if (batch.empty()) throw InvalidArgument("kg_train_step needs a non-empty batch");
  const std::size_t k = model.config().negatives;
  auto heads = std::make_shared<ad::Index>();
  auto rels = std::make_shared<ad::Index>();
  auto tails = std::make_shared<ad::Index>();
  auto push = [&](const Triple& t) {
    heads->push_back(t.h);
    rels->push_back(t.r);
    tails->push_back(t.t);
  };
  for (const auto& t : batch) push(t);
  for (const auto& t : batch) {
    for (const auto& n : negative_sample(t, k, rng, model.num_entities())) push(n);
  }
  auto pos_idx = std::make_shared<ad::Index>();
  auto neg_idx = std::make_shared<ad::Index>();
  for (std::size_t i = 0; i < batch.size(); ++i) pos_idx->push_back(i);
  for (std::size_t i = batch.size(); i < heads->size(); ++i) neg_idx->push_back(i);

  ad::Graph g;
  const ad::NodeId scores = model.build_scores(g, heads, rels, tails);
  const ad::NodeId pos = g.log_sigmoid(g.gather_rows(scores, pos_idx));
  const ad::NodeId neg = g.log_sigmoid(g.neg(g.gather_rows(scores, neg_idx)));
  const ad::NodeId loss = g.scale(g.add(g.sum(pos), g.sum(neg)), -1.0 / static_cast<double>(batch.size()));

  ad::Bindings b;
  model.params().bind_all(b);
  const ad::Evaluation ev = ad::forward(g, b);
  const double value = ev.value(loss).item();
  if (!std::isfinite(value)) throw NumericError("kg_train_step", "non-finite loss");
  model.params().zero_grad();
  model.params().accumulate(ad::backward(g, ev, loss));
  opt.step(model.params());
  return value;
}

RankReport metrics_from_ranks(std::vector<std::size_t> ranks) {
  if (ranks.empty()) throw InvalidArgument("no ranks to summarize");
  RankReport r;
  for (std::size_t k : ranks) {
    if (k == 0) throw InvalidArgument("ranks are 1-based");
    r.mrr += 1.0 / static_cast<double>(k);
    r.hits1 += k <= 1;
    r.hits3 += k <= 3;
    r.hits10 += k <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  r.mrr /= n;
  r.hits1 /= n;
  r.hits3 /= n;
  r.hits10 /= n;
  r.ranks = std::move(ranks);
  return r;
}

namespace {

std::size_t filtered_rank(std::span<const double> keys, std::size_t truth, const std::vector<char>& known) {
  const double target = keys[truth];
  std::size_t rank = 1;
  for (std::size_t e = 0; e < keys.size(); ++e) {
    if (e == truth || known[e]) continue;
    if (keys[e] >= target) ++rank;
  }
  return rank;
}

}  // namespace

RankReport rank_evaluate(const std::vector<Triple>& test, const KGModel& model, const TripleSet& filter,
                         std::size_t threads) {
  if (test.empty()) throw InvalidArgument("rank_evaluate: empty test set");
  const std::size_t ne = model.num_entities();

  std::unordered_map<std::uint64_t, std::vector<std::size_t>> tails_of, heads_of;
  auto key = [&](std::size_t a, std::size_t r) { return static_cast<std::uint64_t>(a) * 1000003ULL + r; };
  for (const auto& t : filter) {
    tails_of[key(t.h, t.r)].push_back(t.t);
    heads_of[key(t.t, t.r)].push_back(t.h);
  }

  std::vector<std::size_t> ranks(2 * test.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> keys(ne);
    std::vector<char> known(ne, 0);
    auto mark = [&](const std::vector<std::size_t>* ids, char v) {
      if (!ids) return;
      for (std::size_t e : *ids) known[e] = v;
    };
    for (std::size_t i = begin; i < end; ++i) {
      const Triple& t = test[i];
      model.rank_keys_tails(t.h, t.r, keys);
      auto it = tails_of.find(key(t.h, t.r));
      const std::vector<std::size_t>* ids = it == tails_of.end() ? nullptr : &it->second;
      mark(ids, 1);
      ranks[2 * i] = filtered_rank(keys, t.t, known);
      mark(ids, 0);

      model.rank_keys_heads(t.r, t.t, keys);
      auto jt = heads_of.find(key(t.t, t.r));
      ids = jt == heads_of.end() ? nullptr : &jt->second;
      mark(ids, 1);
      ranks[2 * i + 1] = filtered_rank(keys, t.h, known);
      mark(ids, 0);
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, test.size());
  if (threads <= 1) {
    work(0, test.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (test.size() + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
      const std::size_t b = w * chunk, e = std::min(test.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return metrics_from_ranks(std::move(ranks));
}

}  // namespace hypnorm::kg
