#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypnorm/tensor.hpp"

namespace hypnorm::data {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  bool operator==(const Edge& o) const noexcept { return u == o.u && v == o.v; }
  bool operator<(const Edge& o) const noexcept { return u != o.u ? u < o.u : v < o.v; }
};

/// Undirected attributed graph. Edges are stored once with u < v, sorted;
/// self-loops are dropped on load (propagation adds them back).
struct NodeGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  ad::Tensor features;
  std::vector<int> labels;
  std::vector<char> train;
  std::vector<char> val;
  std::vector<char> test;

  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t num_classes() const;
  std::vector<std::size_t> indices(const std::vector<char>& mask) const;
  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
  bool operator==(const NodeGraph& o) const;
};

/// Sorts, orients (u < v) and deduplicates; drops self-loops.
std::vector<Edge> canonical_edges(std::vector<Edge> edges);

/// Reads edges.tsv, features.tsv, labels.tsv and split.tsv from `dir`.
NodeGraph load_node_graph(const std::filesystem::path& dir);
void save_node_graph(const NodeGraph& g, const std::filesystem::path& dir);

struct Triple {
  std::size_t h = 0;
  std::size_t r = 0;
  std::size_t t = 0;
  bool operator==(const Triple& o) const noexcept { return h == o.h && r == o.r && t == o.t; }
  bool operator<(const Triple& o) const noexcept {
    if (h != o.h) return h < o.h;
    if (r != o.r) return r < o.r;
    return t < o.t;
  }
};

struct TripleHash {
  std::size_t operator()(const Triple& x) const noexcept {
    std::uint64_t k = x.h * 0x9E3779B97F4A7C15ULL ^ (x.r + 0x632BE59BD9B4E019ULL) * 0xBF58476D1CE4E5B9ULL;
    return static_cast<std::size_t>(k ^ (x.t * 0x94D049BB133111EBULL));
  }
};

struct KGDataset {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  std::size_t num_entities() const noexcept { return entities.size(); }
  std::size_t num_relations() const noexcept { return relations.size(); }
  /// Throws InvalidArgument when a test triple also appears in train.
  void check_leakage() const;
};

/// Reads train.tsv, valid.tsv and test.tsv (head TAB relation TAB tail).
KGDataset load_kg(const std::filesystem::path& dir);
void save_kg(const KGDataset& kg, const std::filesystem::path& dir);

/// Complete b-ary tree of depth d in breadth-first order. Labels are depths;
/// features are the one-hot node id truncated or padded to `feature_dim`
/// plus N(0, 0.01^2) noise.
NodeGraph gen_balanced_tree(std::size_t b, std::size_t d, std::size_t feature_dim, std::uint64_t seed);

struct CitationConfig {
  std::size_t nodes = 2708;
  std::size_t edges = 5429;
  std::size_t feature_dim = 1433;
  std::size_t classes = 7;
  std::size_t words_per_node = 18;
  double homophily = 0.8;
  double topical = 0.7;
};

/// Class-structured random graph with sparse binary bag-of-words features,
/// sized like a small citation network. Uses the standard 20-per-class split.
NodeGraph gen_citation_like(const CitationConfig& cfg, std::uint64_t seed);

/// Knowledge graph over a complete b-ary tree of depth d: hypernym (child to
/// parent), grandparent, and a seeded subset of sibling links, split 80/10/10.
KGDataset gen_tree_kg(std::size_t b, std::size_t d, double sibling_rate, std::uint64_t seed);

/// Keeps a seeded random subset of at most `max_triples` training triples and
/// proportional valid/test subsets; vocabularies are kept whole.
KGDataset subsample_kg(const KGDataset& kg, std::size_t max_triples, std::uint64_t seed);

/// Stratified node split. Per class, shuffled members are cut at
/// round(cumulative fraction * size), with at least one train node whenever
/// the train fraction is positive. When `min_per_split` > 0 every split with a
/// positive fraction must receive that many members of every class.
void make_splits(NodeGraph& g, const std::array<double, 3>& fractions, std::uint64_t seed,
                 std::size_t min_per_split = 0);

/// Per class `per_class` train nodes, then `val` and `test` nodes drawn from the rest.
void make_planetoid_splits(NodeGraph& g, std::size_t per_class, std::size_t val, std::size_t test,
                           std::uint64_t seed);

struct EdgeSplit {
  std::vector<Edge> train_pos;
  std::vector<Edge> val_pos;
  std::vector<Edge> test_pos;
  std::vector<Edge> val_neg;
  std::vector<Edge> test_neg;
};

/// Positive edges shuffled and cut by fractions (default 85/5/10); validation
/// and test negatives are distinct uniform non-edges, one per positive.
EdgeSplit make_edge_splits(const NodeGraph& g, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Uniform non-edges of `g` (not in `exclude` either), `count` of them.
std::vector<Edge> sample_non_edges(const NodeGraph& g, std::size_t count, std::uint64_t seed,
                                   const std::vector<Edge>& exclude = {});

}  // namespace hypnorm::data
