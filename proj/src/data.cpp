#include "hypnorm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "hypnorm/error.hpp"

namespace hypnorm::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Calls fn(fields, line_number) for every non-empty line of `path`.
template <class F>
void for_each_line(const fs::path& path, F fn) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(split_tabs(line), lineno);
  }
}

long long parse_int(std::string_view s, const fs::path& file, std::size_t line) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(file.string(), line, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_index(std::string_view s, const fs::path& file, std::size_t line) {
  const long long v = parse_int(s, file, line);
  if (v < 0) throw ParseError(file.string(), line, "negative node id");
  return static_cast<std::size_t>(v);
}

double parse_double(std::string_view s, const fs::path& file, std::size_t line) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(file.string(), line, "expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  return out;
}

}  // namespace

std::size_t NodeGraph::num_classes() const {
  int mx = -1;
  for (int l : labels) mx = std::max(mx, l);
  return static_cast<std::size_t>(mx + 1);
}

std::vector<std::size_t> NodeGraph::indices(const std::vector<char>& mask) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

void NodeGraph::validate() const {
  if (features.rows() != n || features.rank() != 2) throw InvalidArgument("feature matrix must have one row per node");
  if (!features.all_finite()) throw InvalidArgument("features must be finite");
  if (labels.size() != n) throw InvalidArgument("label vector must have one entry per node");
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) throw InvalidArgument("edge endpoint out of range");
  }
  for (const auto* m : {&train, &val, &test}) {
    if (!m->empty() && m->size() != n) throw InvalidArgument("split mask must have one entry per node");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int k = (!train.empty() && train[i]) + (!val.empty() && val[i]) + (!test.empty() && test[i]);
    if (k > 1) throw InvalidArgument("split masks overlap at node " + std::to_string(i));
  }
}

bool NodeGraph::operator==(const NodeGraph& o) const {
  return n == o.n && edges == o.edges && features.shape() == o.features.shape() &&
         features.storage() == o.features.storage() && labels == o.labels && train == o.train && val == o.val &&
         test == o.test;
}

std::vector<Edge> canonical_edges(std::vector<Edge> edges) {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (auto e : edges) {
    if (e.u == e.v) continue;
    if (e.u > e.v) std::swap(e.u, e.v);
    out.push_back(e);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NodeGraph load_node_graph(const fs::path& dir) {
  NodeGraph g;
  const fs::path fpath = dir / "features.tsv";
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  std::size_t dim = 0;
  bool have_dim = false;
  for_each_line(fpath, [&](const std::vector<std::string_view>& f, std::size_t line) {
    const std::size_t id = parse_index(f[0], fpath, line);
    std::vector<double> vals;
    vals.reserve(f.size() - 1);
    for (std::size_t i = 1; i < f.size(); ++i) vals.push_back(parse_double(f[i], fpath, line));
    if (!have_dim) {
      dim = vals.size();
      have_dim = true;
    } else if (vals.size() != dim) {
      throw ParseError(fpath.string(), line,
                       "expected " + std::to_string(dim) + " features, got " + std::to_string(vals.size()));
    }
    rows.emplace_back(id, std::move(vals));
  });
  g.n = rows.size();
  g.features = ad::Tensor({g.n, dim});
  std::vector<char> seen(g.n, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t id = rows[i].first;
    if (id >= g.n || seen[id]) {
      throw ParseError(fpath.string(), i + 1, "node ids must be 0..n-1, each once (bad id " + std::to_string(id) + ")");
    }
    seen[id] = 1;
    std::copy(rows[i].second.begin(), rows[i].second.end(), g.features.row(id).begin());
  }

  const fs::path epath = dir / "edges.tsv";
  std::vector<Edge> edges;
  for_each_line(epath, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 2) throw ParseError(epath.string(), line, "expected 2 fields, got " + std::to_string(f.size()));
    const Edge e{parse_index(f[0], epath, line), parse_index(f[1], epath, line)};
    if (e.u >= g.n || e.v >= g.n) throw ParseError(epath.string(), line, "node id out of range");
    edges.push_back(e);
  });
  g.edges = canonical_edges(std::move(edges));

  g.labels.assign(g.n, -1);
  const fs::path lpath = dir / "labels.tsv";
  for_each_line(lpath, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 2) throw ParseError(lpath.string(), line, "expected 2 fields, got " + std::to_string(f.size()));
    const std::size_t id = parse_index(f[0], lpath, line);
    const long long cls = parse_int(f[1], lpath, line);
    if (id >= g.n) throw ParseError(lpath.string(), line, "node id out of range");
    if (cls < -1) throw ParseError(lpath.string(), line, "class must be >= -1");
    g.labels[id] = static_cast<int>(cls);
  });

  g.train.assign(g.n, 0);
  g.val.assign(g.n, 0);
  g.test.assign(g.n, 0);
  const fs::path spath = dir / "split.tsv";
  for_each_line(spath, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 2) throw ParseError(spath.string(), line, "expected 2 fields, got " + std::to_string(f.size()));
    const std::size_t id = parse_index(f[0], spath, line);
    if (id >= g.n) throw ParseError(spath.string(), line, "node id out of range");
    if (g.train[id] || g.val[id] || g.test[id]) throw ParseError(spath.string(), line, "node listed twice");
    if (f[1] == "train") {
      g.train[id] = 1;
    } else if (f[1] == "val") {
      g.val[id] = 1;
    } else if (f[1] == "test") {
      g.test[id] = 1;
    } else {
      throw ParseError(spath.string(), line, "split must be train, val or test");
    }
  });
  g.validate();
  return g;
}

void save_node_graph(const NodeGraph& g, const fs::path& dir) {
  g.validate();
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "edges.tsv");
    for (const auto& e : g.edges) out << e.u << '\t' << e.v << '\n';
  }
  {
    auto out = open_out(dir / "features.tsv");
    for (std::size_t i = 0; i < g.n; ++i) {
      out << i;
      for (double v : g.features.row(i)) out << '\t' << format_double(v);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.tsv");
    for (std::size_t i = 0; i < g.n; ++i) {
      if (g.labels[i] >= 0) out << i << '\t' << g.labels[i] << '\n';
    }
  }
  {
    auto out = open_out(dir / "split.tsv");
    for (std::size_t i = 0; i < g.n; ++i) {
      if (!g.train.empty() && g.train[i]) out << i << "\ttrain\n";
      if (!g.val.empty() && g.val[i]) out << i << "\tval\n";
      if (!g.test.empty() && g.test[i]) out << i << "\ttest\n";
    }
  }
}

void KGDataset::check_leakage() const {
  std::unordered_set<Triple, TripleHash> tr(train.begin(), train.end());
  for (const auto& t : test) {
    if (tr.count(t)) {
      throw InvalidArgument("test triple (" + entities[t.h] + ", " + relations[t.r] + ", " + entities[t.t] +
                            ") also appears in train");
    }
  }
}

KGDataset load_kg(const fs::path& dir) {
  KGDataset kg;
  std::unordered_map<std::string, std::size_t> eidx, ridx;
  auto intern = [](std::unordered_map<std::string, std::size_t>& idx, std::vector<std::string>& names,
                   std::string_view s) {
    auto [it, inserted] = idx.emplace(std::string(s), names.size());
    if (inserted) names.emplace_back(s);
    return it->second;
  };
  auto read = [&](const std::string& file, std::vector<Triple>& out) {
    const fs::path path = dir / file;
    for_each_line(path, [&](const std::vector<std::string_view>& f, std::size_t line) {
      if (f.size() != 3) throw ParseError(path.string(), line, "expected 3 fields, got " + std::to_string(f.size()));
      for (auto s : f) {
        if (s.empty()) throw ParseError(path.string(), line, "empty field");
      }
      Triple t;
      t.h = intern(eidx, kg.entities, f[0]);
      t.r = intern(ridx, kg.relations, f[1]);
      t.t = intern(eidx, kg.entities, f[2]);
      out.push_back(t);
    });
  };
  read("train.tsv", kg.train);
  read("valid.tsv", kg.valid);
  read("test.tsv", kg.test);
  kg.check_leakage();
  return kg;
}

void save_kg(const KGDataset& kg, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [&](const std::string& file, const std::vector<Triple>& ts) {
    auto out = open_out(dir / file);
    for (const auto& t : ts) out << kg.entities[t.h] << '\t' << kg.relations[t.r] << '\t' << kg.entities[t.t] << '\n';
  };
  write("train.tsv", kg.train);
  write("valid.tsv", kg.valid);
  write("test.tsv", kg.test);
}

namespace {

constexpr std::size_t kMaxNodes = 10'000'000;

/// Complete b-ary tree in BFS order: parent of node i > 0 is (i - 1) / b.
std::size_t tree_size(std::size_t b, std::size_t d) {
  if (b < 1 || d < 1) throw InvalidArgument("tree needs branching >= 1 and depth >= 1");
  std::size_t total = 1, level = 1;
  for (std::size_t k = 1; k <= d; ++k) {
    if (level > kMaxNodes / b) throw InvalidArgument("tree too large");
    level *= b;
    total += level;
    if (total > kMaxNodes) throw InvalidArgument("tree too large");
  }
  return total;
}

std::vector<int> tree_depths(std::size_t n, std::size_t b) {
  std::vector<int> depth(n, 0);
  for (std::size_t i = 1; i < n; ++i) depth[i] = depth[(i - 1) / b] + 1;
  return depth;
}

}  // namespace

NodeGraph gen_balanced_tree(std::size_t b, std::size_t d, std::size_t feature_dim, std::uint64_t seed) {
  if (feature_dim == 0) throw InvalidArgument("feature dimension must be positive");
  NodeGraph g;
  g.n = tree_size(b, d);
  for (std::size_t i = 1; i < g.n; ++i) g.edges.push_back({(i - 1) / b, i});
  g.edges = canonical_edges(std::move(g.edges));
  g.labels = tree_depths(g.n, b);
  g.features = ad::Tensor({g.n, feature_dim});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < g.n; ++i) {
    auto row = g.features.row(i);
    for (double& v : row) v = noise(rng);
    if (i < feature_dim) row[i] += 1.0;
  }
  return g;
}

NodeGraph gen_citation_like(const CitationConfig& cfg, std::uint64_t seed) {
  if (cfg.nodes < cfg.classes * 2 || cfg.classes == 0 || cfg.feature_dim < cfg.classes) {
    throw InvalidArgument("citation generator: too few nodes or features for the class count");
  }
  std::mt19937_64 rng(seed);
  NodeGraph g;
  g.n = cfg.nodes;
  g.labels.resize(g.n);
  for (std::size_t i = 0; i < g.n; ++i) g.labels[i] = static_cast<int>(i % cfg.classes);
  std::shuffle(g.labels.begin(), g.labels.end(), rng);

  std::vector<std::vector<std::size_t>> members(cfg.classes);
  for (std::size_t i = 0; i < g.n; ++i) members[g.labels[i]].push_back(i);

  std::uniform_int_distribution<std::size_t> any_node(0, g.n - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::set<Edge> edges;
  std::size_t guard = 0;
  while (edges.size() < cfg.edges && guard++ < cfg.edges * 100) {
    const std::size_t a = any_node(rng);
    std::size_t b;
    if (u01(rng) < cfg.homophily) {
      const auto& same = members[g.labels[a]];
      b = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)];
    } else {
      b = any_node(rng);
    }
    if (a == b) continue;
    edges.insert({std::min(a, b), std::max(a, b)});
  }
  g.edges.assign(edges.begin(), edges.end());

  // each class owns a contiguous band of the vocabulary
  const std::size_t band = cfg.feature_dim / cfg.classes;
  g.features = ad::Tensor({g.n, cfg.feature_dim});
  std::uniform_int_distribution<std::size_t> any_word(0, cfg.feature_dim - 1);
  std::uniform_int_distribution<std::size_t> band_word(0, band - 1);
  for (std::size_t i = 0; i < g.n; ++i) {
    auto row = g.features.row(i);
    for (std::size_t w = 0; w < cfg.words_per_node; ++w) {
      const std::size_t word = u01(rng) < cfg.topical ? static_cast<std::size_t>(g.labels[i]) * band + band_word(rng)
                                                      : any_word(rng);
      row[word] = 1.0;
    }
  }
  make_planetoid_splits(g, 20, 500, 1000, seed ^ 0x5bd1e995ULL);
  return g;
}

KGDataset gen_tree_kg(std::size_t b, std::size_t d, double sibling_rate, std::uint64_t seed) {
  const std::size_t n = tree_size(b, d);
  if (n < 3) throw InvalidArgument("tree KG needs at least 3 entities");
  KGDataset kg;
  for (std::size_t i = 0; i < n; ++i) kg.entities.push_back("e" + std::to_string(i));
  kg.relations = {"hypernym", "grand_hypernym", "sibling"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<Triple> all;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t parent = (i - 1) / b;
    all.push_back({i, 0, parent});
    if (parent > 0) all.push_back({i, 1, (parent - 1) / b});
  }
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t first = p * b + 1;
    if (first >= n) break;
    for (std::size_t x = first; x < first + b && x < n; ++x) {
      for (std::size_t y = first; y < first + b && y < n; ++y) {
        if (x != y && u01(rng) < sibling_rate) all.push_back({x, 2, y});
      }
    }
  }
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t n_test = all.size() / 10;
  const std::size_t n_valid = all.size() / 10;
  kg.test.assign(all.begin(), all.begin() + n_test);
  kg.valid.assign(all.begin() + n_test, all.begin() + n_test + n_valid);
  kg.train.assign(all.begin() + n_test + n_valid, all.end());
  return kg;
}

KGDataset subsample_kg(const KGDataset& kg, std::size_t max_triples, std::uint64_t seed) {
  KGDataset out;
  out.entities = kg.entities;
  out.relations = kg.relations;
  const std::size_t total = kg.train.size() + kg.valid.size() + kg.test.size();
  if (total <= max_triples) {
    out.train = kg.train;
    out.valid = kg.valid;
    out.test = kg.test;
    return out;
  }
  std::mt19937_64 rng(seed);
  const double frac = static_cast<double>(max_triples) / static_cast<double>(total);
  auto pick = [&](const std::vector<Triple>& src) {
    std::vector<Triple> v = src;
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(static_cast<std::size_t>(std::llround(frac * static_cast<double>(src.size()))));
    return v;
  };
  out.train = pick(kg.train);
  out.valid = pick(kg.valid);
  out.test = pick(kg.test);
  return out;
}

void make_splits(NodeGraph& g, const std::array<double, 3>& fractions, std::uint64_t seed, std::size_t min_per_split) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw InvalidArgument("split fractions must be non-negative");
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw InvalidArgument("split fractions sum above 1");
  g.train.assign(g.n, 0);
  g.val.assign(g.n, 0);
  g.test.assign(g.n, 0);

  std::vector<std::vector<std::size_t>> members(g.num_classes());
  for (std::size_t i = 0; i < g.n; ++i) {
    if (g.labels[i] >= 0) members[g.labels[i]].push_back(i);
  }
  std::size_t slots = 0;
  for (double f : fractions) slots += f > 0.0 ? min_per_split : 0;

  std::mt19937_64 rng(seed);
  std::vector<char>* masks[3] = {&g.train, &g.val, &g.test};
  for (std::size_t cls = 0; cls < members.size(); ++cls) {
    auto& m = members[cls];
    if (m.empty()) continue;
    if (m.size() < slots) {
      throw InvalidArgument("class " + std::to_string(cls) + " has " + std::to_string(m.size()) +
                            " members, fewer than its " + std::to_string(slots) + " split slots");
    }
    std::shuffle(m.begin(), m.end(), rng);
    const double size = static_cast<double>(m.size());
    std::array<std::size_t, 4> cut{0, 0, 0, 0};
    double cum = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      cum += fractions[s];
      cut[s + 1] = std::min(m.size(), static_cast<std::size_t>(std::llround(cum * size)));
    }
    if (fractions[0] > 0.0 && cut[1] == 0) {
      for (auto& c : cut) c = std::max<std::size_t>(c, 1);
      cut[0] = 0;
    }
    if (min_per_split > 0) {
      // widen each positive split to the minimum, taking from the end
      std::size_t pos = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t want = fractions[s] > 0.0 ? std::max(cut[s + 1] - cut[s], min_per_split) : 0;
        cut[s] = pos;
        pos = std::min(m.size(), pos + want);
        cut[s + 1] = pos;
      }
    }
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t i = cut[s]; i < cut[s + 1]; ++i) (*masks[s])[m[i]] = 1;
    }
  }
}

void make_planetoid_splits(NodeGraph& g, std::size_t per_class, std::size_t val, std::size_t test, std::uint64_t seed) {
  g.train.assign(g.n, 0);
  g.val.assign(g.n, 0);
  g.test.assign(g.n, 0);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(g.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> taken(g.num_classes(), 0);
  std::vector<std::size_t> rest;
  for (std::size_t i : order) {
    const int l = g.labels[i];
    if (l >= 0 && taken[l] < per_class) {
      g.train[i] = 1;
      ++taken[l];
    } else {
      rest.push_back(i);
    }
  }
  if (rest.size() < val + test) throw InvalidArgument("not enough nodes for the requested val/test sizes");
  for (std::size_t k = 0; k < val; ++k) g.val[rest[k]] = 1;
  for (std::size_t k = val; k < val + test; ++k) g.test[rest[k]] = 1;
}

std::vector<Edge> sample_non_edges(const NodeGraph& g, std::size_t count, std::uint64_t seed,
                                   const std::vector<Edge>& exclude) {
  if (g.n < 2) throw InvalidArgument("need at least two nodes to sample non-edges");
  const double capacity = static_cast<double>(g.n) * static_cast<double>(g.n - 1) / 2.0;
  std::set<Edge> taken(g.edges.begin(), g.edges.end());
  for (auto e : exclude) {
    if (e.u > e.v) std::swap(e.u, e.v);
    taken.insert(e);
  }
  if (static_cast<double>(taken.size() + count) > capacity) throw InvalidArgument("not enough non-edges to sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> node(0, g.n - 1);
  std::vector<Edge> out;
  out.reserve(count);
  while (out.size() < count) {
    std::size_t a = node(rng), b = node(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (taken.insert({a, b}).second) out.push_back({a, b});
  }
  return out;
}

EdgeSplit make_edge_splits(const NodeGraph& g, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (sum > 1.0 + 1e-12 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw InvalidArgument("edge split fractions must be non-negative and sum to at most 1");
  }
  std::vector<Edge> edges = g.edges;
  std::mt19937_64 rng(seed);
  std::shuffle(edges.begin(), edges.end(), rng);
  const double m = static_cast<double>(edges.size());
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * m));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions[2] * m));
  const auto n_train = std::min(edges.size() - n_val - n_test, static_cast<std::size_t>(std::llround(fractions[0] * m)));
  EdgeSplit s;
  s.val_pos.assign(edges.begin(), edges.begin() + n_val);
  s.test_pos.assign(edges.begin() + n_val, edges.begin() + n_val + n_test);
  s.train_pos.assign(edges.begin() + n_val + n_test, edges.begin() + n_val + n_test + n_train);
  std::sort(s.train_pos.begin(), s.train_pos.end());
  auto neg = sample_non_edges(g, n_val + n_test, rng());
  s.val_neg.assign(neg.begin(), neg.begin() + n_val);
  s.test_neg.assign(neg.begin() + n_val, neg.end());
  return s;
}

}  // namespace hypnorm::data
