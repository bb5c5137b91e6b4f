#pragma once

// Fixtures, random tree generation and independent oracles shared by the unit
// tests and the acceptance binary. Nothing here calls the library's path or
// enumeration code; oracles route instances by walking the node array.

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cfx/cfx.hpp"

namespace cfx::testing {

inline std::string data_path(const std::string& rel) { return std::string(CFX_DATA_DIR) + "/" + rel; }

inline DatasetSchema t0_schema() { return load_schema(read_file(data_path("t0/schema.json"))); }
inline Dataset t0_data() { return load_dataset(read_file(data_path("t0/t0.csv")), t0_schema()); }
inline TrainConfig t0_config() {
  TrainConfig c;
  c.max_depth = 5;
  c.min_samples_split = 2;
  c.min_samples_leaf = 1;
  return c;
}
inline ModelBundle t0_bundle() { return ModelBundle::from_training(t0_data(), t0_config()); }
inline std::vector<Persona> t0_personas() { return load_personas(read_file(data_path("t0/personas.json")), t0_schema()); }

inline DatasetSchema german_schema() { return load_schema(read_file(data_path("german/schema.json"))); }
inline Dataset german_data() { return load_dataset(read_file(data_path("german/german_credit.csv")), german_schema()); }
inline std::vector<Persona> german_personas() {
  return load_personas(read_file(data_path("german/personas.json")), german_schema());
}

inline Instance make_instance(std::initializer_list<Value> values) { return Instance{std::vector<Value>(values)}; }

inline std::shared_ptr<Engine> make_engine(ModelBundle model, std::vector<Persona> personas = {}, int budget = 50,
                                           bool obfuscate = false) {
  auto e = std::make_shared<Engine>();
  e->model = std::move(model);
  e->personas = std::move(personas);
  e->config.budget = budget;
  e->config.render.obfuscate = obfuscate;
  return e;
}

// ---------------------------------------------------------------------------
// Random trees: up to three features (numeric on an integer grid, or
// categorical), up to eight leaves, every path consistent by construction.

struct RandomTreeSpec {
  std::size_t max_features = 3;
  std::size_t max_leaves = 8;
  std::size_t classes = 2;
  bool allow_categorical = true;
};

inline DatasetSchema random_schema(std::mt19937_64& rng, const RandomTreeSpec& spec) {
  DatasetSchema s;
  const std::size_t nf = 1 + rng() % spec.max_features;
  for (std::size_t f = 0; f < nf; ++f) {
    FeatureSpec fs;
    fs.name = "f" + std::string(1, static_cast<char>('a' + f));
    fs.display_name = fs.name;
    if (spec.allow_categorical && rng() % 4 == 0) {
      fs.kind = FeatureKind::categorical;
      const std::size_t nc = 2 + rng() % 4;
      for (std::size_t c = 0; c < nc; ++c) fs.categories.push_back("c" + std::string(1, static_cast<char>('a' + c)));
    } else {
      fs.kind = FeatureKind::numeric;
      fs.resolution = (rng() % 3 == 0) ? 0.5 : 1.0;
    }
    s.features.push_back(std::move(fs));
  }
  s.target_name = "y";
  for (std::size_t c = 0; c < spec.classes; ++c) s.classes.push_back("k" + std::to_string(c));
  return s;
}

namespace detail_rt {

struct Box {
  std::vector<double> lo, hi;              // numeric feature intervals (lo, hi]
  std::vector<std::vector<bool>> allowed;  // categorical feature sets
};

}  // namespace detail_rt

// Numeric values live on [0, 100]; thresholds are midpoints between grid values.
inline DecisionTree random_tree(std::mt19937_64& rng, const DatasetSchema& schema, std::size_t max_leaves) {
  std::vector<Node> nodes;
  detail_rt::Box root;
  for (const auto& f : schema.features) {
    root.lo.push_back(-1.0);
    root.hi.push_back(101.0);
    root.allowed.push_back(std::vector<bool>(f.categories.size(), true));
  }
  const std::size_t target_leaves = 1 + rng() % max_leaves;
  std::size_t leaves = 1;

  auto leaf_counts = [&] {
    std::vector<std::size_t> counts(schema.classes.size());
    for (auto& c : counts) c = rng() % 6;
    counts[rng() % counts.size()] += 1 + rng() % 6;
    return counts;
  };

  // Breadth-first growth, then renumber in preorder so child ids exceed parents.
  struct Proto {
    std::optional<Split> split;
    int left = -1, right = -1;
    detail_rt::Box box;
  };
  std::vector<Proto> protos{{std::nullopt, -1, -1, root}};
  std::vector<int> frontier{0};
  while (leaves < target_leaves && !frontier.empty()) {
    const auto k = rng() % frontier.size();
    const int id = frontier[k];
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(k));
    const auto box = protos[id].box;
    std::vector<std::pair<std::size_t, Split>> options;
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto& spec = schema[f];
      if (spec.numeric()) {
        const double res = spec.resolution;
        const double lo = std::max(box.lo[f], 0.0), hi = std::min(box.hi[f], 100.0);
        const long first = static_cast<long>(std::floor(lo / res)) + 1, last = static_cast<long>(std::floor(hi / res)) - 1;
        if (first > last) continue;
        const long g = first + static_cast<long>(rng() % static_cast<std::uint64_t>(last - first + 1));
        Split s;
        s.feature = f;
        s.numeric = true;
        s.threshold = (static_cast<double>(g) + 0.5) * res;
        if (s.threshold <= box.lo[f] || s.threshold >= box.hi[f]) continue;
        options.emplace_back(f, s);
      } else {
        std::vector<std::size_t> live;
        for (std::size_t c = 0; c < box.allowed[f].size(); ++c)
          if (box.allowed[f][c]) live.push_back(c);
        if (live.size() < 2) continue;
        std::shuffle(live.begin(), live.end(), rng);
        const std::size_t take = 1 + rng() % (live.size() - 1);
        std::vector<std::size_t> cats(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(take));
        // Categories outside the node's allowed set may join either side.
        for (std::size_t c = 0; c < box.allowed[f].size(); ++c)
          if (!box.allowed[f][c] && rng() % 2) cats.push_back(c);
        std::sort(cats.begin(), cats.end());
        if (cats.size() >= spec.categories.size()) continue;
        Split s;
        s.feature = f;
        s.numeric = false;
        s.categories = cats;
        options.emplace_back(f, s);
      }
    }
    if (options.empty()) continue;
    auto [f, split] = options[rng() % options.size()];
    auto lbox = box, rbox = box;
    if (split.numeric) {
      lbox.hi[f] = split.threshold;
      rbox.lo[f] = split.threshold;
    } else {
      for (std::size_t c = 0; c < lbox.allowed[f].size(); ++c) {
        const bool in = std::binary_search(split.categories.begin(), split.categories.end(), c);
        if (!in) lbox.allowed[f][c] = false;
        if (in) rbox.allowed[f][c] = false;
      }
    }
    protos[id].split = split;
    protos[id].left = static_cast<int>(protos.size());
    protos.push_back({std::nullopt, -1, -1, lbox});
    protos[id].right = static_cast<int>(protos.size());
    protos.push_back({std::nullopt, -1, -1, rbox});
    frontier.push_back(protos[id].left);
    frontier.push_back(protos[id].right);
    ++leaves;
  }

  std::vector<int> order;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    order.push_back(id);
    if (protos[id].split) {
      stack.push_back(protos[id].right);
      stack.push_back(protos[id].left);
    }
  }
  std::vector<int> new_id(protos.size());
  for (std::size_t i = 0; i < order.size(); ++i) new_id[order[i]] = static_cast<int>(i);
  for (int id : order) {
    Node n;
    n.id = new_id[id];
    if (protos[id].split) {
      n.split = protos[id].split;
      n.left = new_id[protos[id].left];
      n.right = new_id[protos[id].right];
    } else {
      n.leaf.class_counts = leaf_counts();
    }
    nodes.push_back(std::move(n));
  }
  return DecisionTree(schema, std::move(nodes));
}

inline Instance random_instance(std::mt19937_64& rng, const DatasetSchema& schema) {
  Instance inst;
  for (const auto& f : schema.features) {
    if (f.numeric()) {
      const long steps = static_cast<long>(100.0 / f.resolution);
      inst.values.push_back(static_cast<double>(rng() % static_cast<std::uint64_t>(steps + 1)) * f.resolution);
    } else {
      inst.values.push_back(f.categories[rng() % f.categories.size()]);
    }
  }
  return inst;
}

inline FeatureRanges unit_ranges(const DatasetSchema& schema) {
  FeatureRanges r;
  r.bounds.assign(schema.size(), {0.0, 0.0});
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (schema[f].numeric()) r.bounds[f] = {0.0, 100.0};
  return r;
}

// ---------------------------------------------------------------------------
// Oracles.

// Routes by walking nodes directly.
inline NodeId oracle_route(const DecisionTree& tree, const Instance& inst) {
  const auto& nodes = tree.nodes();
  NodeId cur = 0;
  while (nodes[cur].split) {
    const auto& s = *nodes[cur].split;
    const auto& spec = tree.schema()[s.feature];
    bool left;
    if (s.numeric) {
      left = std::get<double>(inst[s.feature]) <= s.threshold;
    } else {
      const auto idx = *spec.category_index(std::get<std::string>(inst[s.feature]));
      left = std::find(s.categories.begin(), s.categories.end(), idx) != s.categories.end();
    }
    cur = left ? nodes[cur].left : nodes[cur].right;
  }
  return cur;
}

inline std::size_t oracle_class(const DecisionTree& tree, const Instance& inst) {
  const auto& counts = tree.nodes()[oracle_route(tree, inst)].leaf.class_counts;
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

// Per-feature grid: the instance's own value, every split threshold t and
// t ± resolution; categorical features take every category.
inline std::vector<std::vector<Value>> oracle_grid(const DecisionTree& tree, const Instance& inst) {
  const auto& schema = tree.schema();
  std::vector<std::vector<Value>> grid(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!schema[f].numeric()) {
      for (const auto& c : schema[f].categories) grid[f].push_back(c);
      continue;
    }
    std::set<double> vals{std::get<double>(inst[f])};
    for (const auto& n : tree.nodes()) {
      if (!n.split || n.split->feature != f) continue;
      const double t = n.split->threshold, r = schema[f].resolution;
      vals.insert({t - r, t, t + r});
    }
    for (double v : vals) grid[f].push_back(v);
  }
  return grid;
}

// Minimal-length change sets reaching the contrast class, by exhaustive search
// over the cross product of the grid.
inline std::set<std::vector<std::size_t>> oracle_minimal_change_sets(const DecisionTree& tree, const Instance& inst,
                                                                     std::size_t contrast) {
  const auto grid = oracle_grid(tree, inst);
  const std::size_t nf = grid.size();
  std::vector<std::size_t> idx(nf, 0);
  std::size_t best = nf + 1;
  std::set<std::vector<std::size_t>> out;
  while (true) {
    Instance point;
    std::vector<std::size_t> diff;
    for (std::size_t f = 0; f < nf; ++f) {
      point.values.push_back(grid[f][idx[f]]);
      if (!(point.values.back() == inst[f])) diff.push_back(f);
    }
    if (!diff.empty() && diff.size() <= best && oracle_class(tree, point) == contrast) {
      if (diff.size() < best) {
        best = diff.size();
        out.clear();
      }
      out.insert(diff);
    }
    std::size_t f = 0;
    while (f < nf && ++idx[f] == grid[f].size()) idx[f++] = 0;
    if (f == nf) break;
  }
  return out;
}

// Exhaustive best split search over one node's rows (weighted Gini), used to
// check CART's choice at the root.
struct OracleSplit {
  double impurity;
  std::size_t feature;
  double threshold;
};

inline std::optional<OracleSplit> oracle_best_numeric_split(const Dataset& data, std::size_t min_leaf) {
  std::optional<OracleSplit> best;
  const auto nc = data.schema.classes.size();
  auto gini_of = [&](const std::vector<double>& c, double n) {
    double s = 0;
    for (double v : c) s += (v / n) * (v / n);
    return 1 - s;
  };
  for (std::size_t f = 0; f < data.schema.size(); ++f) {
    if (!data.schema[f].numeric()) continue;
    std::set<double> values;
    for (const auto& r : data.rows) values.insert(std::get<double>(r[f]));
    std::vector<double> v(values.begin(), values.end());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const double t = (v[i] + v[i + 1]) / 2;
      std::vector<double> l(nc, 0), r(nc, 0);
      double nl = 0, nr = 0;
      for (std::size_t row = 0; row < data.size(); ++row) {
        if (std::get<double>(data.rows[row][f]) <= t) {
          l[data.labels[row]]++;
          nl++;
        } else {
          r[data.labels[row]]++;
          nr++;
        }
      }
      if (nl < min_leaf || nr < min_leaf) continue;
      const double imp = (nl * gini_of(l, nl) + nr * gini_of(r, nr)) / (nl + nr);
      if (!best || imp < best->impurity - 1e-12) best = OracleSplit{imp, f, t};
    }
  }
  return best;
}

}  // namespace cfx::testing
