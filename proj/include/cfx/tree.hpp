#pragma once

// CART decision-tree classifier (Gini impurity) and the tree-derived
// explanations: decision rules, feature importance, exemplars, rendering.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cfx/schema.hpp"

namespace cfx {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

struct TrainConfig {
  int max_depth = 5;
  int min_samples_split = 10;
  int min_samples_leaf = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_depth < 1) throw ModelError("max_depth must be positive");
    if (min_samples_split < 1) throw ModelError("min_samples_split must be positive");
    if (min_samples_leaf < 1) throw ModelError("min_samples_leaf must be positive");
    if (min_samples_leaf > min_samples_split)
      throw ModelError("min_samples_leaf must not exceed min_samples_split");
  }

  json to_json() const {
    return {{"max_depth", max_depth},
            {"min_samples_split", min_samples_split},
            {"min_samples_leaf", min_samples_leaf},
            {"seed", seed}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.seed = j.value("seed", c.seed);
    return c;
  }

  bool operator==(const TrainConfig&) const = default;
};

// Axis-aligned test. Numeric: value <= threshold. Categorical: value in categories.
// The left child receives instances passing the test.
struct Split {
  std::size_t feature = 0;
  bool numeric = true;
  double threshold = 0.0;
  std::vector<std::size_t> categories;  // sorted category indices

  bool test(const FeatureSpec& spec, const Value& v) const {
    if (numeric) return std::get<double>(v) <= threshold;
    auto idx = spec.category_index(std::get<std::string>(v));
    if (!idx) throw DataError(spec.name + ": unknown category '" + std::get<std::string>(v) + "'");
    return std::binary_search(categories.begin(), categories.end(), *idx);
  }

  bool operator==(const Split&) const = default;
  // Feature order, then ascending threshold or lexicographic category subset.
  auto operator<=>(const Split& o) const {
    if (auto c = feature <=> o.feature; c != 0) return c;
    if (numeric && o.numeric) {
      if (threshold < o.threshold) return std::strong_ordering::less;
      if (threshold > o.threshold) return std::strong_ordering::greater;
      return std::strong_ordering::equal;
    }
    return categories <=> o.categories;
  }
};

inline std::string category_set_text(const FeatureSpec& spec, const std::vector<std::size_t>& cats) {
  return "{" + join(cats, ", ", [&](std::size_t c) { return spec.categories[c]; }) + "}";
}

inline std::string split_text(const DatasetSchema& schema, const Split& s, bool outcome = true) {
  const auto& spec = schema[s.feature];
  if (s.numeric) return spec.name + (outcome ? " ≤ " : " > ") + format_number(s.threshold);
  return spec.name + (outcome ? " ∈ " : " ∉ ") + category_set_text(spec, s.categories);
}

struct LeafStats {
  std::vector<std::size_t> class_counts;
  std::size_t predicted_class = 0;
  std::size_t support = 0;
  double purity = 0.0;
  std::vector<std::size_t> member_rows;
  // Per feature; empty for numeric features or when unknown.
  std::vector<std::vector<std::size_t>> category_counts;

  bool operator==(const LeafStats&) const = default;
};

struct Node {
  NodeId id = 0;
  std::optional<Split> split;
  NodeId left = kNoNode;
  NodeId right = kNoNode;
  LeafStats leaf;

  bool is_leaf() const { return !split.has_value(); }
  bool operator==(const Node&) const = default;
};

// Constraint on one feature along a root-to-leaf path: a half-open interval
// (lower, upper] for numeric features or an allowed category set.
struct FeatureRange {
  bool constrained = false;
  double lower = -kInf;
  double upper = kInf;
  std::vector<bool> allowed;  // categorical only

  bool admits(const FeatureSpec& spec, const Value& v) const {
    if (!constrained) return true;
    if (spec.numeric()) {
      double x = std::get<double>(v);
      return x > lower && x <= upper;
    }
    auto idx = spec.category_index(std::get<std::string>(v));
    return idx && allowed[*idx];
  }

  bool empty(const FeatureSpec& spec) const {
    if (!constrained) return false;
    if (spec.numeric()) return !(lower < upper);
    return std::none_of(allowed.begin(), allowed.end(), [](bool b) { return b; });
  }

  std::vector<std::size_t> allowed_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < allowed.size(); ++i)
      if (allowed[i]) out.push_back(i);
    return out;
  }

  void apply(const FeatureSpec& spec, const Split& s, bool outcome) {
    constrained = true;
    if (spec.numeric()) {
      if (outcome) {
        upper = std::min(upper, s.threshold);
      } else {
        lower = std::max(lower, s.threshold);
      }
      return;
    }
    if (allowed.empty()) allowed.assign(spec.categories.size(), true);
    for (std::size_t c = 0; c < allowed.size(); ++c) {
      bool in = std::binary_search(s.categories.begin(), s.categories.end(), c);
      if (in != outcome) allowed[c] = false;
    }
  }

  // "30 < age ≤ 45", "income > 50", "purpose ∈ {car_new, other}"
  std::string inequality_text(const FeatureSpec& spec) const {
    if (!constrained) return spec.name + " is unconstrained";
    if (!spec.numeric()) return spec.name + " ∈ " + category_set_text(spec, allowed_indices());
    bool lo = std::isfinite(lower), hi = std::isfinite(upper);
    if (lo && hi) return format_number(lower) + " < " + spec.name + " ≤ " + format_number(upper);
    if (lo) return spec.name + " > " + format_number(lower);
    if (hi) return spec.name + " ≤ " + format_number(upper);
    return spec.name + " is unconstrained";
  }

  // "(50, +∞)", "(−∞, 30]", "{a, b}"
  std::string interval_text(const FeatureSpec& spec) const {
    if (!spec.numeric()) {
      if (!constrained) return category_set_text(spec, [&] {
        std::vector<std::size_t> all(spec.categories.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
      }());
      return category_set_text(spec, allowed_indices());
    }
    return "(" + format_number(lower) + ", " + format_number(upper) + (std::isfinite(upper) ? "]" : ")");
  }

  bool operator==(const FeatureRange&) const = default;
};

struct PathPredicate {
  std::vector<FeatureRange> ranges;  // one per schema feature

  bool satisfied_by(const DatasetSchema& schema, const Instance& inst) const {
    for (std::size_t f = 0; f < ranges.size(); ++f)
      if (!ranges[f].admits(schema[f], inst[f])) return false;
    return true;
  }

  std::vector<std::size_t> constrained_features() const {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < ranges.size(); ++f)
      if (ranges[f].constrained) out.push_back(f);
    return out;
  }

  std::string text(const DatasetSchema& schema) const {
    auto fs = constrained_features();
    if (fs.empty()) return "TRUE";
    return join(fs, " AND ", [&](std::size_t f) { return ranges[f].inequality_text(schema[f]); });
  }

  bool operator==(const PathPredicate&) const = default;
};

struct Prediction {
  std::size_t class_index = 0;
  NodeId leaf = 0;
  bool operator==(const Prediction&) const = default;
};

struct DecisionRule {
  PathPredicate predicate;
  std::size_t class_index = 0;
};

inline double gini(const std::vector<std::size_t>& counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  if (n == 0) return 0.0;
  double s = 0;
  for (auto c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

inline void finalize_leaf(LeafStats& leaf) {
  leaf.support = std::accumulate(leaf.class_counts.begin(), leaf.class_counts.end(), std::size_t{0});
  leaf.predicted_class = 0;
  for (std::size_t c = 1; c < leaf.class_counts.size(); ++c)
    if (leaf.class_counts[c] > leaf.class_counts[leaf.predicted_class]) leaf.predicted_class = c;
  leaf.purity = leaf.support == 0 ? 0.0 : static_cast<double>(leaf.class_counts[leaf.predicted_class]) / leaf.support;
}

class DecisionTree {
 public:
  DecisionTree() = default;

  // Nodes are indexed by id with the root at 0. Leaf statistics are recomputed
  // from class_counts; structural problems raise ModelError.
  DecisionTree(DatasetSchema schema, std::vector<Node> nodes, TrainConfig config = {})
      : schema_(std::move(schema)), nodes_(std::move(nodes)), config_(config) {
    if (nodes_.empty()) throw ModelError("tree has no nodes");
    parents_.assign(nodes_.size(), kNoNode);
    std::vector<int> seen(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      if (n.id != static_cast<NodeId>(i)) throw ModelError("node ids must be 0..n-1 in order");
      if (n.is_leaf()) {
        if (n.leaf.class_counts.size() != schema_.classes.size())
          throw ModelError("leaf " + std::to_string(n.id) + ": class_counts does not match schema classes");
        finalize_leaf(n.leaf);
        continue;
      }
      const auto& s = *n.split;
      if (s.feature >= schema_.size()) throw ModelError("node " + std::to_string(n.id) + ": unknown feature");
      if (s.numeric != schema_[s.feature].numeric())
        throw ModelError("node " + std::to_string(n.id) + ": split kind does not match feature kind");
      if (!s.numeric) {
        const auto ncat = schema_[s.feature].categories.size();
        if (s.categories.empty() || s.categories.size() >= ncat || s.categories.back() >= ncat ||
            !std::is_sorted(s.categories.begin(), s.categories.end()))
          throw ModelError("node " + std::to_string(n.id) + ": category subset must be non-empty and proper");
      } else if (!std::isfinite(s.threshold)) {
        throw ModelError("node " + std::to_string(n.id) + ": threshold must be finite");
      }
      for (NodeId child : {n.left, n.right}) {
        if (child <= n.id || child >= static_cast<NodeId>(nodes_.size()))
          throw ModelError("node " + std::to_string(n.id) + ": invalid child id");
        if (++seen[child] > 1) throw ModelError("node " + std::to_string(child) + " has several parents");
        parents_[child] = n.id;
      }
    }
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (seen[i] != 1) throw ModelError("node " + std::to_string(i) + " is unreachable");
    for (NodeId leaf : leaf_ids()) {
      auto pred = leaf_predicate(leaf);
      for (std::size_t f = 0; f < schema_.size(); ++f)
        if (pred.ranges[f].empty(schema_[f]))
          throw ModelError("leaf " + std::to_string(leaf) + ": inconsistent root-to-leaf path");
    }
  }

  const DatasetSchema& schema() const { return schema_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const TrainConfig& config() const { return config_; }

  const Node& node(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw ModelError("unknown node id " + std::to_string(id));
    return nodes_[id];
  }

  const LeafStats& leaf(NodeId id) const {
    const auto& n = node(id);
    if (!n.is_leaf()) throw ModelError("node " + std::to_string(id) + " is not a leaf");
    return n.leaf;
  }

  NodeId parent(NodeId id) const { return parents_.at(id); }

  std::vector<NodeId> leaf_ids() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.is_leaf()) out.push_back(n.id);
    return out;
  }

  std::size_t leaf_count() const { return leaf_ids().size(); }

  // (split node, outcome) pairs from the root down to the given node.
  std::vector<std::pair<NodeId, bool>> path_to(NodeId id) const {
    node(id);
    std::vector<std::pair<NodeId, bool>> path;
    for (NodeId cur = id; parents_[cur] != kNoNode; cur = parents_[cur]) {
      NodeId p = parents_[cur];
      path.emplace_back(p, nodes_[p].left == cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  std::size_t depth(NodeId id) const { return path_to(id).size(); }

  Prediction predict(const Instance& inst) const {
    check_instance(schema_, inst);
    NodeId cur = 0;
    while (!nodes_[cur].is_leaf()) {
      const auto& s = *nodes_[cur].split;
      cur = s.test(schema_[s.feature], inst[s.feature]) ? nodes_[cur].left : nodes_[cur].right;
    }
    return {nodes_[cur].leaf.predicted_class, cur};
  }

  PathPredicate leaf_predicate(NodeId leaf_id) const {
    if (!node(leaf_id).is_leaf()) throw ModelError("node " + std::to_string(leaf_id) + " is not a leaf");
    PathPredicate pred;
    pred.ranges.resize(schema_.size());
    for (std::size_t f = 0; f < schema_.size(); ++f)
      if (!schema_[f].numeric()) pred.ranges[f].allowed.assign(schema_[f].categories.size(), true);
    for (auto [nid, outcome] : path_to(leaf_id)) {
      const auto& s = *nodes_[nid].split;
      pred.ranges[s.feature].apply(schema_[s.feature], s, outcome);
    }
    return pred;
  }

  DecisionRule decision_rule(const Instance& inst) const {
    auto p = predict(inst);
    return {leaf_predicate(p.leaf), p.class_index};
  }

  // Class counts of all training rows routed through a node.
  std::vector<std::size_t> subtree_counts(NodeId id) const {
    const auto& n = node(id);
    if (n.is_leaf()) return n.leaf.class_counts;
    auto l = subtree_counts(n.left);
    auto r = subtree_counts(n.right);
    for (std::size_t c = 0; c < l.size(); ++c) l[c] += r[c];
    return l;
  }

  bool operator==(const DecisionTree& o) const {
    return schema_ == o.schema_ && nodes_ == o.nodes_ && config_ == o.config_;
  }

 private:
  DatasetSchema schema_;
  std::vector<Node> nodes_;
  TrainConfig config_;
  std::vector<NodeId> parents_;
};

namespace detail {

class CartBuilder {
 public:
  CartBuilder(const Dataset& data, const TrainConfig& config) : data_(data), config_(config) {
    const auto& schema = data.schema;
    columns_.assign(schema.size(), std::vector<double>(data.size()));
    for (std::size_t f = 0; f < schema.size(); ++f) {
      for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& v = data.rows[r][f];
        columns_[f][r] = schema[f].numeric() ? std::get<double>(v)
                                             : static_cast<double>(*schema[f].category_index(std::get<std::string>(v)));
      }
    }
  }

  std::vector<Node> build() {
    std::vector<std::size_t> rows(data_.size());
    std::iota(rows.begin(), rows.end(), 0);
    grow(rows, 0);
    return std::move(nodes_);
  }

 private:
  struct Candidate {
    double score = kInf;  // weighted child impurity, n_left*G(L) + n_right*G(R)
    Split split;
  };

  std::size_t nclasses() const { return data_.schema.classes.size(); }

  std::vector<std::size_t> counts_of(const std::vector<std::size_t>& rows) const {
    std::vector<std::size_t> counts(nclasses(), 0);
    for (auto r : rows) ++counts[data_.labels[r]];
    return counts;
  }

  static double weighted(const std::vector<std::size_t>& counts, std::size_t n) {
    return n == 0 ? 0.0 : static_cast<double>(n) * gini(counts);
  }

  // Strictly better score wins; within tolerance, the earlier feature and then
  // the smaller threshold / subset win.
  static bool better(const Candidate& a, const std::optional<Candidate>& best, double tol) {
    if (!best) return true;
    if (a.score < best->score - tol) return true;
    if (a.score > best->score + tol) return false;
    return a.split < best->split;
  }

  void consider_numeric(std::size_t f, const std::vector<std::size_t>& rows, std::optional<Candidate>& best,
                        double tol) const {
    std::vector<std::size_t> order(rows);
    const auto& col = columns_[f];
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return col[a] < col[b]; });
    const std::size_t n = order.size();
    const auto min_leaf = static_cast<std::size_t>(config_.min_samples_leaf);
    std::vector<std::size_t> left(nclasses(), 0), right = counts_of(rows);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto lab = data_.labels[order[i]];
      ++left[lab];
      --right[lab];
      const double a = col[order[i]], b = col[order[i + 1]];
      if (!(a < b)) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      double t = a + (b - a) / 2.0;
      if (!(t < b)) t = a;
      Candidate c;
      c.score = weighted(left, nl) + weighted(right, nr);
      c.split.feature = f;
      c.split.numeric = true;
      c.split.threshold = t;
      if (better(c, best, tol)) best = c;
    }
  }

  void consider_categorical(std::size_t f, const std::vector<std::size_t>& rows, std::optional<Candidate>& best,
                            double tol) const {
    const auto& spec = data_.schema[f];
    std::vector<std::vector<std::size_t>> per_cat(spec.categories.size(), std::vector<std::size_t>(nclasses(), 0));
    std::vector<std::size_t> cat_n(spec.categories.size(), 0);
    for (auto r : rows) {
      auto c = static_cast<std::size_t>(columns_[f][r]);
      ++per_cat[c][data_.labels[r]];
      ++cat_n[c];
    }
    std::vector<std::size_t> observed;
    for (std::size_t c = 0; c < cat_n.size(); ++c)
      if (cat_n[c] > 0) observed.push_back(c);
    const std::size_t k = observed.size();
    if (k < 2) return;

    std::vector<std::vector<std::size_t>> subsets;
    if (k <= 8) {
      const unsigned full = (1u << k) - 1;
      for (unsigned mask = 1; mask < full; ++mask) {
        if (!(mask & 1u)) continue;  // each bipartition once: first observed category goes left
        std::vector<std::size_t> s;
        for (std::size_t b = 0; b < k; ++b)
          if (mask & (1u << b)) s.push_back(observed[b]);
        subsets.push_back(std::move(s));
      }
    } else {
      for (auto c : observed) subsets.push_back({c});
    }
    std::sort(subsets.begin(), subsets.end());

    const std::size_t n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(config_.min_samples_leaf);
    const auto total = counts_of(rows);
    for (auto& s : subsets) {
      std::vector<std::size_t> left(nclasses(), 0);
      std::size_t nl = 0;
      for (auto c : s) {
        nl += cat_n[c];
        for (std::size_t y = 0; y < nclasses(); ++y) left[y] += per_cat[c][y];
      }
      const std::size_t nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      std::vector<std::size_t> right(nclasses());
      for (std::size_t y = 0; y < nclasses(); ++y) right[y] = total[y] - left[y];
      Candidate c;
      c.score = weighted(left, nl) + weighted(right, nr);
      c.split.feature = f;
      c.split.numeric = false;
      c.split.categories = s;
      if (better(c, best, tol)) best = std::move(c);
    }
  }

  NodeId grow(const std::vector<std::size_t>& rows, int depth) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_.back().id = id;

    const auto counts = counts_of(rows);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    std::optional<Candidate> best;
    if (!pure && depth < config_.max_depth && rows.size() >= static_cast<std::size_t>(config_.min_samples_split)) {
      const double tol = 1e-12 * static_cast<double>(rows.size());
      for (std::size_t f = 0; f < data_.schema.size(); ++f) {
        if (data_.schema[f].numeric()) {
          consider_numeric(f, rows, best, tol);
        } else {
          consider_categorical(f, rows, best, tol);
        }
      }
    }

    if (!best) {
      LeafStats leaf;
      leaf.class_counts = counts;
      leaf.member_rows = rows;
      leaf.category_counts.resize(data_.schema.size());
      for (std::size_t f = 0; f < data_.schema.size(); ++f) {
        if (data_.schema[f].numeric()) continue;
        auto& cc = leaf.category_counts[f];
        cc.assign(data_.schema[f].categories.size(), 0);
        for (auto r : rows) ++cc[static_cast<std::size_t>(columns_[f][r])];
      }
      finalize_leaf(leaf);
      nodes_[id].leaf = std::move(leaf);
      return id;
    }

    const auto& spec = data_.schema[best->split.feature];
    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
      (best->split.test(spec, data_.rows[r][best->split.feature]) ? left_rows : right_rows).push_back(r);
    }
    nodes_[id].split = best->split;
    NodeId l = grow(left_rows, depth + 1);
    NodeId r = grow(right_rows, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const Dataset& data_;
  const TrainConfig& config_;
  std::vector<std::vector<double>> columns_;
  std::vector<Node> nodes_;
};

}  // namespace detail

// Greedy CART with Gini impurity. Deterministic for a given dataset and config.
inline DecisionTree train(const Dataset& data, const TrainConfig& config = {}) {
  config.validate();
  if (data.rows.empty()) throw ModelError("cannot train on an empty dataset");
  detail::CartBuilder builder(data, config);
  return DecisionTree(data.schema, builder.build(), config);
}

inline Prediction predict(const DecisionTree& tree, const Instance& inst) { return tree.predict(inst); }

// Mean decrease in impurity, normalised to sum to one when the tree has splits.
inline std::vector<double> feature_importance(const DecisionTree& tree) {
  std::vector<double> w(tree.schema().size(), 0.0);
  const auto root_counts = tree.subtree_counts(0);
  const double total = static_cast<double>(std::accumulate(root_counts.begin(), root_counts.end(), std::size_t{0}));
  std::vector<double> split_uses(w.size(), 0.0);
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf()) continue;
    auto counts = tree.subtree_counts(n.id);
    auto lc = tree.subtree_counts(n.left);
    auto rc = tree.subtree_counts(n.right);
    auto sum = [](const auto& v) { return static_cast<double>(std::accumulate(v.begin(), v.end(), std::size_t{0})); };
    const double nt = sum(counts), nl = sum(lc), nr = sum(rc);
    split_uses[n.split->feature] += 1.0;
    if (nt == 0 || total == 0) continue;
    const double decrease = gini(counts) - (nl / nt) * gini(lc) - (nr / nt) * gini(rc);
    w[n.split->feature] += (nt / total) * std::max(0.0, decrease);
  }
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  if (s <= 0) {
    // Splits that removed no impurity: fall back to usage counts.
    w = split_uses;
    s = std::accumulate(w.begin(), w.end(), 0.0);
  }
  if (s > 0)
    for (auto& x : w) x /= s;
  return w;
}

// Gower distance: mean over features of |Δ|/range (numeric) or 0/1 mismatch.
inline double gower_distance(const DatasetSchema& schema, const FeatureRanges& ranges, const Instance& a,
                             const Instance& b) {
  if (schema.size() == 0) return 0.0;
  double d = 0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].numeric()) {
      const double span = ranges.span(f);
      if (span > 0) d += std::min(1.0, std::fabs(std::get<double>(a[f]) - std::get<double>(b[f])) / span);
    } else if (a[f] != b[f]) {
      d += 1.0;
    }
  }
  return d / static_cast<double>(schema.size());
}

// Training row in the instance's leaf closest to it; ties go to the lowest row index.
inline std::size_t exemplar(const DecisionTree& tree, const Dataset& data, const FeatureRanges& ranges,
                            const Instance& inst) {
  const auto p = tree.predict(inst);
  const auto& members = tree.leaf(p.leaf).member_rows;
  if (members.empty()) throw ModelError("exemplars unavailable");
  std::optional<std::size_t> best;
  double best_d = kInf;
  for (auto r : members) {
    if (r >= data.size()) throw ModelError("exemplars unavailable");
    const double d = gower_distance(tree.schema(), ranges, data.rows[r], inst);
    if (d < best_d || (d == best_d && r < *best)) {
      best_d = d;
      best = r;
    }
  }
  return *best;
}

inline std::string leaf_text(const DatasetSchema& schema, const LeafStats& leaf) {
  char purity[32];
  std::snprintf(purity, sizeof purity, "%.2f", leaf.purity);
  return schema.classes[leaf.predicted_class] + " (" + std::to_string(leaf.support) + ", " + purity + ")";
}

struct TreeRendering {
  std::string text;
  json structured;
};

inline TreeRendering visualise(const DecisionTree& tree) {
  TreeRendering out;
  const auto& schema = tree.schema();
  json nodes = json::array();
  std::function<void(NodeId, std::size_t, const char*)> walk = [&](NodeId id, std::size_t depth, const char* tag) {
    const auto& n = tree.node(id);
    out.text += std::string(2 * depth, ' ') + tag;
    json j{{"id", n.id}, {"depth", depth}};
    if (n.is_leaf()) {
      out.text += leaf_text(schema, n.leaf) + "\n";
      j["kind"] = "leaf";
      json counts = json::object();
      for (std::size_t c = 0; c < schema.classes.size(); ++c) counts[schema.classes[c]] = n.leaf.class_counts[c];
      j["class_counts"] = counts;
      j["predicted_class"] = schema.classes[n.leaf.predicted_class];
      j["support"] = n.leaf.support;
      j["purity"] = n.leaf.purity;
      nodes.push_back(std::move(j));
      return;
    }
    const auto& s = *n.split;
    out.text += split_text(schema, s) + "\n";
    j["kind"] = "split";
    j["feature"] = schema[s.feature].name;
    if (s.numeric) {
      j["threshold"] = s.threshold;
    } else {
      json cats = json::array();
      for (auto c : s.categories) cats.push_back(schema[s.feature].categories[c]);
      j["categories"] = cats;
    }
    j["left"] = n.left;
    j["right"] = n.right;
    nodes.push_back(std::move(j));
    walk(n.left, depth + 1, "[yes] ");
    walk(n.right, depth + 1, "[no] ");
  };
  walk(0, 0, "");
  out.structured = json{{"nodes", std::move(nodes)}};
  return out;
}

inline json tree_to_json(const DecisionTree& tree) {
  const auto& schema = tree.schema();
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json j{{"id", n.id}};
    if (n.is_leaf()) {
      j["kind"] = "leaf";
      json counts = json::object();
      for (std::size_t c = 0; c < schema.classes.size(); ++c) counts[schema.classes[c]] = n.leaf.class_counts[c];
      j["class_counts"] = counts;
      j["member_rows"] = n.leaf.member_rows;
      json cat_counts = json::object();
      for (std::size_t f = 0; f < n.leaf.category_counts.size(); ++f) {
        if (n.leaf.category_counts[f].empty()) continue;
        json per = json::object();
        for (std::size_t c = 0; c < n.leaf.category_counts[f].size(); ++c)
          per[schema[f].categories[c]] = n.leaf.category_counts[f][c];
        cat_counts[schema[f].name] = per;
      }
      if (!cat_counts.empty()) j["category_counts"] = cat_counts;
    } else {
      const auto& s = *n.split;
      j["kind"] = "split";
      j["feature"] = schema[s.feature].name;
      if (s.numeric) {
        j["threshold"] = s.threshold;
      } else {
        json cats = json::array();
        for (auto c : s.categories) cats.push_back(schema[s.feature].categories[c]);
        j["categories"] = cats;
      }
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return json{{"schema_fingerprint", schema.fingerprint()}, {"config", tree.config().to_json()}, {"nodes", nodes}};
}

inline std::string serialize(const DecisionTree& tree) { return tree_to_json(tree).dump(2); }

inline DecisionTree tree_from_json(const json& doc, const DatasetSchema& schema) {
  try {
    if (!doc.is_object()) throw ModelError("model document: expected a JSON object");
    if (doc.value("schema_fingerprint", std::string{}) != schema.fingerprint())
      throw ModelError("model schema fingerprint does not match the schema");
    TrainConfig config = doc.contains("config") ? TrainConfig::from_json(doc.at("config")) : TrainConfig{};
    const auto& jnodes = doc.at("nodes");
    if (!jnodes.is_array()) throw ModelError("model document: nodes must be an array");
    std::vector<Node> nodes(jnodes.size());
    std::vector<bool> filled(jnodes.size(), false);
    for (const auto& jn : jnodes) {
      const auto id = jn.at("id").get<NodeId>();
      if (id < 0 || id >= static_cast<NodeId>(nodes.size()) || filled[id])
        throw ModelError("model document: invalid or duplicate node id " + std::to_string(id));
      filled[id] = true;
      Node n;
      n.id = id;
      const auto kind = jn.at("kind").get<std::string>();
      if (kind == "leaf") {
        n.leaf.class_counts.assign(schema.classes.size(), 0);
        for (const auto& [label, count] : jn.at("class_counts").items()) {
          auto ci = schema.class_index(label);
          if (!ci) throw ModelError("model document: unknown class label '" + label + "'");
          n.leaf.class_counts[*ci] = count.get<std::size_t>();
        }
        if (jn.contains("member_rows")) n.leaf.member_rows = jn.at("member_rows").get<std::vector<std::size_t>>();
        n.leaf.category_counts.resize(schema.size());
        if (jn.contains("category_counts")) {
          for (const auto& [fname, per] : jn.at("category_counts").items()) {
            auto f = schema.index_of(fname);
            if (!f || schema[*f].numeric()) throw ModelError("model document: bad category_counts feature '" + fname + "'");
            auto& cc = n.leaf.category_counts[*f];
            cc.assign(schema[*f].categories.size(), 0);
            for (const auto& [label, count] : per.items()) {
              auto c = schema[*f].category_index(label);
              if (!c) throw ModelError("model document: unknown category '" + label + "'");
              cc[*c] = count.get<std::size_t>();
            }
          }
        }
      } else if (kind == "split") {
        Split s;
        const auto fname = jn.at("feature").get<std::string>();
        auto f = schema.index_of(fname);
        if (!f) throw ModelError("model document: unknown feature '" + fname + "'");
        s.feature = *f;
        s.numeric = schema[*f].numeric();
        if (s.numeric) {
          s.threshold = jn.at("threshold").get<double>();
        } else {
          for (const auto& label : jn.at("categories")) {
            auto c = schema[*f].category_index(label.get<std::string>());
            if (!c) throw ModelError("model document: unknown category '" + label.get<std::string>() + "'");
            s.categories.push_back(*c);
          }
          std::sort(s.categories.begin(), s.categories.end());
        }
        n.split = s;
        n.left = jn.at("left").get<NodeId>();
        n.right = jn.at("right").get<NodeId>();
      } else {
        throw ModelError("model document: unknown node kind '" + kind + "'");
      }
      nodes[id] = std::move(n);
    }
    return DecisionTree(schema, std::move(nodes), config);
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
}

inline DecisionTree deserialize(std::string_view bytes, const DatasetSchema& schema) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
  return tree_from_json(doc, schema);
}

}  // namespace cfx
