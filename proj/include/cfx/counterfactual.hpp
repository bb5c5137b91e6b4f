#pragma once

// Class-contrastive counterfactuals over a decision tree: enumeration under
// user constraints, concrete counterfactual instances, generalisation ranges
// and protected-attribute fairness probing.

#include <algorithm>
#include <cassert>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cfx/meta_space.hpp"

namespace cfx {

// "despite" features may not change; "given" features must change, optionally
// to a pinned value.
struct ConstraintSet {
  std::set<std::size_t> forbidden;
  std::map<std::size_t, std::optional<Value>> required;

  bool empty() const { return forbidden.empty() && required.empty(); }

  void validate(const DatasetSchema& schema) const {
    for (auto f : forbidden) {
      if (f >= schema.size()) throw ConstraintError("unknown feature in constraints");
      if (required.count(f)) throw ConstraintError(schema[f].name + " is both given and despite");
    }
    for (const auto& [f, pin] : required) {
      if (f >= schema.size()) throw ConstraintError("unknown feature in constraints");
      if (pin && !value_valid(schema[f], *pin))
        throw ConstraintError(schema[f].name + ": invalid pinned value '" + value_text(*pin) + "'");
    }
  }

  // Canonical text, also used as the cursor key: "given income=60; despite age".
  std::string describe(const DatasetSchema& schema) const {
    std::string out;
    if (!required.empty()) {
      out += "given " + join(required, " and ", [&](const auto& kv) {
        return schema[kv.first].name + (kv.second ? " = " + value_text(*kv.second) : std::string{});
      });
    }
    if (!forbidden.empty()) {
      if (!out.empty()) out += " and ";
      out += "despite " + join(forbidden, " and ", [&](std::size_t f) { return schema[f].name; });
    }
    return out;
  }

  std::string fingerprint(const DatasetSchema& schema) const { return "why:" + describe(schema); }

  json to_json(const DatasetSchema& schema) const {
    json despite = json::array();
    for (auto f : forbidden) despite.push_back(schema[f].name);
    json given = json::object();
    for (const auto& [f, pin] : required) given[schema[f].name] = pin ? value_json(*pin) : json(nullptr);
    return {{"despite", despite}, {"given", given}};
  }

  static ConstraintSet from_json(const DatasetSchema& schema, const json& j) {
    ConstraintSet c;
    for (const auto& n : j.at("despite")) c.forbidden.insert(schema.require_index(n.get<std::string>()));
    for (const auto& [name, pin] : j.at("given").items()) {
      auto f = schema.require_index(name);
      c.required[f] = pin.is_null() ? std::nullopt : std::optional<Value>(value_from_json(schema[f], pin));
    }
    return c;
  }

  bool operator==(const ConstraintSet&) const = default;
};

struct RankKeys {
  std::size_t length = 0;
  std::size_t distance = 0;
  double purity = 0.0;
  std::size_t support = 0;
  NodeId leaf = 0;

  bool operator<(const RankKeys& o) const {
    return std::make_tuple(length, distance, -purity, o.support, leaf) <
           std::make_tuple(o.length, o.distance, -o.purity, support, o.leaf);
  }
  bool operator==(const RankKeys&) const = default;
};

struct Counterfactual {
  NodeId target_leaf = 0;
  std::vector<std::size_t> change_set;  // sorted feature indices
  Instance cf_instance;
  std::size_t contrast_class = 0;
  RankKeys keys;

  std::size_t length() const { return change_set.size(); }
  bool operator==(const Counterfactual&) const = default;
};

namespace detail {

// Round-trips through the printed form so displayed values are the stored values.
inline double snap(double v) { return *parse_number(format_number(v)); }

inline double numeric_boundary_value(double x, const FeatureRange& r, double res) {
  if (x <= r.lower) {
    // Smallest grid value strictly above the lower bound.
    double v = snap((std::floor(r.lower / res) + 1.0) * res);
    while (!(v > r.lower)) v = snap(v + res);
    if (v > r.upper) v = r.upper;
    return v;
  }
  // Largest grid value not above the upper bound; the bound itself when on grid.
  double v = snap(std::floor(r.upper / res) * res);
  while (v > r.upper) v = snap(v - res);
  if (!(v > r.lower)) v = r.upper;
  return v;
}

}  // namespace detail

// Moves every feature violating the predicate to an admissible value: numeric
// features to the nearest boundary on the resolution grid, categorical features
// to the admissible category most frequent in the target leaf. Pinned values
// override the rule and must be admissible.
inline Instance construct_instance(const DatasetSchema& schema, const Instance& inst, const PathPredicate& pred,
                                   const LeafStats* target = nullptr,
                                   const std::map<std::size_t, std::optional<Value>>* pins = nullptr) {
  Instance out = inst;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& spec = schema[f];
    const auto& range = pred.ranges[f];
    if (pins) {
      auto it = pins->find(f);
      if (it != pins->end() && it->second) {
        if (!range.admits(spec, *it->second)) throw ConstraintError(spec.name + ": pinned value inadmissible");
        out[f] = *it->second;
        continue;
      }
    }
    if (range.admits(spec, inst[f])) continue;
    if (spec.numeric()) {
      out[f] = detail::numeric_boundary_value(std::get<double>(inst[f]), range, spec.resolution);
      continue;
    }
    const std::vector<std::size_t>* freq = nullptr;
    if (target && f < target->category_counts.size() && !target->category_counts[f].empty())
      freq = &target->category_counts[f];
    std::optional<std::size_t> best;
    for (auto c : range.allowed_indices()) {
      if (!best || (freq && (*freq)[c] > (*freq)[*best])) best = c;
    }
    out[f] = spec.categories[*best];
  }
  return out;
}

// Second most likely class in the source leaf; ties follow schema class order.
inline std::size_t default_contrast(const DecisionTree& tree, const Instance& inst) {
  const auto p = tree.predict(inst);
  const auto& counts = tree.leaf(p.leaf).class_counts;
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c == p.class_index) continue;
    if (!best || counts[c] > counts[*best]) best = c;
  }
  return *best;
}

// All counterfactuals admitted by the constraints, shortest first.
inline std::vector<Counterfactual> enumerate(const DecisionTree& tree, const MetaSpace& space, const Instance& inst,
                                             std::size_t contrast_class, const ConstraintSet& constraints) {
  const auto& schema = tree.schema();
  if (contrast_class >= schema.classes.size()) throw ConstraintError("unknown contrast class");
  constraints.validate(schema);
  const auto source = tree.predict(inst);

  std::vector<Counterfactual> out;
  for (const auto& ranked : ranked_contrast_leaves(space, tree, source.leaf, contrast_class)) {
    const auto pred = tree.leaf_predicate(ranked.leaf);
    std::vector<std::size_t> change;
    for (std::size_t f = 0; f < schema.size(); ++f)
      if (!pred.ranges[f].admits(schema[f], inst[f])) change.push_back(f);
    assert(!change.empty());

    bool keep = std::none_of(change.begin(), change.end(), [&](auto f) { return constraints.forbidden.count(f) > 0; });
    for (const auto& [f, pin] : constraints.required) {
      if (!keep) break;
      if (!std::binary_search(change.begin(), change.end(), f)) keep = false;
      else if (pin && !pred.ranges[f].admits(schema[f], *pin)) keep = false;
    }
    if (!keep) continue;

    const auto& leaf = tree.leaf(ranked.leaf);
    Counterfactual cf;
    cf.target_leaf = ranked.leaf;
    cf.change_set = std::move(change);
    cf.cf_instance = construct_instance(schema, inst, pred, &leaf, &constraints.required);
    cf.contrast_class = contrast_class;
    cf.keys = {cf.change_set.size(), ranked.distance, leaf.purity, leaf.support, ranked.leaf};
    out.push_back(std::move(cf));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.keys < b.keys; });

  std::vector<Counterfactual> unique;
  for (auto& cf : out) {
    bool dup = std::any_of(unique.begin(), unique.end(), [&](const Counterfactual& u) {
      return u.change_set == cf.change_set && u.cf_instance == cf.cf_instance;
    });
    if (!dup) unique.push_back(std::move(cf));
  }
  return unique;
}

// Hands out enumerated candidates one at a time. Within the shortest remaining
// length, an optional scorer may promote a candidate; otherwise rank order holds.
class EnumerationCursor {
 public:
  EnumerationCursor() = default;
  EnumerationCursor(std::string fingerprint, std::vector<Counterfactual> candidates)
      : fingerprint_(std::move(fingerprint)), all_(std::move(candidates)) {
    for (std::size_t i = 0; i < all_.size(); ++i) remaining_.push_back(i);
  }

  template <class Scorer>
  std::optional<Counterfactual> next(Scorer&& score) {
    if (remaining_.empty()) return std::nullopt;
    const auto shortest = all_[remaining_.front()].length();
    std::size_t pick = 0;
    std::size_t best_score = score(all_[remaining_.front()]);
    for (std::size_t k = 1; k < remaining_.size() && all_[remaining_[k]].length() == shortest; ++k) {
      const auto s = score(all_[remaining_[k]]);
      if (s > best_score) {
        best_score = s;
        pick = k;
      }
    }
    const auto idx = remaining_[pick];
    remaining_.erase(remaining_.begin() + static_cast<std::ptrdiff_t>(pick));
    emitted_.push_back(idx);
    return all_[idx];
  }

  std::optional<Counterfactual> next() {
    return next([](const Counterfactual&) { return std::size_t{0}; });
  }

  bool exhausted() const { return remaining_.empty(); }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<Counterfactual>& candidates() const { return all_; }
  const std::vector<std::size_t>& emitted() const { return emitted_; }
  const std::vector<std::size_t>& remaining() const { return remaining_; }

  // Replays a recorded emission order (positions into candidates()).
  void restore(const std::vector<std::size_t>& emitted) {
    for (auto idx : emitted) {
      auto it = std::find(remaining_.begin(), remaining_.end(), idx);
      if (it == remaining_.end()) throw Error("cursor snapshot does not match its candidates");
      remaining_.erase(it);
      emitted_.push_back(idx);
    }
  }

 private:
  std::string fingerprint_;
  std::vector<Counterfactual> all_;
  std::vector<std::size_t> remaining_;
  std::vector<std::size_t> emitted_;
};

struct ContextRange {
  std::size_t feature = 0;
  FeatureRange range;
};

// Ranges within which each changed value may vary while the explanation holds.
inline std::vector<ContextRange> context_statement(const Counterfactual& cf, const DecisionTree& tree) {
  const auto pred = tree.leaf_predicate(cf.target_leaf);
  std::vector<ContextRange> out;
  for (auto f : cf.change_set) out.push_back({f, pred.ranges[f]});
  return out;
}

// "income can span (50, +∞)"
inline std::string context_text(const DatasetSchema& schema, const std::vector<ContextRange>& ranges) {
  return join(ranges, " and ", [&](const ContextRange& r) {
    return schema[r.feature].name + " can span " + r.range.interval_text(schema[r.feature]);
  });
}

struct FairnessWitness {
  std::vector<std::size_t> protected_features;
  Counterfactual counterfactual;
};

struct FairnessVerdict {
  bool unfair = false;
  std::vector<FairnessWitness> witnesses;
  std::vector<std::vector<std::size_t>> checked;
};

// Protected units are each protected feature on its own, then each declared
// combination. A unit is witnessed when some counterfactual changes all of it.
inline std::vector<std::vector<std::size_t>> protected_units(const DatasetSchema& schema) {
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (schema[f].is_protected) units.push_back({f});
  for (const auto& combo : schema.protected_combinations)
    if (std::find(units.begin(), units.end(), combo) == units.end()) units.push_back(combo);
  return units;
}

inline FairnessVerdict fairness_check(const DecisionTree& tree, const MetaSpace& space, const Instance& inst) {
  FairnessVerdict verdict;
  const auto contrast = default_contrast(tree, inst);
  for (const auto& unit : protected_units(tree.schema())) {
    verdict.checked.push_back(unit);
    ConstraintSet c;
    for (auto f : unit) c.required[f] = std::nullopt;
    auto cfs = enumerate(tree, space, inst, contrast, c);
    if (!cfs.empty()) verdict.witnesses.push_back({unit, std::move(cfs.front())});
  }
  verdict.unfair = !verdict.witnesses.empty();
  return verdict;
}

inline json counterfactual_to_json(const DatasetSchema& schema, const Counterfactual& cf) {
  json changes = json::array();
  for (auto f : cf.change_set) changes.push_back(schema[f].name);
  return {{"target_leaf", cf.target_leaf},
          {"change_set", changes},
          {"cf_instance", instance_to_json(schema, cf.cf_instance)},
          {"contrast_class", schema.classes[cf.contrast_class]},
          {"keys",
           {{"length", cf.keys.length},
            {"distance", cf.keys.distance},
            {"purity", cf.keys.purity},
            {"support", cf.keys.support},
            {"leaf", cf.keys.leaf}}}};
}

inline Counterfactual counterfactual_from_json(const DatasetSchema& schema, const json& j) {
  Counterfactual cf;
  cf.target_leaf = j.at("target_leaf").get<NodeId>();
  for (const auto& n : j.at("change_set")) cf.change_set.push_back(schema.require_index(n.get<std::string>()));
  std::sort(cf.change_set.begin(), cf.change_set.end());
  cf.cf_instance = instance_from_json(schema, j.at("cf_instance"));
  auto ci = schema.class_index(j.at("contrast_class").get<std::string>());
  if (!ci) throw DataError("unknown contrast class");
  cf.contrast_class = *ci;
  const auto& k = j.at("keys");
  cf.keys = {k.at("length").get<std::size_t>(), k.at("distance").get<std::size_t>(), k.at("purity").get<double>(),
             k.at("support").get<std::size_t>(), k.at("leaf").get<NodeId>()};
  return cf;
}

}  // namespace cfx
