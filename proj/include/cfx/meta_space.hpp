#pragma once

// Meta-feature space over a tree's unique split partitions. Each leaf is coded
// +1 / -1 / 0 per partition (true branch, false branch, not on the path), and
// leaves are compared by counting partitions taken in opposite directions.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfx/tree.hpp"

namespace cfx {

using Partition = Split;
using LeafCode = std::vector<std::int8_t>;

class MetaSpace {
 public:
  MetaSpace() = default;

  static MetaSpace build(const DecisionTree& tree) {
    MetaSpace space;
    for (const auto& n : tree.nodes())
      if (!n.is_leaf()) space.partitions_.push_back(*n.split);
    std::sort(space.partitions_.begin(), space.partitions_.end());
    space.partitions_.erase(std::unique(space.partitions_.begin(), space.partitions_.end()), space.partitions_.end());

    for (NodeId leaf : tree.leaf_ids()) {
      LeafCode code(space.partitions_.size(), 0);
      for (auto [nid, outcome] : tree.path_to(leaf)) {
        const auto p = space.index_of(*tree.node(nid).split);
        const std::int8_t dir = outcome ? 1 : -1;
        if (code[p] == -dir) throw ModelError("leaf " + std::to_string(leaf) + " takes both branches of one partition");
        code[p] = dir;
      }
      space.codes_.emplace(leaf, std::move(code));
    }
    return space;
  }

  const std::vector<Partition>& partitions() const { return partitions_; }
  const std::map<NodeId, LeafCode>& leaf_codes() const { return codes_; }

  const LeafCode& code(NodeId leaf) const {
    auto it = codes_.find(leaf);
    if (it == codes_.end()) throw ModelError("unknown leaf id " + std::to_string(leaf));
    return it->second;
  }

  std::size_t index_of(const Partition& p) const {
    auto it = std::lower_bound(partitions_.begin(), partitions_.end(), p);
    if (it == partitions_.end() || !(*it == p)) throw ModelError("partition not in meta space");
    return static_cast<std::size_t>(it - partitions_.begin());
  }

  // Text dump: one line per partition, then one line per leaf code.
  std::string dump(const DatasetSchema& schema) const {
    std::string out = "partitions:\n";
    for (std::size_t i = 0; i < partitions_.size(); ++i)
      out += "  p" + std::to_string(i) + ": " + split_text(schema, partitions_[i]) + "\n";
    out += "leaf codes:\n";
    for (const auto& [leaf, code] : codes_) {
      out += "  leaf " + std::to_string(leaf) + ": (";
      out += join(code, ", ", [](std::int8_t v) { return v > 0 ? std::string("+1") : v < 0 ? std::string("-1") : std::string("0"); });
      out += ")\n";
    }
    return out;
  }

  bool operator==(const MetaSpace&) const = default;

 private:
  std::vector<Partition> partitions_;
  std::map<NodeId, LeafCode> codes_;
};

// Number of partitions present on both paths with opposite directions.
inline std::size_t distance(const LeafCode& a, const LeafCode& b) {
  if (a.size() != b.size()) throw ModelError("leaf codes have different lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] * b[i] == -1) ++d;
  return d;
}

struct RankedLeaf {
  NodeId leaf = 0;
  std::size_t distance = 0;
  bool operator==(const RankedLeaf&) const = default;
};

// Leaves predicting the contrast class, nearest first; ties by purity, then
// support (both descending), then leaf id. The source leaf is never listed.
inline std::vector<RankedLeaf> ranked_contrast_leaves(const MetaSpace& space, const DecisionTree& tree,
                                                      NodeId source, std::size_t contrast_class) {
  if (contrast_class >= tree.schema().classes.size()) throw ModelError("contrast class not in schema");
  const auto& src = space.code(source);
  std::vector<RankedLeaf> out;
  for (NodeId leaf : tree.leaf_ids()) {
    if (leaf == source || tree.leaf(leaf).predicted_class != contrast_class) continue;
    out.push_back({leaf, distance(src, space.code(leaf))});
  }
  std::sort(out.begin(), out.end(), [&](const RankedLeaf& a, const RankedLeaf& b) {
    const auto& la = tree.leaf(a.leaf);
    const auto& lb = tree.leaf(b.leaf);
    if (a.distance != b.distance) return a.distance < b.distance;
    if (la.purity != lb.purity) return la.purity > lb.purity;
    if (la.support != lb.support) return la.support > lb.support;
    return a.leaf < b.leaf;
  });
  return out;
}

}  // namespace cfx
