#pragma once

#include <optional>
#include <string>

#include "cfx/meta_space.hpp"

namespace cfx {

// Everything an explanation session needs, loaded once and shared read-only.
// The model file carries the schema, the tree, per-feature training ranges and
// (optionally) the training rows used for exemplars.
struct ModelBundle {
  DecisionTree tree;
  MetaSpace space;
  FeatureRanges ranges;
  std::optional<Dataset> training;

  const DatasetSchema& schema() const { return tree.schema(); }

  static ModelBundle from_training(const Dataset& data, const TrainConfig& config) {
    ModelBundle b;
    b.tree = train(data, config);
    b.space = MetaSpace::build(b.tree);
    b.ranges = FeatureRanges::from_dataset(data);
    b.training = data;
    return b;
  }

  static ModelBundle from_tree(DecisionTree tree, FeatureRanges ranges, std::optional<Dataset> training = {}) {
    ModelBundle b;
    b.tree = std::move(tree);
    b.space = MetaSpace::build(b.tree);
    b.ranges = std::move(ranges);
    b.training = std::move(training);
    return b;
  }
};

inline std::string serialize_bundle(const ModelBundle& b) {
  const auto& schema = b.schema();
  json doc = tree_to_json(b.tree);
  doc["schema"] = schema.to_json();
  json ranges = json::object();
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (schema[f].numeric()) ranges[schema[f].name] = {b.ranges.bounds[f].first, b.ranges.bounds[f].second};
  doc["feature_ranges"] = ranges;
  if (b.training) {
    json rows = json::array();
    for (std::size_t r = 0; r < b.training->size(); ++r) {
      json row = json::array();
      for (const auto& v : b.training->rows[r].values) row.push_back(value_json(v));
      row.push_back(schema.classes[b.training->labels[r]]);
      rows.push_back(std::move(row));
    }
    doc["training_rows"] = rows;
  }
  return doc.dump(2);
}

inline ModelBundle load_bundle(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema")) throw ModelError("model document has no embedded schema");
  auto schema = schema_from_json(doc.at("schema"));
  auto tree = tree_from_json(doc, schema);
  try {
    FeatureRanges ranges;
    ranges.bounds.assign(schema.size(), {0.0, 0.0});
    if (doc.contains("feature_ranges")) {
      for (const auto& [name, lohi] : doc.at("feature_ranges").items()) {
        auto f = schema.index_of(name);
        if (!f) throw ModelError("feature_ranges: unknown feature '" + name + "'");
        ranges.bounds[*f] = {lohi.at(0).get<double>(), lohi.at(1).get<double>()};
      }
    }
    std::optional<Dataset> training;
    if (doc.contains("training_rows")) {
      Dataset data;
      data.schema = schema;
      for (const auto& row : doc.at("training_rows")) {
        if (!row.is_array() || row.size() != schema.size() + 1) throw ModelError("training_rows: bad row width");
        Instance inst;
        for (std::size_t f = 0; f < schema.size(); ++f) inst.values.push_back(value_from_json(schema[f], row[f]));
        auto label = schema.class_index(row.back().get<std::string>());
        if (!label) throw ModelError("training_rows: unknown class label");
        data.rows.push_back(std::move(inst));
        data.labels.push_back(*label);
      }
      training = std::move(data);
    }
    return ModelBundle::from_tree(std::move(tree), std::move(ranges), std::move(training));
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace cfx
