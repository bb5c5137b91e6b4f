#pragma once

// Dataset schemas, instances, training data and personas.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cfx/csv.hpp"
#include "cfx/util.hpp"
#include "json.hpp"

namespace cfx {

using json = nlohmann::json;

enum class FeatureKind { numeric, categorical };

// A feature value: a number for numeric features, a category label otherwise.
using Value = std::variant<double, std::string>;

inline std::string value_text(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

inline json value_json(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) {
    if (*d == std::floor(*d) && std::fabs(*d) < 9e15) return static_cast<long long>(*d);
    return *d;
  }
  return std::get<std::string>(v);
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  double resolution = 1.0;
  std::vector<std::string> categories;
  std::string display_name;
  std::optional<std::string> unit;
  bool is_protected = false;

  bool numeric() const { return kind == FeatureKind::numeric; }

  std::optional<std::size_t> category_index(std::string_view label) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == label) return i;
    return std::nullopt;
  }

  bool operator==(const FeatureSpec&) const = default;
};

class DatasetSchema {
 public:
  std::vector<FeatureSpec> features;
  std::string target_name;
  std::vector<std::string> classes;
  // Feature indices, each combination sorted ascending.
  std::vector<std::vector<std::size_t>> protected_combinations;

  bool operator==(const DatasetSchema&) const = default;

  std::size_t size() const { return features.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t require_index(std::string_view name) const {
    if (auto i = index_of(name)) return *i;
    throw DataError("unknown feature '" + std::string(name) + "'");
  }

  std::optional<std::size_t> class_index(std::string_view label) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == label) return i;
    return std::nullopt;
  }

  json to_json() const {
    json feats = json::array();
    for (const auto& f : features) {
      json j{{"name", f.name},
             {"kind", f.numeric() ? "numeric" : "categorical"},
             {"display_name", f.display_name},
             {"protected", f.is_protected}};
      if (f.numeric()) {
        j["resolution"] = f.resolution;
      } else {
        j["categories"] = f.categories;
      }
      if (f.unit) j["unit"] = *f.unit;
      feats.push_back(std::move(j));
    }
    json combos = json::array();
    for (const auto& c : protected_combinations) {
      json names = json::array();
      for (auto i : c) names.push_back(features[i].name);
      combos.push_back(std::move(names));
    }
    return json{{"features", std::move(feats)},
                {"target_name", target_name},
                {"classes", classes},
                {"protected_combinations", std::move(combos)}};
  }

  std::string fingerprint() const { return fnv1a_hex(to_json().dump()); }
};

namespace detail {

inline const json& require_field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw SchemaError(path + "." + key + ": missing field");
  return obj.at(key);
}

inline std::string require_string(const json& obj, const char* key, const std::string& path) {
  const auto& v = require_field(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

}  // namespace detail

inline DatasetSchema schema_from_json(const json& doc) {
  using detail::require_field;
  using detail::require_string;
  if (!doc.is_object()) throw SchemaError("schema: expected a JSON object");

  DatasetSchema schema;
  const auto& feats = require_field(doc, "features", "schema");
  if (!feats.is_array()) throw SchemaError("schema.features: expected an array");
  if (feats.empty()) throw SchemaError("schema.features: at least one feature is required");

  std::set<std::string> names;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const std::string path = "schema.features[" + std::to_string(i) + "]";
    const auto& jf = feats[i];
    FeatureSpec f;
    f.name = require_string(jf, "name", path);
    if (f.name.empty()) throw SchemaError(path + ".name: must not be empty");
    if (!names.insert(f.name).second) throw SchemaError(path + ".name: duplicate feature name '" + f.name + "'");

    const std::string kind = require_string(jf, "kind", path);
    if (kind == "numeric") {
      f.kind = FeatureKind::numeric;
      const auto& res = require_field(jf, "resolution", path);
      if (!res.is_number()) throw SchemaError(path + ".resolution: expected a number");
      f.resolution = res.get<double>();
      if (!(f.resolution > 0) || !std::isfinite(f.resolution))
        throw SchemaError(path + ".resolution: must be positive");
    } else if (kind == "categorical") {
      f.kind = FeatureKind::categorical;
      const auto& cats = require_field(jf, "categories", path);
      if (!cats.is_array() || cats.empty())
        throw SchemaError(path + ".categories: expected a non-empty array");
      std::set<std::string> seen;
      for (const auto& c : cats) {
        if (!c.is_string()) throw SchemaError(path + ".categories: labels must be strings");
        auto label = c.get<std::string>();
        if (!seen.insert(label).second)
          throw SchemaError(path + ".categories: duplicate category '" + label + "'");
        f.categories.push_back(std::move(label));
      }
    } else {
      throw SchemaError(path + ".kind: expected 'numeric' or 'categorical', got '" + kind + "'");
    }

    f.display_name = jf.contains("display_name") ? require_string(jf, "display_name", path) : f.name;
    if (jf.contains("unit") && !jf.at("unit").is_null()) f.unit = require_string(jf, "unit", path);
    if (jf.contains("protected")) {
      if (!jf.at("protected").is_boolean()) throw SchemaError(path + ".protected: expected a boolean");
      f.is_protected = jf.at("protected").get<bool>();
    }
    schema.features.push_back(std::move(f));
  }

  schema.target_name = require_string(doc, "target_name", "schema");
  if (names.count(schema.target_name))
    throw SchemaError("schema.target_name: '" + schema.target_name + "' is also a feature name");

  const auto& classes = require_field(doc, "classes", "schema");
  if (!classes.is_array()) throw SchemaError("schema.classes: expected an array");
  if (classes.empty()) throw SchemaError("schema.classes: empty class list");
  std::set<std::string> seen_classes;
  for (const auto& c : classes) {
    if (!c.is_string()) throw SchemaError("schema.classes: labels must be strings");
    auto label = c.get<std::string>();
    if (!seen_classes.insert(label).second) throw SchemaError("schema.classes: duplicate class '" + label + "'");
    schema.classes.push_back(std::move(label));
  }
  if (schema.classes.size() < 2) throw SchemaError("schema.classes: at least two classes are required");

  if (doc.contains("protected_combinations")) {
    const auto& combos = doc.at("protected_combinations");
    if (!combos.is_array()) throw SchemaError("schema.protected_combinations: expected an array");
    for (std::size_t i = 0; i < combos.size(); ++i) {
      const std::string path = "schema.protected_combinations[" + std::to_string(i) + "]";
      if (!combos[i].is_array() || combos[i].empty())
        throw SchemaError(path + ": expected a non-empty array of feature names");
      std::vector<std::size_t> combo;
      for (const auto& n : combos[i]) {
        if (!n.is_string()) throw SchemaError(path + ": feature names must be strings");
        auto idx = schema.index_of(n.get<std::string>());
        if (!idx) throw SchemaError(path + ": unknown feature '" + n.get<std::string>() + "'");
        combo.push_back(*idx);
      }
      std::sort(combo.begin(), combo.end());
      combo.erase(std::unique(combo.begin(), combo.end()), combo.end());
      schema.protected_combinations.push_back(std::move(combo));
    }
  }
  return schema;
}

inline DatasetSchema load_schema(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed schema document: ") + e.what());
  }
  return schema_from_json(doc);
}

// Instances hold one value per schema feature, in schema order.
struct Instance {
  std::vector<Value> values;

  const Value& operator[](std::size_t i) const { return values[i]; }
  Value& operator[](std::size_t i) { return values[i]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const Instance&) const = default;
  auto operator<=>(const Instance&) const = default;
};

// Coerces text to a value of the feature's kind. Category labels match exactly,
// then case-insensitively; the canonical label is returned.
inline Value parse_value(const FeatureSpec& f, std::string_view text) {
  text = trim(text);
  if (f.numeric()) {
    auto v = parse_number(text);
    if (!v) throw DataError(f.name + ": cannot parse '" + std::string(text) + "' as a number");
    return *v;
  }
  if (auto i = f.category_index(text)) return f.categories[*i];
  for (const auto& c : f.categories)
    if (iequals(c, text)) return c;
  throw DataError(f.name + ": unknown category '" + std::string(text) + "'");
}

inline Value value_from_json(const FeatureSpec& f, const json& j) {
  if (f.numeric()) {
    if (j.is_number()) {
      double v = j.get<double>();
      if (!std::isfinite(v)) throw DataError(f.name + ": value must be finite");
      return v;
    }
    if (j.is_string()) return parse_value(f, j.get<std::string>());
    throw DataError(f.name + ": expected a number");
  }
  if (j.is_string()) return parse_value(f, j.get<std::string>());
  if (j.is_number()) return parse_value(f, j.dump());
  throw DataError(f.name + ": expected a category label");
}

inline bool value_valid(const FeatureSpec& f, const Value& v) {
  if (f.numeric()) return std::holds_alternative<double>(v) && std::isfinite(std::get<double>(v));
  return std::holds_alternative<std::string>(v) && f.category_index(std::get<std::string>(v)).has_value();
}

inline void check_instance(const DatasetSchema& schema, const Instance& inst) {
  if (inst.size() != schema.size()) throw DataError("instance does not match the schema");
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (!value_valid(schema[i], inst[i])) throw DataError(schema[i].name + ": invalid value '" + value_text(inst[i]) + "'");
}

inline Instance validate_instance(const DatasetSchema& schema, const std::map<std::string, std::string>& raw) {
  for (const auto& [name, _] : raw)
    if (!schema.index_of(name)) throw DataError("extra feature " + name);
  Instance inst;
  inst.values.reserve(schema.size());
  for (const auto& f : schema.features) {
    auto it = raw.find(f.name);
    if (it == raw.end()) throw DataError("missing " + f.name);
    inst.values.push_back(parse_value(f, it->second));
  }
  return inst;
}

inline Instance instance_from_json(const DatasetSchema& schema, const json& obj) {
  if (!obj.is_object()) throw DataError("instance: expected a JSON object");
  for (const auto& [name, _] : obj.items())
    if (!schema.index_of(name)) throw DataError("extra feature " + name);
  Instance inst;
  for (const auto& f : schema.features) {
    if (!obj.contains(f.name)) throw DataError("missing " + f.name);
    inst.values.push_back(value_from_json(f, obj.at(f.name)));
  }
  return inst;
}

inline json instance_to_json(const DatasetSchema& schema, const Instance& inst) {
  json out = json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) out[schema[i].name] = value_json(inst[i]);
  return out;
}

// "age=25,income=40"
inline Instance parse_instance_literal(const DatasetSchema& schema, std::string_view text) {
  std::map<std::string, std::string> raw;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) {
      auto eq = item.find('=');
      if (eq == std::string_view::npos) throw DataError("expected name=value, got '" + std::string(item) + "'");
      raw[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return validate_instance(schema, raw);
}

struct Persona {
  std::string id;
  std::string label;
  Instance instance;
};

inline std::vector<Persona> load_personas(std::string_view bytes, const DatasetSchema& schema) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed persona document: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("personas: expected a JSON array");
  std::vector<Persona> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& p = doc[i];
    if (!p.is_object() || !p.contains("id") || !p.at("id").is_string())
      throw DataError("personas[" + std::to_string(i) + "]: missing string id");
    Persona persona;
    persona.id = p.at("id").get<std::string>();
    if (!ids.insert(persona.id).second) throw DataError("duplicate persona id '" + persona.id + "'");
    persona.label = p.contains("label") && p.at("label").is_string() ? p.at("label").get<std::string>() : persona.id;
    if (!p.contains("values")) throw DataError("persona '" + persona.id + "': missing values");
    try {
      persona.instance = instance_from_json(schema, p.at("values"));
    } catch (const DataError& e) {
      throw DataError("persona '" + persona.id + "': " + e.what());
    }
    out.push_back(std::move(persona));
  }
  return out;
}

inline json personas_to_json(const DatasetSchema& schema, const std::vector<Persona>& personas) {
  json out = json::array();
  for (const auto& p : personas)
    out.push_back({{"id", p.id}, {"label", p.label}, {"values", instance_to_json(schema, p.instance)}});
  return out;
}

struct Dataset {
  DatasetSchema schema;
  std::vector<Instance> rows;
  std::vector<std::size_t> labels;  // class indices

  std::size_t size() const { return rows.size(); }
};

inline Dataset load_dataset(std::string_view csv, const DatasetSchema& schema) {
  auto records = parse_csv(csv);
  if (records.empty()) throw DataError("CSV: missing header row");
  const auto& header = records.front();

  auto column_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (trim(header[c]) == name) return c;
    throw DataError("CSV: missing column '" + name + "'");
  };
  std::vector<std::size_t> columns;
  for (const auto& f : schema.features) columns.push_back(column_of(f.name));
  const std::size_t target_column = column_of(schema.target_name);

  Dataset data;
  data.schema = schema;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = "CSV row index " + std::to_string(r - 1);
    if (rec.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " + std::to_string(rec.size()));
    Instance inst;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& cell = rec[columns[i]];
      if (trim(cell).empty()) throw DataError(where + ", column '" + schema[i].name + "': missing value");
      try {
        inst.values.push_back(parse_value(schema[i], cell));
      } catch (const DataError& e) {
        throw DataError(where + ", column '" + schema[i].name + "': " + e.what());
      }
    }
    auto label = schema.class_index(std::string(trim(rec[target_column])));
    if (!label) throw DataError(where + ": unknown class label '" + std::string(trim(rec[target_column])) + "'");
    data.rows.push_back(std::move(inst));
    data.labels.push_back(*label);
  }
  return data;
}

// Per-feature [min, max] over training rows; categorical features get [0, 0].
struct FeatureRanges {
  std::vector<std::pair<double, double>> bounds;

  double span(std::size_t f) const { return bounds[f].second - bounds[f].first; }

  static FeatureRanges from_dataset(const Dataset& data) {
    FeatureRanges r;
    r.bounds.assign(data.schema.size(), {0.0, 0.0});
    for (std::size_t f = 0; f < data.schema.size(); ++f) {
      if (!data.schema[f].numeric() || data.rows.empty()) continue;
      double lo = kInf, hi = -kInf;
      for (const auto& row : data.rows) {
        double v = std::get<double>(row[f]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      r.bounds[f] = {lo, hi};
    }
    return r;
  }
};

}  // namespace cfx
