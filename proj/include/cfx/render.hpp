#pragma once

// Natural-language rendering of explanations and dialogue messages. All text
// comes from a flat key -> template table; "{name}" placeholders are filled in.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cfx/bundle.hpp"
#include "cfx/counterfactual.hpp"

namespace cfx {

inline constexpr std::string_view kDefaultLocale = R"(# key = template
seed = The model predicts {class} for this individual. Explanations apply to this prediction only.
failsafe = I cannot help you with this query.
budget = Your explanation budget for this session is used up.
exhausted = There are no further explanations.
exhausted.constrained = There are no further explanations {constraints}.
explanation = Explanation {index}: {text}
explanation.echo = Explanation {index} ({constraints}): {text}
cf.sentence = Had {clauses}, the decision would have been {class}.
cf.clause.up = your {name} been greater than {bound} (for example {value})
cf.clause.down = your {name} been at most {bound} (for example {value})
cf.clause.categorical = your {name} been {value}
cf.clause.obfuscated.up = your {name} been {adjective} higher
cf.clause.obfuscated.down = your {name} been {adjective} lower
cf.clause.obfuscated.up.age = you been {adjective} older
cf.clause.obfuscated.down.age = you been {adjective} younger
context = This explanation also holds when {ranges}.
shift = The context has changed, so earlier explanations no longer apply.
edit.changed = Your {name} is now {value} (was {old}). The decision is now {class} (was {old_class}).
edit.same = Your {name} is now {value} (was {old}). The decision remains {class}.
persona = Now explaining {label} ({id}). The model predicts {class} for this individual.
reset = Back to the original details. The model predicts {class} for this individual.
predict = The model predicts {class} for this individual.
whatif.assign = your {name} were {value}
whatif.none = nothing changed
whatif.current = If {assignments}, the decision would be {class} ({note}).
whatif.explanation = If {assignments} in explanation {index}, the decision would be {class} ({note}).
whatif.changed = changed from {base_class}
whatif.unchanged = unchanged
fair.unfair = The decision may be unfair to this individual.
fair.witness = Explanation {index} is conditioned on the protected {features}: {text}
fair.fair = No unfair treatment detected with respect to {features}.
fair.none = No unfair treatment detected: no protected attributes are declared.
show.rule = {rule} ⇒ {class}
show.importance = Feature importance: {items}.
show.exemplar = A similar individual from the training data: {values}, who received {class}.
show.data = {values}
show.refused = The model structure is not disclosed in this session.
)";

class Locale {
 public:
  Locale() : Locale(parse(kDefaultLocale)) {}
  explicit Locale(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {}

  // "key = template" lines; '#' starts a comment line.
  static std::map<std::string, std::string> parse(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
      pos = nl == std::string_view::npos ? text.size() : nl + 1;
      ++line_no;
      if (line.empty() || line.front() == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw Error("locale line " + std::to_string(line_no) + ": expected key = template");
      out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    return out;
  }

  // Entries from the file override the defaults.
  static Locale with_overrides(std::string_view text) {
    auto entries = parse(kDefaultLocale);
    for (auto& [k, v] : parse(text)) entries[k] = std::move(v);
    return Locale(std::move(entries));
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error("missing locale key '" + key + "'");
    return it->second;
  }

  std::string fill(const std::string& key, const std::map<std::string, std::string>& vars = {}) const {
    const auto tmpl = get(key);
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
      if (tmpl[i] == '{') {
        auto close = tmpl.find('}', i);
        if (close != std::string::npos) {
          auto it = vars.find(tmpl.substr(i + 1, close - i - 1));
          if (it != vars.end()) {
            out += it->second;
            i = close;
            continue;
          }
        }
      }
      out += tmpl[i];
    }
    return out;
  }

 private:
  std::map<std::string, std::string> entries_;
};

struct RenderConfig {
  bool obfuscate = false;
  double cutoff_slightly = 0.1;
  double cutoff_somewhat = 0.4;
  bool echo_constraints = false;
  bool show_context = false;
  Locale locale;

  void validate() const {
    if (!(0 < cutoff_slightly && cutoff_slightly < cutoff_somewhat && cutoff_somewhat < 1))
      throw Error("adjective cutoffs must satisfy 0 < a < b < 1");
  }
};

// Half-open bins: [0, a) slightly, [a, b) somewhat, [b, ∞) much.
inline std::string quantitative_adjective(double delta, double range, double a, double b) {
  if (!(range > 0)) throw Error("quantitative adjective needs a positive range");
  const double rel = std::fabs(delta) / range;
  if (rel < a) return "slightly";
  if (rel < b) return "somewhat";
  return "much";
}

inline std::string render_failsafe(const RenderConfig& cfg = {}) { return cfg.locale.get("failsafe"); }

inline std::string render_exhausted(const DatasetSchema& schema, const ConstraintSet& c, const RenderConfig& cfg = {}) {
  if (c.empty()) return cfg.locale.get("exhausted");
  return cfg.locale.fill("exhausted.constrained", {{"constraints", c.describe(schema)}});
}

namespace detail {

inline std::string list_text(const std::vector<std::string>& items) {
  if (items.empty()) return "";
  if (items.size() == 1) return items.front();
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + " and " + items.back();
}

struct ChangeView {
  std::size_t feature;
  const Value& from;
  const Value& to;
  FeatureRange range;
  bool up;
};

inline std::vector<ChangeView> change_views(const DecisionTree& tree, const Counterfactual& cf, const Instance& source) {
  const auto pred = tree.leaf_predicate(cf.target_leaf);
  std::vector<ChangeView> out;
  for (auto f : cf.change_set) {
    bool up = false;
    if (tree.schema()[f].numeric()) up = std::get<double>(cf.cf_instance[f]) > std::get<double>(source[f]);
    out.push_back({f, source[f], cf.cf_instance[f], pred.ranges[f], up});
  }
  return out;
}

}  // namespace detail

inline std::string render_counterfactual(const ModelBundle& model, const Counterfactual& cf, const Instance& source,
                                         const RenderConfig& cfg) {
  const auto& schema = model.schema();
  const auto& loc = cfg.locale;
  std::vector<std::string> clauses;
  for (const auto& ch : detail::change_views(model.tree, cf, source)) {
    const auto& spec = schema[ch.feature];
    if (!spec.numeric()) {
      clauses.push_back(loc.fill("cf.clause.categorical", {{"name", spec.display_name}, {"value", value_text(ch.to)}}));
      continue;
    }
    const std::string dir = ch.up ? "up" : "down";
    if (cfg.obfuscate) {
      const double delta = std::get<double>(ch.to) - std::get<double>(ch.from);
      const auto adjective =
          quantitative_adjective(delta, model.ranges.span(ch.feature), cfg.cutoff_slightly, cfg.cutoff_somewhat);
      std::string key = "cf.clause.obfuscated." + dir + "." + spec.name;
      if (!loc.has(key)) key = "cf.clause.obfuscated." + dir;
      clauses.push_back(loc.fill(key, {{"name", spec.display_name}, {"adjective", adjective}}));
      continue;
    }
    const double bound = ch.up ? ch.range.lower : ch.range.upper;
    clauses.push_back(loc.fill("cf.clause." + dir, {{"name", spec.display_name},
                                                     {"bound", format_number(bound)},
                                                     {"value", value_text(ch.to)}}));
  }
  auto text = loc.fill("cf.sentence", {{"clauses", detail::list_text(clauses)}, {"class", schema.classes[cf.contrast_class]}});
  if (cfg.show_context && !cfg.obfuscate)
    text += " " + loc.fill("context", {{"ranges", context_text(schema, context_statement(cf, model.tree))}});
  return text;
}

// Structured form for clients. Obfuscated payloads omit numeric targets and ranges.
inline json counterfactual_payload(const ModelBundle& model, const Counterfactual& cf, const Instance& source,
                                   const RenderConfig& cfg) {
  const auto& schema = model.schema();
  const auto& leaf = model.tree.leaf(cf.target_leaf);
  json changes = json::array();
  for (const auto& ch : detail::change_views(model.tree, cf, source)) {
    const auto& spec = schema[ch.feature];
    json c{{"feature", spec.name}, {"from", value_json(ch.from)}};
    if (cfg.obfuscate && spec.numeric()) {
      c["direction"] = ch.up ? "higher" : "lower";
      c["adjective"] = quantitative_adjective(std::get<double>(ch.to) - std::get<double>(ch.from),
                                              model.ranges.span(ch.feature), cfg.cutoff_slightly, cfg.cutoff_somewhat);
    } else {
      c["to"] = value_json(ch.to);
      c["range_text"] = ch.range.inequality_text(spec);
    }
    changes.push_back(std::move(c));
  }
  return {{"contrast_class", schema.classes[cf.contrast_class]},
          {"length", cf.length()},
          {"changes", changes},
          {"target_leaf", cf.target_leaf},
          {"purity", leaf.purity},
          {"support", leaf.support}};
}

inline std::string render_values(const DatasetSchema& schema, const Instance& inst) {
  std::vector<std::size_t> idx(schema.size());
  std::iota(idx.begin(), idx.end(), 0);
  return join(idx, ", ", [&](std::size_t f) { return schema[f].name + " = " + value_text(inst[f]); });
}

inline std::string render_importance(const DatasetSchema& schema, const std::vector<double>& w,
                                     const RenderConfig& cfg = {}) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return w[a] > w[b]; });
  std::vector<std::string> items;
  for (auto f : idx) {
    if (w[f] <= 0 && !items.empty()) continue;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", w[f]);
    items.push_back(schema[f].name + " " + buf);
  }
  return cfg.locale.fill("show.importance", {{"items", join(items, ", ", [](const auto& s) { return s; })}});
}

}  // namespace cfx
