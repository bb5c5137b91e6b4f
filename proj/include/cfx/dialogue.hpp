#pragma once

// Per-explainee dialogue sessions: instance selection and editing, query
// dispatch, one enumeration cursor per constraint set, novelty tracking,
// what-if probing, fairness questions and the explanation query budget.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfx/query.hpp"
#include "cfx/render.hpp"

namespace cfx {

struct SessionConfig {
  int budget = 50;
  RenderConfig render;
};

// Read-only state shared by all sessions.
struct Engine {
  ModelBundle model;
  std::vector<Persona> personas;
  SessionConfig config;

  const DatasetSchema& schema() const { return model.schema(); }

  const Persona* find_persona(std::string_view id) const {
    for (const auto& p : personas)
      if (p.id == id) return &p;
    return nullptr;
  }
};

struct Utterance {
  enum class Role { user, system };
  Role role = Role::user;
  std::string text;
  json payload;  // null when absent
  std::uint64_t timestamp = 0;  // logical clock: position in the transcript

  json to_json() const {
    json j{{"role", role == Role::user ? "user" : "system"}, {"text", text}, {"timestamp", timestamp}};
    if (!payload.is_null()) j["payload"] = payload;
    return j;
  }

  static Utterance from_json(const json& j) {
    Utterance u;
    u.role = j.at("role").get<std::string>() == "user" ? Role::user : Role::system;
    u.text = j.at("text").get<std::string>();
    if (j.contains("payload")) u.payload = j.at("payload");
    u.timestamp = j.at("timestamp").get<std::uint64_t>();
    return u;
  }
};

struct Response {
  std::string text;
  json payload;
  bool context_shift = false;
  bool budget_charged = false;
  bool failsafe = false;
};

class Session {
 public:
  Session(std::shared_ptr<const Engine> engine, std::string id, Instance start,
          std::optional<std::string> persona_id = std::nullopt)
      : engine_(std::move(engine)), id_(std::move(id)), persona_id_(std::move(persona_id)) {
    check_instance(schema(), start);
    origin_ = start;
    current_ = std::move(start);
    prediction_ = engine_->model.tree.predict(current_);
    budget_ = std::max(0, engine_->config.budget);
    log(Utterance::Role::system, locale().fill("seed", {{"class", class_name(prediction_.class_index)}}),
        prediction_payload());
  }

  static Session from_persona(std::shared_ptr<const Engine> engine, std::string id, std::string_view persona_id) {
    const auto* p = engine->find_persona(persona_id);
    if (!p) throw DataError("unknown persona '" + std::string(persona_id) + "'");
    auto inst = p->instance;
    return Session(std::move(engine), std::move(id), std::move(inst), p->id);
  }

  // Parses and answers one user utterance.
  Response handle(std::string_view text) {
    auto parsed = parse(text, schema());
    if (!parsed) {
      log(Utterance::Role::user, std::string(text));
      return reply(failure(parsed.error->describe()));
    }
    return dispatch(*parsed.query, std::string(text));
  }

  Response dispatch(const ParsedQuery& q, std::optional<std::string> raw = std::nullopt) {
    log(Utterance::Role::user, raw ? *raw : render_query(q, schema()));
    if (charged(q) && budget_ == 0) {
      Response r;
      r.text = locale().get("budget");
      r.payload = json{{"budget_exhausted", true}};
      return reply(std::move(r));
    }
    try {
      return reply(std::visit([&](const auto& x) { return answer(x); }, q));
    } catch (const Error& e) {
      return reply(failure(e.what()));
    }
  }

  Response edit_feature(std::size_t f, Value v) { return dispatch(SetQuery{f, std::move(v)}); }
  Response ask_why(ConstraintSet c = {}) { return dispatch(WhyQuery{std::move(c)}); }
  Response what_if(std::vector<std::pair<std::size_t, Value>> edits, std::optional<std::size_t> explanation = {}) {
    return dispatch(WhatIfQuery{std::move(edits), explanation});
  }
  Response ask_fair() { return dispatch(FairQuery{}); }
  Response show(ShowKind kind) { return dispatch(ShowQuery{kind}); }
  Response select_persona(std::string id) { return dispatch(PersonaQuery{std::move(id)}); }
  Response reset() { return dispatch(ResetQuery{}); }
  Response predict() { return dispatch(PredictQuery{}); }

  const std::string& id() const { return id_; }
  const Instance& current_instance() const { return current_; }
  const Prediction& current_prediction() const { return prediction_; }
  const std::vector<Counterfactual>& presented() const { return presented_; }
  const std::set<std::size_t>& mentioned_features() const { return mentioned_; }
  int budget_remaining() const { return budget_; }
  std::size_t cursor_count() const { return cursors_.size(); }
  const std::vector<Utterance>& transcript() const { return transcript_; }
  const std::optional<std::string>& persona_id() const { return persona_id_; }

  json transcript_json() const {
    json out = json::array();
    for (const auto& u : transcript_) out.push_back(u.to_json());
    return out;
  }

  // Full session state; from_json restores it exactly.
  json to_json() const {
    const auto& s = schema();
    json cursors = json::array();
    for (const auto& [key, entry] : cursors_) {
      cursors.push_back({{"constraints", entry.constraints.to_json(s)},
                         {"contrast", s.classes[entry.contrast]},
                         {"emitted", entry.cursor.emitted()}});
    }
    json presented = json::array();
    for (const auto& cf : presented_) presented.push_back(counterfactual_to_json(s, cf));
    json mentioned = json::array();
    for (auto f : mentioned_) mentioned.push_back(s[f].name);
    json j{{"id", id_},
           {"origin", instance_to_json(s, origin_)},
           {"current", instance_to_json(s, current_)},
           {"budget_remaining", budget_},
           {"mentioned", mentioned},
           {"presented", presented},
           {"cursors", cursors},
           {"transcript", transcript_json()}};
    j["persona_id"] = persona_id_ ? json(*persona_id_) : json(nullptr);
    return j;
  }

  static Session from_json(std::shared_ptr<const Engine> engine, const json& j) {
    const auto& s = engine->schema();
    Session session(engine, j.at("id").get<std::string>(), instance_from_json(s, j.at("origin")));
    if (!j.at("persona_id").is_null()) session.persona_id_ = j.at("persona_id").get<std::string>();
    session.current_ = instance_from_json(s, j.at("current"));
    session.prediction_ = engine->model.tree.predict(session.current_);
    session.budget_ = j.at("budget_remaining").get<int>();
    for (const auto& n : j.at("mentioned")) session.mentioned_.insert(s.require_index(n.get<std::string>()));
    for (const auto& cf : j.at("presented")) session.presented_.push_back(counterfactual_from_json(s, cf));
    for (const auto& c : j.at("cursors")) {
      auto constraints = ConstraintSet::from_json(s, c.at("constraints"));
      auto contrast = s.class_index(c.at("contrast").get<std::string>());
      if (!contrast) throw DataError("snapshot: unknown contrast class");
      auto& entry = session.cursor_for(constraints, *contrast);
      entry.cursor.restore(c.at("emitted").get<std::vector<std::size_t>>());
    }
    session.transcript_.clear();
    for (const auto& u : j.at("transcript")) session.transcript_.push_back(Utterance::from_json(u));
    return session;
  }

 private:
  struct CursorEntry {
    ConstraintSet constraints;
    std::size_t contrast = 0;
    EnumerationCursor cursor;
  };

  const DatasetSchema& schema() const { return engine_->schema(); }
  const Locale& locale() const { return engine_->config.render.locale; }
  const RenderConfig& render_config() const { return engine_->config.render; }
  const std::string& class_name(std::size_t c) const { return schema().classes[c]; }

  static bool charged(const ParsedQuery& q) {
    return std::holds_alternative<WhyQuery>(q) || std::holds_alternative<WhatIfQuery>(q) ||
           std::holds_alternative<FairQuery>(q);
  }

  void log(Utterance::Role role, std::string text, json payload = nullptr) {
    transcript_.push_back({role, std::move(text), std::move(payload), transcript_.size()});
  }

  Response reply(Response r) {
    log(Utterance::Role::system, r.text, r.payload);
    return r;
  }

  Response failure(const std::string& detail) const {
    Response r;
    r.failsafe = true;
    r.text = render_failsafe(render_config()) + "\n" + detail;
    r.payload = json{{"error", detail}};
    return r;
  }

  json prediction_payload() const {
    return {{"class", class_name(prediction_.class_index)}, {"leaf", prediction_.leaf}};
  }

  CursorEntry& cursor_for(const ConstraintSet& c, std::size_t contrast) {
    const auto key = c.fingerprint(schema()) + "|" + class_name(contrast);
    auto it = cursors_.find(key);
    if (it == cursors_.end()) {
      auto candidates = enumerate(engine_->model.tree, engine_->model.space, current_, contrast, c);
      it = cursors_.emplace(key, CursorEntry{c, contrast, EnumerationCursor(key, std::move(candidates))}).first;
    }
    return it->second;
  }

  void shift_context() {
    cursors_.clear();
    presented_.clear();
  }

  void set_current(Instance inst) {
    current_ = std::move(inst);
    prediction_ = engine_->model.tree.predict(current_);
  }

  std::string explanation_text(std::size_t index, const Counterfactual& cf, const ConstraintSet& c) const {
    const auto text = render_counterfactual(engine_->model, cf, current_, render_config());
    if (render_config().echo_constraints && !c.empty())
      return locale().fill("explanation.echo",
                           {{"index", std::to_string(index)}, {"constraints", c.describe(schema())}, {"text", text}});
    return locale().fill("explanation", {{"index", std::to_string(index)}, {"text", text}});
  }

  json explanation_payload(std::size_t index, const Counterfactual& cf) const {
    auto p = counterfactual_payload(engine_->model, cf, current_, render_config());
    p["index"] = index;
    return p;
  }

  Response answer(const WhyQuery& q) {
    const auto& c = q.constraints;
    c.validate(schema());
    auto& entry = cursor_for(c, default_contrast(engine_->model.tree, current_));
    auto cf = entry.cursor.next([&](const Counterfactual& cand) {
      return static_cast<std::size_t>(std::count_if(cand.change_set.begin(), cand.change_set.end(),
                                                    [&](std::size_t f) { return mentioned_.count(f) == 0; }));
    });
    for (auto f : c.forbidden) mentioned_.insert(f);
    for (const auto& [f, _] : c.required) mentioned_.insert(f);

    Response r;
    if (!cf) {
      r.text = render_exhausted(schema(), c, render_config());
      r.payload = json{{"exhausted", true}, {"constraints", c.to_json(schema())}};
      return r;
    }
    presented_.push_back(*cf);
    const auto index = presented_.size();
    mentioned_.insert(cf->change_set.begin(), cf->change_set.end());
    --budget_;
    r.budget_charged = true;
    r.text = explanation_text(index, *cf, c);
    r.payload = explanation_payload(index, *cf);
    return r;
  }

  Response answer(const WhatIfQuery& q) {
    if (q.explanation && (*q.explanation < 1 || *q.explanation > presented_.size()))
      throw Error("explanation " + std::to_string(*q.explanation) + " does not exist");
    const Instance& base = q.explanation ? presented_[*q.explanation - 1].cf_instance : current_;
    Instance hypothetical = base;
    std::vector<std::string> assigns;
    for (const auto& [f, v] : q.edits) {
      if (f >= schema().size()) throw DataError("unknown feature");
      if (!value_valid(schema()[f], v)) throw DataError(schema()[f].name + ": invalid value '" + value_text(v) + "'");
      hypothetical[f] = v;
      assigns.push_back(locale().fill("whatif.assign", {{"name", schema()[f].display_name}, {"value", value_text(v)}}));
    }
    const auto& tree = engine_->model.tree;
    const auto p = tree.predict(hypothetical);
    const auto base_p = tree.predict(base);
    for (const auto& [f, _] : q.edits) mentioned_.insert(f);
    --budget_;

    const bool changed = p.class_index != base_p.class_index;
    const auto note = changed ? locale().fill("whatif.changed", {{"base_class", class_name(base_p.class_index)}})
                              : locale().get("whatif.unchanged");
    std::map<std::string, std::string> vars{
        {"assignments", assigns.empty() ? locale().get("whatif.none") : detail::list_text(assigns)},
        {"class", class_name(p.class_index)},
        {"note", note}};
    if (q.explanation) vars["index"] = std::to_string(*q.explanation);

    Response r;
    r.budget_charged = true;
    r.text = locale().fill(q.explanation ? "whatif.explanation" : "whatif.current", vars);
    r.payload = json{{"class", class_name(p.class_index)},
                     {"leaf", p.leaf},
                     {"base_class", class_name(base_p.class_index)},
                     {"changed", changed},
                     {"target", q.explanation ? json(*q.explanation) : json("current")},
                     {"instance", instance_to_json(schema(), hypothetical)}};
    return r;
  }

  Response answer(const FairQuery&) {
    const auto verdict = fairness_check(engine_->model.tree, engine_->model.space, current_);
    auto names = [&](const std::vector<std::size_t>& fs) {
      return detail::list_text([&] {
        std::vector<std::string> v;
        for (auto f : fs) v.push_back(schema()[f].display_name);
        return v;
      }());
    };
    --budget_;
    Response r;
    r.budget_charged = true;
    json witnesses = json::array();
    std::string text;
    for (const auto& w : verdict.witnesses) {
      presented_.push_back(w.counterfactual);
      const auto index = presented_.size();
      mentioned_.insert(w.counterfactual.change_set.begin(), w.counterfactual.change_set.end());
      json prot = json::array();
      for (auto f : w.protected_features) prot.push_back(schema()[f].name);
      witnesses.push_back({{"protected", prot}, {"index", index}, {"counterfactual", explanation_payload(index, w.counterfactual)}});
      text += " " + locale().fill("fair.witness",
                                  {{"index", std::to_string(index)},
                                   {"features", names(w.protected_features)},
                                   {"text", render_counterfactual(engine_->model, w.counterfactual, current_, render_config())}});
    }
    json checked = json::array();
    std::vector<std::size_t> all_checked;
    for (const auto& unit : verdict.checked) {
      json u = json::array();
      for (auto f : unit) {
        u.push_back(schema()[f].name);
        if (std::find(all_checked.begin(), all_checked.end(), f) == all_checked.end()) all_checked.push_back(f);
      }
      checked.push_back(u);
    }
    if (verdict.unfair) {
      r.text = locale().get("fair.unfair") + text;
    } else if (verdict.checked.empty()) {
      r.text = locale().get("fair.none");
    } else {
      std::sort(all_checked.begin(), all_checked.end());
      r.text = locale().fill("fair.fair", {{"features", names(all_checked)}});
    }
    r.payload = json{{"unfair", verdict.unfair}, {"checked", checked}, {"witnesses", witnesses}};
    return r;
  }

  Response answer(const SetQuery& q) {
    const auto& spec = schema()[q.feature];
    if (!value_valid(spec, q.value)) throw DataError(spec.name + ": invalid value '" + value_text(q.value) + "'");
    const auto old_value = current_[q.feature];
    const auto old_class = prediction_.class_index;
    Instance next = current_;
    next[q.feature] = q.value;
    set_current(std::move(next));
    shift_context();
    mentioned_.insert(q.feature);

    Response r;
    r.context_shift = true;
    const bool changed = prediction_.class_index != old_class;
    r.text = locale().fill(changed ? "edit.changed" : "edit.same", {{"name", spec.display_name},
                                                                    {"value", value_text(q.value)},
                                                                    {"old", value_text(old_value)},
                                                                    {"class", class_name(prediction_.class_index)},
                                                                    {"old_class", class_name(old_class)}}) +
             " " + locale().get("shift");
    r.payload = json{{"feature", spec.name},
                     {"from", value_json(old_value)},
                     {"to", value_json(q.value)},
                     {"previous_class", class_name(old_class)},
                     {"class", class_name(prediction_.class_index)},
                     {"leaf", prediction_.leaf}};
    return r;
  }

  Response answer(const ShowQuery& q) {
    const auto& model = engine_->model;
    const bool hide_structure = render_config().obfuscate;
    Response r;
    switch (q.kind) {
      case ShowKind::tree: {
        if (hide_structure) {
          r.text = locale().get("show.refused");
          break;
        }
        auto vis = visualise(model.tree);
        if (!vis.text.empty() && vis.text.back() == '\n') vis.text.pop_back();
        r.text = vis.text;
        r.payload = vis.structured;
        break;
      }
      case ShowKind::importance: {
        const auto w = feature_importance(model.tree);
        r.text = render_importance(schema(), w, render_config());
        json p = json::object();
        for (std::size_t f = 0; f < w.size(); ++f) p[schema()[f].name] = w[f];
        r.payload = p;
        break;
      }
      case ShowKind::rule: {
        if (hide_structure) {
          r.text = locale().get("show.refused");
          break;
        }
        const auto rule = model.tree.decision_rule(current_);
        r.text = locale().fill("show.rule", {{"rule", rule.predicate.text(schema())}, {"class", class_name(rule.class_index)}});
        json conds = json::array();
        for (auto f : rule.predicate.constrained_features())
          conds.push_back(rule.predicate.ranges[f].inequality_text(schema()[f]));
        r.payload = json{{"conditions", conds}, {"class", class_name(rule.class_index)}};
        break;
      }
      case ShowKind::exemplar: {
        if (!model.training) throw ModelError("exemplars unavailable");
        const auto row = exemplar(model.tree, *model.training, model.ranges, current_);
        const auto& inst = model.training->rows[row];
        const auto label = model.training->labels[row];
        r.text = locale().fill("show.exemplar", {{"values", render_values(schema(), inst)}, {"class", class_name(label)}});
        r.payload = json{{"row", row}, {"values", instance_to_json(schema(), inst)}, {"class", class_name(label)}};
        break;
      }
      case ShowKind::data:
        r.text = locale().fill("show.data", {{"values", render_values(schema(), current_)}});
        r.payload = instance_to_json(schema(), current_);
        break;
    }
    return r;
  }

  Response answer(const PersonaQuery& q) {
    const auto* p = engine_->find_persona(q.id);
    if (!p) throw DataError("unknown persona '" + q.id + "'");
    origin_ = p->instance;
    persona_id_ = p->id;
    set_current(p->instance);
    shift_context();
    Response r;
    r.context_shift = true;
    r.text = locale().fill("persona", {{"label", p->label}, {"id", p->id}, {"class", class_name(prediction_.class_index)}}) +
             " " + locale().get("shift");
    r.payload = prediction_payload();
    r.payload["persona"] = p->id;
    return r;
  }

  Response answer(const ResetQuery&) {
    set_current(origin_);
    shift_context();
    Response r;
    r.context_shift = true;
    r.text = locale().fill("reset", {{"class", class_name(prediction_.class_index)}}) + " " + locale().get("shift");
    r.payload = prediction_payload();
    return r;
  }

  Response answer(const PredictQuery&) {
    Response r;
    r.text = locale().fill("predict", {{"class", class_name(prediction_.class_index)}});
    r.payload = prediction_payload();
    return r;
  }

  std::shared_ptr<const Engine> engine_;
  std::string id_;
  std::optional<std::string> persona_id_;
  Instance origin_;
  Instance current_;
  Prediction prediction_;
  std::map<std::string, CursorEntry> cursors_;
  std::vector<Counterfactual> presented_;
  std::set<std::size_t> mentioned_;
  int budget_ = 0;
  std::vector<Utterance> transcript_;
};

}  // namespace cfx
