#pragma once

// JSON-over-HTTP session service. Route handlers are plain member functions
// returning (status, body) so they can be exercised without a socket; bind()
// attaches them to an httplib server.

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "cfx/dialogue.hpp"
#include "httplib.h"

namespace cfx {

struct HttpResult {
  int status = 200;
  json body;
};

class Service {
 public:
  explicit Service(std::shared_ptr<const Engine> engine, std::optional<std::filesystem::path> snapshot_dir = {})
      : engine_(std::move(engine)), snapshot_dir_(std::move(snapshot_dir)) {
    if (snapshot_dir_) restore_snapshots();
  }

  HttpResult get_schema() const { return {200, engine_->schema().to_json()}; }

  HttpResult get_personas() const { return {200, personas_to_json(engine_->schema(), engine_->personas)}; }

  HttpResult create_session(std::string_view body) {
    json req;
    if (auto err = parse_body(body, req)) return *err;
    const auto id = new_session_id();
    std::optional<Session> session;
    try {
      if (req.contains("persona_id")) {
        if (!req.at("persona_id").is_string()) return error(400, "persona_id must be a string");
        session.emplace(Session::from_persona(engine_, id, req.at("persona_id").get<std::string>()));
      } else if (req.contains("values")) {
        session.emplace(engine_, id, instance_from_json(engine_->schema(), req.at("values")));
      } else {
        return error(400, "expected persona_id or values");
      }
    } catch (const Error& e) {
      return error(422, e.what());
    }
    auto entry = std::make_shared<Entry>();
    entry->session = std::move(session);
    json out{{"session_id", id},
             {"prediction", entry->session->transcript().front().payload},
             {"text", entry->session->transcript().front().text},
             {"budget_remaining", entry->session->budget_remaining()}};
    save(*entry->session);
    std::unique_lock lock(mu_);
    sessions_.emplace(id, std::move(entry));
    return {201, std::move(out)};
  }

  HttpResult query(const std::string& id, std::string_view body) {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session");
    json req;
    if (auto err = parse_body(body, req)) return *err;
    if (!req.contains("text") || !req.at("text").is_string()) return error(400, "expected a string field 'text'");
    std::unique_lock guard(entry->mu, std::try_to_lock);
    if (!guard.owns_lock()) return error(409, "another request on this session is in progress");
    if (!entry->session) return error(404, "unknown session");
    auto& session = *entry->session;
    auto r = session.handle(req.at("text").get<std::string>());
    save(session);
    json out{{"text", r.text},
             {"context_shift", r.context_shift},
             {"budget_remaining", session.budget_remaining()},
             {"failsafe", r.failsafe}};
    if (!r.payload.is_null()) out["payload"] = r.payload;
    return {200, std::move(out)};
  }

  HttpResult transcript(const std::string& id) {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session");
    std::unique_lock guard(entry->mu, std::try_to_lock);
    if (!guard.owns_lock()) return error(409, "another request on this session is in progress");
    if (!entry->session) return error(404, "unknown session");
    return {200, entry->session->transcript_json()};
  }

  HttpResult state(const std::string& id) {
    auto entry = find(id);
    if (!entry) return error(404, "unknown session");
    std::unique_lock guard(entry->mu, std::try_to_lock);
    if (!guard.owns_lock()) return error(409, "another request on this session is in progress");
    if (!entry->session) return error(404, "unknown session");
    return {200, entry->session->to_json()};
  }

  HttpResult delete_session(const std::string& id) {
    std::shared_ptr<Entry> entry;
    {
      std::unique_lock lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) return error(404, "unknown session");
      entry = it->second;
      sessions_.erase(it);
    }
    std::unique_lock guard(entry->mu);
    entry->session.reset();
    if (snapshot_dir_) std::filesystem::remove(snapshot_path(id));
    return {200, json{{"deleted", id}}};
  }

  HttpResult model_tree() const {
    if (engine_->config.render.obfuscate) return error(403, "the model structure is not disclosed");
    auto vis = visualise(engine_->model.tree);
    auto body = vis.structured;
    body["text"] = vis.text;
    return {200, std::move(body)};
  }

  HttpResult model_importance() const {
    const auto w = feature_importance(engine_->model.tree);
    json out = json::object();
    for (std::size_t f = 0; f < w.size(); ++f) out[engine_->schema()[f].name] = w[f];
    return {200, out};
  }

  std::size_t session_count() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
  }

  // Holds a session's request lock, as an in-flight request would.
  std::unique_lock<std::mutex> lock_session(const std::string& id) {
    auto entry = find(id);
    if (!entry) throw Error("unknown session");
    return std::unique_lock<std::mutex>(entry->mu);
  }

  void bind(httplib::Server& server) {
    auto send = [](httplib::Response& res, const HttpResult& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/schema", [=, this](const httplib::Request&, httplib::Response& res) { send(res, get_schema()); });
    server.Get("/personas", [=, this](const httplib::Request&, httplib::Response& res) { send(res, get_personas()); });
    server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, create_session(req.body));
    });
    server.Post(R"(/sessions/([A-Za-z0-9]+)/query)", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, query(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([A-Za-z0-9]+)/transcript)", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, transcript(req.matches[1]));
    });
    server.Get(R"(/sessions/([A-Za-z0-9]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, state(req.matches[1]));
    });
    server.Delete(R"(/sessions/([A-Za-z0-9]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, delete_session(req.matches[1]));
    });
    server.Get("/model/tree", [=, this](const httplib::Request&, httplib::Response& res) { send(res, model_tree()); });
    server.Get("/model/importance", [=, this](const httplib::Request&, httplib::Response& res) {
      send(res, model_importance());
    });
  }

 private:
  struct Entry {
    std::mutex mu;
    std::optional<Session> session;
  };

  static HttpResult error(int status, std::string message) { return {status, json{{"error", std::move(message)}}}; }

  static std::optional<HttpResult> parse_body(std::string_view body, json& out) {
    try {
      out = json::parse(body.empty() ? std::string_view("{}") : body);
    } catch (const json::parse_error& e) {
      return error(400, std::string("malformed JSON: ") + e.what());
    }
    if (!out.is_object()) return error(400, "expected a JSON object");
    return std::nullopt;
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::string new_session_id() {
    std::random_device rd;
    std::string id;
    static constexpr char kHex[] = "0123456789abcdef";
    for (int i = 0; i < 32; ++i) id += kHex[rd() & 0xF];
    return id;
  }

  std::filesystem::path snapshot_path(const std::string& id) const { return *snapshot_dir_ / (id + ".json"); }

  void save(const Session& s) const {
    if (!snapshot_dir_) return;
    std::filesystem::create_directories(*snapshot_dir_);
    const auto tmp = snapshot_path(s.id()).string() + ".tmp";
    write_file(tmp, s.to_json().dump());
    std::filesystem::rename(tmp, snapshot_path(s.id()));
  }

  void restore_snapshots() {
    if (!std::filesystem::exists(*snapshot_dir_)) return;
    for (const auto& file : std::filesystem::directory_iterator(*snapshot_dir_)) {
      if (file.path().extension() != ".json") continue;
      auto entry = std::make_shared<Entry>();
      entry->session.emplace(Session::from_json(engine_, json::parse(read_file(file.path().string()))));
      sessions_.emplace(entry->session->id(), std::move(entry));
    }
  }

  std::shared_ptr<const Engine> engine_;
  std::optional<std::filesystem::path> snapshot_dir_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace cfx
