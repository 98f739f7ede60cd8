#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "e3/dialogue.hpp"

namespace e3 {

/// JSON API over a session store, plus optional static files for the
/// browser client.
///
///   POST /sessions               {snippet, question, scenario}
///   POST /sessions/{id}/answer   {answer}
///   GET  /sessions/{id}
///   GET  /sessions/{id}/explain
template <class T = float>
class http_service {
 public:
  explicit http_service(session_store<T>& store, std::optional<std::filesystem::path> static_dir = std::nullopt)
      : store_(store) {
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        auto body = parse_body(req);
        auto s = store_.create(field(body, "snippet"), field(body, "question", true), field(body, "scenario", true));
        res.status = 201;
        return to_json(s);
      });
    });
    server_.Post(R"(/sessions/([^/]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        auto body = parse_body(req);
        return to_json(store_.answer(req.matches[1], field(body, "answer")));
      });
    });
    server_.Get(R"(/sessions/([^/]+)/explain)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return store_.explain(req.matches[1]); });
    });
    server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return to_json(store_.get(req.matches[1])); });
    });
    if (static_dir && !server_.set_mount_point("/", static_dir->string()))
      throw std::runtime_error("static directory not found: " + static_dir->string());
  }

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    if (!server_.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
  }

  /// Serves until stop() is called.
  bool run() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static nlohmann::json parse_body(const httplib::Request& req) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object())
      throw session_error(session_error::kind::invalid, "request body must be a JSON object");
    return body;
  }

  static std::string field(const nlohmann::json& body, const char* name, bool optional = false) {
    auto it = body.find(name);
    if (it == body.end() || it->is_null()) {
      if (optional) return "";
      throw session_error(session_error::kind::invalid, std::string("missing field '") + name + "'");
    }
    if (!it->is_string()) throw session_error(session_error::kind::invalid, std::string("field '") + name + "' must be a string");
    return it->get<std::string>();
  }

  template <class F>
  static void handle(httplib::Response& res, F&& f) {
    try {
      auto j = f();
      if (res.status == -1 || res.status == 0) res.status = 200;
      res.set_content(j.dump(), "application/json");
    } catch (const session_error& e) {
      switch (e.code()) {
        case session_error::kind::not_found: res.status = 404; break;
        case session_error::kind::conflict: res.status = 409; break;
        case session_error::kind::invalid: res.status = 400; break;
      }
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  session_store<T>& store_;
  httplib::Server server_;
};

}  // namespace e3
