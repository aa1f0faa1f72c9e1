#pragma once

#include <exception>
#include <string>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include "hke/common.hpp"
#include "hke/dataset/shapes.hpp"
#include "hke/service/session.hpp"

#include <httplib.h>
#include <json.hpp>

namespace hke {

namespace detail {

inline void send_json(httplib::Response& res, int status, nlohmann::json body) {
  body["version"] = kSchemaVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const char* type, const std::string& message) {
  send_json(res, status, {{"error", {{"type", type}, {"message", message}}}});
}

/// Runs a handler and maps library exceptions onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, "conflict", e.what());
  } catch (const ValidationError& e) {
    send_error(res, 422, "validation", e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

inline nlohmann::json progress_json(const Progress& p) {
  nlohmann::json j{{"session_id", p.session_id},
                   {"responder", p.responder},
                   {"phase", to_string(p.phase)},
                   {"iteration", p.iteration},
                   {"answered", p.answered},
                   {"answered_this_iteration", p.answered_this_iteration},
                   {"batch_size", p.batch_size},
                   {"pending", p.pending}};
  j["last_error"] = p.last_error ? nlohmann::json(*p.last_error) : nlohmann::json(nullptr);
  return j;
}

}  // namespace detail

/// Registers the session API on `server`. The manager must outlive it.
inline void install_routes(httplib::Server& server, SessionManager& manager) {
  using detail::guarded;
  using detail::send_json;

  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = detail::parse_body(req);
      if (body.contains("dataset") && body["dataset"].get<std::string>() != manager.dataset().name()) {
        throw NotFoundError("this server hosts dataset '" + manager.dataset().name() + "'");
      }
      auto id = manager.create_session(body.value("responder", std::string{}),
                                       body.value("config", nlohmann::json::object()));
      send_json(res, 201, {{"session_id", id}, {"progress", detail::progress_json(manager.session(id).progress())}});
    });
  });

  server.Get(R"(/sessions/([^/]+)/question)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto& s = manager.session(req.matches[1]);
      auto served = s.next_question();
      nlohmann::json items = nlohmann::json::array();
      for (auto id : served.question.ids()) {
        items.push_back({{"id", id}, {"stimulus_url", "/stimuli/" + std::to_string(id)}});
      }
      send_json(res, 200,
                {{"session_id", s.id()},
                 {"question_id", served.question.key()},
                 {"iteration", served.iteration},
                 {"items", items}});
    });
  });

  server.Post(R"(/sessions/([^/]+)/answers)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto& s = manager.session(req.matches[1]);
      auto body = detail::parse_body(req);
      if (!body.contains("question_id") || !body.contains("chosen")) {
        throw ValidationError("answer body needs question_id and chosen");
      }
      auto ack = s.submit_answer(body["question_id"].get<std::string>(), body["chosen"].get<ItemId>());
      send_json(res, 200,
                {{"question_id", ack.question.key()},
                 {"chosen", ack.chosen},
                 {"duplicate", ack.duplicate},
                 {"progress", detail::progress_json(s.progress())}});
    });
  });

  server.Post(R"(/sessions/([^/]+)/train)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto& s = manager.session(req.matches[1]);
      s.trigger_train();
      send_json(res, 202, {{"progress", detail::progress_json(s.progress())}});
    });
  });

  server.Get(R"(/sessions/([^/]+)/tree)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto& s = manager.session(req.matches[1]);
      send_json(res, 200, {{"session_id", s.id()}, {"tree", s.tree_json()}});
    });
  });

  server.Get(R"(/sessions/([^/]+)/progress)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, detail::progress_json(manager.session(req.matches[1]).progress())); });
  });

  server.Get(R"(/stimuli/(-?\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const ItemId id = std::stoll(req.matches[1]);
      if (!manager.dataset().contains(id)) throw NotFoundError("item " + std::to_string(id) + " is not in the dataset");
      // SVG has no JSON envelope; the schema version travels in a header.
      res.set_header("X-Schema-Version", std::to_string(kSchemaVersion));
      res.set_content(render_stimulus(manager.dataset().item(id)), "image/svg+xml");
    });
  });

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) detail::send_error(res, res.status, "http", httplib::status_message(res.status));
  });
}

}  // namespace hke
