#pragma once

// HTTP routes for the dojo service, plus static files for the browser UI.
//
//   GET  /api/kernels
//   GET  /api/sessions                      POST /api/sessions {kernel, preset?, id?}
//   POST /api/sessions/import {exported session}
//   GET  /api/sessions/{id}                 GET  /api/sessions/{id}/moves
//   POST /api/sessions/{id}/apply {move}    POST /api/sessions/{id}/undo {count?}
//   POST /api/sessions/{id}/pass {pass}     POST /api/sessions/{id}/search {method?, space?, budget?, seed?}
//   GET  /api/sessions/{id}/trace?since=k   POST /api/sessions/{id}/search/cancel
//   POST /api/sessions/{id}/search/adopt    GET  /api/sessions/{id}/export
//   GET  /api/sessions/{id}/emit

#include "httplib.h"
#include "perfdojo/dojo/service.hpp"

namespace perfdojo::dojo {

namespace http_detail {

inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw malformed(std::string("request body is not JSON: ") + e.what());
  }
}

using Handler = std::function<json(const httplib::Request&)>;

inline httplib::Server::Handler wrap(Handler f, int ok = 200) {
  return [f = std::move(f), ok](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, ok, f(req));
    } catch (const ServiceError& e) {
      reply(res, e.status(), e.body());
    } catch (const Error& e) {
      reply(res, service_detail::status_for(e.code()), {{"error", e.what()}, {"code", to_string(e.code())}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace http_detail

inline void bind_routes(httplib::Server& server, Service& svc) {
  using http_detail::body_of;
  using http_detail::wrap;
  using R = const httplib::Request&;
  const std::string id = R"(/api/sessions/([A-Za-z0-9_-]+))";

  server.Get("/api/kernels", wrap([&](R) { return svc.kernels(); }));
  server.Get("/api/sessions", wrap([&](R) { return svc.list_sessions(); }));
  server.Post("/api/sessions", wrap([&](R r) { return svc.create_session(body_of(r)); }, 201));
  server.Post("/api/sessions/import", wrap([&](R r) { return svc.import_session(body_of(r)); }, 201));
  server.Get(id, wrap([&](R r) { return svc.get_state(r.matches[1]); }));
  server.Get(id + "/moves", wrap([&](R r) { return svc.list_moves(r.matches[1]); }));
  server.Post(id + "/apply", wrap([&](R r) { return svc.apply_move(r.matches[1], body_of(r)); }));
  server.Post(id + "/undo", wrap([&](R r) { return svc.undo(r.matches[1], body_of(r)); }));
  server.Post(id + "/pass", wrap([&](R r) { return svc.run_pass(r.matches[1], body_of(r)); }));
  server.Post(id + "/search", wrap([&](R r) { return svc.run_search(r.matches[1], body_of(r)); }, 202));
  server.Post(id + "/search/cancel", wrap([&](R r) { return svc.cancel_search(r.matches[1]); }));
  server.Post(id + "/search/adopt", wrap([&](R r) { return svc.adopt_search(r.matches[1]); }));
  server.Get(id + "/trace", wrap([&](R r) {
               std::size_t since = 0;
               if (r.has_param("since")) {
                 try {
                   since = std::stoul(r.get_param_value("since"));
                 } catch (const std::exception&) {
                   throw malformed("'since' must be a non-negative integer");
                 }
               }
               return svc.get_trace(r.matches[1], since);
             }));
  server.Get(id + "/export", wrap([&](R r) { return svc.export_session(r.matches[1]); }));
  server.Get(id + "/emit", wrap([&](R r) { return svc.emit_code(r.matches[1]); }));

  if (!svc.config().ui_dir.empty() && !server.set_mount_point("/", svc.config().ui_dir))
    throw Error(ErrorCode::InvalidArgument, "UI directory '" + svc.config().ui_dir + "' does not exist");
}

/// Blocks serving `svc` until the server is stopped.
inline void serve(Service& svc, httplib::Server& server) {
  bind_routes(server, svc);
  if (!server.listen(svc.config().host, svc.config().port))
    throw Error(ErrorCode::InvalidArgument,
                "cannot listen on " + svc.config().host + ":" + std::to_string(svc.config().port));
}

}  // namespace perfdojo::dojo
