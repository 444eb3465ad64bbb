#pragma once

// HTTP front end over ZoneService.
//
//   POST /zones/{z}/login    {"user_token", "latitude", "longitude", "ballot"?}
//   POST /zones/{z}/logout   Authorization: Bearer <session_token>
//   POST /zones/{z}/ballot   Authorization: Bearer <session_token>, {"ballot": {...}}
//   POST /zones/{z}/sensors  {"humidity_percent", "temperature_degF", "pressure_inHg",
//                             "solar_radiation_W_per_m2", "timestamp_ms"?}
//   GET  /zones/{z}/state    optional Bearer token adds a "you" block
//   GET  /zones/{z}/events   text/event-stream of "state" snapshots
//   GET  /healthz
//
// Errors are {"error": {"code", "message"}} with a matching status. The
// session token may also be given as "session_token" in the JSON body.

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "smartsdh/service.hpp"

namespace smartsdh {

class HttpFrontend {
 public:
  explicit HttpFrontend(ZoneService& svc, std::chrono::milliseconds sse_keepalive = std::chrono::seconds(15))
      : svc_(svc), keepalive_(sse_keepalive) {
    routes();
  }

  // Port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  // Blocks until stop().
  bool serve() { return server_.listen_after_bind(); }

  void stop() {
    svc_.shutdown();
    server_.stop();
  }

  httplib::Server& server() { return server_; }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    reply(res, status, {{"error", {{"code", code}, {"message", message}}}});
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw ServiceError("BAD_REQUEST", 400, "request body must be a JSON object");
    return j;
  }

  static std::string bearer(const httplib::Request& req, const nlohmann::json& body) {
    const auto h = req.get_header_value("Authorization");
    if (h.rfind("Bearer ", 0) == 0) return h.substr(7);
    if (body.contains("session_token")) return body.at("session_token").get<std::string>();
    throw ServiceError("STALE_TOKEN", 401, "missing session token");
  }

  template <typename F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ServiceError& ex) {
        reply_error(res, ex.http_status(), ex.code(), ex.what());
      } catch (const ValidationError& ex) {
        reply_error(res, 422, "INVALID_BALLOT", ex.what());
      } catch (const nlohmann::json::exception& ex) {
        reply_error(res, 400, "BAD_REQUEST", ex.what());
      } catch (const std::invalid_argument& ex) {
        reply_error(res, 400, "BAD_REQUEST", ex.what());
      } catch (const std::exception& ex) {
        reply_error(res, 500, "INTERNAL", ex.what());
      }
    };
  }

  void routes() {
    server_.Post(R"(/zones/([^/]+)/login)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = body_of(req);
                   std::optional<Ballot> ballot;
                   if (body.contains("ballot") && !body.at("ballot").is_null()) ballot = ballot_from_json(body.at("ballot"));
                   const GeoPoint where{body.at("latitude").get<double>(), body.at("longitude").get<double>()};
                   const auto r = svc_.login(req.matches[1], body.at("user_token").get<std::string>(), where, ballot);
                   reply(res, 200,
                         {{"session_token", r.session_token},
                          {"user_id", r.user_id},
                          {"state", snapshot_to_json(*r.snapshot, r.user_id)}});
                 }));

    server_.Post(R"(/zones/([^/]+)/logout)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = body_of(req);
                   const auto token = bearer(req, body);
                   require_zone(token, req.matches[1]);
                   const auto snap = svc_.logout(token);
                   reply(res, 200, {{"ok", true}, {"state", snapshot_to_json(*snap)}});
                 }));

    server_.Post(R"(/zones/([^/]+)/ballot)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = body_of(req);
                   const auto token = bearer(req, body);
                   require_zone(token, req.matches[1]);
                   const auto r = svc_.ballot(token, ballot_from_json(body.at("ballot")));
                   const auto& mcfg = r.snapshot->config->engine.mechanism;
                   nlohmann::json setting = nullptr;
                   if (r.outcome) {
                     const auto& s = mcfg.setting(*r.outcome);
                     setting = {{"index", s.index}, {"label", s.label}, {"level_percent", s.level_percent}};
                   }
                   reply(res, 200,
                         {{"user_id", r.user_id},
                          {"setting", setting},
                          {"rate", r.rate ? nlohmann::json(*r.rate) : nlohmann::json(nullptr)},
                          {"milli_points", r.milli_points},
                          {"points", r.milli_points / 1000},
                          {"communal_milli_points", r.communal_milli_points},
                          {"state", snapshot_to_json(*r.snapshot, r.user_id)}});
                 }));

    server_.Post(R"(/zones/([^/]+)/sensors)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = body_of(req);
                   svc_.record_sensor(req.matches[1], sensor_from_json(body, system_clock_ms()));
                   reply(res, 200, {{"ok", true}});
                 }));

    server_.Get(R"(/zones/([^/]+)/state)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string zone = req.matches[1];
                  const auto snap = svc_.state(zone);
                  std::optional<std::string> caller;
                  const auto h = req.get_header_value("Authorization");
                  if (h.rfind("Bearer ", 0) == 0) caller = svc_.session_user(h.substr(7), zone);
                  reply(res, 200, snapshot_to_json(*snap, caller));
                }));

    server_.Get(R"(/zones/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string zone = req.matches[1];
                  svc_.state(zone);  // 404 before the stream starts
                  auto seen = std::make_shared<std::uint64_t>(0);
                  res.set_header("Cache-Control", "no-cache");
                  res.set_chunked_content_provider(
                      "text/event-stream", [this, zone, seen](std::size_t, httplib::DataSink& sink) {
                        if (svc_.stopping()) return false;
                        const auto snap = svc_.wait_for_update(zone, *seen, keepalive_);
                        if (svc_.stopping()) return false;
                        std::string frame;
                        if (snap->version != *seen) {
                          *seen = snap->version;
                          frame = "id: " + std::to_string(snap->version) + "\nevent: state\ndata: " +
                                  snapshot_to_json(*snap).dump() + "\n\n";
                        } else {
                          frame = ": keepalive\n\n";
                        }
                        return sink.write(frame.data(), frame.size());
                      });
                }));

    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      const auto h = svc_.health();
      reply(res, h.at("status") == "ok" ? 200 : 503, h);
    });
  }

  void require_zone(const std::string& token, const std::string& zone) {
    svc_.state(zone);
    if (!svc_.session_user(token, zone)) throw ServiceError("STALE_TOKEN", 401, "session token is not valid for " + zone);
  }

  ZoneService& svc_;
  std::chrono::milliseconds keepalive_;
  httplib::Server server_;
};

}  // namespace smartsdh
