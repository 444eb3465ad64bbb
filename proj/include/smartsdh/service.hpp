#pragma once

// Multi-zone service core: sessions, presence, ballots, persistence and
// snapshots. Transport-free; the HTTP front end lives in http_server.hpp.
//
// Each zone has one writer mutex around its ZoneEngine. A mutating request
// validates against the pure transition, appends the event to the zone's log
// (write + fsync), then commits. Readers only ever see immutable snapshots.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "smartsdh/actuator.hpp"
#include "smartsdh/analytics.hpp"
#include "smartsdh/events.hpp"
#include "smartsdh/geofence.hpp"
#include "smartsdh/session_engine.hpp"

namespace smartsdh {

// ---------------------------------------------------------------------------
// Work hours and the boundary scheduler

inline constexpr TimestampMs kDayMs = 24 * 3'600'000;

struct WorkHours {
  int start_minute = 9 * 60;
  int end_minute = 17 * 60;
  int utc_offset_minutes = 0;

  // 00:00-24:00 never closes: no boundary events at midnight.
  bool always_open() const { return start_minute == 0 && end_minute == 24 * 60; }

  void validate() const {
    if (start_minute < 0 || end_minute > 24 * 60 || start_minute >= end_minute) {
      throw std::invalid_argument("work hours need 00:00 <= start < end <= 24:00");
    }
    if (utc_offset_minutes < -14 * 60 || utc_offset_minutes > 14 * 60) {
      throw std::invalid_argument("utc offset outside +-14h");
    }
  }

  TimestampMs day_start(TimestampMs t) const {
    const TimestampMs local = t + utc_offset_minutes * 60'000LL;
    const TimestampMs into = ((local % kDayMs) + kDayMs) % kDayMs;
    return t - into;
  }
  TimestampMs window_start(TimestampMs t) const { return day_start(t) + start_minute * 60'000LL; }
  TimestampMs window_end(TimestampMs t) const { return day_start(t) + end_minute * 60'000LL; }

  bool contains(TimestampMs t) const {
    if (always_open()) return true;
    return window_start(t) <= t && t < window_end(t);
  }
};

// "HH:MM" to minutes after midnight; "24:00" is allowed as an end time.
inline int parse_clock_time(const std::string& s) {
  auto digit = [&](std::size_t k) { return s[k] >= '0' && s[k] <= '9'; };
  if (s.size() != 5 || s[2] != ':' || !digit(0) || !digit(1) || !digit(3) || !digit(4)) {
    throw std::invalid_argument("bad clock time '" + s + "', expected HH:MM");
  }
  const int h = (s[0] - '0') * 10 + (s[1] - '0');
  const int m = (s[3] - '0') * 10 + (s[4] - '0');
  if (h > 24 || m > 59 || (h == 24 && m != 0)) throw std::invalid_argument("bad clock time '" + s + "'");
  return h * 60 + m;
}

inline std::string format_clock_time(int minutes) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

// Boundary events that bring `s` up to date with wall time `now`. A missed
// close is stamped at the boundary itself, not at `now`.
inline std::vector<SessionEvent> boundary_events(const EngineState& s, TimestampMs now, const WorkHours& wh) {
  std::vector<SessionEvent> out;
  bool open = s.work_hours;
  TimestampMs last = s.started ? s.last_timestamp : now;
  if (now < last) return out;
  if (wh.always_open()) {
    if (!open) out.push_back(SessionEvent::work_start(now));
    return out;
  }
  for (;;) {
    if (open) {
      TimestampMs end = wh.window_end(last);
      if (end <= last) end = last;
      if (end > now) break;
      out.push_back(SessionEvent::work_end(end));
      open = false;
      last = end;
    } else {
      if (!wh.contains(now)) break;
      const TimestampMs start = std::max(wh.window_start(now), last);
      out.push_back(SessionEvent::work_start(start));
      open = true;
      last = start;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

struct ZoneConfig {
  std::string id;
  EngineConfig engine;
  GeoFence fence;
  WorkHours work_hours;
  std::string actuator_id;

  void validate() const {
    if (id.empty() || id.find_first_of("/\\ .") != std::string::npos) {
      throw std::invalid_argument("zone id must be non-empty without '/', '\\\\', '.' or spaces");
    }
    engine.validate();
    if (fence.vertices().size() < 3) throw std::invalid_argument("zone " + id + " has no fence");
    work_hours.validate();
  }
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_dir = "data";
  std::string roster_path = "roster.json";
  std::int64_t tick_interval_ms = 1000;
  std::size_t recent_events = 20;
  bool fsync = true;
  RetryPolicy actuator_retry;
  std::vector<ZoneConfig> zones;
};

// Static token-per-user roster.
class Roster {
 public:
  Roster() = default;
  explicit Roster(const std::map<std::string, std::string>& user_to_token) {
    for (const auto& [user, token] : user_to_token) add(user, token);
  }

  void add(const std::string& user, const std::string& token) {
    if (user.empty() || token.empty()) throw std::invalid_argument("roster entries need user_id and token");
    if (users_.contains(user)) throw std::invalid_argument("duplicate roster user " + user);
    if (!by_token_.emplace(token, user).second) throw std::invalid_argument("duplicate roster token");
    users_.insert(user);
  }

  // {"users": [{"user_id": "...", "token": "..."}, ...]}
  static Roster from_json(const nlohmann::json& j) {
    Roster r;
    for (const auto& u : j.at("users")) r.add(u.at("user_id").get<std::string>(), u.at("token").get<std::string>());
    return r;
  }

  static Roster load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open roster " + path);
    return from_json(nlohmann::json::parse(in));
  }

  std::optional<std::string> user_for(const std::string& token) const {
    auto it = by_token_.find(token);
    if (it == by_token_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return users_.size(); }

 private:
  std::map<std::string, std::string> by_token_;
  std::set<std::string> users_;
};

// ---------------------------------------------------------------------------
// Errors

class ServiceError : public std::runtime_error {
 public:
  ServiceError(std::string code, int http_status, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)), status_(http_status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

inline ServiceError to_service_error(const EventRejected& ex) {
  switch (ex.code()) {
    case RejectCode::kOutsideWorkHours: return {"OUTSIDE_WORK_HOURS", 403, ex.what()};
    case RejectCode::kAlreadyLoggedIn: return {"ALREADY_LOGGED_IN", 409, ex.what()};
    case RejectCode::kNotLoggedIn: return {"STALE_TOKEN", 401, ex.what()};
    case RejectCode::kInvalidBallot: return {"INVALID_BALLOT", 422, ex.what()};
    default: return {"CONFLICT", 409, ex.what()};
  }
}

// ---------------------------------------------------------------------------
// Durable append-only file

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AppendFile {
 public:
  AppendFile(const std::string& path, bool sync) : path_(path), sync_(sync) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError("cannot open " + path + ": " + std::strerror(errno));
  }
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;
  ~AppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(const std::string& data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t w = ::write(fd_, data.data() + done, data.size() - done);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw StorageError("append to " + path_ + " failed: " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(w);
    }
    if (sync_ && ::fsync(fd_) != 0) throw StorageError("fsync " + path_ + " failed: " + std::strerror(errno));
  }

 private:
  std::string path_;
  bool sync_;
  int fd_ = -1;
};

// Reads an event log, cutting a torn final line off the file so later appends
// start on a fresh line.
inline std::vector<SessionEvent> recover_event_log(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    content = buf.str();
  }
  if (!content.empty() && content.back() != '\n') {
    const auto nl = content.find_last_of('\n');
    const std::size_t keep = nl == std::string::npos ? 0 : nl + 1;
    content.resize(keep);
    std::filesystem::resize_file(path, keep);
  }
  std::istringstream in(content);
  return read_events(in);
}

// ---------------------------------------------------------------------------
// Snapshots

struct ZoneSnapshot {
  std::shared_ptr<const ZoneConfig> config;
  std::uint64_t version = 0;
  EngineState state;
  std::string digest;
  std::vector<SessionEvent> recent_events;
  std::optional<analytics::SensorSample> latest_sensor;
};

inline nlohmann::json sensor_to_json(const analytics::SensorSample& s) {
  return {{"timestamp_ms", s.timestamp_ms},
          {"humidity_percent", s.humidity_percent},
          {"temperature_degF", s.temperature_degF},
          {"pressure_inHg", s.pressure_inHg},
          {"solar_radiation_W_per_m2", s.solar_radiation_W_per_m2}};
}

inline analytics::SensorSample sensor_from_json(const nlohmann::json& j, TimestampMs default_ts) {
  analytics::SensorSample s;
  s.timestamp_ms = j.value("timestamp_ms", default_ts);
  s.humidity_percent = j.at("humidity_percent").get<double>();
  s.temperature_degF = j.at("temperature_degF").get<double>();
  s.pressure_inHg = j.at("pressure_inHg").get<double>();
  s.solar_radiation_W_per_m2 = j.at("solar_radiation_W_per_m2").get<double>();
  return s;
}

inline nlohmann::json threshold_progress(MilliPoints total, MilliPoints threshold, std::int64_t held) {
  const MilliPoints into = total % threshold;
  return {{"threshold_milli_points", threshold},
          {"next_at_milli_points", total - into + threshold},
          {"progress", static_cast<double>(into) / static_cast<double>(threshold)},
          {"held", held}};
}

// `caller` adds a "you" block with that user's rate and points.
inline nlohmann::json snapshot_to_json(const ZoneSnapshot& snap, const std::optional<std::string>& caller = {}) {
  const auto& s = snap.state;
  const auto& mcfg = snap.config->engine.mechanism;
  const auto& rcfg = snap.config->engine.rewards;
  nlohmann::json j;
  j["zone"] = snap.config->id;
  j["version"] = snap.version;
  j["as_of_ms"] = s.last_timestamp;
  j["work_hours"] = s.work_hours;
  if (s.outcome) {
    const auto& st = mcfg.setting(*s.outcome);
    j["setting"] = {{"index", st.index}, {"label", st.label}, {"level_percent", st.level_percent}};
  } else {
    j["setting"] = nullptr;
  }
  j["occupants"] = s.present;
  j["rates"] = s.rates;
  nlohmann::json pts = nlohmann::json::object();
  for (const auto& [id, mp] : s.accrued) pts[id] = {{"milli_points", mp}, {"points", mp / 1000}};
  j["points"] = pts;
  j["thresholds"] = {{"communal_milli_points", s.communal_total},
                     {"lottery", threshold_progress(s.communal_total, rcfg.lottery_threshold,
                                                    static_cast<std::int64_t>(s.lotteries.size()))},
                     {"communal_lunch", threshold_progress(s.communal_total, rcfg.communal_threshold, s.lunches_held)}};
  nlohmann::json lots = nlohmann::json::array();
  for (const auto& l : s.lotteries) {
    lots.push_back({{"ordinal", l.ordinal}, {"timestamp_ms", l.timestamp_ms}, {"winners", l.winners}});
  }
  j["lotteries"] = lots;
  nlohmann::json recent = nlohmann::json::array();
  for (const auto& e : snap.recent_events) recent.push_back(to_json(e));
  j["recent_events"] = recent;
  j["sensor"] = snap.latest_sensor ? sensor_to_json(*snap.latest_sensor) : nlohmann::json(nullptr);
  j["actuator_sequence"] = s.actuator_sequence;
  j["events_applied"] = s.events_applied;
  j["digest"] = snap.digest;
  if (caller) {
    auto rate = s.rates.find(*caller);
    auto acc = s.accrued.find(*caller);
    const MilliPoints mp = acc == s.accrued.end() ? 0 : acc->second;
    j["you"] = {{"user_id", *caller},
                {"present", s.present.contains(*caller)},
                {"rate", rate == s.rates.end() ? nlohmann::json(nullptr) : nlohmann::json(rate->second)},
                {"milli_points", mp},
                {"points", mp / 1000}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Service

inline TimestampMs system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct LoginResult {
  std::string session_token;
  std::string user_id;
  std::shared_ptr<const ZoneSnapshot> snapshot;
};

struct BallotResult {
  std::string user_id;
  std::optional<OutcomeIndex> outcome;
  std::optional<Points> rate;
  MilliPoints milli_points = 0;
  MilliPoints communal_milli_points = 0;
  std::shared_ptr<const ZoneSnapshot> snapshot;
};

class ZoneService {
 public:
  using Clock = std::function<TimestampMs()>;

  // Recovers every zone from its log under cfg.log_dir and re-sends the
  // current level to the actuator under the recorded sequence number.
  ZoneService(ServiceConfig cfg, Roster roster, ActuatorDriver& driver, Clock clock = system_clock_ms,
              ActuatorChannel::Sleeper sleep = {})
      : cfg_(std::move(cfg)), roster_(std::move(roster)), clock_(std::move(clock)) {
    if (cfg_.zones.empty()) throw std::invalid_argument("service needs at least one zone");
    std::filesystem::create_directories(cfg_.log_dir);
    for (const auto& zc : cfg_.zones) {
      zc.validate();
      if (zones_.contains(zc.id)) throw std::invalid_argument("duplicate zone " + zc.id);
      auto z = std::make_unique<Zone>(std::make_shared<const ZoneConfig>(zc), driver, cfg_, sleep);
      z->engine.restore(recover_event_log(events_path(zc.id)));
      {
        std::lock_guard lock(z->writer);
        publish_locked(*z);
        if (const auto& s = z->engine.state(); s.outcome) {
          z->actuator.send({s.actuator_sequence, s.last_timestamp, *s.outcome,
                            zc.engine.mechanism.setting(*s.outcome).level_percent});
        }
      }
      zones_.emplace(zc.id, std::move(z));
    }
  }

  ~ZoneService() { shutdown(); }

  ZoneService(const ZoneService&) = delete;
  ZoneService& operator=(const ZoneService&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  std::vector<std::string> zone_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, z] : zones_) out.push_back(id);
    return out;
  }

  std::string events_path(const std::string& zone) const {
    return (std::filesystem::path(cfg_.log_dir) / (zone + ".events.jsonl")).string();
  }
  std::string sensors_path(const std::string& zone) const {
    return (std::filesystem::path(cfg_.log_dir) / (zone + ".sensors.csv")).string();
  }

  // Emits any due work-hours boundary events and retries a pending actuator
  // command. Driven by a timer in production and by hand in tests.
  void tick() {
    for (auto& [id, z] : zones_) {
      std::lock_guard lock(z->writer);
      tick_locked(*z);
      z->actuator.flush();
    }
  }

  LoginResult login(const std::string& zone, const std::string& user_token, const GeoPoint& where,
                    const std::optional<Ballot>& ballot = std::nullopt) {
    Zone& z = find_zone(zone);
    auto user = roster_.user_for(user_token);
    if (!user) throw ServiceError("UNAUTHORIZED", 401, "unknown user token");
    std::lock_guard lock(z.writer);
    tick_locked(z);
    if (!z.engine.state().work_hours) {
      throw ServiceError("OUTSIDE_WORK_HOURS", 403,
                         "voting is open " + format_clock_time(z.config->work_hours.start_minute) + "-" +
                             format_clock_time(z.config->work_hours.end_minute));
    }
    if (!z.config->fence.contains(where)) {
      throw ServiceError("PRESENCE_REQUIRED", 403, "coordinates are outside zone " + zone);
    }
    if (ballot) check_ballot(z, *ballot);
    const TimestampMs t = now_for(z);
    if (z.engine.state().present.contains(*user)) {
      // Re-login (new device or after a restart): fresh token, no new event.
      if (ballot) submit_locked(z, SessionEvent::ballot_change(t, *user, *ballot));
    } else {
      submit_locked(z, SessionEvent::login(t, *user, ballot));
    }
    const std::string token = issue_session(zone, *user);
    return {token, *user, snapshot_of(z)};
  }

  BallotResult ballot(const std::string& session_token, const Ballot& b) {
    const auto [zone, user] = session(session_token);
    Zone& z = find_zone(zone);
    std::lock_guard lock(z.writer);
    check_session_locked(z, session_token, user);
    check_ballot(z, b);
    submit_locked(z, SessionEvent::ballot_change(now_for(z), user, b));
    const auto& s = z.engine.state();
    BallotResult r;
    r.user_id = user;
    r.outcome = s.outcome;
    if (auto it = s.rates.find(user); it != s.rates.end()) r.rate = it->second;
    if (auto it = s.accrued.find(user); it != s.accrued.end()) r.milli_points = it->second;
    r.communal_milli_points = s.communal_total;
    r.snapshot = snapshot_of(z);
    return r;
  }

  std::shared_ptr<const ZoneSnapshot> logout(const std::string& session_token) {
    const auto [zone, user] = session(session_token);
    Zone& z = find_zone(zone);
    std::lock_guard lock(z.writer);
    check_session_locked(z, session_token, user);
    if (z.engine.state().present.contains(user)) submit_locked(z, SessionEvent::logout(now_for(z), user));
    {
      std::lock_guard sl(sessions_mu_);
      sessions_.erase(session_token);
    }
    return snapshot_of(z);
  }

  void record_sensor(const std::string& zone, const analytics::SensorSample& s) {
    if (auto why = analytics::sensor_violation(s); !why.empty()) throw ServiceError("INVALID_SENSOR", 422, why);
    Zone& z = find_zone(zone);
    std::lock_guard lock(z.writer);
    if (!z.sensors) {
      const auto path = sensors_path(zone);
      const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
      z.sensors = std::make_unique<AppendFile>(path, cfg_.fsync);
      if (fresh) z.sensors->append(analytics::sensor_csv_header());
    }
    z.sensors->append(analytics::sensor_csv_row(s));
    z.latest_sensor = s;
    publish_locked(z);
  }

  std::shared_ptr<const ZoneSnapshot> state(const std::string& zone) { return snapshot_of(find_zone(zone)); }

  // Blocks until the zone's snapshot version differs from `seen`, the timeout
  // passes, or the service shuts down; returns the current snapshot.
  std::shared_ptr<const ZoneSnapshot> wait_for_update(const std::string& zone, std::uint64_t seen,
                                                      std::chrono::milliseconds timeout) {
    Zone& z = find_zone(zone);
    std::unique_lock lock(z.snap_mu);
    z.snap_cv.wait_for(lock, timeout, [&] { return stopping_.load() || z.snapshot->version != seen; });
    return z.snapshot;
  }

  // User bound to a live session token, if any.
  std::optional<std::string> session_user(const std::string& session_token, const std::string& zone) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(session_token);
    if (it == sessions_.end() || it->second.zone != zone) return std::nullopt;
    return it->second.user;
  }

  nlohmann::json health() const {
    nlohmann::json zones = nlohmann::json::object();
    bool ok = true;
    for (const auto& [id, z] : zones_) {
      const auto h = z->actuator.health();
      ok = ok && h.healthy;
      std::shared_ptr<const ZoneSnapshot> snap;
      {
        std::lock_guard lock(z->snap_mu);
        snap = z->snapshot;
      }
      zones[id] = {{"events_applied", snap->state.events_applied},
                   {"digest", snap->digest},
                   {"work_hours", snap->state.work_hours},
                   {"actuator",
                    {{"healthy", h.healthy},
                     {"consecutive_failures", h.consecutive_failures},
                     {"last_error", h.last_error},
                     {"pending_sequence", h.pending ? nlohmann::json(h.pending->sequence) : nlohmann::json(nullptr)},
                     {"last_acked_sequence", h.last_acked_sequence}}}};
    }
    return {{"status", ok ? "ok" : "degraded"}, {"zones", zones}};
  }

  void shutdown() {
    stopping_ = true;
    for (auto& [id, z] : zones_) {
      std::lock_guard lock(z->snap_mu);
      z->snap_cv.notify_all();
    }
  }
  bool stopping() const { return stopping_; }

 private:
  struct Zone {
    Zone(std::shared_ptr<const ZoneConfig> c, ActuatorDriver& driver, const ServiceConfig& svc,
         ActuatorChannel::Sleeper sleep)
        : config(std::move(c)),
          log((std::filesystem::path(svc.log_dir) / (config->id + ".events.jsonl")).string(), svc.fsync),
          engine(config->engine, [this](const SessionEvent& e) { log.append(encode_event(e) + "\n"); }),
          actuator(config->id, driver, svc.actuator_retry, std::move(sleep)) {}

    std::shared_ptr<const ZoneConfig> config;
    std::mutex writer;
    AppendFile log;
    ZoneEngine engine;
    ActuatorChannel actuator;
    std::unique_ptr<AppendFile> sensors;
    std::optional<analytics::SensorSample> latest_sensor;

    std::mutex snap_mu;
    std::condition_variable snap_cv;
    std::shared_ptr<const ZoneSnapshot> snapshot;
    std::uint64_t version = 0;
  };

  struct Session {
    std::string zone;
    std::string user;
  };

  Zone& find_zone(const std::string& zone) const {
    auto it = zones_.find(zone);
    if (it == zones_.end()) throw ServiceError("UNKNOWN_ZONE", 404, "unknown zone '" + zone + "'");
    return *it->second;
  }

  Session session(const std::string& token) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) throw ServiceError("STALE_TOKEN", 401, "session token is unknown or expired");
    return it->second;
  }

  // Re-checked under the zone lock: a work-hours close may have expired it.
  void check_session_locked(Zone& z, const std::string& token, const std::string& user) {
    tick_locked(z);
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(token);
    if (it == sessions_.end() || !z.engine.state().present.contains(user)) {
      sessions_.erase(token);
      throw ServiceError("STALE_TOKEN", 401, "session token is unknown or expired");
    }
  }

  static void check_ballot(const Zone& z, const Ballot& b) {
    try {
      validate_ballot(b, z.config->engine.mechanism);
    } catch (const ValidationError& ex) {
      throw ServiceError("INVALID_BALLOT", 422, ex.what());
    }
  }

  std::string issue_session(const std::string& zone, const std::string& user) {
    std::string token;
    {
      std::lock_guard lock(rng_mu_);
      static constexpr char kHex[] = "0123456789abcdef";
      for (int k = 0; k < 4; ++k) {
        for (std::uint32_t word = rng_(), b = 0; b < 8; ++b, word >>= 4) token += kHex[word & 15];
      }
    }
    std::lock_guard lock(sessions_mu_);
    std::erase_if(sessions_, [&](const auto& kv) { return kv.second.zone == zone && kv.second.user == user; });
    sessions_[token] = {zone, user};
    return token;
  }

  TimestampMs now_for(const Zone& z) const { return std::max(clock_(), z.engine.state().last_timestamp); }

  void tick_locked(Zone& z) {
    for (const auto& e : boundary_events(z.engine.state(), clock_(), z.config->work_hours)) submit_locked(z, e);
  }

  ApplyResult submit_locked(Zone& z, const SessionEvent& e) {
    ApplyResult r;
    try {
      r = z.engine.submit(e);
    } catch (const EventRejected& ex) {
      throw to_service_error(ex);
    } catch (const StorageError& ex) {
      throw ServiceError("STORAGE_UNAVAILABLE", 503, ex.what());
    }
    if (e.kind == EventKind::kWorkHoursEnd) {
      std::lock_guard lock(sessions_mu_);
      std::erase_if(sessions_, [&](const auto& kv) { return kv.second.zone == z.config->id; });
    }
    publish_locked(z);
    if (r.command) z.actuator.send(*r.command);
    return r;
  }

  void publish_locked(Zone& z) {
    auto snap = std::make_shared<ZoneSnapshot>();
    snap->config = z.config;
    snap->state = z.engine.state();
    snap->digest = state_digest(snap->state);
    const auto& log = z.engine.log();
    const std::size_t keep = std::min(cfg_.recent_events, log.size());
    snap->recent_events.assign(log.end() - static_cast<std::ptrdiff_t>(keep), log.end());
    snap->latest_sensor = z.latest_sensor;
    std::lock_guard lock(z.snap_mu);
    snap->version = ++z.version;
    z.snapshot = std::move(snap);
    z.snap_cv.notify_all();
  }

  std::shared_ptr<const ZoneSnapshot> snapshot_of(Zone& z) const {
    std::lock_guard lock(z.snap_mu);
    return z.snapshot;
  }

  ServiceConfig cfg_;
  Roster roster_;
  Clock clock_;
  std::map<std::string, std::unique_ptr<Zone>> zones_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, Session> sessions_;

  std::mutex rng_mu_;
  std::random_device rng_;
  std::atomic<bool> stopping_{false};
};

}  // namespace smartsdh
