#pragma once

// Session events and their line-delimited JSON encoding.
//
// One event per line, UTF-8, with the stable field names
//   timestamp_ms, kind, user_id, ballot
// plus `ordinal` and `winners` on lottery_result records.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "smartsdh/mechanism.hpp"

namespace smartsdh {

using TimestampMs = std::int64_t;

enum class EventKind {
  kLogin,
  kLogout,
  kBallotChange,
  kWorkHoursStart,
  kWorkHoursEnd,
  kMarker,         // no-op split point
  kSurveyBonus,    // flat credit for a completed survey
  kLotteryResult,  // audit record of a draw the engine performed
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kLogin: return "login";
    case EventKind::kLogout: return "logout";
    case EventKind::kBallotChange: return "ballot";
    case EventKind::kWorkHoursStart: return "work_start";
    case EventKind::kWorkHoursEnd: return "work_end";
    case EventKind::kMarker: return "marker";
    case EventKind::kSurveyBonus: return "survey_bonus";
    case EventKind::kLotteryResult: return "lottery_result";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (auto k : {EventKind::kLogin, EventKind::kLogout, EventKind::kBallotChange, EventKind::kWorkHoursStart,
                 EventKind::kWorkHoursEnd, EventKind::kMarker, EventKind::kSurveyBonus,
                 EventKind::kLotteryResult}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown event kind '" + s + "'");
}

struct SessionEvent {
  TimestampMs timestamp_ms = 0;
  EventKind kind = EventKind::kMarker;
  std::string user_id;
  std::optional<Ballot> ballot;
  std::int64_t ordinal = 0;
  std::vector<std::string> winners;

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;

  static SessionEvent login(TimestampMs t, std::string user, std::optional<Ballot> b = std::nullopt) {
    return {t, EventKind::kLogin, std::move(user), std::move(b), 0, {}};
  }
  static SessionEvent logout(TimestampMs t, std::string user) {
    return {t, EventKind::kLogout, std::move(user), std::nullopt, 0, {}};
  }
  static SessionEvent ballot_change(TimestampMs t, std::string user, Ballot b) {
    return {t, EventKind::kBallotChange, std::move(user), std::move(b), 0, {}};
  }
  static SessionEvent work_start(TimestampMs t) { return {t, EventKind::kWorkHoursStart, {}, std::nullopt, 0, {}}; }
  static SessionEvent work_end(TimestampMs t) { return {t, EventKind::kWorkHoursEnd, {}, std::nullopt, 0, {}}; }
  static SessionEvent marker(TimestampMs t) { return {t, EventKind::kMarker, {}, std::nullopt, 0, {}}; }
  static SessionEvent survey_bonus(TimestampMs t, std::string user) {
    return {t, EventKind::kSurveyBonus, std::move(user), std::nullopt, 0, {}};
  }
};

inline nlohmann::json ballot_to_json(const Ballot& b) {
  nlohmann::json pay = nlohmann::json::object();
  for (const auto& [alt, v] : b.pay_vs) pay[std::to_string(alt)] = v;
  return {{"preferred", b.preferred}, {"pay_vs", pay}};
}

inline Ballot ballot_from_json(const nlohmann::json& j) {
  Ballot b;
  b.preferred = j.at("preferred").get<OutcomeIndex>();
  for (const auto& [key, v] : j.at("pay_vs").items()) {
    std::size_t used = 0;
    const auto alt = static_cast<OutcomeIndex>(std::stoul(key, &used));
    if (used != key.size()) throw std::invalid_argument("bad pay_vs key '" + key + "'");
    b.pay_vs[alt] = v.get<Points>();
  }
  return b;
}

inline nlohmann::json to_json(const SessionEvent& e) {
  nlohmann::json j{{"timestamp_ms", e.timestamp_ms}, {"kind", to_string(e.kind)}, {"user_id", e.user_id}};
  if (e.ballot) j["ballot"] = ballot_to_json(*e.ballot);
  if (e.kind == EventKind::kLotteryResult) {
    j["ordinal"] = e.ordinal;
    j["winners"] = e.winners;
  }
  return j;
}

inline SessionEvent event_from_json(const nlohmann::json& j) {
  SessionEvent e;
  e.timestamp_ms = j.at("timestamp_ms").get<TimestampMs>();
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.user_id = j.value("user_id", std::string{});
  if (j.contains("ballot") && !j["ballot"].is_null()) e.ballot = ballot_from_json(j["ballot"]);
  e.ordinal = j.value("ordinal", std::int64_t{0});
  if (j.contains("winners")) e.winners = j["winners"].get<std::vector<std::string>>();
  return e;
}

inline std::string encode_event(const SessionEvent& e) { return to_json(e).dump(); }

inline SessionEvent decode_event(const std::string& line) { return event_from_json(nlohmann::json::parse(line)); }

class LogFormatError : public std::runtime_error {
 public:
  LogFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("event log line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline void write_events(std::ostream& out, const std::vector<SessionEvent>& events) {
  for (const auto& e : events) out << encode_event(e) << '\n';
}

// Blank lines are skipped. A torn final line (no trailing newline, unparsable)
// is dropped, since it can only come from an interrupted append.
inline std::vector<SessionEvent> read_events(std::istream& in) {
  std::vector<SessionEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const bool last_unterminated = in.eof();
    try {
      out.push_back(decode_event(line));
    } catch (const std::exception& ex) {
      if (last_unterminated) break;
      throw LogFormatError(lineno, ex.what());
    }
  }
  return out;
}

}  // namespace smartsdh
