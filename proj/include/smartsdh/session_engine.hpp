#pragma once

// Event-sourced control loop for one lighting zone.
//
// Between two consecutive events the set of present voters and their ballots
// is constant, so each gap is one round of the mechanism weighted by its
// duration: every member is credited floor(duration_ms * rate / 3600)
// milli-points (rate in points per hour). The state is a plain value; apply_event
// returns a new one, and folding a log through it is the whole of replay.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smartsdh/events.hpp"
#include "smartsdh/mechanism.hpp"
#include "smartsdh/rewards.hpp"

namespace smartsdh {

struct EngineConfig {
  MechanismConfig mechanism;
  RewardConfig rewards;

  void validate() const {
    mechanism.validate();
    rewards.validate();
  }
};

struct Segment {
  TimestampMs start = 0;
  TimestampMs end = 0;
  std::map<std::string, TypeVector> members;
  OutcomeIndex outcome = 0;
  std::map<std::string, Points> rates;

  TimestampMs duration_ms() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ActuatorCommand {
  std::int64_t sequence = 0;
  TimestampMs timestamp_ms = 0;
  OutcomeIndex outcome = 0;
  int level_percent = 0;

  friend bool operator==(const ActuatorCommand&, const ActuatorCommand&) = default;
};

struct LotteryRecord {
  std::int64_t ordinal = 0;
  TimestampMs timestamp_ms = 0;
  std::vector<std::string> winners;

  friend bool operator==(const LotteryRecord&, const LotteryRecord&) = default;
};

struct EngineState {
  bool work_hours = false;
  bool started = false;  // has seen any event
  TimestampMs last_timestamp = 0;
  TimestampMs segment_start = 0;
  std::set<std::string> present;
  std::map<std::string, Ballot> ballots;  // survives logout
  std::optional<OutcomeIndex> outcome;    // nullopt: manual control
  std::map<std::string, Points> rates;
  std::map<std::string, MilliPoints> accrued;
  MilliPoints communal_total = 0;
  std::int64_t actuator_sequence = 0;
  std::int64_t lunches_held = 0;
  std::vector<LotteryRecord> lotteries;
  std::int64_t events_applied = 0;

  friend bool operator==(const EngineState&, const EngineState&) = default;
};

enum class RejectCode {
  kOutOfOrder,
  kAlreadyLoggedIn,
  kNotLoggedIn,
  kOutsideWorkHours,
  kInvalidBallot,
  kMissingUser,
  kWorkHoursState,
  kLotteryMismatch,
};

inline const char* to_string(RejectCode c) {
  switch (c) {
    case RejectCode::kOutOfOrder: return "OUT_OF_ORDER";
    case RejectCode::kAlreadyLoggedIn: return "ALREADY_LOGGED_IN";
    case RejectCode::kNotLoggedIn: return "NOT_LOGGED_IN";
    case RejectCode::kOutsideWorkHours: return "OUTSIDE_WORK_HOURS";
    case RejectCode::kInvalidBallot: return "INVALID_BALLOT";
    case RejectCode::kMissingUser: return "MISSING_USER";
    case RejectCode::kWorkHoursState: return "WORK_HOURS_STATE";
    case RejectCode::kLotteryMismatch: return "LOTTERY_MISMATCH";
  }
  return "?";
}

class EventRejected : public std::runtime_error {
 public:
  EventRejected(RejectCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  RejectCode code() const { return code_; }

 private:
  RejectCode code_;
};

struct RewardNotice {
  RewardKind kind = RewardKind::kLottery;
  std::int64_t ordinal = 0;
  TimestampMs timestamp_ms = 0;
  std::vector<std::string> winners;  // lottery only
};

struct ApplyResult {
  EngineState state;
  std::optional<Segment> closed;
  std::optional<ActuatorCommand> command;
  std::vector<RewardNotice> rewards;
};

// Present users holding a ballot, in user-id order.
inline Profile member_profile(const EngineState& s, const MechanismConfig& cfg) {
  Profile p;
  for (const auto& id : s.present) {
    auto it = s.ballots.find(id);
    if (it != s.ballots.end()) p.add(id, ballot_to_type(it->second, cfg));
  }
  return p;
}

struct CurrentAllocation {
  std::optional<OutcomeIndex> outcome;
  std::map<std::string, Points> rates;

  friend bool operator==(const CurrentAllocation&, const CurrentAllocation&) = default;
};

inline CurrentAllocation compute_allocation(const EngineState& s, const MechanismConfig& cfg) {
  if (!s.work_hours) return {};
  const Profile p = member_profile(s, cfg);
  if (p.empty()) return {cfg.nominal_outcome, {}};
  const Allocation a = allocate(p, cfg);
  CurrentAllocation out{a.outcome, {}};
  for (std::size_t i = 0; i < p.size(); ++i) out.rates[p.user_ids[i]] = a.rates[i];
  return out;
}

inline CurrentAllocation current_allocation(const EngineState& s) { return {s.outcome, s.rates}; }

inline MilliPoints segment_credit(TimestampMs duration_ms, Points rate) {
  // Negative rates only arise with a virtual participant; nothing is collected from users.
  if (duration_ms <= 0 || rate <= 0) return 0;
  return duration_ms * rate / 3600;
}

namespace detail {

inline void credit(EngineState& s, const std::string& user, MilliPoints amount, TimestampMs t,
                   const EngineConfig& cfg, std::vector<RewardNotice>& notices) {
  if (amount <= 0) return;
  const MilliPoints before = s.communal_total;
  s.accrued[user] += amount;
  s.communal_total += amount;
  for (const auto& trig : check_thresholds(before, s.communal_total, cfg.rewards)) {
    RewardNotice n{trig.kind, trig.ordinal, t, {}};
    if (trig.kind == RewardKind::kLottery) {
      std::vector<PointsAccount> accounts;
      for (const auto& [id, mp] : s.accrued) accounts.push_back({id, mp});
      n.winners = run_lottery(accounts, cfg.rewards.prizes_per_lottery,
                              lottery_seed(cfg.rewards.rng_seed, trig.ordinal));
      s.lotteries.push_back({trig.ordinal, t, n.winners});
    } else {
      ++s.lunches_held;
    }
    notices.push_back(std::move(n));
  }
}

inline void require_user(const SessionEvent& e) {
  if (e.user_id.empty()) throw EventRejected(RejectCode::kMissingUser, std::string(to_string(e.kind)) + " without user_id");
}

inline void require_ballot(const SessionEvent& e, const MechanismConfig& cfg) {
  try {
    validate_ballot(*e.ballot, cfg);
  } catch (const ValidationError& ex) {
    throw EventRejected(RejectCode::kInvalidBallot, ex.what());
  }
}

}  // namespace detail

inline ApplyResult apply_event(const EngineState& prev, const SessionEvent& e, const EngineConfig& cfg) {
  if (prev.started && e.timestamp_ms < prev.last_timestamp) {
    throw EventRejected(RejectCode::kOutOfOrder, "timestamp " + std::to_string(e.timestamp_ms) + " precedes " +
                                                     std::to_string(prev.last_timestamp));
  }

  // Validate against the pre-event state before touching anything.
  switch (e.kind) {
    case EventKind::kLogin:
      detail::require_user(e);
      if (!prev.work_hours) throw EventRejected(RejectCode::kOutsideWorkHours, "login outside work hours");
      if (prev.present.contains(e.user_id)) throw EventRejected(RejectCode::kAlreadyLoggedIn, e.user_id);
      if (e.ballot) detail::require_ballot(e, cfg.mechanism);
      break;
    case EventKind::kLogout:
      detail::require_user(e);
      if (!prev.present.contains(e.user_id)) throw EventRejected(RejectCode::kNotLoggedIn, e.user_id);
      break;
    case EventKind::kBallotChange:
      detail::require_user(e);
      if (!prev.present.contains(e.user_id)) throw EventRejected(RejectCode::kNotLoggedIn, e.user_id);
      if (!e.ballot) throw EventRejected(RejectCode::kInvalidBallot, "ballot event without ballot");
      detail::require_ballot(e, cfg.mechanism);
      break;
    case EventKind::kWorkHoursStart:
      if (prev.work_hours) throw EventRejected(RejectCode::kWorkHoursState, "work hours already active");
      break;
    case EventKind::kWorkHoursEnd:
      if (!prev.work_hours) throw EventRejected(RejectCode::kWorkHoursState, "work hours not active");
      break;
    case EventKind::kSurveyBonus:
      detail::require_user(e);
      break;
    case EventKind::kMarker:
    case EventKind::kLotteryResult:
      break;
  }

  ApplyResult r{prev, std::nullopt, std::nullopt, {}};
  EngineState& s = r.state;

  // Close the open segment.
  if (prev.work_hours && prev.started && e.timestamp_ms > prev.segment_start) {
    Segment seg;
    seg.start = prev.segment_start;
    seg.end = e.timestamp_ms;
    seg.outcome = prev.outcome.value_or(cfg.mechanism.nominal_outcome);
    seg.rates = prev.rates;
    for (const auto& [id, rate] : prev.rates) {
      seg.members.emplace(id, ballot_to_type(prev.ballots.at(id), cfg.mechanism));
    }
    for (const auto& [id, rate] : prev.rates) {
      detail::credit(s, id, segment_credit(seg.duration_ms(), rate), e.timestamp_ms, cfg, r.rewards);
    }
    r.closed = std::move(seg);
  }

  switch (e.kind) {
    case EventKind::kLogin:
      s.present.insert(e.user_id);
      if (e.ballot) s.ballots[e.user_id] = *e.ballot;
      break;
    case EventKind::kLogout:
      s.present.erase(e.user_id);
      break;
    case EventKind::kBallotChange:
      s.ballots[e.user_id] = *e.ballot;
      break;
    case EventKind::kWorkHoursStart:
      s.work_hours = true;
      break;
    case EventKind::kWorkHoursEnd:
      // Sessions expire with the work day.
      s.work_hours = false;
      s.present.clear();
      break;
    case EventKind::kSurveyBonus:
      detail::credit(s, e.user_id, cfg.rewards.survey_bonus, e.timestamp_ms, cfg, r.rewards);
      break;
    case EventKind::kLotteryResult: {
      auto it = std::find_if(s.lotteries.begin(), s.lotteries.end(),
                             [&](const LotteryRecord& l) { return l.ordinal == e.ordinal; });
      if (it == s.lotteries.end() || it->winners != e.winners) {
        throw EventRejected(RejectCode::kLotteryMismatch,
                            "recorded lottery " + std::to_string(e.ordinal) + " does not match the engine's draw");
      }
      break;
    }
    case EventKind::kMarker:
      break;
  }

  const CurrentAllocation next = compute_allocation(s, cfg.mechanism);
  if (next.outcome && next.outcome != prev.outcome) {
    const auto& setting = cfg.mechanism.setting(*next.outcome);
    r.command = ActuatorCommand{++s.actuator_sequence, e.timestamp_ms, setting.index, setting.level_percent};
  }
  s.outcome = next.outcome;
  s.rates = next.rates;
  s.segment_start = e.timestamp_ms;
  s.last_timestamp = e.timestamp_ms;
  s.started = true;
  ++s.events_applied;
  return r;
}

class ReplayError : public std::runtime_error {
 public:
  ReplayError(std::size_t index, const std::string& what)
      : std::runtime_error("event " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

inline EngineState replay(const std::vector<SessionEvent>& log, const EngineConfig& cfg,
                          const std::function<void(const ApplyResult&)>& observer = {}) {
  EngineState s;
  for (std::size_t i = 0; i < log.size(); ++i) {
    try {
      ApplyResult r = apply_event(s, log[i], cfg);
      if (observer) observer(r);
      s = std::move(r.state);
    } catch (const EventRejected& ex) {
      throw ReplayError(i, ex.what());
    }
  }
  return s;
}

// Canonical text form of the state; equal strings iff equal states.
inline std::string canonical_string(const EngineState& s) {
  std::ostringstream o;
  o << "wh=" << s.work_hours << ";st=" << s.started << ";t=" << s.last_timestamp << ";seg=" << s.segment_start
    << ";present=";
  for (const auto& id : s.present) o << id.size() << ':' << id << ',';
  o << ";ballots=";
  for (const auto& [id, b] : s.ballots) {
    o << id.size() << ':' << id << '=' << b.preferred;
    for (const auto& [alt, v] : b.pay_vs) o << '/' << alt << ':' << v;
    o << ',';
  }
  o << ";outcome=" << (s.outcome ? std::to_string(*s.outcome) : "manual") << ";rates=";
  for (const auto& [id, r] : s.rates) o << id.size() << ':' << id << '=' << r << ',';
  o << ";accrued=";
  for (const auto& [id, m] : s.accrued) o << id.size() << ':' << id << '=' << m << ',';
  o << ";communal=" << s.communal_total << ";aseq=" << s.actuator_sequence << ";lunches=" << s.lunches_held
    << ";lotteries=";
  for (const auto& l : s.lotteries) {
    o << l.ordinal << '@' << l.timestamp_ms << '[';
    for (const auto& w : l.winners) o << w.size() << ':' << w << ',';
    o << ']';
  }
  o << ";n=" << s.events_applied;
  return o.str();
}

// 64-bit FNV-1a of the canonical form, as 16 hex digits.
inline std::string state_digest(const EngineState& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_string(s)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, h >>= 4) out[static_cast<std::size_t>(k)] = kHex[h & 0xf];
  return out;
}

// Single-writer wrapper: applies events, writes them (and the lottery audit
// records the engine produces) to a sink before committing the new state.
class ZoneEngine {
 public:
  using Sink = std::function<void(const SessionEvent&)>;

  explicit ZoneEngine(EngineConfig cfg, Sink sink = {}) : cfg_(std::move(cfg)), sink_(std::move(sink)) {
    cfg_.validate();
  }

  // Restores from a persisted log without re-emitting it to the sink.
  void restore(const std::vector<SessionEvent>& log) {
    state_ = replay(log, cfg_);
    log_ = log;
  }

  ApplyResult submit(const SessionEvent& e) {
    ApplyResult r = apply_event(state_, e, cfg_);
    commit(e, r.state);
    for (const auto& n : r.rewards) {
      if (n.kind != RewardKind::kLottery) continue;
      SessionEvent audit{e.timestamp_ms, EventKind::kLotteryResult, {}, std::nullopt, n.ordinal, n.winners};
      ApplyResult ar = apply_event(state_, audit, cfg_);
      commit(audit, ar.state);
      r.state = state_;
    }
    return r;
  }

  const EngineState& state() const { return state_; }
  const std::vector<SessionEvent>& log() const { return log_; }
  const EngineConfig& config() const { return cfg_; }

 private:
  void commit(const SessionEvent& e, const EngineState& next) {
    if (sink_) sink_(e);
    log_.push_back(e);
    state_ = next;
  }

  EngineConfig cfg_;
  Sink sink_;
  EngineState state_;
  std::vector<SessionEvent> log_;
};

}  // namespace smartsdh
