#pragma once

// Random but valid session logs for property tests.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "smartsdh/events.hpp"
#include "smartsdh/mechanism.hpp"

namespace testlogs {

using smartsdh::Ballot;
using smartsdh::Points;
using smartsdh::SessionEvent;
using smartsdh::TimestampMs;

struct LogShape {
  std::size_t users = 4;
  std::size_t events = 60;
  Points lambda_max = 100;
  Points pay_step = 1;            // pay values are multiples of this
  TimestampMs max_gap_ms = 900'000;
  double zero_gap_probability = 0.1;
  bool multi_day = true;          // occasionally end and restart work hours
};

inline Ballot random_ballot(std::mt19937_64& rng, const LogShape& shape, std::size_t m = 3) {
  Ballot b;
  b.preferred = rng() % m;
  const auto levels = static_cast<std::uint64_t>(shape.lambda_max / shape.pay_step) + 1;
  for (std::size_t x = 0; x < m; ++x) {
    if (x != b.preferred) b.pay_vs[x] = static_cast<Points>(rng() % levels) * shape.pay_step;
  }
  return b;
}

inline std::vector<SessionEvent> random_log(std::mt19937_64& rng, const LogShape& shape) {
  std::vector<SessionEvent> log;
  std::set<std::string> present;
  std::set<std::string> has_ballot;
  bool working = true;
  TimestampMs t = 1'700'000'000'000 + static_cast<TimestampMs>(rng() % 1'000'000);
  log.push_back(SessionEvent::work_start(t));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (std::size_t k = 0; k < shape.events; ++k) {
    if (coin(rng) >= shape.zero_gap_probability) t += 1 + static_cast<TimestampMs>(rng() % shape.max_gap_ms);
    if (!working) {
      log.push_back(SessionEvent::work_start(t));
      working = true;
      continue;
    }
    if (shape.multi_day && coin(rng) < 0.03) {
      log.push_back(SessionEvent::work_end(t));
      present.clear();
      working = false;
      continue;
    }
    const std::string user = "user" + std::to_string(rng() % shape.users);
    const double roll = coin(rng);
    if (!present.contains(user)) {
      if (roll < 0.8) {
        log.push_back(SessionEvent::login(t, user, random_ballot(rng, shape)));
        has_ballot.insert(user);
      } else {
        log.push_back(SessionEvent::login(t, user));  // spectating, or restoring an old ballot
      }
      present.insert(user);
    } else if (roll < 0.35) {
      log.push_back(SessionEvent::logout(t, user));
      present.erase(user);
    } else if (roll < 0.9) {
      log.push_back(SessionEvent::ballot_change(t, user, random_ballot(rng, shape)));
      has_ballot.insert(user);
    } else if (roll < 0.95) {
      log.push_back(SessionEvent::survey_bonus(t, user));
    } else {
      log.push_back(SessionEvent::marker(t));
    }
  }
  t += 1 + static_cast<TimestampMs>(rng() % shape.max_gap_ms);
  if (working) log.push_back(SessionEvent::work_end(t));
  return log;
}

// Inserts k markers at random times inside the log's span; each goes after
// every event sharing or preceding its timestamp.
inline std::vector<SessionEvent> insert_markers(std::mt19937_64& rng, std::vector<SessionEvent> log, std::size_t k) {
  if (log.empty()) return log;
  const TimestampMs lo = log.front().timestamp_ms;
  const TimestampMs hi = log.back().timestamp_ms;
  for (std::size_t j = 0; j < k; ++j) {
    const TimestampMs at = lo + static_cast<TimestampMs>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    auto pos = std::upper_bound(log.begin(), log.end(), at,
                                [](TimestampMs v, const SessionEvent& e) { return v < e.timestamp_ms; });
    log.insert(pos, SessionEvent::marker(at));
  }
  return log;
}

}  // namespace testlogs
