#pragma once

// Agent-based harness: exhaustive misreport search, participation sweeps and
// synthetic days driven through the session engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "smartsdh/analytics.hpp"
#include "smartsdh/mechanism.hpp"
#include "smartsdh/rewards.hpp"
#include "smartsdh/session_engine.hpp"

namespace smartsdh::sim {

// ---------------------------------------------------------------------------
// Misreport search

struct DeviationResult {
  TypeVector best_report;
  Points gain = 0;  // best misreport utility minus truthful utility
  Points truthful_utility = 0;
  std::uint64_t reports_checked = 0;
};

// Calls visit(report) for every vector in {0, step, ..., lambda_max}^m.
template <typename Visit>
void for_each_grid_type(std::size_t m, Points lambda_max, Points step, Visit&& visit) {
  if (step <= 0 || lambda_max % step != 0) throw std::invalid_argument("grid step must divide lambda_max");
  TypeVector cur{std::vector<Points>(m, 0)};
  while (true) {
    visit(static_cast<const TypeVector&>(cur));
    std::size_t k = 0;
    for (; k < m; ++k) {
      if (cur.costs[k] + step <= lambda_max) {
        cur.costs[k] += step;
        break;
      }
      cur.costs[k] = 0;
    }
    if (k == m) return;
  }
}

using AllocationRule = std::function<Allocation(const Profile&, const MechanismConfig&)>;

// The truthful report is the reference point: a positive gain is a profitable lie.
// `rule` defaults to the mechanism's own allocation; tests swap in broken rules.
inline DeviationResult deviation_search(const Profile& truth, std::size_t i, Points grid_step,
                                        const MechanismConfig& cfg, const AllocationRule& rule = {}) {
  if (i >= truth.size()) throw std::domain_error("user index out of range");
  auto run = [&](const Profile& p) { return rule ? rule(p, cfg) : allocate(p, cfg); };
  const TypeVector& true_type = truth.types[i];
  const Allocation honest = run(truth);

  DeviationResult out;
  out.truthful_utility = utility(honest.outcome, honest.rates[i], true_type);
  out.best_report = true_type;
  Points best = out.truthful_utility;

  Profile trial = truth;
  for_each_grid_type(cfg.outcome_count(), cfg.lambda_max, grid_step, [&](const TypeVector& report) {
    trial.types[i] = report;
    const Allocation a = run(trial);
    const Points u = utility(a.outcome, a.rates[i], true_type);
    ++out.reports_checked;
    if (u > best) {
      best = u;
      out.best_report = report;
    }
  });
  out.gain = best - out.truthful_utility;
  return out;
}

using ProfileSampler = std::function<Profile(std::mt19937_64&)>;

// n uniform in [n_min, n_max], entries uniform on {0, step, ..., lambda_max}.
inline ProfileSampler uniform_grid_sampler(std::size_t n_min, std::size_t n_max, Points step, Points lambda_max,
                                           std::size_t m) {
  if (n_min < 1 || n_max < n_min) throw std::invalid_argument("bad profile size range");
  if (step <= 0 || lambda_max % step != 0) throw std::invalid_argument("grid step must divide lambda_max");
  return [=](std::mt19937_64& rng) {
    Profile p;
    const auto n = n_min + uniform_below(rng, n_max - n_min + 1);
    const auto levels = static_cast<std::uint64_t>(lambda_max / step) + 1;
    for (std::size_t u = 0; u < n; ++u) {
      TypeVector t{std::vector<Points>(m)};
      for (auto& c : t.costs) c = static_cast<Points>(uniform_below(rng, levels)) * step;
      p.add("u" + std::to_string(u + 1), std::move(t));
    }
    return p;
  };
}

struct IcReport {
  std::uint64_t profiles = 0;
  std::uint64_t users_checked = 0;
  std::uint64_t reports_checked = 0;
  std::uint64_t profitable_deviations = 0;
  Points max_gain = 0;
  Profile worst_profile;  // only meaningful when profitable_deviations > 0
};

inline IcReport ic_sweep(const ProfileSampler& sampler, std::uint64_t trials, Points grid_step,
                         const MechanismConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  IcReport rep;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const Profile p = sampler(rng);
    ++rep.profiles;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto d = deviation_search(p, i, grid_step, cfg);
      ++rep.users_checked;
      rep.reports_checked += d.reports_checked;
      if (d.gain > 0) {
        ++rep.profitable_deviations;
        if (d.gain > rep.max_gain) rep.worst_profile = p;
      }
      rep.max_gain = std::max(rep.max_gain, d.gain);
    }
  }
  return rep;
}

struct IrReport {
  std::uint64_t trials = 0;
  std::uint64_t users = 0;
  std::uint64_t violating_profiles = 0;
  std::uint64_t payment_bound_violations = 0;
  Points min_margin = 0;
  Points min_payment = 0;
  Points max_payment = 0;

  double violation_fraction() const {
    return trials == 0 ? 0.0 : static_cast<double>(violating_profiles) / static_cast<double>(trials);
  }
};

// Payment bounds checked: [lambda_max - max virtual cost, n * lambda_max].
inline IrReport ir_sweep(const ProfileSampler& sampler, std::uint64_t trials, const MechanismConfig& cfg,
                         std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("ir_sweep needs at least one trial");
  std::mt19937_64 rng(seed);
  IrReport rep;
  rep.trials = trials;
  bool first = true;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const Profile p = sampler(rng);
    const auto margins = ir_margins(p, cfg);
    const auto alloc = allocate(p, cfg);
    const Points n = static_cast<Points>(p.size());
    bool violated = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ++rep.users;
      if (margins[i] < 0) violated = true;
      const Points pay = alloc.rates[i];
      if (pay < cfg.lambda_max - cfg.virtual_cost_max() || pay > n * cfg.lambda_max) ++rep.payment_bound_violations;
      if (first) {
        rep.min_margin = margins[i];
        rep.min_payment = rep.max_payment = pay;
        first = false;
      }
      rep.min_margin = std::min(rep.min_margin, margins[i]);
      rep.min_payment = std::min(rep.min_payment, pay);
      rep.max_payment = std::max(rep.max_payment, pay);
    }
    if (violated) ++rep.violating_profiles;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scenarios

struct Truthful {};
struct FixedMisreport {
  TypeVector report;
};
// Illustrative stand-in for a voter who learns to concede: after each presence
// interval it lowers its pay against one alternative by `step`, and stops for
// good the first time an interval's realized utility rate drops below the
// previous interval's. Reported pays therefore never increase.
struct CompromiseLearner {
  Points step = 5;
};
using Policy = std::variant<Truthful, FixedMisreport, CompromiseLearner>;

struct Interval {
  TimestampMs login = 0;
  TimestampMs logout = 0;
};

struct AgentSpec {
  std::string id;
  TypeVector true_type;
  Policy policy = Truthful{};
  std::vector<Interval> schedule;
  double revotes_per_hour = 0.0;  // re-submits the same ballot at random times
};

struct ScenarioTrace {
  std::vector<SessionEvent> events;
  std::vector<Segment> segments;
  std::vector<ActuatorCommand> commands;
  std::map<std::string, MilliPoints> realized_utility;  // credits minus true cost, milli-points
  std::map<std::string, MilliPoints> points;
  std::map<std::string, std::vector<Ballot>> reports;  // ballot used in each presence interval
  EngineState final_state;
};

namespace detail {

inline void validate_agent(const AgentSpec& a, TimestampMs horizon_ms, const MechanismConfig& cfg) {
  if (a.id.empty()) throw std::invalid_argument("agent without id");
  validate_type(a.true_type, cfg);
  if (const auto* f = std::get_if<FixedMisreport>(&a.policy)) validate_type(f->report, cfg);
  if (const auto* l = std::get_if<CompromiseLearner>(&a.policy); l && l->step <= 0) {
    throw std::invalid_argument("learner step must be positive");
  }
  TimestampMs prev_end = 0;
  for (const auto& iv : a.schedule) {
    if (iv.login < prev_end || iv.logout <= iv.login || iv.logout > horizon_ms) {
      throw std::invalid_argument("agent " + a.id + ": schedule intervals must be ordered, disjoint and inside the horizon");
    }
    prev_end = iv.logout;
  }
  if (a.revotes_per_hour < 0) throw std::invalid_argument("negative revote rate");
}

// Portable uniform double in (0, 1].
inline double unit_interval(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
}

struct LearnerMemory {
  Ballot report;
  OutcomeIndex target = 0;
  bool locked = false;
  bool has_prev = false;
  double prev_rate = 0;
};

}  // namespace detail

// Work hours span [0, horizon_ms]. Login/logout/revote actions are applied in
// time order; at equal times logouts precede logins precede revotes, then agent order.
inline ScenarioTrace run_scenario(const std::vector<AgentSpec>& agents, TimestampMs horizon_ms, std::uint64_t seed,
                                  const EngineConfig& cfg) {
  if (horizon_ms <= 0) throw std::invalid_argument("horizon must be positive");
  for (const auto& a : agents) detail::validate_agent(a, horizon_ms, cfg.mechanism);

  enum Action { kLogout = 0, kLogin = 1, kRevote = 2 };
  std::vector<std::tuple<TimestampMs, int, std::size_t>> agenda;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < agents.size(); ++k) {
    for (const auto& iv : agents[k].schedule) {
      agenda.emplace_back(iv.login, kLogin, k);
      agenda.emplace_back(iv.logout, kLogout, k);
      if (agents[k].revotes_per_hour > 0) {
        const double mean_gap_ms = 3'600'000.0 / agents[k].revotes_per_hour;
        double t = static_cast<double>(iv.login);
        while (true) {
          t += -std::log(detail::unit_interval(rng)) * mean_gap_ms;
          const auto ts = static_cast<TimestampMs>(t);
          if (ts >= iv.logout) break;
          if (ts > iv.login) agenda.emplace_back(ts, kRevote, k);
        }
      }
    }
  }
  std::sort(agenda.begin(), agenda.end());

  ScenarioTrace trace;
  ZoneEngine engine(cfg);
  std::map<std::string, std::size_t> index_of;
  std::map<std::size_t, detail::LearnerMemory> learners;
  std::vector<Ballot> current(agents.size());
  std::vector<MilliPoints> episode_utility(agents.size(), 0);
  std::vector<TimestampMs> episode_start(agents.size(), 0);

  for (std::size_t k = 0; k < agents.size(); ++k) {
    index_of[agents[k].id] = k;
    const auto& a = agents[k];
    if (std::holds_alternative<CompromiseLearner>(a.policy)) {
      detail::LearnerMemory mem;
      mem.report = type_to_ballot(a.true_type, cfg.mechanism);
      // Concede on the alternative the agent minds least.
      bool found = false;
      for (const auto& [alt, pay] : mem.report.pay_vs) {
        if (!found || pay < mem.report.pay_vs.at(mem.target)) {
          mem.target = alt;
          found = true;
        }
      }
      learners[k] = mem;
    }
  }

  auto ballot_for = [&](std::size_t k) -> Ballot {
    const auto& a = agents[k];
    if (const auto* f = std::get_if<FixedMisreport>(&a.policy)) return type_to_ballot(f->report, cfg.mechanism);
    if (learners.contains(k)) return learners[k].report;
    return type_to_ballot(a.true_type, cfg.mechanism);
  };

  auto submit = [&](const SessionEvent& e) {
    ApplyResult r = engine.submit(e);
    if (r.command) trace.commands.push_back(*r.command);
    if (r.closed) {
      const Segment& seg = *r.closed;
      for (const auto& [id, rate] : seg.rates) {
        const std::size_t k = index_of.at(id);
        const Points cost = agents[k].true_type[seg.outcome];
        const MilliPoints u = segment_credit(seg.duration_ms(), rate) - seg.duration_ms() * cost / 3600;
        trace.realized_utility[id] += u;
        episode_utility[k] += u;
      }
      trace.segments.push_back(seg);
    }
  };

  auto end_episode = [&](std::size_t k, TimestampMs t) {
    auto it = learners.find(k);
    if (it == learners.end()) return;
    auto& mem = it->second;
    const TimestampMs dur = t - episode_start[k];
    const double rate = dur > 0 ? static_cast<double>(episode_utility[k]) / static_cast<double>(dur) : 0.0;
    if (mem.has_prev && rate < mem.prev_rate) mem.locked = true;
    mem.has_prev = true;
    mem.prev_rate = rate;
    if (!mem.locked) {
      auto& pay = mem.report.pay_vs[mem.target];
      pay = std::max<Points>(0, pay - std::get<CompromiseLearner>(agents[k].policy).step);
    }
  };

  submit(SessionEvent::work_start(0));
  for (const auto& [t, action, k] : agenda) {
    const auto& id = agents[k].id;
    switch (action) {
      case kLogin:
        current[k] = ballot_for(k);
        trace.reports[id].push_back(current[k]);
        episode_utility[k] = 0;
        episode_start[k] = t;
        submit(SessionEvent::login(t, id, current[k]));
        break;
      case kLogout:
        submit(SessionEvent::logout(t, id));
        end_episode(k, t);
        break;
      case kRevote:
        submit(SessionEvent::ballot_change(t, id, current[k]));
        break;
    }
  }
  submit(SessionEvent::work_end(horizon_ms));

  trace.events = engine.log();
  trace.final_state = engine.state();
  trace.points = engine.state().accrued;
  for (const auto& a : agents) {
    trace.points.try_emplace(a.id, 0);
    trace.realized_utility.try_emplace(a.id, 0);
  }
  return trace;
}

// Synthetic weather-station feed over [start, start + horizon): solar radiation
// follows a daylight arc, temperature lags it, humidity runs opposite, and
// pressure drifts. Gaussian noise comes from a portable Box-Muller draw.
inline std::vector<analytics::SensorSample> synthetic_sensor_day(TimestampMs start, TimestampMs horizon_ms,
                                                                  TimestampMs interval_ms, std::uint64_t seed) {
  if (horizon_ms <= 0 || interval_ms <= 0) throw std::invalid_argument("horizon and interval must be positive");
  std::mt19937_64 rng(seed);
  auto gauss = [&] {
    const double u1 = detail::unit_interval(rng);
    const double u2 = detail::unit_interval(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  std::vector<analytics::SensorSample> out;
  double pressure = 29.6 + 0.1 * gauss();
  for (TimestampMs t = 0; t < horizon_ms; t += interval_ms) {
    const double phase = M_PI * static_cast<double>(t) / static_cast<double>(horizon_ms);
    const double sun = std::sin(phase);
    analytics::SensorSample s;
    s.timestamp_ms = start + t;
    s.solar_radiation_W_per_m2 = std::max(0.0, 500.0 * sun + 40.0 * gauss());
    s.temperature_degF = 48.0 + 12.0 * std::sin(phase * 0.8) + 1.5 * gauss();
    s.humidity_percent = std::clamp(88.0 - 20.0 * sun + 4.0 * gauss(), 0.0, 100.0);
    pressure += 0.005 * gauss();
    s.pressure_inHg = pressure;
    out.push_back(s);
  }
  return out;
}

}  // namespace smartsdh::sim
