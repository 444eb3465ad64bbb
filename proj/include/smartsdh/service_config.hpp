#pragma once

// Declarative service configuration (one JSON file) with environment overrides.
//
//   {
//     "host": "127.0.0.1", "port": 8080, "log_dir": "data", "roster": "roster.json",
//     "tick_interval_ms": 1000, "fsync": true,
//     "zones": [{
//       "id": "east-wing",
//       "fence": {"box": [lat_min, lon_min, lat_max, lon_max]}   or {"polygon": [[lat, lon], ...]},
//       "work_hours": {"start": "09:00", "end": "17:00", "utc_offset_minutes": -300},
//       "actuator_id": "bacnet:1201",
//       "mechanism": {"lambda_max": 100, "nominal": "VeryBright", "virtual_cost": [0, 5, 10],
//                     "tie_break": "dimmest", "settings": [{"label": "Normal", "level_percent": 33}, ...]},
//       "rewards": {"lottery_threshold": 10000000, "communal_threshold": 50000000,
//                   "prizes_per_lottery": 3, "rng_seed": 2019, "survey_bonus": 5000}
//     }]
//   }
//
// Relative log_dir and roster paths resolve against the config file's directory.
// SMARTSDH_HOST, SMARTSDH_PORT, SMARTSDH_LOG_DIR and SMARTSDH_ROSTER override
// the file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "smartsdh/service.hpp"

namespace smartsdh {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline MechanismConfig mechanism_from_json(const nlohmann::json& j) {
  MechanismConfig m;
  m.lambda_max = j.value("lambda_max", m.lambda_max);
  if (j.contains("settings")) {
    m.settings.clear();
    for (const auto& s : j.at("settings")) {
      m.settings.push_back({m.settings.size(), s.at("label").get<std::string>(), s.at("level_percent").get<int>()});
    }
    m.nominal_outcome = m.settings.size() - 1;
  }
  if (j.contains("nominal")) {
    const auto& n = j.at("nominal");
    if (n.is_string()) {
      auto idx = m.find_label(n.get<std::string>());
      if (!idx) throw ConfigError("nominal setting '" + n.get<std::string>() + "' is not a configured label");
      m.nominal_outcome = *idx;
    } else {
      m.nominal_outcome = n.get<OutcomeIndex>();
    }
  }
  if (j.contains("virtual_cost") && !j.at("virtual_cost").is_null()) {
    m.virtual_cost = j.at("virtual_cost").get<std::vector<Points>>();
  }
  const auto tb = j.value("tie_break", std::string("dimmest"));
  if (tb == "dimmest") {
    m.tie_break = TieBreak::kDimmestWins;
  } else if (tb == "brightest") {
    m.tie_break = TieBreak::kBrightestWins;
  } else {
    throw ConfigError("tie_break must be 'dimmest' or 'brightest'");
  }
  return m;
}

inline RewardConfig rewards_from_json(const nlohmann::json& j) {
  RewardConfig r;
  r.lottery_threshold = j.value("lottery_threshold", r.lottery_threshold);
  r.communal_threshold = j.value("communal_threshold", r.communal_threshold);
  r.prizes_per_lottery = j.value("prizes_per_lottery", r.prizes_per_lottery);
  r.rng_seed = j.value("rng_seed", r.rng_seed);
  r.survey_bonus = j.value("survey_bonus", r.survey_bonus);
  return r;
}

inline GeoFence fence_from_json(const nlohmann::json& j) {
  if (j.contains("box")) {
    const auto b = j.at("box").get<std::vector<double>>();
    if (b.size() != 4) throw ConfigError("fence box needs [lat_min, lon_min, lat_max, lon_max]");
    return GeoFence::box(b[0], b[1], b[2], b[3]);
  }
  if (j.contains("polygon")) {
    std::vector<GeoPoint> pts;
    for (const auto& p : j.at("polygon")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("fence vertices are [lat, lon] pairs");
      pts.push_back({v[0], v[1]});
    }
    return GeoFence(std::move(pts));
  }
  throw ConfigError("fence needs 'box' or 'polygon'");
}

inline ZoneConfig zone_from_json(const nlohmann::json& j) {
  ZoneConfig z;
  z.id = j.at("id").get<std::string>();
  z.fence = fence_from_json(j.at("fence"));
  if (j.contains("work_hours")) {
    const auto& w = j.at("work_hours");
    z.work_hours.start_minute = parse_clock_time(w.value("start", std::string("09:00")));
    z.work_hours.end_minute = parse_clock_time(w.value("end", std::string("17:00")));
    z.work_hours.utc_offset_minutes = w.value("utc_offset_minutes", 0);
  }
  z.actuator_id = j.value("actuator_id", z.id);
  if (j.contains("mechanism")) z.engine.mechanism = mechanism_from_json(j.at("mechanism"));
  if (j.contains("rewards")) z.engine.rewards = rewards_from_json(j.at("rewards"));
  z.validate();
  return z;
}

using EnvLookup = std::function<const char*(const char*)>;

inline ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                              const EnvLookup& env = [](const char* k) { return std::getenv(k); }) {
  ServiceConfig c;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
  };
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.log_dir = resolve(j.value("log_dir", c.log_dir));
    c.roster_path = resolve(j.value("roster", c.roster_path));
    c.tick_interval_ms = j.value("tick_interval_ms", c.tick_interval_ms);
    c.recent_events = j.value("recent_events", c.recent_events);
    c.fsync = j.value("fsync", c.fsync);
    for (const auto& z : j.at("zones")) c.zones.push_back(zone_from_json(z));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  if (const char* v = env("SMARTSDH_HOST")) c.host = v;
  if (const char* v = env("SMARTSDH_PORT")) {
    try {
      c.port = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SMARTSDH_PORT is not a number: ") + v);
    }
  }
  if (const char* v = env("SMARTSDH_LOG_DIR")) c.log_dir = v;
  if (const char* v = env("SMARTSDH_ROSTER")) c.roster_path = v;
  if (c.port < 0 || c.port > 65535) throw ConfigError("port outside 0..65535");
  if (c.tick_interval_ms <= 0) throw ConfigError("tick_interval_ms must be positive");
  if (c.zones.empty()) throw ConfigError("config lists no zones");
  return c;
}

inline ServiceConfig load_service_config(const std::string& path,
                                         const EnvLookup& env = [](const char* k) { return std::getenv(k); }) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config " + path + ": " + ex.what());
  }
  return service_config_from_json(j, std::filesystem::path(path).parent_path(), env);
}

}  // namespace smartsdh
