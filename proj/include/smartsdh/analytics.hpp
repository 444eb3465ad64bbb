#pragma once

// Energy savings over an implemented-level trace, and the zero-order
// correlation table between light preference and atmospheric readings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "smartsdh/events.hpp"
#include "smartsdh/mechanism.hpp"
#include "smartsdh/session_engine.hpp"

namespace smartsdh::analytics {

class AnalyticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Energy

struct LevelSpan {
  TimestampMs start = 0;
  TimestampMs end = 0;
  int level_percent = 100;
};

inline std::vector<LevelSpan> level_trace(const std::vector<Segment>& segments, const MechanismConfig& cfg) {
  std::vector<LevelSpan> out;
  for (const auto& s : segments) {
    if (s.end <= s.start) continue;
    out.push_back({s.start, s.end, cfg.setting(s.outcome).level_percent});
  }
  return out;
}

// Percent of the baseline energy not used: 100 * (1 - time-weighted mean level / baseline),
// rounded half-up to two decimals with exact integer arithmetic.
inline double energy_savings(const std::vector<LevelSpan>& trace, int baseline_percent = 100) {
  if (trace.empty()) throw AnalyticsError("energy savings of an empty trace");
  if (baseline_percent <= 0) throw AnalyticsError("baseline must be positive");
  __int128 saved = 0;
  __int128 total = 0;
  for (const auto& s : trace) {
    if (s.end <= s.start) throw AnalyticsError("trace span with non-positive duration");
    if (s.level_percent < 0 || s.level_percent > 100) throw AnalyticsError("level outside [0, 100]");
    const __int128 d = s.end - s.start;
    saved += d * (baseline_percent - s.level_percent);
    total += d * baseline_percent;
  }
  // hundredths of a percent
  const __int128 scaled = saved * 10000;
  const bool negative = scaled < 0;
  const __int128 mag = negative ? -scaled : scaled;
  __int128 hundredths = (2 * mag + total) / (2 * total);
  if (negative) hundredths = -hundredths;
  return static_cast<double>(static_cast<std::int64_t>(hundredths)) / 100.0;
}

// ---------------------------------------------------------------------------
// Statistics

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw AnalyticsError("mean of empty series");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1 denominator).
inline double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) throw AnalyticsError("standard deviation needs two values");
  const double m = mean(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw AnalyticsError("series lengths differ");
  if (xs.size() < 3) throw AnalyticsError("correlation needs at least 3 pairs");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double dx = xs[k] - mx;
    const double dy = ys[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw AnalyticsError("correlation undefined for a zero-variance series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Two-sided p for H0: rho = 0, from t = r sqrt(n-2) / sqrt(1-r^2) on n-2 degrees of
// freedom. The Student-t tail is I_{df/(df+t^2)}(df/2, 1/2).
inline double p_value(double r, std::int64_t n) {
  if (n < 3) throw AnalyticsError("p-value needs n >= 3");
  if (!(std::abs(r) <= 1.0)) throw AnalyticsError("correlation outside [-1, 1]");
  if (std::abs(r) == 1.0) return 0.0;
  if (r == 0.0) return 1.0;
  const double df = static_cast<double>(n - 2);
  const double t2 = r * r * df / (1.0 - r * r);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, df / (df + t2)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Sensor data

struct SensorSample {
  TimestampMs timestamp_ms = 0;
  double humidity_percent = 0;
  double temperature_degF = 0;
  double pressure_inHg = 0;
  double solar_radiation_W_per_m2 = 0;
};

inline const std::vector<std::string>& sensor_columns() {
  static const std::vector<std::string> cols{"timestamp_ms", "humidity_percent", "temperature_degF", "pressure_inHg",
                                             "solar_radiation_W_per_m2"};
  return cols;
}

// Empty string when the sample is valid.
inline std::string sensor_violation(const SensorSample& s) {
  if (!(s.humidity_percent >= 0 && s.humidity_percent <= 100)) return "humidity_percent outside [0, 100]";
  if (!(s.pressure_inHg > 0)) return "pressure_inHg must be positive";
  if (!(s.solar_radiation_W_per_m2 >= 0)) return "solar_radiation_W_per_m2 must be non-negative";
  if (!std::isfinite(s.temperature_degF)) return "temperature_degF is not finite";
  return {};
}

struct RowError {
  std::size_t line = 0;
  std::string message;
};

template <typename T>
struct Ingested {
  std::vector<T> rows;
  std::vector<RowError> rejected;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s) {
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
  return v;
}

inline std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t k = 0; k < cols.size(); ++k) out += (k ? "," : "") + cols[k];
  return out;
}

// Reads the header and maps each required column to its position.
inline std::vector<std::size_t> header_positions(std::istream& in, const std::vector<std::string>& required) {
  std::string header;
  if (!std::getline(in, header)) throw AnalyticsError("missing header; expected: " + join(required));
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  const auto names = split_csv_line(header);
  std::vector<std::size_t> pos;
  for (const auto& col : required) {
    auto it = std::find(names.begin(), names.end(), col);
    if (it == names.end()) throw AnalyticsError("missing column '" + col + "'; expected header: " + join(required));
    pos.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  return pos;
}

template <typename T, typename Parse>
Ingested<T> read_rows(std::istream& in, const std::vector<std::string>& required, Parse parse) {
  const auto pos = header_positions(in, required);
  Ingested<T> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    try {
      std::vector<std::string> picked;
      for (std::size_t p : pos) {
        if (p >= cells.size() || cells[p].empty()) throw std::invalid_argument("missing value for " + required[picked.size()]);
        picked.push_back(cells[p]);
      }
      out.rows.push_back(parse(picked));
    } catch (const std::exception& ex) {
      out.rejected.push_back({lineno, ex.what()});
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const T& a, const T& b) { return a.timestamp_ms < b.timestamp_ms; });
  return out;
}

}  // namespace detail

inline Ingested<SensorSample> read_sensor_csv(std::istream& in) {
  return detail::read_rows<SensorSample>(in, sensor_columns(), [](const std::vector<std::string>& c) {
    SensorSample s{detail::parse_int(c[0]), detail::parse_double(c[1]), detail::parse_double(c[2]),
                   detail::parse_double(c[3]), detail::parse_double(c[4])};
    if (auto why = sensor_violation(s); !why.empty()) throw std::invalid_argument(why);
    return s;
  });
}

inline Ingested<SensorSample> ingest_sensor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AnalyticsError("cannot open " + path);
  return read_sensor_csv(in);
}

inline std::string sensor_csv_header() { return detail::join(sensor_columns()) + '\n'; }

inline std::string sensor_csv_row(const SensorSample& s) {
  std::ostringstream out;
  out.precision(10);
  out << s.timestamp_ms << ',' << s.humidity_percent << ',' << s.temperature_degF << ',' << s.pressure_inHg << ','
      << s.solar_radiation_W_per_m2 << '\n';
  return out.str();
}

inline void write_sensor_csv(std::ostream& out, const std::vector<SensorSample>& samples) {
  out << sensor_csv_header();
  for (const auto& s : samples) out << sensor_csv_row(s);
}

// ---------------------------------------------------------------------------
// Votes

struct VoteSample {
  TimestampMs timestamp_ms = 0;
  int level_percent = 0;  // level of the voter's preferred setting
};

inline Ingested<VoteSample> read_vote_csv(std::istream& in) {
  return detail::read_rows<VoteSample>(in, {"timestamp_ms", "level_percent"}, [](const std::vector<std::string>& c) {
    VoteSample v{detail::parse_int(c[0]), static_cast<int>(detail::parse_int(c[1]))};
    if (v.level_percent < 0 || v.level_percent > 100) throw std::invalid_argument("level_percent outside [0, 100]");
    return v;
  });
}

// Every ballot cast (including ballots carried by a login) becomes one vote.
inline std::vector<VoteSample> votes_from_events(const std::vector<SessionEvent>& events, const MechanismConfig& cfg) {
  std::vector<VoteSample> out;
  for (const auto& e : events) {
    if ((e.kind == EventKind::kBallotChange || e.kind == EventKind::kLogin) && e.ballot) {
      out.push_back({e.timestamp_ms, cfg.setting(e.ballot->preferred).level_percent});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correlation table

struct CorrelationRow {
  std::string variable;
  double mean = 0;
  double sd = 0;
  double r = 0;
  double p = 0;
  std::int64_t n = 0;
};

inline constexpr TimestampMs kDefaultJoinWindowMs = 5 * 60 * 1000;

// Pairs each vote with the nearest sensor sample within the window (earlier
// sample on exact ties). Sensors must be sorted by timestamp.
inline std::vector<std::pair<VoteSample, SensorSample>> join_nearest(const std::vector<VoteSample>& votes,
                                                                     const std::vector<SensorSample>& sensors,
                                                                     TimestampMs window_ms) {
  std::vector<std::pair<VoteSample, SensorSample>> out;
  if (sensors.empty()) return out;
  for (const auto& v : votes) {
    auto it = std::lower_bound(sensors.begin(), sensors.end(), v.timestamp_ms,
                               [](const SensorSample& s, TimestampMs t) { return s.timestamp_ms < t; });
    const SensorSample* best = nullptr;
    TimestampMs best_gap = 0;
    auto consider = [&](const SensorSample& s) {
      const TimestampMs gap = std::abs(s.timestamp_ms - v.timestamp_ms);
      if (gap <= window_ms && (!best || gap < best_gap)) {
        best = &s;
        best_gap = gap;
      }
    };
    if (it != sensors.begin()) consider(*std::prev(it));
    if (it != sensors.end()) consider(*it);
    if (best) out.emplace_back(v, *best);
  }
  return out;
}

inline std::vector<CorrelationRow> preference_correlations(const std::vector<VoteSample>& votes,
                                                           std::vector<SensorSample> sensors,
                                                           TimestampMs window_ms = kDefaultJoinWindowMs) {
  std::stable_sort(sensors.begin(), sensors.end(),
                   [](const SensorSample& a, const SensorSample& b) { return a.timestamp_ms < b.timestamp_ms; });
  const auto pairs = join_nearest(votes, sensors, window_ms);
  if (pairs.empty()) throw AnalyticsError("no vote could be joined to a sensor sample within the window");

  std::vector<double> pref;
  std::map<std::string, std::vector<double>> vars;
  const std::vector<std::string> order{"temperature_degF", "pressure_inHg", "solar_radiation_W_per_m2",
                                       "humidity_percent"};
  for (const auto& [v, s] : pairs) {
    pref.push_back(v.level_percent);
    vars["temperature_degF"].push_back(s.temperature_degF);
    vars["pressure_inHg"].push_back(s.pressure_inHg);
    vars["solar_radiation_W_per_m2"].push_back(s.solar_radiation_W_per_m2);
    vars["humidity_percent"].push_back(s.humidity_percent);
  }
  const auto n = static_cast<std::int64_t>(pref.size());
  if (n < 3) throw AnalyticsError("correlation table needs at least 3 joined votes, got " + std::to_string(n));

  std::vector<CorrelationRow> rows;
  rows.push_back({"light_setting_preference", mean(pref), stddev(pref), 1.0, 0.0, n});
  for (const auto& name : order) {
    const auto& xs = vars[name];
    double r = 0;
    try {
      r = pearson_r(pref, xs);
    } catch (const AnalyticsError& ex) {
      throw AnalyticsError(name + ": " + ex.what());
    }
    rows.push_back({name, mean(xs), stddev(xs), r, p_value(r, n), n});
  }
  return rows;
}

inline void write_correlation_csv(std::ostream& out, const std::vector<CorrelationRow>& rows) {
  out << "variable,mean,sd,r,p\n";
  for (const auto& row : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.6g\n", row.variable.c_str(), row.mean, row.sd, row.r, row.p);
    out << buf;
  }
}

}  // namespace smartsdh::analytics
