// smartsdh: run the zone service, replay event logs, simulate a day, and
// produce reports.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "smartsdh/analytics.hpp"
#include "smartsdh/http_server.hpp"
#include "smartsdh/service.hpp"
#include "smartsdh/service_config.hpp"
#include "smartsdh/simulator.hpp"

namespace {

using namespace smartsdh;
using json = nlohmann::json;

constexpr TimestampMs kHour = 3'600'000;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::vector<SessionEvent> load_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log " + path);
  return read_events(in);
}

// Engine settings: a zone from a service config file, or the defaults.
EngineConfig engine_config(const std::string& config_path, const std::string& zone) {
  if (config_path.empty()) return {};
  const auto cfg = load_service_config(config_path);
  for (const auto& z : cfg.zones) {
    if (zone.empty() || z.id == zone) return z.engine;
  }
  throw std::runtime_error("zone '" + zone + "' not in " + config_path);
}

void print_table(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& [k, v] : rows) w = std::max(w, k.size());
  for (const auto& [k, v] : rows) out << "  " << k << std::string(w - k.size() + 2, ' ') << v << '\n';
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string points_str(MilliPoints mp) { return std::to_string(mp / 1000) + "." + fixed((mp % 1000) / 1000.0, 3).substr(2); }

// ---------------------------------------------------------------------------

int cmd_serve(const std::string& config_path) {
  auto cfg = load_service_config(config_path);
  const auto roster = Roster::load(cfg.roster_path);
  std::filesystem::create_directories(cfg.log_dir);
  std::ofstream actuator_log(std::filesystem::path(cfg.log_dir) / "actuator.log", std::ios::app);
  MockActuator actuator(&actuator_log);
  ZoneService svc(cfg, roster, actuator);
  HttpFrontend http(svc);
  const int port = http.bind(cfg.host, cfg.port);
  if (port < 0) throw std::runtime_error("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  svc.tick();

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread ticker([&] {
    auto next = std::chrono::steady_clock::now();
    while (!g_stop) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (std::chrono::steady_clock::now() < next) continue;
      next += std::chrono::milliseconds(cfg.tick_interval_ms);
      try {
        svc.tick();
      } catch (const std::exception& ex) {
        std::cerr << "tick: " << ex.what() << '\n';
      }
    }
    http.stop();
  });
  std::cout << "listening on http://" << cfg.host << ":" << port << std::endl;
  http.serve();
  g_stop = true;
  ticker.join();
  return 0;
}

int cmd_replay(const std::string& log_path, const EngineConfig& cfg, bool as_json, const std::string& segments_out) {
  const auto log = load_log(log_path);
  std::vector<Segment> segments;
  EngineState s;
  try {
    s = replay(log, cfg, [&](const ApplyResult& r) {
      if (r.closed) segments.push_back(*r.closed);
    });
  } catch (const ReplayError& ex) {
    std::cerr << "replay failed at event " << ex.index() << ": " << ex.what() << '\n';
    return 2;
  }
  if (!segments_out.empty()) {
    std::ofstream out(segments_out);
    for (const auto& seg : segments) {
      out << json{{"start_ms", seg.start},
                  {"end_ms", seg.end},
                  {"outcome", cfg.mechanism.setting(seg.outcome).label},
                  {"level_percent", cfg.mechanism.setting(seg.outcome).level_percent},
                  {"rates", seg.rates}}
                 .dump()
          << '\n';
    }
  }
  json points = json::object();
  for (const auto& [id, mp] : s.accrued) points[id] = mp;
  const json summary{{"events", log.size()},
                     {"segments", segments.size()},
                     {"digest", state_digest(s)},
                     {"communal_milli_points", s.communal_total},
                     {"milli_points", points},
                     {"lotteries", s.lotteries.size()},
                     {"lunches", s.lunches_held},
                     {"actuator_sequence", s.actuator_sequence}};
  if (as_json) {
    std::cout << summary.dump() << '\n';
    return 0;
  }
  std::cout << "replayed " << log_path << '\n';
  print_table(std::cout, {{"events", std::to_string(log.size())},
                          {"segments", std::to_string(segments.size())},
                          {"digest", state_digest(s)},
                          {"communal points", points_str(s.communal_total)},
                          {"lotteries held", std::to_string(s.lotteries.size())},
                          {"lunches held", std::to_string(s.lunches_held)}});
  if (!s.accrued.empty()) {
    std::cout << "points\n";
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& [id, mp] : s.accrued) rows.emplace_back(id, points_str(mp));
    print_table(std::cout, rows);
  }
  return 0;
}

int cmd_simulate(const std::string& out_dir, std::uint64_t seed, double hours, TimestampMs start_ms,
                 double revotes_per_hour, const EngineConfig& cfg) {
  const auto horizon = static_cast<TimestampMs>(hours * kHour);
  if (horizon <= 0) throw std::invalid_argument("--hours must be positive");
  std::filesystem::create_directories(out_dir);
  // The reference pair: one prefers Normal, the other Bright; they overlap mid-day.
  const std::vector<sim::AgentSpec> agents{
      {"u1", TypeVector{{0, 20, 50}}, sim::Truthful{}, {{0, horizon * 3 / 4}}, revotes_per_hour},
      {"u2", TypeVector{{40, 0, 10}}, sim::Truthful{}, {{horizon / 4, horizon}}, revotes_per_hour},
  };
  auto trace = sim::run_scenario(agents, horizon, seed, cfg);
  for (auto& e : trace.events) e.timestamp_ms += start_ms;
  const auto events_path = (std::filesystem::path(out_dir) / "events.jsonl").string();
  const auto sensors_path = (std::filesystem::path(out_dir) / "sensors.csv").string();
  {
    std::ofstream out(events_path);
    write_events(out, trace.events);
  }
  {
    std::ofstream out(sensors_path);
    analytics::write_sensor_csv(out, sim::synthetic_sensor_day(start_ms, horizon, 5 * 60'000, seed ^ 0x5eed));
  }
  std::cout << json{{"events", events_path},
                    {"sensors", sensors_path},
                    {"event_count", trace.events.size()},
                    {"segments", trace.segments.size()},
                    {"actuator_commands", trace.commands.size()},
                    {"digest", state_digest(replay(trace.events, cfg))}}
                   .dump()
            << '\n';
  return 0;
}

std::vector<Segment> segments_of(const std::vector<SessionEvent>& log, const EngineConfig& cfg) {
  std::vector<Segment> segments;
  replay(log, cfg, [&](const ApplyResult& r) {
    if (r.closed) segments.push_back(*r.closed);
  });
  return segments;
}

int cmd_report_savings(const std::string& log_path, const EngineConfig& cfg, bool as_json) {
  const auto log = load_log(log_path);
  const auto trace = analytics::level_trace(segments_of(log, cfg), cfg.mechanism);
  const double savings = analytics::energy_savings(trace);
  std::map<std::string, TimestampMs> time_at;
  TimestampMs total = 0;
  for (const auto& s : trace) {
    time_at[std::to_string(s.level_percent)] += s.end - s.start;
    total += s.end - s.start;
  }
  if (as_json) {
    std::cout << json{{"energy_savings_percent", savings}, {"work_ms", total}, {"ms_at_level", time_at}}.dump() << '\n';
    return 0;
  }
  std::cout << "energy savings vs. 100% baseline: " << fixed(savings, 2) << "%\n";
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& [lvl, ms] : time_at) rows.emplace_back(lvl + "%", fixed(100.0 * ms / total, 1) + "% of work time");
  print_table(std::cout, rows);
  return 0;
}

int cmd_report_correlations(const std::string& log_path, const std::string& sensors_path, const EngineConfig& cfg,
                            TimestampMs window_ms, const std::string& out_path) {
  const auto votes = analytics::votes_from_events(load_log(log_path), cfg.mechanism);
  const auto sensors = analytics::ingest_sensor_csv(sensors_path);
  for (const auto& bad : sensors.rejected) {
    std::cerr << sensors_path << ":" << bad.line << ": skipped: " << bad.message << '\n';
  }
  const auto rows = analytics::preference_correlations(votes, sensors.rows, window_ms);
  if (out_path.empty()) {
    analytics::write_correlation_csv(std::cout, rows);
  } else {
    std::ofstream out(out_path);
    analytics::write_correlation_csv(out, rows);
    std::cout << "wrote " << out_path << " (" << rows.front().n << " joined votes)\n";
  }
  return 0;
}

MechanismConfig sweep_mechanism(Points lambda_max, const std::vector<Points>& virtual_cost) {
  MechanismConfig m;
  m.lambda_max = lambda_max;
  if (!virtual_cost.empty()) m.virtual_cost = virtual_cost;
  m.validate();
  return m;
}

int cmd_ic_sweep(std::uint64_t profiles, std::size_t n_min, std::size_t n_max, Points step, Points lambda_max,
                 const std::vector<Points>& virtual_cost, std::uint64_t seed) {
  const auto m = sweep_mechanism(lambda_max, virtual_cost);
  const auto rep =
      sim::ic_sweep(sim::uniform_grid_sampler(n_min, n_max, step, lambda_max, m.outcome_count()), profiles, step, m, seed);
  std::cout << json{{"profiles", rep.profiles},
                    {"users_checked", rep.users_checked},
                    {"reports_checked", rep.reports_checked},
                    {"profitable_deviations", rep.profitable_deviations},
                    {"max_gain", rep.max_gain}}
                   .dump()
            << '\n';
  return rep.profitable_deviations == 0 ? 0 : 1;
}

int cmd_ir_sweep(std::uint64_t profiles, std::size_t n_min, std::size_t n_max, Points lambda_max,
                 const std::vector<Points>& virtual_cost, std::uint64_t seed) {
  const auto m = sweep_mechanism(lambda_max, virtual_cost);
  const auto rep = sim::ir_sweep(sim::uniform_grid_sampler(n_min, n_max, 1, lambda_max, m.outcome_count()), profiles, m, seed);
  std::cout << json{{"trials", rep.trials},
                    {"users", rep.users},
                    {"violating_profiles", rep.violating_profiles},
                    {"violation_fraction", rep.violation_fraction()},
                    {"payment_bound_violations", rep.payment_bound_violations},
                    {"min_margin", rep.min_margin},
                    {"min_payment", rep.min_payment},
                    {"max_payment", rep.max_payment}}
                   .dump()
            << '\n';
  return rep.violating_profiles == 0 && rep.payment_bound_violations == 0 ? 0 : 1;
}

std::vector<PointsAccount> parse_accounts(const std::vector<std::string>& specs) {
  std::vector<PointsAccount> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("account '" + s + "' is not USER=POINTS");
    std::size_t used = 0;
    const double pts = std::stod(s.substr(eq + 1), &used);
    if (used != s.size() - eq - 1 || pts < 0) throw std::invalid_argument("bad points in '" + s + "'");
    out.push_back({s.substr(0, eq), static_cast<MilliPoints>(std::llround(pts * 1000))});
  }
  return out;
}

int cmd_lottery(const std::vector<std::string>& specs, int prizes, std::uint64_t seed, std::uint64_t trials) {
  const auto accounts = parse_accounts(specs);
  const auto winners = run_lottery(accounts, prizes, seed);
  const auto odds = lottery_odds(accounts);
  std::vector<std::uint64_t> first_prize(accounts.size(), 0);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto w = run_lottery(accounts, 1, lottery_seed(seed, static_cast<std::int64_t>(t)));
    for (std::size_t k = 0; k < accounts.size(); ++k) first_prize[k] += accounts[k].user_id == w.front();
  }
  std::cout << json{{"seed", seed}, {"winners", winners}}.dump() << '\n';
  std::cout << "odds of the first prize\n";
  std::vector<std::pair<std::string, std::string>> rows;
  for (std::size_t k = 0; k < accounts.size(); ++k) {
    std::string v = fixed(100.0 * odds[k], 2) + "%";
    if (trials > 0) v += "  (empirical " + fixed(100.0 * first_prize[k] / trials, 2) + "% over " + std::to_string(trials) + ")";
    rows.emplace_back(accounts[k].user_id + " [" + points_str(accounts[k].milli_points) + " pts]", v);
  }
  print_table(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smartsdh: occupant-steered lighting with a truthful payment mechanism"};
  app.require_subcommand(1);

  std::string config_path, zone, log_path, sensors_path, out_path, out_dir;
  bool as_json = false;

  auto* serve = app.add_subcommand("serve", "Run the HTTP zone service");
  serve->add_option("-c,--config", config_path, "Service config JSON")->required()->check(CLI::ExistingFile);

  auto* rep = app.add_subcommand("replay", "Replay an event log and print the resulting state");
  std::string segments_out;
  rep->add_option("log", log_path, "Event log (JSON lines)")->required()->check(CLI::ExistingFile);
  rep->add_option("-c,--config", config_path, "Service config supplying the zone's engine settings");
  rep->add_option("-z,--zone", zone, "Zone id within --config (default: first)");
  rep->add_option("--segments", segments_out, "Write closed segments as JSON lines");
  rep->add_flag("--json", as_json, "One JSON line instead of a table");

  auto* simulate = app.add_subcommand("simulate", "Simulate a two-agent day; writes events.jsonl and sensors.csv");
  std::uint64_t seed = 1;
  double hours = 8.0;
  TimestampMs start_ms = 1'704'099'600'000;  // 2024-01-01T09:00:00Z
  double revotes = 4.0;
  simulate->add_option("-o,--out-dir", out_dir, "Output directory")->required();
  simulate->add_option("-s,--seed", seed, "RNG seed");
  simulate->add_option("--hours", hours, "Length of the work day")->check(CLI::PositiveNumber);
  simulate->add_option("--start-ms", start_ms, "Epoch ms of the work-day start");
  simulate->add_option("--revotes-per-hour", revotes, "Mean ballot re-submissions per agent-hour")->check(CLI::NonNegativeNumber);
  simulate->add_option("-c,--config", config_path, "Service config supplying engine settings");
  simulate->add_option("-z,--zone", zone, "Zone id within --config");

  auto* report = app.add_subcommand("report", "Energy and preference reports");
  report->require_subcommand(1);
  auto* savings = report->add_subcommand("savings", "Energy savings against an all-100% baseline");
  savings->add_option("log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  savings->add_option("-c,--config", config_path, "Service config");
  savings->add_option("-z,--zone", zone, "Zone id");
  savings->add_flag("--json", as_json, "JSON output");
  auto* corr = report->add_subcommand("correlations", "Preference vs. atmospheric readings (CSV)");
  TimestampMs window = analytics::kDefaultJoinWindowMs;
  corr->add_option("log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  corr->add_option("sensors", sensors_path, "Sensor CSV")->required()->check(CLI::ExistingFile);
  corr->add_option("-w,--window-ms", window, "Max distance between a vote and its sensor sample");
  corr->add_option("-o,--out", out_path, "Write CSV here instead of stdout");
  corr->add_option("-c,--config", config_path, "Service config");
  corr->add_option("-z,--zone", zone, "Zone id");

  std::uint64_t profiles = 1000;
  std::size_t n_min = 2, n_max = 5;
  Points step = 5, lambda_max = 100;
  std::vector<Points> virtual_cost;
  auto* ic = app.add_subcommand("ic-sweep", "Search random profiles for profitable single-user lies");
  ic->add_option("-n,--profiles", profiles, "Profiles to sample");
  ic->add_option("--n-min", n_min, "Fewest users per profile");
  ic->add_option("--n-max", n_max, "Most users per profile");
  ic->add_option("--step", step, "Grid step for types and deviations");
  ic->add_option("--lambda-max", lambda_max, "Maximum reportable cost");
  ic->add_option("--virtual-cost", virtual_cost, "Per-outcome operating cost")->delimiter(',');
  ic->add_option("-s,--seed", seed, "RNG seed");

  auto* ir = app.add_subcommand("ir-sweep", "Check individual rationality and payment bounds on random profiles");
  ir->add_option("-n,--profiles", profiles, "Profiles to sample");
  ir->add_option("--n-min", n_min, "Fewest users per profile");
  ir->add_option("--n-max", n_max, "Most users per profile");
  ir->add_option("--lambda-max", lambda_max, "Maximum reportable cost");
  ir->add_option("--virtual-cost", virtual_cost, "Per-outcome operating cost")->delimiter(',');
  ir->add_option("-s,--seed", seed, "RNG seed");

  auto* lot = app.add_subcommand("lottery", "Draw winners and show each account's odds");
  std::vector<std::string> accounts;
  int prizes = 1;
  std::uint64_t trials = 0;
  lot->add_option("accounts", accounts, "USER=POINTS ...")->required();
  lot->add_option("-k,--prizes", prizes, "Winners to draw");
  lot->add_option("-s,--seed", seed, "RNG seed");
  lot->add_option("--trials", trials, "Also estimate first-prize odds empirically");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(config_path);
    if (*rep) return cmd_replay(log_path, engine_config(config_path, zone), as_json, segments_out);
    if (*simulate) return cmd_simulate(out_dir, seed, hours, start_ms, revotes, engine_config(config_path, zone));
    if (*savings) return cmd_report_savings(log_path, engine_config(config_path, zone), as_json);
    if (*corr) return cmd_report_correlations(log_path, sensors_path, engine_config(config_path, zone), window, out_path);
    if (*ic) return cmd_ic_sweep(profiles, n_min, n_max, step, lambda_max, virtual_cost, seed);
    if (*ir) return cmd_ir_sweep(profiles, n_min, n_max, lambda_max, virtual_cost, seed);
    if (*lot) return cmd_lottery(accounts, prizes, seed, trials);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return 0;
}
