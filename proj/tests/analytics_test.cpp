#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "smartsdh/analytics.hpp"

namespace smartsdh::analytics {
namespace {

// Two-sided Student-t tail by composite Simpson quadrature of the density,
// independent of the incomplete-beta route.
double t_tail_quadrature(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  // P(|T| > t) = 1 - 2 * integral_0^t pdf
  const int n = 20000;
  const double h = t / n;
  double s = pdf(0) + pdf(t);
  for (int k = 1; k < n; ++k) s += pdf(k * h) * (k % 2 ? 4 : 2);
  return 1 - 2 * s * h / 3;
}

TEST(EnergySavings, DefinitionExamples) {
  EXPECT_EQ(energy_savings({{0, 8 * 3'600'000, 33}}), 67.00);
  EXPECT_EQ(energy_savings({{0, 4 * 3'600'000, 33}, {4 * 3'600'000, 8 * 3'600'000, 100}}), 33.50);
  EXPECT_EQ(energy_savings({{0, 10, 100}}), 0.00);
  EXPECT_EQ(energy_savings({{0, 1, 67}, {1, 3, 33}}), 55.67);  // mean 44.333.. -> 55.666.. -> 55.67
  EXPECT_THROW(energy_savings({}), AnalyticsError);
  EXPECT_THROW(energy_savings({{5, 5, 33}}), AnalyticsError);
}

TEST(EnergySavings, InvariantUnderTimeRescaling) {
  std::mt19937_64 rng(8);
  const int levels[] = {33, 67, 100};
  for (int k = 0; k < 300; ++k) {
    std::vector<LevelSpan> trace;
    TimestampMs t = 0;
    const int spans = 1 + static_cast<int>(rng() % 12);
    for (int s = 0; s < spans; ++s) {
      const TimestampMs d = 1 + static_cast<TimestampMs>(rng() % 100'000);
      trace.push_back({t, t + d, levels[rng() % 3]});
      t += d;
    }
    auto scaled = trace;
    const TimestampMs f = 1 + static_cast<TimestampMs>(rng() % 1000);
    for (auto& s : scaled) {
      s.start *= f;
      s.end *= f;
    }
    EXPECT_EQ(energy_savings(trace), energy_savings(scaled));
  }
}

TEST(EnergySavings, FromSegments) {
  MechanismConfig cfg;
  std::vector<Segment> segs{{0, 100, {}, 0, {}}, {100, 200, {}, 2, {}}};
  EXPECT_EQ(energy_savings(level_trace(segs, cfg)), 33.50);
}

TEST(PearsonR, Examples) {
  EXPECT_DOUBLE_EQ(pearson_r({1, 2, 3}, {2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(pearson_r({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_NEAR(pearson_r({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_THROW(pearson_r({1, 1, 1}, {1, 2, 3}), AnalyticsError);
  EXPECT_THROW(pearson_r({1, 2}, {1, 2}), AnalyticsError);
  EXPECT_THROW(pearson_r({1, 2, 3}, {1, 2}), AnalyticsError);
}

TEST(PearsonR, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> xs, ys;
    for (int j = 0; j < 20; ++j) {
      xs.push_back(g(rng));
      ys.push_back(0.5 * xs.back() + g(rng));
    }
    const double r = pearson_r(xs, ys);
    EXPECT_NEAR(pearson_r(ys, xs), r, 1e-12);
    auto xs2 = xs;
    for (auto& x : xs2) x = 3.5 * x - 7;
    EXPECT_NEAR(pearson_r(xs2, ys), r, 1e-12);
    for (auto& x : xs2) x = -x;
    EXPECT_NEAR(pearson_r(xs2, ys), -r, 1e-12);
  }
}

TEST(PValue, Examples) {
  EXPECT_EQ(p_value(0.0, 10), 1.0);
  EXPECT_EQ(p_value(1.0, 10), 0.0);
  EXPECT_EQ(p_value(-1.0, 10), 0.0);
  // df = 2: P(|T| > t) = 1 - t / sqrt(2 + t^2)
  const double t = 0.8 * std::sqrt(2.0) / std::sqrt(1 - 0.64);
  const double closed = 1 - t / std::sqrt(2 + t * t);
  EXPECT_NEAR(closed, 0.2, 1e-12);
  EXPECT_NEAR(p_value(0.8, 4), closed, 1e-9);
  EXPECT_LT(p_value(0.27, 276), 0.001);
  EXPECT_THROW(p_value(0.5, 2), AnalyticsError);
  EXPECT_THROW(p_value(1.2, 10), AnalyticsError);
}

TEST(PValue, AgreesWithQuadrature) {
  for (std::int64_t n : {5, 12, 30, 100}) {
    for (double r : {0.05, 0.2, 0.45, 0.7}) {
      const double df = static_cast<double>(n - 2);
      const double t = r * std::sqrt(df) / std::sqrt(1 - r * r);
      EXPECT_NEAR(p_value(r, n), t_tail_quadrature(t, df), 1e-8) << "n=" << n << " r=" << r;
    }
  }
}

TEST(PValue, Monotone) {
  for (std::int64_t n : {4, 10, 50, 276}) {
    double prev = 1.0;
    for (double r = 0.05; r < 1.0; r += 0.05) {
      const double p = p_value(r, n);
      EXPECT_LT(p, prev);
      EXPECT_EQ(p, p_value(-r, n));
      prev = p;
    }
  }
  for (double r : {0.1, 0.3, 0.6}) {
    double prev = 1.0;
    for (std::int64_t n = 4; n < 300; n += 7) {
      const double p = p_value(r, n);
      EXPECT_LT(p, prev);
      prev = p;
    }
  }
}

TEST(PValue, TemperatureRowOfTheAtmosphericTableFollowsTheFormula) {
  // r = .017 with N = 276 is nowhere near significant.
  EXPECT_NEAR(p_value(0.017, 276), 0.78, 0.01);
}

TEST(SensorCsv, HeaderOnlyGivesEmptySeries) {
  std::istringstream in("timestamp_ms,humidity_percent,temperature_degF,pressure_inHg,solar_radiation_W_per_m2\n");
  const auto r = read_sensor_csv(in);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_TRUE(r.rejected.empty());
}

TEST(SensorCsv, ColumnOrderIsFreeAndRowsAreSorted) {
  std::istringstream in(
      "pressure_inHg,solar_radiation_W_per_m2,timestamp_ms,temperature_degF,humidity_percent\n"
      "29.6,250.5,2000,55.1,80\n"
      "29.7,0,1000,54,79.5\n");
  const auto r = read_sensor_csv(in);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].timestamp_ms, 1000);
  EXPECT_DOUBLE_EQ(r.rows[1].solar_radiation_W_per_m2, 250.5);
  EXPECT_DOUBLE_EQ(r.rows[1].humidity_percent, 80);
}

TEST(SensorCsv, BadRowsAreReportedByLine) {
  std::istringstream in(
      "timestamp_ms,humidity_percent,temperature_degF,pressure_inHg,solar_radiation_W_per_m2\n"
      "1000,50,55,29.6,10\n"
      "2000,150,55,29.6,10\n"
      "3000,abc,55,29.6,10\n"
      "4000,50,55,29.6\n");
  const auto r = read_sensor_csv(in);
  ASSERT_EQ(r.rows.size(), 1u);
  ASSERT_EQ(r.rejected.size(), 3u);
  EXPECT_EQ(r.rejected[0].line, 3u);
  EXPECT_NE(r.rejected[0].message.find("humidity"), std::string::npos);
  EXPECT_EQ(r.rejected[1].line, 4u);
  EXPECT_EQ(r.rejected[2].line, 5u);
}

TEST(SensorCsv, MissingColumnListsExpectedHeader) {
  std::istringstream in("timestamp_ms,humidity_percent,temperature_degF\n");
  try {
    read_sensor_csv(in);
    FAIL();
  } catch (const AnalyticsError& ex) {
    EXPECT_NE(std::string(ex.what()).find("timestamp_ms,humidity_percent,temperature_degF,pressure_inHg,"
                                          "solar_radiation_W_per_m2"),
              std::string::npos);
  }
  std::istringstream empty("");
  EXPECT_THROW(read_sensor_csv(empty), AnalyticsError);
}

TEST(SensorCsv, WriteReadRoundTrip) {
  std::vector<SensorSample> s{{1, 50.25, 55.5, 29.61, 100}, {2, 60, 54, 29.7, 0}};
  std::stringstream io;
  write_sensor_csv(io, s);
  const auto r = read_sensor_csv(io);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(r.rows[0].pressure_inHg, 29.61);
}

TEST(Correlations, PerfectTracking) {
  std::vector<VoteSample> votes;
  std::vector<SensorSample> sensors;
  const int levels[] = {33, 67, 100};
  for (int k = 0; k < 30; ++k) {
    const int lv = levels[k % 3];
    votes.push_back({k * 60'000, lv});
    sensors.push_back({k * 60'000 + 1000, 0.5 * lv, 40 + 0.2 * lv, 29 + lv / 100.0, 3.0 * lv});
  }
  const auto rows = preference_correlations(votes, sensors);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].variable, "light_setting_preference");
  for (const auto& row : rows) {
    EXPECT_NEAR(row.r, 1.0, 1e-12) << row.variable;
    EXPECT_LT(row.p, 1e-12) << row.variable;
    EXPECT_EQ(row.n, 30);
  }
  EXPECT_NEAR(rows[0].mean, (33 + 67 + 100) / 3.0, 1e-9);
}

TEST(Correlations, IndependentNoiseIsWeak) {
  std::mt19937_64 rng(500);
  std::normal_distribution<double> g(0, 1);
  std::vector<VoteSample> votes;
  std::vector<SensorSample> sensors;
  const int levels[] = {33, 67, 100};
  for (int k = 0; k < 500; ++k) {
    votes.push_back({k * 60'000, levels[rng() % 3]});
    sensors.push_back({k * 60'000, std::clamp(80 + 10 * g(rng), 0.0, 100.0), 55 + 5 * g(rng),
                       29.6 + 0.1 * std::abs(g(rng)), 250 * std::abs(g(rng))});
  }
  for (const auto& row : preference_correlations(votes, sensors)) {
    if (row.variable == "light_setting_preference") continue;
    EXPECT_LT(std::abs(row.r), 0.15) << row.variable;
    EXPECT_GE(row.p, 0.0);
    EXPECT_LE(row.p, 1.0);
  }
}

TEST(Correlations, JoinWindow) {
  std::vector<SensorSample> sensors{{0, 50, 50, 29, 0}, {1'000'000, 60, 52, 29.5, 10}};
  std::vector<VoteSample> votes{{10, 33}, {999'000, 67}, {500'000, 100}};
  const auto pairs = join_nearest(votes, sensors, kDefaultJoinWindowMs);
  ASSERT_EQ(pairs.size(), 2u);  // the vote at 500 s is more than 5 minutes from both samples
  EXPECT_EQ(pairs[1].second.timestamp_ms, 1'000'000);
  EXPECT_THROW(preference_correlations({{5'000'000, 33}}, sensors), AnalyticsError);
}

TEST(Votes, FromEvents) {
  MechanismConfig cfg;
  std::vector<SessionEvent> log{SessionEvent::work_start(0), SessionEvent::login(1, "a", Ballot{2, {{0, 1}, {1, 1}}}),
                                SessionEvent::login(2, "b"), SessionEvent::ballot_change(3, "b", Ballot{0, {{1, 1}, {2, 1}}})};
  const auto v = votes_from_events(log, cfg);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].level_percent, 100);
  EXPECT_EQ(v[1].level_percent, 33);
  EXPECT_EQ(v[1].timestamp_ms, 3);
}

TEST(CorrelationCsv, Columns) {
  std::ostringstream out;
  write_correlation_csv(out, {{"humidity_percent", 79.93, 11.05, -0.18, 0.003, 276}});
  EXPECT_EQ(out.str(), "variable,mean,sd,r,p\nhumidity_percent,79.9300,11.0500,-0.1800,0.003\n");
}

}  // namespace
}  // namespace smartsdh::analytics
