#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "smartsdh/simulator.hpp"

namespace smartsdh::sim {
namespace {

constexpr TimestampMs kHour = 3'600'000;

Profile worked_profile() {
  Profile p;
  p.add("u1", TypeVector{{0, 20, 50}});
  p.add("u2", TypeVector{{40, 0, 10}});
  return p;
}

TEST(GridEnumeration, VisitsEveryPointOnce) {
  std::uint64_t count = 0;
  Points sum = 0;
  for_each_grid_type(3, 100, 5, [&](const TypeVector& t) {
    ++count;
    sum += t[0] + t[1] + t[2];
  });
  EXPECT_EQ(count, 21u * 21u * 21u);
  EXPECT_EQ(sum, 3 * 21 * 21 * (5 * 210));  // each coordinate sums to 5*(0+..+20) per fixed pair
  EXPECT_THROW(for_each_grid_type(3, 100, 7, [](const TypeVector&) {}), std::invalid_argument);
}

TEST(DeviationSearch, SoloUserCannotGain) {
  MechanismConfig cfg;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto p = oracle::random_profile(rng, 1, 1, 100, 5);
    const auto d = deviation_search(p, 0, 5, cfg);
    EXPECT_EQ(d.gain, 0);
    EXPECT_EQ(d.truthful_utility, 100 - p.types[0][choose_outcome(p, cfg)]);
  }
}

TEST(DeviationSearch, WorkedProfile) {
  MechanismConfig cfg;
  const auto d = deviation_search(worked_profile(), 0, 5, cfg);
  EXPECT_EQ(d.gain, 0);
  EXPECT_EQ(d.reports_checked, 9261u);
  EXPECT_EQ(d.best_report, worked_profile().types[0]);
  EXPECT_EQ(d.truthful_utility, 180);  // 200 - 20
  EXPECT_EQ(deviation_search(worked_profile(), 1, 5, cfg).gain, 0);
}

TEST(DeviationSearch, RandomProfilesHaveNoProfitableLie) {
  MechanismConfig cfg;
  const auto rep = ic_sweep(uniform_grid_sampler(1, 5, 5, 100, 3), 120, 5, cfg, 99);
  EXPECT_EQ(rep.profitable_deviations, 0u);
  EXPECT_EQ(rep.max_gain, 0);
  EXPECT_EQ(rep.profiles, 120u);
}

TEST(DeviationSearch, HoldsWithVirtualParticipantToo) {
  MechanismConfig cfg;
  cfg.virtual_cost = std::vector<Points>{0, 15, 40};
  const auto rep = ic_sweep(uniform_grid_sampler(2, 4, 10, 100, 3), 60, 10, cfg, 3);
  EXPECT_EQ(rep.profitable_deviations, 0u);
}

TEST(DeviationSearch, DetectsLiesUnderAFlatPaymentRule) {
  // Same outcome rule, but every user just gets lambda_max: no externality
  // term, so exaggerating pays. The search must notice.
  MechanismConfig cfg;
  AllocationRule flat = [](const Profile& p, const MechanismConfig& c) {
    Allocation a = allocate(p, c);
    std::fill(a.rates.begin(), a.rates.end(), c.lambda_max);
    return a;
  };
  const auto d = deviation_search(worked_profile(), 0, 5, cfg, flat);
  EXPECT_GT(d.gain, 0);
  EXPECT_EQ(d.gain, 20);  // u1 can force Normal (cost 0) instead of Bright (cost 20)
}

TEST(IrSweep, NoViolationsWithoutVirtualCost) {
  MechanismConfig cfg;
  const auto rep = ir_sweep(uniform_grid_sampler(1, 5, 1, 100, 3), 5000, cfg, 7);
  EXPECT_EQ(rep.violating_profiles, 0u);
  EXPECT_EQ(rep.payment_bound_violations, 0u);
  EXPECT_GE(rep.min_margin, 0);
  EXPECT_GE(rep.min_payment, 100);
  EXPECT_LE(rep.max_payment, 500);
  EXPECT_EQ(rep.violation_fraction(), 0.0);
}

TEST(IrSweep, AllZeroTypesHaveMargin100) {
  MechanismConfig cfg;
  ProfileSampler zeros = [](std::mt19937_64& rng) {
    Profile p;
    const auto n = 1 + rng() % 5;
    for (std::size_t u = 0; u < n; ++u) p.add("z" + std::to_string(u), TypeVector{{0, 0, 0}});
    return p;
  };
  const auto rep = ir_sweep(zeros, 100, cfg, 1);
  EXPECT_EQ(rep.violating_profiles, 0u);
  EXPECT_EQ(rep.min_margin, 100);
}

TEST(IrSweep, HugeVirtualCostIsReportedNotHidden) {
  MechanismConfig cfg;
  cfg.virtual_cost = std::vector<Points>{90, 90, 1000};
  const auto rep = ir_sweep(uniform_grid_sampler(1, 5, 1, 100, 3), 2000, cfg, 11);
  // VeryBright is priced out and the virtual cost eats into every payment, so
  // users who need VeryBright fall below their nominal-outcome utility.
  EXPECT_GT(rep.violating_profiles, 0u);
  EXPECT_THROW(ir_sweep(uniform_grid_sampler(1, 5, 1, 100, 3), 0, cfg, 11), std::invalid_argument);
}

EngineConfig quiet() {
  EngineConfig cfg;
  cfg.rewards.lottery_threshold = 1'000'000'000'000;
  cfg.rewards.communal_threshold = 1'000'000'000'000;
  return cfg;
}

TEST(RunScenario, SoloTruthfulAgent) {
  AgentSpec a{"solo", TypeVector{{40, 0, 10}}, Truthful{}, {{0, 8 * kHour}}, 0};
  const auto trace = run_scenario({a}, 8 * kHour, 1, quiet());
  ASSERT_EQ(trace.segments.size(), 1u);
  EXPECT_EQ(trace.segments[0].outcome, 1u);
  EXPECT_EQ(trace.points.at("solo"), 800'000);
  EXPECT_EQ(trace.realized_utility.at("solo"), 800'000);
}

TEST(RunScenario, WorkedPairIsBrightDuringOverlap) {
  AgentSpec a{"u1", TypeVector{{0, 20, 50}}, Truthful{}, {{0, 6 * kHour}}, 0};
  AgentSpec b{"u2", TypeVector{{40, 0, 10}}, Truthful{}, {{2 * kHour, 8 * kHour}}, 0};
  const auto trace = run_scenario({a, b}, 8 * kHour, 1, quiet());
  bool saw_overlap = false;
  for (const auto& seg : trace.segments) {
    if (seg.members.size() == 2) {
      saw_overlap = true;
      EXPECT_EQ(seg.outcome, 1u);
      EXPECT_EQ(seg.rates.at("u1"), 200);
      EXPECT_EQ(seg.rates.at("u2"), 180);
    }
  }
  EXPECT_TRUE(saw_overlap);
  // u1: 2h alone at Normal (100/h, cost 0), 4h shared at Bright (200/h, cost 20)
  EXPECT_EQ(trace.realized_utility.at("u1"), 2 * 100'000 + 4 * 180'000);
}

TEST(RunScenario, ReplayConsistentAndSeedDeterministic) {
  std::vector<AgentSpec> agents{
      {"a", TypeVector{{0, 30, 70}}, Truthful{}, {{0, 3 * kHour}, {4 * kHour, 8 * kHour}}, 2.0},
      {"b", TypeVector{{60, 10, 0}}, Truthful{}, {{kHour, 7 * kHour}}, 3.0},
      {"c", TypeVector{{50, 0, 50}}, FixedMisreport{TypeVector{{100, 0, 100}}}, {{30 * 60'000, 5 * kHour}}, 1.0},
  };
  const auto cfg = quiet();
  const auto t1 = run_scenario(agents, 8 * kHour, 42, cfg);
  const auto t2 = run_scenario(agents, 8 * kHour, 42, cfg);
  EXPECT_EQ(t1.events, t2.events);
  EXPECT_EQ(state_digest(t1.final_state), state_digest(t2.final_state));
  EXPECT_NE(t1.events, run_scenario(agents, 8 * kHour, 43, cfg).events);

  std::vector<Segment> replayed;
  const auto s = replay(t1.events, cfg, [&](const ApplyResult& r) {
    if (r.closed) replayed.push_back(*r.closed);
  });
  EXPECT_EQ(state_digest(s), state_digest(t1.final_state));
  EXPECT_EQ(replayed, t1.segments);
}

TEST(RunScenario, LearnerConcedesMonotonically) {
  // Learner prefers Normal and minds Bright least; the other agent wants it bright.
  std::vector<Interval> days;
  for (int d = 0; d < 8; ++d) days.push_back({d * kHour, d * kHour + 50 * 60'000});
  std::vector<AgentSpec> agents{
      {"learner", TypeVector{{0, 30, 60}}, CompromiseLearner{5}, days, 0},
      {"bright", TypeVector{{60, 20, 0}}, Truthful{}, {{0, 8 * kHour}}, 0},
  };
  const auto trace = run_scenario(agents, 8 * kHour, 5, quiet());
  const auto& reports = trace.reports.at("learner");
  ASSERT_EQ(reports.size(), 8u);
  EXPECT_EQ(reports.front().pay_vs.at(1), 30);
  for (std::size_t k = 1; k < reports.size(); ++k) {
    EXPECT_LE(reports[k].pay_vs.at(1), reports[k - 1].pay_vs.at(1));
    EXPECT_EQ(reports[k].pay_vs.at(2), 60);  // only the compromise alternative moves
  }
  EXPECT_LT(reports.back().pay_vs.at(1), 30);
}

TEST(RunScenario, RejectsBadSchedules) {
  AgentSpec overlap{"x", TypeVector{{0, 0, 0}}, Truthful{}, {{0, 10}, {5, 20}}, 0};
  EXPECT_THROW(run_scenario({overlap}, 100, 1, quiet()), std::invalid_argument);
  AgentSpec late{"y", TypeVector{{0, 0, 0}}, Truthful{}, {{0, 200}}, 0};
  EXPECT_THROW(run_scenario({late}, 100, 1, quiet()), std::invalid_argument);
  AgentSpec bad_type{"z", TypeVector{{0, 0, 101}}, Truthful{}, {}, 0};
  EXPECT_THROW(run_scenario({bad_type}, 100, 1, quiet()), ValidationError);
}

}  // namespace
}  // namespace smartsdh::sim
