#pragma once

// Points accounting helpers, the points-proportional lottery and the
// communal-threshold trigger.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace smartsdh {

using MilliPoints = std::int64_t;

struct PointsAccount {
  std::string user_id;
  MilliPoints milli_points = 0;

  friend bool operator==(const PointsAccount&, const PointsAccount&) = default;
};

struct RewardConfig {
  MilliPoints lottery_threshold = 10'000'000;
  MilliPoints communal_threshold = 50'000'000;
  int prizes_per_lottery = 3;
  std::uint64_t rng_seed = 2019;
  MilliPoints survey_bonus = 5'000;

  void validate() const {
    if (lottery_threshold <= 0 || communal_threshold <= 0) {
      throw std::invalid_argument("reward thresholds must be positive");
    }
    if (prizes_per_lottery < 1) throw std::invalid_argument("prizes_per_lottery must be >= 1");
    if (survey_bonus < 0) throw std::invalid_argument("survey_bonus must be non-negative");
  }
};

enum class RewardKind { kLottery, kCommunalLunch };

inline const char* to_string(RewardKind k) {
  return k == RewardKind::kLottery ? "lottery" : "communal_lunch";
}

struct RewardTrigger {
  RewardKind kind = RewardKind::kLottery;
  std::int64_t ordinal = 0;  // which multiple of the threshold was crossed (1-based)

  friend bool operator==(const RewardTrigger&, const RewardTrigger&) = default;
};

// One trigger per threshold multiple in (prev_total, new_total], lotteries first.
inline std::vector<RewardTrigger> check_thresholds(MilliPoints prev_total, MilliPoints new_total,
                                                   const RewardConfig& cfg) {
  if (new_total < prev_total) throw std::invalid_argument("point totals cannot decrease");
  std::vector<RewardTrigger> out;
  auto crossings = [&](RewardKind kind, MilliPoints threshold) {
    for (MilliPoints k = prev_total / threshold + 1; k <= new_total / threshold; ++k) {
      out.push_back({kind, k});
    }
  };
  crossings(RewardKind::kLottery, cfg.lottery_threshold);
  crossings(RewardKind::kCommunalLunch, cfg.communal_threshold);
  return out;
}

// Unbiased integer in [0, bound) from raw engine output. std::uniform_int_distribution
// is not specified bit-for-bit across standard libraries, this is.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

class NoEligibleAccounts : public std::runtime_error {
 public:
  NoEligibleAccounts() : std::runtime_error("lottery needs at least one account with positive points") {}
};

// k sequential draws without replacement, each weighted by current balance.
// Balances are not touched. Returns fewer than k winners only when fewer than
// k accounts hold points.
inline std::vector<std::string> run_lottery(const std::vector<PointsAccount>& accounts, int k,
                                            std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("lottery needs k >= 1");
  std::vector<PointsAccount> pool;
  for (const auto& a : accounts) {
    if (a.milli_points < 0) throw std::invalid_argument("negative balance for " + a.user_id);
    if (a.milli_points > 0) pool.push_back(a);
  }
  if (pool.empty()) throw NoEligibleAccounts();

  std::mt19937_64 rng(seed);
  std::vector<std::string> winners;
  while (static_cast<int>(winners.size()) < k && !pool.empty()) {
    std::uint64_t total = 0;
    for (const auto& a : pool) total += static_cast<std::uint64_t>(a.milli_points);
    std::uint64_t ticket = uniform_below(rng, total);
    std::size_t pick = 0;
    for (; pick < pool.size(); ++pick) {
      const auto w = static_cast<std::uint64_t>(pool[pick].milli_points);
      if (ticket < w) break;
      ticket -= w;
    }
    winners.push_back(pool[pick].user_id);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return winners;
}

// Probability of winning the first draw.
inline std::vector<double> lottery_odds(const std::vector<PointsAccount>& accounts) {
  double total = 0;
  for (const auto& a : accounts) total += static_cast<double>(std::max<MilliPoints>(a.milli_points, 0));
  std::vector<double> odds;
  for (const auto& a : accounts) {
    odds.push_back(total > 0 ? static_cast<double>(std::max<MilliPoints>(a.milli_points, 0)) / total : 0.0);
  }
  return odds;
}

// Seed for the n-th lottery of a zone; keeps replays drawing identical winners.
inline std::uint64_t lottery_seed(std::uint64_t base, std::int64_t ordinal) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(ordinal);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace smartsdh
