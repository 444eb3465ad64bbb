#pragma once

// Brute-force reference computations used only by tests. Deliberately written
// from the textbook definitions without calling into the library's
// allocation code.

#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "smartsdh/mechanism.hpp"

namespace oracle {

using smartsdh::MechanismConfig;
using smartsdh::OutcomeIndex;
using smartsdh::Points;
using smartsdh::Profile;

// s(x, lambda) = -(sum_i lambda_x^i + c_x)
inline Points welfare(OutcomeIndex x, const Profile& p, const MechanismConfig& cfg) {
  Points s = 0;
  for (std::size_t i = 0; i < p.types.size(); ++i) s -= p.types[i].costs[x];
  if (cfg.virtual_cost) s -= (*cfg.virtual_cost)[x];
  return s;
}

inline std::set<OutcomeIndex> optimal_set(const Profile& p, const MechanismConfig& cfg) {
  std::vector<Points> w;
  for (OutcomeIndex x = 0; x < cfg.settings.size(); ++x) w.push_back(welfare(x, p, cfg));
  Points best = w[0];
  for (Points v : w) best = std::max(best, v);
  std::set<OutcomeIndex> out;
  for (OutcomeIndex x = 0; x < w.size(); ++x) {
    if (w[x] == best) out.insert(x);
  }
  return out;
}

// Tied optimum with the lowest level.
inline OutcomeIndex dimmest_optimum(const Profile& p, const MechanismConfig& cfg) {
  const auto opt = optimal_set(p, cfg);
  OutcomeIndex pick = *opt.begin();
  for (OutcomeIndex x : opt) {
    if (cfg.settings[x].level_percent < cfg.settings[pick].level_percent) pick = x;
  }
  return pick;
}

// p_i = n * lambda_max - sum_{j != i} lambda_f^j - c_f
inline Points payment(std::size_t i, const Profile& p, const MechanismConfig& cfg) {
  const OutcomeIndex f = dimmest_optimum(p, cfg);
  const Profile others = p.without(i);
  Points others_cost = cfg.virtual_cost ? (*cfg.virtual_cost)[f] : 0;
  for (const auto& t : others.types) others_cost += t.costs[f];
  return static_cast<Points>(p.types.size()) * cfg.lambda_max - others_cost;
}

inline Profile random_profile(std::mt19937_64& rng, std::size_t n_min, std::size_t n_max, Points lambda_max,
                              Points step, std::size_t m = 3) {
  std::uniform_int_distribution<std::size_t> n_dist(n_min, n_max);
  std::uniform_int_distribution<Points> level(0, lambda_max / step);
  Profile p;
  const auto n = n_dist(rng);
  for (std::size_t u = 0; u < n; ++u) {
    smartsdh::TypeVector t{std::vector<Points>(m)};
    for (auto& c : t.costs) c = level(rng) * step;
    p.add("user" + std::to_string(u), t);
  }
  return p;
}

}  // namespace oracle
