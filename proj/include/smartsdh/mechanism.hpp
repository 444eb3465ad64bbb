#pragma once

// Modified VCG mechanism over a small discrete outcome set.
//
// Every quantity here is an integer rate in points per hour. Types are the
// per-outcome costs a user reports; the mechanism picks the outcome with the
// largest social welfare (smallest total cost) and pays each user
//
//     p_i = n * lambda_max - sum_{j != i} cost_j[f]
//
// which keeps reporting truthful (Groves payment) and makes every present user
// at least as well off as under the nominal outcome with no payment.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smartsdh {

using Points = std::int64_t;  // points per hour
using OutcomeIndex = std::size_t;

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OutcomeSetting {
  OutcomeIndex index = 0;
  std::string label;
  int level_percent = 0;

  friend bool operator==(const OutcomeSetting&, const OutcomeSetting&) = default;
};

inline std::vector<OutcomeSetting> default_settings() {
  return {{0, "Normal", 33}, {1, "Bright", 67}, {2, "VeryBright", 100}};
}

struct TypeVector {
  std::vector<Points> costs;

  std::size_t size() const { return costs.size(); }
  Points operator[](OutcomeIndex x) const { return costs.at(x); }

  friend bool operator==(const TypeVector&, const TypeVector&) = default;
};

// A portal vote: the preferred setting plus, for each other setting, how many
// points per hour the voter would pay to have the preferred one instead.
struct Ballot {
  OutcomeIndex preferred = 0;
  std::map<OutcomeIndex, Points> pay_vs;

  friend bool operator==(const Ballot&, const Ballot&) = default;
};

enum class TieBreak {
  kDimmestWins,
  kBrightestWins,
};

struct MechanismConfig {
  Points lambda_max = 100;
  std::vector<OutcomeSetting> settings = default_settings();
  OutcomeIndex nominal_outcome = 2;
  // Operating cost per outcome, treated as an extra participant that is never paid.
  std::optional<std::vector<Points>> virtual_cost;
  TieBreak tie_break = TieBreak::kDimmestWins;

  std::size_t outcome_count() const { return settings.size(); }

  void validate() const {
    if (lambda_max <= 0) throw ValidationError("lambda_max must be positive");
    if (settings.empty()) throw ValidationError("at least one outcome setting is required");
    for (std::size_t k = 0; k < settings.size(); ++k) {
      if (settings[k].index != k) throw ValidationError("setting indices must be 0..m-1 in order");
      if (k > 0 && settings[k].level_percent <= settings[k - 1].level_percent) {
        throw ValidationError("setting levels must be strictly increasing");
      }
      for (std::size_t j = 0; j < k; ++j) {
        if (settings[j].label == settings[k].label) throw ValidationError("setting labels must be unique");
      }
    }
    if (nominal_outcome >= settings.size()) throw ValidationError("nominal outcome out of range");
    if (virtual_cost) {
      if (virtual_cost->size() != settings.size()) {
        throw ValidationError("virtual cost must have one entry per outcome");
      }
      for (Points c : *virtual_cost) {
        if (c < 0) throw ValidationError("virtual cost entries must be non-negative");
      }
    }
  }

  const OutcomeSetting& setting(OutcomeIndex x) const {
    if (x >= settings.size()) throw std::domain_error("outcome index out of range");
    return settings[x];
  }

  std::optional<OutcomeIndex> find_level(int level_percent) const {
    for (const auto& s : settings) {
      if (s.level_percent == level_percent) return s.index;
    }
    return std::nullopt;
  }

  std::optional<OutcomeIndex> find_label(const std::string& label) const {
    for (const auto& s : settings) {
      if (s.label == label) return s.index;
    }
    return std::nullopt;
  }

  Points virtual_cost_at(OutcomeIndex x) const { return virtual_cost ? (*virtual_cost)[x] : 0; }

  Points virtual_cost_max() const {
    if (!virtual_cost || virtual_cost->empty()) return 0;
    return *std::max_element(virtual_cost->begin(), virtual_cost->end());
  }
};

struct Profile {
  std::vector<std::string> user_ids;
  std::vector<TypeVector> types;

  std::size_t size() const { return types.size(); }
  bool empty() const { return types.empty(); }

  void add(std::string id, TypeVector type) {
    user_ids.push_back(std::move(id));
    types.push_back(std::move(type));
  }

  // Same profile with user i's report replaced.
  Profile with_report(std::size_t i, TypeVector report) const {
    Profile out = *this;
    out.types.at(i) = std::move(report);
    return out;
  }

  // lambda^{-i}
  Profile without(std::size_t i) const {
    Profile out = *this;
    out.user_ids.erase(out.user_ids.begin() + static_cast<std::ptrdiff_t>(i));
    out.types.erase(out.types.begin() + static_cast<std::ptrdiff_t>(i));
    return out;
  }
};

inline void validate_type(const TypeVector& type, const MechanismConfig& cfg) {
  if (type.size() != cfg.outcome_count()) {
    throw ValidationError("type has " + std::to_string(type.size()) + " entries, expected " +
                          std::to_string(cfg.outcome_count()));
  }
  for (Points c : type.costs) {
    if (c < 0 || c > cfg.lambda_max) {
      throw ValidationError("type entry " + std::to_string(c) + " outside [0, " +
                            std::to_string(cfg.lambda_max) + "]");
    }
  }
}

inline void validate_profile(const Profile& profile, const MechanismConfig& cfg) {
  if (profile.user_ids.size() != profile.types.size()) {
    throw ValidationError("profile ids and types differ in length");
  }
  for (const auto& t : profile.types) validate_type(t, cfg);
}

// Per-outcome total reported cost, virtual participant included.
inline std::vector<Points> cost_totals(const Profile& profile, const MechanismConfig& cfg) {
  std::vector<Points> totals(cfg.outcome_count(), 0);
  for (const auto& t : profile.types) {
    for (OutcomeIndex x = 0; x < totals.size(); ++x) totals[x] += t.costs[x];
  }
  if (cfg.virtual_cost) {
    for (OutcomeIndex x = 0; x < totals.size(); ++x) totals[x] += (*cfg.virtual_cost)[x];
  }
  return totals;
}

inline Points social_welfare(OutcomeIndex x, const Profile& profile, const MechanismConfig& cfg) {
  if (x >= cfg.outcome_count()) throw std::domain_error("outcome index out of range");
  validate_profile(profile, cfg);
  Points sum = cfg.virtual_cost_at(x);
  for (const auto& t : profile.types) sum += t.costs[x];
  return -sum;
}

inline std::vector<Points> welfare_vector(const Profile& profile, const MechanismConfig& cfg) {
  validate_profile(profile, cfg);
  auto totals = cost_totals(profile, cfg);
  for (auto& v : totals) v = -v;
  return totals;
}

// Tie-break depends only on the welfare vector and the configured levels.
inline OutcomeIndex argmax_welfare(const std::vector<Points>& welfare, const MechanismConfig& cfg) {
  OutcomeIndex best = 0;
  for (OutcomeIndex x = 1; x < welfare.size(); ++x) {
    if (welfare[x] > welfare[best]) {
      best = x;
    } else if (welfare[x] == welfare[best]) {
      const bool dimmer = cfg.settings[x].level_percent < cfg.settings[best].level_percent;
      if (dimmer == (cfg.tie_break == TieBreak::kDimmestWins)) best = x;
    }
  }
  return best;
}

inline OutcomeIndex choose_outcome(const Profile& profile, const MechanismConfig& cfg) {
  return argmax_welfare(welfare_vector(profile, cfg), cfg);
}

struct Allocation {
  OutcomeIndex outcome = 0;
  std::vector<Points> rates;  // aligned with profile order

  friend bool operator==(const Allocation&, const Allocation&) = default;
};

// Outcome and all payments in one pass over the profile.
inline Allocation allocate(const Profile& profile, const MechanismConfig& cfg) {
  validate_profile(profile, cfg);
  const auto totals = cost_totals(profile, cfg);
  std::vector<Points> welfare(totals.size());
  for (std::size_t x = 0; x < totals.size(); ++x) welfare[x] = -totals[x];

  Allocation out;
  out.outcome = argmax_welfare(welfare, cfg);
  const Points pivot = static_cast<Points>(profile.size()) * cfg.lambda_max;
  out.rates.reserve(profile.size());
  for (const auto& t : profile.types) {
    // totals already holds the virtual cost; others' cost = total - own.
    out.rates.push_back(pivot - (totals[out.outcome] - t.costs[out.outcome]));
  }
  return out;
}

inline Points payment_rate(std::size_t i, const Profile& profile, const MechanismConfig& cfg) {
  if (i >= profile.size()) throw std::domain_error("user index out of range");
  return allocate(profile, cfg).rates[i];
}

inline Points utility(OutcomeIndex x, Points payment, const TypeVector& type) {
  return payment - type[x];
}

inline Ballot max_ballot(OutcomeIndex preferred, const MechanismConfig& cfg) {
  Ballot b{preferred, {}};
  for (const auto& s : cfg.settings) {
    if (s.index != preferred) b.pay_vs[s.index] = cfg.lambda_max;
  }
  return b;
}

inline void validate_ballot(const Ballot& b, const MechanismConfig& cfg) {
  if (b.preferred >= cfg.outcome_count()) throw ValidationError("preferred setting out of range");
  if (b.pay_vs.size() != cfg.outcome_count() - 1 || b.pay_vs.contains(b.preferred)) {
    throw ValidationError("ballot must price exactly the non-preferred settings");
  }
  for (const auto& [alt, pay] : b.pay_vs) {
    if (alt >= cfg.outcome_count()) throw ValidationError("ballot names an unknown setting");
    if (pay < 0 || pay > cfg.lambda_max) {
      throw ValidationError("pay value " + std::to_string(pay) + " for " + cfg.settings[alt].label +
                            " outside [0, " + std::to_string(cfg.lambda_max) + "]");
    }
  }
}

inline TypeVector ballot_to_type(const Ballot& b, const MechanismConfig& cfg) {
  validate_ballot(b, cfg);
  TypeVector t{std::vector<Points>(cfg.outcome_count(), 0)};
  for (const auto& [alt, pay] : b.pay_vs) t.costs[alt] = pay;
  return t;
}

// Inverse used by simulated agents: preferred = cheapest setting (dimmest on
// ties), pays are costs relative to it.
inline Ballot type_to_ballot(const TypeVector& type, const MechanismConfig& cfg) {
  validate_type(type, cfg);
  OutcomeIndex preferred = 0;
  for (OutcomeIndex x = 1; x < type.size(); ++x) {
    if (type[x] < type[preferred]) preferred = x;
  }
  Ballot b{preferred, {}};
  for (OutcomeIndex x = 0; x < type.size(); ++x) {
    if (x != preferred) b.pay_vs[x] = type[x] - type[preferred];
  }
  return b;
}

// u(f, p_i; lambda^i) - u(x0, 0; lambda^i), per user. Negative means the
// ex-post participation constraint fails for that user.
inline std::vector<Points> ir_margins(const Profile& profile, const MechanismConfig& cfg) {
  const auto alloc = allocate(profile, cfg);
  std::vector<Points> margins;
  margins.reserve(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const auto& t = profile.types[i];
    margins.push_back(utility(alloc.outcome, alloc.rates[i], t) - utility(cfg.nominal_outcome, 0, t));
  }
  return margins;
}

inline std::vector<bool> ir_holds(const Profile& profile, const MechanismConfig& cfg) {
  std::vector<bool> out;
  for (Points m : ir_margins(profile, cfg)) out.push_back(m >= 0);
  return out;
}

}  // namespace smartsdh
