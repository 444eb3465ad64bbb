#pragma once

// Lighting actuator interface with a retrying delivery channel.
//
// A real building-automation driver implements ActuatorDriver; MockActuator
// records what it was told. ActuatorChannel enforces the level whitelist,
// retries with bounded exponential backoff and keeps a failed command pending
// so the next flush re-sends it under the same sequence number.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "smartsdh/session_engine.hpp"

namespace smartsdh {

class ActuatorUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidLevel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ActuatorAck {
  std::string zone;
  int level_percent = 0;
  std::int64_t sequence = 0;
  TimestampMs timestamp_ms = 0;
  int attempts = 0;
};

class ActuatorDriver {
 public:
  virtual ~ActuatorDriver() = default;
  // Throws ActuatorUnavailable when the device cannot be reached. Must be
  // idempotent in `sequence`.
  virtual void set_level(const std::string& zone, int level_percent, std::int64_t sequence, TimestampMs t) = 0;
};

class MockActuator : public ActuatorDriver {
 public:
  struct Entry {
    std::string zone;
    int level_percent = 0;
    std::int64_t sequence = 0;
    TimestampMs timestamp_ms = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  // Optional sink receives one "zone, level, t" line per accepted command.
  explicit MockActuator(std::ostream* out = nullptr) : out_(out) {}

  void set_level(const std::string& zone, int level_percent, std::int64_t sequence, TimestampMs t) override {
    std::lock_guard lock(mu_);
    if (fail_next_ > 0) {
      --fail_next_;
      throw ActuatorUnavailable("mock actuator unreachable");
    }
    entries_.push_back({zone, level_percent, sequence, t});
    if (out_) *out_ << zone << ", " << level_percent << ", " << t << std::endl;
  }

  void fail_next(int n) {
    std::lock_guard lock(mu_);
    fail_next_ = n;
  }

  std::vector<Entry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

 private:
  mutable std::mutex mu_;
  std::ostream* out_;
  std::vector<Entry> entries_;
  int fail_next_ = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{25};
  std::chrono::milliseconds max_backoff{200};
};

struct ActuatorHealth {
  bool healthy = true;
  std::int64_t consecutive_failures = 0;
  std::string last_error;
  std::optional<ActuatorCommand> pending;
  std::int64_t last_acked_sequence = 0;
};

inline void validate_actuator_level(int level_percent) {
  if (level_percent != 33 && level_percent != 67 && level_percent != 100) {
    throw InvalidLevel("actuator level must be 33, 67 or 100, got " + std::to_string(level_percent));
  }
}

class ActuatorChannel {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ActuatorChannel(std::string zone, ActuatorDriver& driver, RetryPolicy policy = {}, Sleeper sleep = {})
      : zone_(std::move(zone)), driver_(driver), policy_(policy), sleep_(std::move(sleep)) {
    if (policy_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  // Returns the ack, or nullopt when every attempt failed (the command stays
  // pending). A newer command supersedes an older pending one.
  std::optional<ActuatorAck> send(const ActuatorCommand& cmd) {
    validate_actuator_level(cmd.level_percent);
    std::lock_guard lock(mu_);
    if (cmd.sequence < health_.last_acked_sequence) return std::nullopt;
    health_.pending = cmd;
    return deliver_locked();
  }

  // Re-sends a pending command, if any.
  std::optional<ActuatorAck> flush() {
    std::lock_guard lock(mu_);
    if (!health_.pending) return std::nullopt;
    return deliver_locked();
  }

  ActuatorHealth health() const {
    std::lock_guard lock(mu_);
    return health_;
  }

 private:
  std::optional<ActuatorAck> deliver_locked() {
    const ActuatorCommand cmd = *health_.pending;
    auto backoff = policy_.initial_backoff;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
      try {
        driver_.set_level(zone_, cmd.level_percent, cmd.sequence, cmd.timestamp_ms);
        health_.pending.reset();
        health_.healthy = true;
        health_.consecutive_failures = 0;
        health_.last_acked_sequence = cmd.sequence;
        return ActuatorAck{zone_, cmd.level_percent, cmd.sequence, cmd.timestamp_ms, attempt};
      } catch (const ActuatorUnavailable& ex) {
        ++health_.consecutive_failures;
        health_.last_error = ex.what();
        if (attempt < policy_.max_attempts) {
          sleep_(backoff);
          backoff = std::min(backoff * 2, policy_.max_backoff);
        }
      }
    }
    health_.healthy = false;
    return std::nullopt;
  }

  std::string zone_;
  ActuatorDriver& driver_;
  RetryPolicy policy_;
  Sleeper sleep_;
  mutable std::mutex mu_;
  ActuatorHealth health_;
};

}  // namespace smartsdh
