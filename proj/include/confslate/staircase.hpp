#pragma once

#include <array>

#include "confslate/random.hpp"

namespace confslate {

enum class RobotId { A, B };

constexpr RobotId other(RobotId r) noexcept { return r == RobotId::A ? RobotId::B : RobotId::A; }
constexpr char to_char(RobotId r) noexcept { return r == RobotId::A ? 'A' : 'B'; }

}  // namespace confslate

namespace confslate::staircase {

inline constexpr int kStartMs = 35;
inline constexpr int kStepMs = 20;
inline constexpr int kMinMs = 15;
inline constexpr int kMaxMs = 95;
inline constexpr int kBaseDelayMs = 40;

inline constexpr std::array<int, 5> kReachable{15, 35, 55, 75, 95};

/// 2-down/1-up state over the delay differential between the two robots.
struct StaircaseState {
  int differential_ms = kStartMs;
  int streak = 0;

  friend bool operator==(const StaircaseState&, const StaircaseState&) = default;
};

struct DifficultyLevel {
  int level = 1;  // 1 is hardest
  int nominal_ms = 20;

  friend bool operator==(const DifficultyLevel&, const DifficultyLevel&) = default;
};

struct DelayAssignment {
  int delay_a_ms = kBaseDelayMs;
  int delay_b_ms = kBaseDelayMs;
  RobotId lower = RobotId::A;

  [[nodiscard]] int differential_ms() const noexcept {
    return delay_a_ms > delay_b_ms ? delay_a_ms - delay_b_ms : delay_b_ms - delay_a_ms;
  }
  friend bool operator==(const DelayAssignment&, const DelayAssignment&) = default;
};

StaircaseState update(StaircaseState state, bool correct) noexcept;

/// Nearest nominal level for a reachable differential; throws InvalidDifferential.
DifficultyLevel difficulty_bin(int differential_ms);

/// Level 1..5 -> nominal differential; throws InvalidDifferential.
DifficultyLevel level_from_index(int level);

/// Base delay on one robot, base + differential on the other; the lower side
/// is a fair coin from `rng`.
DelayAssignment assign_delays(const StaircaseState& state, RandomStream& rng);

}  // namespace confslate::staircase
