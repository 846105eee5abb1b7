#include "confslate/staircase.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::staircase {

StaircaseState update(StaircaseState state, bool correct) noexcept {
  if (!correct) {
    return {std::min(state.differential_ms + kStepMs, kMaxMs), 0};
  }
  if (state.streak == 0) {
    return {state.differential_ms, 1};
  }
  return {std::max(state.differential_ms - kStepMs, kMinMs), 0};
}

DifficultyLevel difficulty_bin(int differential_ms) {
  const auto it = std::find(kReachable.begin(), kReachable.end(), differential_ms);
  if (it == kReachable.end()) {
    throw Error(ErrorCode::InvalidDifferential,
                fmt::format("differential {} ms is not reachable from {} ms in {} ms steps", differential_ms,
                            kStartMs, kStepMs));
  }
  const int level = static_cast<int>(it - kReachable.begin()) + 1;
  return {level, level * 20};
}

DifficultyLevel level_from_index(int level) {
  if (level < 1 || level > 5) {
    throw Error(ErrorCode::InvalidDifferential, fmt::format("difficulty level {} not in 1..5", level));
  }
  return {level, level * 20};
}

DelayAssignment assign_delays(const StaircaseState& state, RandomStream& rng) {
  const bool a_lower = rng.bernoulli(0.5);
  const int high = kBaseDelayMs + state.differential_ms;
  if (a_lower) {
    return {kBaseDelayMs, high, RobotId::A};
  }
  return {high, kBaseDelayMs, RobotId::B};
}

}  // namespace confslate::staircase
