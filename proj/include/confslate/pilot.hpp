#pragma once

#include <optional>
#include <vector>

#include "confslate/sim.hpp"

namespace confslate::sim {

/// Scripted closed-loop driver: steers toward a point south of the doorway,
/// through it, then to the goal cone. It observes the robot pose as rendered
/// (i.e. after the controller delay) and re-decides every `period_ticks`,
/// emitting a command only when its choice changes, like a keyboard operator.
class WaypointPilot {
 public:
  explicit WaypointPilot(const Arena& arena, int period_ticks = 20);

  /// Decision for the current tick, or nothing if the held command stands.
  std::optional<std::pair<double, double>> decide(std::int64_t tick, const Pose2D& observed);

 private:
  std::vector<std::pair<double, double>> waypoints_;
  std::size_t target_ = 0;
  int period_ticks_;
  std::pair<double, double> last_{0.0, 0.0};
  bool sent_any_ = false;
};

/// Drives a fresh segment with the pilot and returns the issued commands.
std::vector<VelocityCommand> pilot_commands(const Arena& arena, int delay_ms,
                                            int time_limit_ms = kSegmentTimeLimitMs);

}  // namespace confslate::sim
