#include "confslate/pilot.hpp"

#include <cmath>

namespace confslate::sim {

namespace {
constexpr double kApproachOffset = 1.0;
constexpr double kExitOffset = 0.8;
constexpr double kWaypointTolerance = 0.25;
constexpr double kTurnInPlace = 0.5;
constexpr double kSteer = 0.1;
}  // namespace

WaypointPilot::WaypointPilot(const Arena& arena, int period_ticks) : period_ticks_(period_ticks) {
  const double door_x = (arena.walls[0].x1 + arena.walls[1].x0) / 2.0;
  const double wall_y = arena.walls[0].y0;
  waypoints_ = {{door_x, wall_y - kApproachOffset}, {door_x, wall_y + kExitOffset}, {arena.goal.x, arena.goal.y}};
}

std::optional<std::pair<double, double>> WaypointPilot::decide(std::int64_t tick, const Pose2D& observed) {
  if (tick % period_ticks_ != 0) {
    return std::nullopt;
  }
  while (target_ + 1 < waypoints_.size() &&
         std::hypot(waypoints_[target_].first - observed.x, waypoints_[target_].second - observed.y) <
             kWaypointTolerance) {
    ++target_;
  }
  const auto [wx, wy] = waypoints_[target_];
  const double error = normalize_angle(std::atan2(wy - observed.y, wx - observed.x) - observed.theta);
  const double turn = error > 0.0 ? kMaxAngular : -kMaxAngular;

  std::pair<double, double> choice;
  if (std::abs(error) > kTurnInPlace) {
    choice = {0.0, turn};
  } else if (std::abs(error) > kSteer) {
    choice = {0.6, turn};
  } else {
    choice = {target_ == 0 ? 0.8 : 0.6, 0.0};
  }
  if (sent_any_ && choice == last_) {
    return std::nullopt;
  }
  sent_any_ = true;
  last_ = choice;
  return choice;
}

std::vector<VelocityCommand> pilot_commands(const Arena& arena, int delay_ms, int time_limit_ms) {
  Segment segment(arena, delay_ms, time_limit_ms);
  WaypointPilot pilot(arena);
  std::vector<VelocityCommand> issued;
  while (!segment.finished()) {
    if (auto choice = pilot.decide(segment.tick(), segment.pose())) {
      issued.push_back(segment.issue(choice->first, choice->second));
    }
    segment.step_once();
  }
  return issued;
}

}  // namespace confslate::sim
