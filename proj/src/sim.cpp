#include "confslate/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::sim {

namespace {

constexpr std::array<double, kGapCount> kGapWidths{0.9, 1.1, 1.3, 1.5};

constexpr double kWallY = 5.0;
constexpr double kDoorCenterX = 5.0;

// Start poses all lie south of the wall; the goal cone sits north of it.
constexpr std::array<Pose2D, kStartCount> kStartPoses{{
    {1.5, 1.5, std::numbers::pi / 4.0},
    {5.0, 1.0, std::numbers::pi / 2.0},
    {8.5, 1.5, 3.0 * std::numbers::pi / 4.0},
    {1.5, 3.5, 0.0},
    {8.5, 3.5, std::numbers::pi},
    {5.0, 3.0, -std::numbers::pi / 2.0},
}};

constexpr Pose2D kGoal{5.0, 8.5, std::numbers::pi / 2.0};

double point_segment_distance(double px, double py, const WallSegment& s) noexcept {
  const double dx = s.x1 - s.x0;
  const double dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0);
  }
  const double cx = s.x0 + t * dx;
  const double cy = s.y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

}  // namespace

double normalize_angle(double theta) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta, two_pi);
  if (r <= -std::numbers::pi) {
    r += two_pi;
  } else if (r > std::numbers::pi) {
    r -= two_pi;
  }
  return r;
}

VelocityCommand::VelocityCommand(double linear, double angular, std::int64_t issue_tick)
    : linear_(linear), angular_(angular), issue_tick_(issue_tick) {
  if (!std::isfinite(linear) || !std::isfinite(angular) || std::abs(linear) > kMaxLinear ||
      std::abs(angular) > kMaxAngular) {
    throw Error(ErrorCode::InvalidCommand,
                fmt::format("velocity command out of range: linear={} angular={}", linear, angular));
  }
  if (issue_tick < 0) {
    throw Error(ErrorCode::InvalidCommand, "velocity command with negative issue tick");
  }
}

DelayLine::DelayLine(int delay_ms) : delay_ms_(delay_ms) {
  if (delay_ms < 0) {
    throw Error(ErrorCode::InvalidCommand, "negative controller delay");
  }
}

void DelayLine::push(const VelocityCommand& cmd) {
  if (cmd.issue_tick() < last_issue_tick_) {
    throw Error(ErrorCode::OutOfOrderCommand,
                fmt::format("command at tick {} after tick {}", cmd.issue_tick(), last_issue_tick_));
  }
  if (!queue_.empty() && queue_.back().issue_tick() == cmd.issue_tick()) {
    queue_.back() = cmd;
  } else if (cmd.issue_tick() == last_issue_tick_) {
    // Same tick as a command already pruned into `held_`.
    held_ = cmd;
  } else {
    queue_.push_back(cmd);
  }
  last_issue_tick_ = cmd.issue_tick();
}

VelocityCommand DelayLine::current(std::int64_t now_tick) const {
  const std::int64_t lag = delay_ticks(delay_ms_);
  VelocityCommand result = held_;
  for (const auto& cmd : queue_) {
    if (cmd.issue_tick() + lag > now_tick) {
      break;
    }
    result = cmd;
  }
  return result;
}

void DelayLine::prune(std::int64_t now_tick) {
  const std::int64_t lag = delay_ticks(delay_ms_);
  while (!queue_.empty() && queue_.front().issue_tick() + lag <= now_tick) {
    held_ = queue_.front();
    queue_.pop_front();
  }
}

Arena make_environment(int start_index, int gap_index) {
  if (start_index < 0 || start_index >= kStartCount || gap_index < 0 || gap_index >= kGapCount) {
    throw Error(ErrorCode::InvalidEnvironment,
                fmt::format("no environment ({}, {}); start in 0..5, gap in 0..3", start_index, gap_index));
  }
  Arena arena;
  arena.start_index = start_index;
  arena.gap_index = gap_index;
  arena.gap_width = kGapWidths[static_cast<std::size_t>(gap_index)];
  const double half = arena.gap_width / 2.0;
  arena.walls = {{
      {0.0, kWallY, kDoorCenterX - half, kWallY},
      {kDoorCenterX + half, kWallY, arena.width, kWallY},
  }};
  arena.start = kStartPoses[static_cast<std::size_t>(start_index)];
  arena.goal = kGoal;
  return arena;
}

Arena make_environment(int environment_index) {
  if (environment_index < 0 || environment_index >= kEnvironmentCount) {
    throw Error(ErrorCode::InvalidEnvironment, fmt::format("environment index {} not in 0..23", environment_index));
  }
  return make_environment(environment_index / kGapCount, environment_index % kGapCount);
}

double clearance(const Arena& arena, double x, double y) noexcept {
  double d = std::min({x, arena.width - x, y, arena.height - y});
  for (const auto& wall : arena.walls) {
    d = std::min(d, point_segment_distance(x, y, wall));
  }
  return d - arena.robot_radius;
}

bool in_goal(const Arena& arena, const Pose2D& pose) noexcept {
  return std::hypot(pose.x - arena.goal.x, pose.y - arena.goal.y) <= arena.goal_radius;
}

Pose2D step(const Pose2D& pose, const VelocityCommand& cmd, const Arena& arena, int dt_ms) {
  const double dt = static_cast<double>(dt_ms) / 1000.0;
  const double dx = cmd.linear() * std::cos(pose.theta) * dt;
  const double dy = cmd.linear() * std::sin(pose.theta) * dt;

  Pose2D next = pose;
  next.theta = normalize_angle(pose.theta + cmd.angular() * dt);
  if (dx == 0.0 && dy == 0.0) {
    return next;
  }

  // A displacement is admissible when it does not deepen penetration; from a
  // collision-free pose that means it stays collision-free. Blocked moves
  // fall back to their axis components so the robot slides along walls.
  const double floor = std::min(0.0, clearance(arena, pose.x, pose.y));
  const auto admissible = [&](double x, double y) { return clearance(arena, x, y) >= floor; };

  if (admissible(pose.x + dx, pose.y + dy)) {
    next.x = pose.x + dx;
    next.y = pose.y + dy;
  } else if (dx != 0.0 && admissible(pose.x + dx, pose.y)) {
    next.x = pose.x + dx;
  } else if (dy != 0.0 && admissible(pose.x, pose.y + dy)) {
    next.y = pose.y + dy;
  }
  return next;
}

Segment::Segment(Arena arena, int delay_ms, int time_limit_ms)
    : arena_(std::move(arena)),
      line_(delay_ms),
      limit_ticks_((static_cast<std::int64_t>(time_limit_ms) + kTickMs - 1) / kTickMs),
      pose_(arena_.start) {
  if (time_limit_ms <= 0) {
    throw Error(ErrorCode::ValidationError, "segment time limit must be positive");
  }
  trajectory_.samples.push_back({0, pose_, 0.0, 0.0});
  update_end();
}

VelocityCommand Segment::issue(double linear, double angular) {
  VelocityCommand cmd(linear, angular, tick_);
  issue(cmd);
  return cmd;
}

void Segment::issue(const VelocityCommand& cmd) {
  if (cmd.issue_tick() < tick_) {
    throw Error(ErrorCode::OutOfOrderCommand,
                fmt::format("command stamped {} but segment is at tick {}", cmd.issue_tick(), tick_));
  }
  line_.push(cmd);
}

void Segment::step_once() {
  if (finished()) {
    return;
  }
  const VelocityCommand cmd = line_.current(tick_);
  auto& last = trajectory_.samples.back();
  last.linear = cmd.linear();
  last.angular = cmd.angular();
  line_.prune(tick_);

  pose_ = step(pose_, cmd, arena_);
  ++tick_;
  trajectory_.samples.push_back({tick_, pose_, 0.0, 0.0});
  trajectory_.elapsed_ticks = tick_;
  update_end();
}

void Segment::run_until(std::int64_t tick) {
  while (!finished() && tick_ < tick) {
    step_once();
  }
}

void Segment::run_to_end() {
  while (!finished()) {
    step_once();
  }
}

int Segment::remaining_ms() const noexcept {
  return static_cast<int>(std::max<std::int64_t>(0, limit_ticks_ - tick_) * kTickMs);
}

void Segment::update_end() {
  if (in_goal(arena_, pose_)) {
    end_ = SegmentEnd::Goal;
    trajectory_.reached_goal = true;
  } else if (tick_ >= limit_ticks_) {
    end_ = SegmentEnd::Timeout;
  }
}

Trajectory run_trial_segment(const Arena& arena, int delay_ms, std::span<const VelocityCommand> commands,
                             int time_limit_ms) {
  for (std::size_t i = 1; i < commands.size(); ++i) {
    if (commands[i].issue_tick() < commands[i - 1].issue_tick()) {
      throw Error(ErrorCode::OutOfOrderCommand,
                  fmt::format("command {} at tick {} follows tick {}", i, commands[i].issue_tick(),
                              commands[i - 1].issue_tick()));
    }
  }
  Segment segment(arena, delay_ms, time_limit_ms);
  std::size_t next = 0;
  while (!segment.finished()) {
    while (next < commands.size() && commands[next].issue_tick() <= segment.tick()) {
      segment.issue(commands[next++]);
    }
    segment.step_once();
  }
  return segment.trajectory();
}

void write_trajectory_csv(std::ostream& out, const Arena& arena, int delay_ms, const Trajectory& trajectory) {
  out << fmt::format("# arena={},{} delay_ms={}\n", arena.start_index, arena.gap_index, delay_ms);
  out << "tick,x,y,theta\n";
  for (const auto& s : trajectory.samples) {
    out << fmt::format("{},{},{},{}\n", s.tick, s.pose.x, s.pose.y, s.pose.theta);
  }
}

}  // namespace confslate::sim
