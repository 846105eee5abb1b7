#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

namespace confslate::sim {

inline constexpr int kTickMs = 5;
inline constexpr int kSegmentTimeLimitMs = 30000;

inline constexpr double kMaxLinear = 1.0;   // m/s
inline constexpr double kMaxAngular = 1.5;  // rad/s

inline constexpr int kStartCount = 6;
inline constexpr int kGapCount = 4;
inline constexpr int kEnvironmentCount = kStartCount * kGapCount;

/// Ticks a delay occupies; delays are quantized up to whole ticks.
constexpr std::int64_t delay_ticks(int delay_ms) noexcept {
  return (static_cast<std::int64_t>(delay_ms) + kTickMs - 1) / kTickMs;
}

/// Maps any angle into (-pi, pi].
double normalize_angle(double theta) noexcept;

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

class VelocityCommand {
 public:
  VelocityCommand() = default;
  /// Throws InvalidCommand when a component is out of range or not finite.
  VelocityCommand(double linear, double angular, std::int64_t issue_tick);

  static VelocityCommand zero() { return {}; }

  [[nodiscard]] double linear() const noexcept { return linear_; }
  [[nodiscard]] double angular() const noexcept { return angular_; }
  [[nodiscard]] std::int64_t issue_tick() const noexcept { return issue_tick_; }

  friend bool operator==(const VelocityCommand&, const VelocityCommand&) = default;

 private:
  double linear_ = 0.0;
  double angular_ = 0.0;
  std::int64_t issue_tick_ = 0;
};

/// Queue of commands that reach the robot `delay_ms` after being issued.
/// The last command to become effective is held until superseded.
class DelayLine {
 public:
  explicit DelayLine(int delay_ms = 0);

  [[nodiscard]] int delay_ms() const noexcept { return delay_ms_; }

  /// Appends `cmd`. A command stamped with the same tick as the newest queued
  /// one replaces it; an earlier tick throws OutOfOrderCommand.
  void push(const VelocityCommand& cmd);

  /// Most recent command with issue_tick + delay_ticks <= now_tick, else zero.
  [[nodiscard]] VelocityCommand current(std::int64_t now_tick) const;

  /// Drops queued commands superseded at `now_tick`. Queries for earlier ticks
  /// are no longer answered exactly afterwards.
  void prune(std::int64_t now_tick);

  [[nodiscard]] const std::deque<VelocityCommand>& queue() const noexcept { return queue_; }

 private:
  int delay_ms_;
  std::deque<VelocityCommand> queue_;
  VelocityCommand held_{};
  std::int64_t last_issue_tick_ = -1;
};

struct WallSegment {
  double x0, y0, x1, y1;
};

struct Arena {
  int start_index = 0;
  int gap_index = 0;
  double width = 10.0;
  double height = 10.0;
  double gap_width = 0.0;
  std::array<WallSegment, 2> walls{};
  Pose2D start{};
  Pose2D goal{};
  double goal_radius = 0.5;
  double robot_radius = 0.3;
};

/// One of the 24 (start, gap) settings. Throws InvalidEnvironment.
Arena make_environment(int start_index, int gap_index);

/// Environment index 0..23 <-> (start, gap) pair.
Arena make_environment(int environment_index);

/// Smallest clearance between the robot disc edge and any wall or bound
/// (negative when penetrating).
double clearance(const Arena& arena, double x, double y) noexcept;

bool in_goal(const Arena& arena, const Pose2D& pose) noexcept;

/// Unicycle update with disc collision against walls and bounds.
Pose2D step(const Pose2D& pose, const VelocityCommand& cmd, const Arena& arena, int dt_ms = kTickMs);

struct TrajectorySample {
  std::int64_t tick = 0;
  Pose2D pose{};
  // Command in effect at this tick; it moves the robot to the next sample.
  double linear = 0.0;
  double angular = 0.0;

  friend bool operator==(const TrajectorySample&, const TrajectorySample&) = default;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  bool reached_goal = false;
  std::int64_t elapsed_ticks = 0;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

enum class SegmentEnd { Running, Goal, Timeout };

/// Incrementally simulated teleoperation segment. Used both for precomputed
/// command streams and for live, tick-by-tick driving.
class Segment {
 public:
  Segment(Arena arena, int delay_ms, int time_limit_ms = kSegmentTimeLimitMs);

  /// Issues a command stamped with the current tick.
  VelocityCommand issue(double linear, double angular);
  /// Issues a pre-stamped command; its tick must not lie in the past.
  void issue(const VelocityCommand& cmd);

  /// Advances one tick; no-op once finished.
  void step_once();
  void run_until(std::int64_t tick);
  void run_to_end();

  [[nodiscard]] bool finished() const noexcept { return end_ != SegmentEnd::Running; }
  [[nodiscard]] SegmentEnd end_reason() const noexcept { return end_; }
  [[nodiscard]] std::int64_t tick() const noexcept { return tick_; }
  [[nodiscard]] std::int64_t limit_ticks() const noexcept { return limit_ticks_; }
  [[nodiscard]] int remaining_ms() const noexcept;
  [[nodiscard]] const Pose2D& pose() const noexcept { return pose_; }
  [[nodiscard]] const Arena& arena() const noexcept { return arena_; }
  [[nodiscard]] const DelayLine& delay_line() const noexcept { return line_; }
  [[nodiscard]] const Trajectory& trajectory() const noexcept { return trajectory_; }

 private:
  void update_end();

  Arena arena_;
  DelayLine line_;
  std::int64_t limit_ticks_;
  std::int64_t tick_ = 0;
  Pose2D pose_;
  Trajectory trajectory_;
  SegmentEnd end_ = SegmentEnd::Running;
};

/// Simulates from the arena start pose at 5 ms ticks until the goal is
/// reached or the time limit elapses. Propagates OutOfOrderCommand.
Trajectory run_trial_segment(const Arena& arena, int delay_ms,
                             std::span<const VelocityCommand> commands,
                             int time_limit_ms = kSegmentTimeLimitMs);

/// `# arena=<start>,<gap> delay_ms=<d>` then `tick,x,y,theta` rows.
void write_trajectory_csv(std::ostream& out, const Arena& arena, int delay_ms,
                          const Trajectory& trajectory);

}  // namespace confslate::sim
