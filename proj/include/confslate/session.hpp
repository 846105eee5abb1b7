#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "confslate/agents.hpp"
#include "confslate/fusion.hpp"
#include "confslate/sim.hpp"
#include "confslate/staircase.hpp"

namespace confslate::session {

enum class Phase { TeleopA, TeleopB, InitialInference, AiReveal, ChangeDecision, FinalInference, Resolution, Done };

std::string_view to_string(Phase p) noexcept;

enum class StaircaseDriver { Initial, Final };

struct SessionConfig {
  int n_practice = 5;
  int n_trials = 100;
  int likert_min = kLikertMin;
  int likert_max = kLikertMax;
  int segment_time_limit_ms = sim::kSegmentTimeLimitMs;
  double exclusion_min_accuracy = 0.65;
  int exclusion_same_conf_max = 95;
  std::uint64_t seed = 0;
  fusion::TiePolicy tie_policy = fusion::TiePolicy::PreferHuman;
  StaircaseDriver staircase_driver = StaircaseDriver::Initial;

  /// Throws ValidationError.
  void validate() const;
};

nlohmann::json to_json(const SessionConfig& c);
/// Missing keys keep their defaults; unknown values throw ValidationError.
SessionConfig config_from_json(const nlohmann::json& j, SessionConfig base = {});

struct SegmentSummary {
  bool reached_goal = false;
  std::int64_t ticks = 0;

  friend bool operator==(const SegmentSummary&, const SegmentSummary&) = default;
};

struct StrategyResult {
  RobotId choice = RobotId::A;
  bool correct = false;

  friend bool operator==(const StrategyResult&, const StrategyResult&) = default;
};

struct TrialRecord {
  std::string session_id;
  int trial_index = 0;  // 0-based among scored trials
  int start_index = 0;
  int gap_index = 0;
  staircase::DelayAssignment delays{};
  staircase::DifficultyLevel level{};
  Inference human_initial{};
  Inference ai{};
  bool changed = false;
  Inference human_final{};
  RobotId truth = RobotId::A;
  fusion::Source mcs_source = fusion::Source::Human;
  fusion::Source ts_arm = fusion::Source::Human;
  // Per-trial strategies; HP and LP are dyad-level and derived in analysis.
  std::map<fusion::StrategyId, StrategyResult> results;
  SegmentSummary segment_a{};
  SegmentSummary segment_b{};
  Calibration dss_calibration = Calibration::Well;
  std::string ts_start;
  std::string ts_end;

  [[nodiscard]] bool human_initial_correct() const noexcept { return human_initial.choice == truth; }
  [[nodiscard]] bool human_final_correct() const noexcept { return human_final.choice == truth; }
  [[nodiscard]] bool ai_correct() const noexcept { return ai.choice == truth; }
  [[nodiscard]] bool disagreement() const noexcept { return human_initial.choice != ai.choice; }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

inline constexpr std::array<fusion::StrategyId, 5> kTrialStrategies{
    fusion::StrategyId::Mcs, fusion::StrategyId::HumanInitiative, fusion::StrategyId::Dlc, fusion::StrategyId::Dr,
    fusion::StrategyId::Ts};

/// Fixed column order of the record export.
std::string_view records_csv_header() noexcept;
std::string record_csv_row(const TrialRecord& r);
void write_records_csv(std::ostream& out, std::span<const TrialRecord> records);
/// Throws SchemaError naming the line.
std::vector<TrialRecord> read_records_csv(std::istream& in);

/// FNV-1a 64 over the CSV row.
std::uint64_t record_hash(const TrialRecord& r);
std::uint64_t records_hash(std::span<const TrialRecord> records);
std::string hex64(std::uint64_t v);

// ---- inputs to the state machine -------------------------------------------

struct Command {
  std::int64_t tick = 0;
  double linear = 0.0;
  double angular = 0.0;
};
/// Advance the active segment to `tick` (not logged).
struct Tick {
  std::int64_t tick = 0;
};
/// Close the active segment, fast-forwarding to goal or timeout if needed.
struct SegmentComplete {};
struct InitialInference {
  Inference inference;
};
struct RevealAcknowledged {};
struct KeepDecision {};
struct ChangeRequested {};
struct FinalInference {
  Inference inference;
};
struct NextTrial {};

using Input = std::variant<Command, Tick, SegmentComplete, InitialInference, RevealAcknowledged, KeepDecision,
                           ChangeRequested, FinalInference, NextTrial>;

std::string_view input_kind(const Input& input) noexcept;

// ---- event log ---------------------------------------------------------------

struct Event {
  std::uint64_t seq = 0;
  std::string ts;
  std::string session;
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();

  friend bool operator==(const Event&, const Event&) = default;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Append-only, gap-free event sequence of one session.
class EventLog {
 public:
  /// Throws SeqGap unless event.seq == last seq + 1 (the first event has seq 0).
  void append(Event event);
  [[nodiscard]] std::uint64_t next_seq() const noexcept { return events_.size(); }
  [[nodiscard]] const std::vector<Event>& events() const noexcept { return events_; }

  void write_jsonl(std::ostream& out) const;
  /// Throws CorruptLog on malformed lines or sequence gaps.
  static EventLog read_jsonl(std::istream& in);

 private:
  std::vector<Event> events_;
};

std::string format_iso8601(std::int64_t unix_ms);
std::string now_iso8601();

using Clock = std::function<std::string()>;

// ---- the session -------------------------------------------------------------

/// Trial-flow state machine: teleoperate A, teleoperate B, initial inference,
/// AI reveal, keep/change, optional final inference, resolution. Practice
/// trials run the same flow but never reach the analysis records or the
/// staircase. Every stochastic draw comes from a stream derived from the
/// session seed and the trial counter, so a session is a pure function of its
/// seed and its inputs.
class Session {
 public:
  using Listener = std::function<void(const Event&)>;

  Session(std::string id, SessionConfig config, AiDssModel dss, Clock clock = now_iso8601,
          Listener listener = {});

  /// Throws ProtocolViolation for inputs illegal in the current phase.
  void advance(const Input& input);

  [[nodiscard]] Phase phase() const noexcept { return phase_; }
  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const SessionConfig& config() const noexcept { return config_; }
  [[nodiscard]] const AiDssModel& dss() const noexcept { return dss_; }
  [[nodiscard]] bool practice() const noexcept { return counter_ < config_.n_practice; }
  /// 1-based number within the practice block or the scored block.
  [[nodiscard]] int trial_number() const noexcept;
  [[nodiscard]] int trial_counter() const noexcept { return counter_; }

  [[nodiscard]] const sim::Segment* active_segment() const noexcept;
  [[nodiscard]] const sim::Arena& arena() const noexcept { return arena_; }
  [[nodiscard]] const staircase::DelayAssignment& delays() const noexcept { return delays_; }
  [[nodiscard]] const staircase::StaircaseState& staircase() const noexcept { return staircase_; }
  [[nodiscard]] const fusion::BanditState& bandit() const noexcept { return bandit_; }
  [[nodiscard]] RobotId truth() const noexcept { return delays_.lower; }
  [[nodiscard]] const std::optional<Inference>& ai_inference() const noexcept { return ai_; }
  [[nodiscard]] const std::optional<TrialRecord>& last_resolution() const noexcept { return last_resolution_; }

  [[nodiscard]] const std::vector<TrialRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const std::vector<TrialRecord>& practice_records() const noexcept { return practice_records_; }
  [[nodiscard]] const EventLog& log() const noexcept { return log_; }

  /// Environment index (0..23) used by trial counter `k`.
  static int scheduled_environment(std::uint64_t seed, int k);

 private:
  void emit(std::string kind, nlohmann::json payload);
  void start_trial();
  void enter_ai_reveal();
  void resolve();
  sim::Segment& segment();
  [[noreturn]] void violation(const Input& input) const;

  std::string id_;
  SessionConfig config_;
  AiDssModel dss_;
  Clock clock_;
  Listener listener_;
  EventLog log_;
  std::string ts_;  // timestamp shared by all events of one advance()

  Phase phase_ = Phase::TeleopA;
  int counter_ = 0;  // trials started, practice included
  staircase::StaircaseState staircase_{};
  fusion::BanditState bandit_{};

  sim::Arena arena_{};
  staircase::DelayAssignment delays_{};
  std::optional<sim::Segment> segment_;
  SegmentSummary segment_a_{};
  SegmentSummary segment_b_{};
  std::optional<Inference> human_initial_;
  std::optional<Inference> human_final_;
  std::optional<Inference> ai_;
  std::string trial_ts_start_;
  std::optional<TrialRecord> last_resolution_;

  std::vector<TrialRecord> records_;
  std::vector<TrialRecord> practice_records_;
};

/// Rebuilds the scored records of a complete session from its event log,
/// re-running every input through a fresh Session and checking each derived
/// event. Throws CorruptLog on truncation, malformed events or divergence.
std::vector<TrialRecord> replay(const EventLog& log);

struct SessionRecords {
  std::string session_id;
  std::vector<TrialRecord> trials;
};

struct ExclusionVerdict {
  bool retained = true;
  double accuracy = 0.0;
  int max_same_confidence = 0;
};

ExclusionVerdict exclusion_verdict(const SessionRecords& s, const SessionConfig& config = {});

/// Drops sessions with initial-inference accuracy below the minimum or with
/// one confidence value used in more than the allowed number of trials.
std::vector<SessionRecords> apply_exclusions(std::span<const SessionRecords> sessions,
                                             const SessionConfig& config = {});

/// Groups records by session id, preserving first-seen order.
std::vector<SessionRecords> group_by_session(std::span<const TrialRecord> records);

nlohmann::json to_json(const Inference& inf);
/// Throws InvalidConfidence / ValidationError.
Inference inference_from_json(const nlohmann::json& j);

}  // namespace confslate::session
