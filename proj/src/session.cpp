#include "confslate/session.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::session {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string_view to_string(fusion::TiePolicy p) noexcept {
  switch (p) {
    case fusion::TiePolicy::PreferHuman: return "prefer_human";
    case fusion::TiePolicy::PreferAi: return "prefer_ai";
    case fusion::TiePolicy::Random: return "random";
  }
  return "prefer_human";
}

fusion::TiePolicy parse_tie_policy(std::string_view s) {
  if (s == "prefer_human") return fusion::TiePolicy::PreferHuman;
  if (s == "prefer_ai") return fusion::TiePolicy::PreferAi;
  if (s == "random") return fusion::TiePolicy::Random;
  throw Error(ErrorCode::ValidationError, fmt::format("unknown tie policy \"{}\"", s));
}

std::string_view to_string(StaircaseDriver d) noexcept {
  return d == StaircaseDriver::Initial ? "initial" : "final";
}

StaircaseDriver parse_driver(std::string_view s) {
  if (s == "initial") return StaircaseDriver::Initial;
  if (s == "final") return StaircaseDriver::Final;
  throw Error(ErrorCode::ValidationError, fmt::format("unknown staircase driver \"{}\"", s));
}

RobotId parse_robot(std::string_view s) {
  if (s == "A") return RobotId::A;
  if (s == "B") return RobotId::B;
  throw Error(ErrorCode::ValidationError, fmt::format("robot must be \"A\" or \"B\", got \"{}\"", s));
}

std::string robot_str(RobotId r) { return std::string(1, to_char(r)); }

std::string_view end_reason(sim::SegmentEnd e) noexcept {
  return e == sim::SegmentEnd::Goal ? "goal" : "timeout";
}

bool valid_session_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::TeleopA: return "TeleopA";
    case Phase::TeleopB: return "TeleopB";
    case Phase::InitialInference: return "InitialInference";
    case Phase::AiReveal: return "AiReveal";
    case Phase::ChangeDecision: return "ChangeDecision";
    case Phase::FinalInference: return "FinalInference";
    case Phase::Resolution: return "Resolution";
    case Phase::Done: return "Done";
  }
  return "?";
}

void SessionConfig::validate() const {
  if (n_practice < 0 || n_trials < 1) {
    throw Error(ErrorCode::ValidationError, "need n_practice >= 0 and n_trials >= 1");
  }
  if (likert_min != kLikertMin || likert_max != kLikertMax) {
    throw Error(ErrorCode::ValidationError, "the confidence scale is fixed at 1..4");
  }
  if (segment_time_limit_ms <= 0) {
    throw Error(ErrorCode::ValidationError, "segment_time_limit_ms must be positive");
  }
  if (!(exclusion_min_accuracy >= 0.0 && exclusion_min_accuracy <= 1.0)) {
    throw Error(ErrorCode::ValidationError, "exclusion_min_accuracy must be in [0, 1]");
  }
  if (exclusion_same_conf_max < 1) {
    throw Error(ErrorCode::ValidationError, "exclusion_same_conf_max must be positive");
  }
}

json to_json(const SessionConfig& c) {
  return {{"n_practice", c.n_practice},
          {"n_trials", c.n_trials},
          {"likert_min", c.likert_min},
          {"likert_max", c.likert_max},
          {"segment_time_limit_ms", c.segment_time_limit_ms},
          {"exclusion_min_accuracy", c.exclusion_min_accuracy},
          {"exclusion_same_conf_max", c.exclusion_same_conf_max},
          {"seed", c.seed},
          {"tie_policy", std::string(to_string(c.tie_policy))},
          {"staircase_driver", std::string(to_string(c.staircase_driver))}};
}

SessionConfig config_from_json(const json& j, SessionConfig base) {
  if (!j.is_object()) {
    throw Error(ErrorCode::ValidationError, "session config must be a JSON object");
  }
  try {
    SessionConfig c = base;
    c.n_practice = j.value("n_practice", c.n_practice);
    c.n_trials = j.value("n_trials", c.n_trials);
    c.likert_min = j.value("likert_min", c.likert_min);
    c.likert_max = j.value("likert_max", c.likert_max);
    c.segment_time_limit_ms = j.value("segment_time_limit_ms", c.segment_time_limit_ms);
    c.exclusion_min_accuracy = j.value("exclusion_min_accuracy", c.exclusion_min_accuracy);
    c.exclusion_same_conf_max = j.value("exclusion_same_conf_max", c.exclusion_same_conf_max);
    c.seed = j.value("seed", c.seed);
    if (j.contains("tie_policy")) c.tie_policy = parse_tie_policy(j.at("tie_policy").get<std::string>());
    if (j.contains("staircase_driver")) c.staircase_driver = parse_driver(j.at("staircase_driver").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationError, fmt::format("bad session config: {}", e.what()));
  }
}

json to_json(const Inference& inf) {
  return {{"choice", robot_str(inf.choice)}, {"confidence", inf.confidence.value()}};
}

Inference inference_from_json(const json& j) {
  try {
    const RobotId choice = parse_robot(j.at("choice").get<std::string>());
    const json& c = j.at("confidence");
    if (!c.is_number_integer()) {
      throw Error(ErrorCode::InvalidConfidence, "confidence must be an integer 1..4");
    }
    return {choice, LikertConfidence(c.get<int>())};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationError, fmt::format("bad inference: {}", e.what()));
  }
}

// ---- records ----------------------------------------------------------------

std::string_view records_csv_header() noexcept {
  return "session_id,trial,start_index,gap_index,delay_a_ms,delay_b_ms,differential_ms,level,nominal_ms,truth,"
         "human_initial_choice,human_initial_conf,ai_choice,ai_conf,changed,human_final_choice,human_final_conf,"
         "mcs_source,mcs_choice,mcs_correct,hi_choice,hi_correct,dlc_choice,dlc_correct,dr_choice,dr_correct,"
         "ts_arm,ts_choice,ts_correct,segment_a_goal,segment_a_ticks,segment_b_goal,segment_b_ticks,"
         "dss_calibration,ts_start,ts_end";
}

std::string record_csv_row(const TrialRecord& r) {
  const auto res = [&](fusion::StrategyId id) -> StrategyResult {
    const auto it = r.results.find(id);
    return it == r.results.end() ? StrategyResult{} : it->second;
  };
  const auto mcs = res(fusion::StrategyId::Mcs);
  const auto hi = res(fusion::StrategyId::HumanInitiative);
  const auto dlc = res(fusion::StrategyId::Dlc);
  const auto dr = res(fusion::StrategyId::Dr);
  const auto ts = res(fusion::StrategyId::Ts);
  return fmt::format(
      "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
      r.session_id, r.trial_index, r.start_index, r.gap_index, r.delays.delay_a_ms, r.delays.delay_b_ms,
      r.delays.differential_ms(), r.level.level, r.level.nominal_ms, to_char(r.truth), to_char(r.human_initial.choice),
      r.human_initial.confidence.value(), to_char(r.ai.choice), r.ai.confidence.value(), r.changed ? 1 : 0,
      to_char(r.human_final.choice), r.human_final.confidence.value(), fusion::to_string(r.mcs_source),
      to_char(mcs.choice), mcs.correct ? 1 : 0, to_char(hi.choice), hi.correct ? 1 : 0, to_char(dlc.choice),
      dlc.correct ? 1 : 0, to_char(dr.choice), dr.correct ? 1 : 0, fusion::to_string(r.ts_arm), to_char(ts.choice),
      ts.correct ? 1 : 0, r.segment_a.reached_goal ? 1 : 0, r.segment_a.ticks, r.segment_b.reached_goal ? 1 : 0,
      r.segment_b.ticks, to_string(r.dss_calibration), r.ts_start, r.ts_end);
}

void write_records_csv(std::ostream& out, std::span<const TrialRecord> records) {
  out << records_csv_header() << '\n';
  for (const auto& r : records) {
    out << record_csv_row(r) << '\n';
  }
}

std::vector<TrialRecord> read_records_csv(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (!header) {
      if (line != records_csv_header()) {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: not a trial-record header", line_no));
      }
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      f.push_back(field);
    }
    if (line.back() == ',') {
      f.emplace_back();
    }
    if (f.size() != 36) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: expected 36 fields, got {}", line_no, f.size()));
    }
    try {
      const auto i = [&](std::size_t k) {
        std::size_t used = 0;
        const long long v = std::stoll(f[k], &used);
        if (used != f[k].size()) throw std::invalid_argument(f[k]);
        return v;
      };
      const auto b = [&](std::size_t k) {
        const auto v = i(k);
        if (v != 0 && v != 1) throw std::invalid_argument(f[k]);
        return v == 1;
      };
      const auto robot = [&](std::size_t k) { return parse_robot(f[k]); };
      const auto source = [&](std::size_t k) {
        if (f[k] == "human") return fusion::Source::Human;
        if (f[k] == "ai") return fusion::Source::Ai;
        throw std::invalid_argument(f[k]);
      };
      TrialRecord r;
      r.session_id = f[0];
      r.trial_index = static_cast<int>(i(1));
      r.start_index = static_cast<int>(i(2));
      r.gap_index = static_cast<int>(i(3));
      r.delays.delay_a_ms = static_cast<int>(i(4));
      r.delays.delay_b_ms = static_cast<int>(i(5));
      r.level = staircase::level_from_index(static_cast<int>(i(7)));
      r.truth = robot(9);
      r.delays.lower = r.truth;
      r.human_initial = {robot(10), LikertConfidence(static_cast<int>(i(11)))};
      r.ai = {robot(12), LikertConfidence(static_cast<int>(i(13)))};
      r.changed = b(14);
      r.human_final = {robot(15), LikertConfidence(static_cast<int>(i(16)))};
      r.mcs_source = source(17);
      r.results[fusion::StrategyId::Mcs] = {robot(18), b(19)};
      r.results[fusion::StrategyId::HumanInitiative] = {robot(20), b(21)};
      r.results[fusion::StrategyId::Dlc] = {robot(22), b(23)};
      r.results[fusion::StrategyId::Dr] = {robot(24), b(25)};
      r.ts_arm = source(26);
      r.results[fusion::StrategyId::Ts] = {robot(27), b(28)};
      r.segment_a = {b(29), i(30)};
      r.segment_b = {b(31), i(32)};
      r.dss_calibration = parse_calibration(f[33]);
      r.ts_start = f[34];
      r.ts_end = f[35];
      if (r.delays.differential_ms() != i(6)) throw std::invalid_argument("differential");
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: {}", line_no, e.what()));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: bad field '{}'", line_no, e.what()));
    }
  }
  if (!header) {
    throw Error(ErrorCode::SchemaError, "missing trial-record header");
  }
  return out;
}

std::uint64_t record_hash(const TrialRecord& r) {
  return fnv1a(record_csv_row(r));
}

std::uint64_t records_hash(std::span<const TrialRecord> records) {
  std::uint64_t h = fnv1a(records_csv_header());
  for (const auto& r : records) {
    h = fnv1a(record_csv_row(r), h);
    h = fnv1a("\n", h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  return fmt::format("{:016x}", v);
}

std::string_view input_kind(const Input& input) noexcept {
  return std::visit(Overloaded{
                        [](const Command&) { return std::string_view("cmd"); },
                        [](const Tick&) { return std::string_view("tick"); },
                        [](const SegmentComplete&) { return std::string_view("segment_end"); },
                        [](const InitialInference&) { return std::string_view("inference_initial"); },
                        [](const RevealAcknowledged&) { return std::string_view("reveal_ack"); },
                        [](const KeepDecision&) { return std::string_view("keep"); },
                        [](const ChangeRequested&) { return std::string_view("change"); },
                        [](const FinalInference&) { return std::string_view("inference_final"); },
                        [](const NextTrial&) { return std::string_view("next"); },
                    },
                    input);
}

// ---- event log ----------------------------------------------------------------

json to_json(const Event& e) {
  return {{"seq", e.seq}, {"ts", e.ts}, {"session", e.session}, {"kind", e.kind}, {"payload", e.payload}};
}

Event event_from_json(const json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.ts = j.at("ts").get<std::string>();
    e.session = j.at("session").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.at("payload");
    if (!e.payload.is_object()) {
      throw Error(ErrorCode::CorruptLog, "event payload must be an object");
    }
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::CorruptLog, fmt::format("malformed event: {}", ex.what()));
  }
}

void EventLog::append(Event event) {
  if (event.seq != next_seq()) {
    throw Error(ErrorCode::SeqGap, fmt::format("event seq {} where {} was expected", event.seq, next_seq()));
  }
  events_.push_back(std::move(event));
}

void EventLog::write_jsonl(std::ostream& out) const {
  for (const auto& e : events_) {
    out << to_json(e).dump() << '\n';
  }
}

EventLog EventLog::read_jsonl(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptLog, fmt::format("line {}: {}", line_no, e.what()));
    }
    try {
      log.append(event_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptLog, fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return log;
}

std::string format_iso8601(std::int64_t unix_ms) {
  const std::time_t secs = static_cast<std::time_t>(unix_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, unix_ms % 1000);
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  return format_iso8601(std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count());
}

// ---- session --------------------------------------------------------------------

Session::Session(std::string id, SessionConfig config, AiDssModel dss, Clock clock, Listener listener)
    : id_(std::move(id)),
      config_(config),
      dss_(std::move(dss)),
      clock_(std::move(clock)),
      listener_(std::move(listener)) {
  if (!valid_session_id(id_)) {
    throw Error(ErrorCode::ValidationError, fmt::format("invalid session id \"{}\"", id_));
  }
  config_.validate();
  dss_.validate(true);
  ts_ = clock_();
  emit("session_created", {{"config", to_json(config_)},
                           {"dss", {{"accuracy", dss_.accuracy}, {"table", to_json(dss_.tables, dss_.calibration)}}}});
  start_trial();
}

int Session::trial_number() const noexcept {
  return practice() ? counter_ + 1 : counter_ - config_.n_practice + 1;
}

const sim::Segment* Session::active_segment() const noexcept {
  if ((phase_ == Phase::TeleopA || phase_ == Phase::TeleopB) && segment_) {
    return &*segment_;
  }
  return nullptr;
}

sim::Segment& Session::segment() {
  return *segment_;
}

int Session::scheduled_environment(std::uint64_t seed, int k) {
  const int cycle = k / sim::kEnvironmentCount;
  std::array<int, sim::kEnvironmentCount> order{};
  std::iota(order.begin(), order.end(), 0);
  auto rng = RandomStream::derive(seed, {stream_purpose::schedule, static_cast<std::uint64_t>(cycle)});
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }
  return order[static_cast<std::size_t>(k % sim::kEnvironmentCount)];
}

void Session::emit(std::string kind, json payload) {
  Event e{log_.next_seq(), ts_, id_, std::move(kind), std::move(payload)};
  log_.append(e);
  if (listener_) {
    listener_(e);
  }
}

void Session::start_trial() {
  const auto k = static_cast<std::uint64_t>(counter_);
  arena_ = sim::make_environment(scheduled_environment(config_.seed, counter_));
  auto delay_rng = RandomStream::derive(config_.seed, {stream_purpose::delays, k});
  delays_ = staircase::assign_delays(staircase_, delay_rng);
  segment_.emplace(arena_, delays_.delay_a_ms, config_.segment_time_limit_ms);
  segment_a_ = {};
  segment_b_ = {};
  human_initial_.reset();
  human_final_.reset();
  ai_.reset();
  trial_ts_start_ = ts_;
  phase_ = Phase::TeleopA;
  emit("trial_started", {{"counter", counter_},
                         {"practice", practice()},
                         {"trial", trial_number()},
                         {"start_index", arena_.start_index},
                         {"gap_index", arena_.gap_index},
                         {"delay_a_ms", delays_.delay_a_ms},
                         {"delay_b_ms", delays_.delay_b_ms},
                         {"differential_ms", staircase_.differential_ms}});
}

void Session::violation(const Input& input) const {
  throw Error(ErrorCode::ProtocolViolation,
              fmt::format("'{}' is not allowed in phase {}", input_kind(input), to_string(phase_)));
}

void Session::advance(const Input& input) {
  ts_ = clock_();
  const bool teleop = phase_ == Phase::TeleopA || phase_ == Phase::TeleopB;
  const char robot = phase_ == Phase::TeleopA ? 'A' : 'B';

  std::visit(
      Overloaded{
          [&](const Command& c) {
            if (!teleop) violation(input);
            auto& seg = segment();
            if (seg.finished()) {
              // Arrived after goal/timeout; nothing left to drive.
              emit("cmd", {{"robot", std::string(1, robot)}, {"tick", c.tick}, {"linear", c.linear},
                           {"angular", c.angular}, {"ignored", true}});
              return;
            }
            const sim::VelocityCommand cmd(c.linear, c.angular, c.tick);
            seg.run_until(c.tick);
            if (!seg.finished()) {
              seg.issue(cmd);
            }
            emit("cmd", {{"robot", std::string(1, robot)}, {"tick", c.tick}, {"linear", c.linear},
                         {"angular", c.angular}});
          },
          [&](const Tick& t) {
            if (!teleop) violation(input);
            segment().run_until(t.tick);
          },
          [&](const SegmentComplete&) {
            if (!teleop) violation(input);
            auto& seg = segment();
            seg.run_to_end();
            const SegmentSummary summary{seg.end_reason() == sim::SegmentEnd::Goal, seg.tick()};
            emit("segment_end", {{"robot", std::string(1, robot)},
                                 {"reason", std::string(end_reason(seg.end_reason()))},
                                 {"tick", seg.tick()}});
            if (phase_ == Phase::TeleopA) {
              segment_a_ = summary;
              segment_.emplace(arena_, delays_.delay_b_ms, config_.segment_time_limit_ms);
              phase_ = Phase::TeleopB;
            } else {
              segment_b_ = summary;
              segment_.reset();
              phase_ = Phase::InitialInference;
            }
          },
          [&](const InitialInference& i) {
            if (phase_ != Phase::InitialInference) violation(input);
            human_initial_ = i.inference;
            emit("inference_initial", to_json(i.inference));
            enter_ai_reveal();
          },
          [&](const RevealAcknowledged&) {
            if (phase_ != Phase::AiReveal) violation(input);
            emit("reveal_ack", json::object());
            phase_ = Phase::ChangeDecision;
          },
          [&](const KeepDecision&) {
            if (phase_ != Phase::ChangeDecision) violation(input);
            emit("keep", json::object());
            human_final_ = human_initial_;
            resolve();
          },
          [&](const ChangeRequested&) {
            if (phase_ != Phase::ChangeDecision) violation(input);
            emit("change", json::object());
            phase_ = Phase::FinalInference;
          },
          [&](const FinalInference& f) {
            if (phase_ != Phase::FinalInference) violation(input);
            human_final_ = f.inference;
            emit("inference_final", to_json(f.inference));
            resolve();
          },
          [&](const NextTrial&) {
            if (phase_ != Phase::Resolution) violation(input);
            emit("next", json::object());
            ++counter_;
            if (counter_ >= config_.n_practice + config_.n_trials) {
              phase_ = Phase::Done;
              emit("session_done", {{"n_records", records_.size()}});
            } else {
              start_trial();
            }
          },
      },
      input);
}

void Session::enter_ai_reveal() {
  auto rng = RandomStream::derive(config_.seed, {stream_purpose::ai, static_cast<std::uint64_t>(counter_)});
  ai_ = ai_infer(dss_, truth(), staircase::difficulty_bin(staircase_.differential_ms), rng);
  emit("ai_inference", to_json(*ai_));
  phase_ = Phase::AiReveal;
}

void Session::resolve() {
  const auto k = static_cast<std::uint64_t>(counter_);
  const Inference& initial = *human_initial_;
  const Inference& final_inf = *human_final_;
  const Inference& ai = *ai_;
  const RobotId truth_robot = truth();

  TrialRecord r;
  r.session_id = id_;
  r.trial_index = practice() ? counter_ : counter_ - config_.n_practice;
  r.start_index = arena_.start_index;
  r.gap_index = arena_.gap_index;
  r.delays = delays_;
  r.level = staircase::difficulty_bin(staircase_.differential_ms);
  r.human_initial = initial;
  r.ai = ai;
  r.human_final = final_inf;
  r.changed = !(final_inf == initial);
  r.truth = truth_robot;
  r.segment_a = segment_a_;
  r.segment_b = segment_b_;
  r.dss_calibration = dss_.calibration;

  const auto result = [&](RobotId choice) { return StrategyResult{choice, choice == truth_robot}; };

  auto tie_rng = RandomStream::derive(config_.seed, {stream_purpose::tie, k});
  const auto mcs = fusion::mcs(initial, ai, config_.tie_policy, tie_rng);
  r.mcs_source = mcs.source;
  r.results[fusion::StrategyId::Mcs] = result(mcs.inference.choice);
  r.results[fusion::StrategyId::HumanInitiative] = result(final_inf.choice);
  r.results[fusion::StrategyId::Dlc] = result(fusion::dummy_low_confidence(initial, ai).inference.choice);
  auto dr_rng = RandomStream::derive(config_.seed, {stream_purpose::dummy_random, k});
  r.results[fusion::StrategyId::Dr] = result(fusion::dummy_random(initial, ai, dr_rng).inference.choice);
  auto ts_rng = RandomStream::derive(config_.seed, {stream_purpose::bandit, k});
  r.ts_arm = fusion::ts_select(bandit_, ts_rng);
  r.results[fusion::StrategyId::Ts] = result(r.ts_arm == fusion::Source::Human ? initial.choice : ai.choice);

  r.ts_start = trial_ts_start_;
  r.ts_end = ts_;

  json strategies = json::object();
  for (const auto& [id, res] : r.results) {
    strategies[std::string(fusion::to_string(id))] = robot_str(res.choice);
  }
  emit("trial_resolved", {{"practice", practice()},
                          {"trial", trial_number()},
                          {"strategies", strategies},
                          {"record_hash", hex64(record_hash(r))}});

  if (practice()) {
    practice_records_.push_back(r);
  } else {
    bandit_ = fusion::ts_update(bandit_, r.human_initial_correct(), r.ai_correct());
    const bool reference = config_.staircase_driver == StaircaseDriver::Initial ? r.human_initial_correct()
                                                                                : r.human_final_correct();
    staircase_ = staircase::update(staircase_, reference);
    records_.push_back(r);
  }
  last_resolution_ = std::move(r);
  phase_ = Phase::Resolution;
}

// ---- replay -----------------------------------------------------------------------

namespace {

std::optional<Input> input_from_event(const Event& e) {
  const auto& p = e.payload;
  if (e.kind == "cmd") {
    return Command{p.at("tick").get<std::int64_t>(), p.at("linear").get<double>(), p.at("angular").get<double>()};
  }
  if (e.kind == "segment_end") return SegmentComplete{};
  if (e.kind == "inference_initial") return InitialInference{inference_from_json(p)};
  if (e.kind == "reveal_ack") return RevealAcknowledged{};
  if (e.kind == "keep") return KeepDecision{};
  if (e.kind == "change") return ChangeRequested{};
  if (e.kind == "inference_final") return FinalInference{inference_from_json(p)};
  if (e.kind == "next") return NextTrial{};
  if (e.kind == "session_created" || e.kind == "trial_started" || e.kind == "ai_inference" ||
      e.kind == "trial_resolved" || e.kind == "session_done") {
    return std::nullopt;
  }
  throw Error(ErrorCode::CorruptLog, fmt::format("unknown event kind \"{}\"", e.kind));
}

}  // namespace

std::vector<TrialRecord> replay(const EventLog& log) {
  const auto& events = log.events();
  if (events.empty() || events.front().kind != "session_created") {
    throw Error(ErrorCode::CorruptLog, "log does not start with session_created");
  }
  if (events.back().kind != "session_done") {
    throw Error(ErrorCode::CorruptLog, "log is truncated: no session_done event");
  }
  try {
    const Event& first = events.front();
    const SessionConfig config = config_from_json(first.payload.at("config"));
    const auto& dss_json = first.payload.at("dss");
    auto [table, label] = table_from_json(dss_json.at("table"));
    AiDssModel dss{dss_json.at("accuracy").get<double>(), table, label};

    std::string ts = first.ts;
    Session session(first.session, config, dss, [&ts] { return ts; });
    for (const auto& e : events) {
      if (e.session != first.session) {
        throw Error(ErrorCode::CorruptLog, fmt::format("seq {} belongs to session {}", e.seq, e.session));
      }
      if (auto input = input_from_event(e)) {
        ts = e.ts;
        session.advance(*input);
      }
    }
    const auto& replayed = session.log().events();
    const std::size_t n = std::min(replayed.size(), events.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!(replayed[i] == events[i])) {
        throw Error(ErrorCode::CorruptLog,
                    fmt::format("replay diverges at seq {} ({}): recorded {} but recomputed {}", i, events[i].kind,
                                events[i].payload.dump(), replayed[i].payload.dump()));
      }
    }
    if (replayed.size() != events.size() || session.phase() != Phase::Done) {
      throw Error(ErrorCode::CorruptLog, "replay ended in a different state than the log");
    }
    return session.records();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptLog) {
      throw;
    }
    throw Error(ErrorCode::CorruptLog, fmt::format("replay failed: {}", e.what()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptLog, fmt::format("replay failed: {}", e.what()));
  }
}

// ---- exclusions -----------------------------------------------------------------

ExclusionVerdict exclusion_verdict(const SessionRecords& s, const SessionConfig& config) {
  ExclusionVerdict v;
  if (s.trials.empty()) {
    v.retained = false;
    return v;
  }
  std::array<int, kLikertBins> uses{};
  int correct = 0;
  for (const auto& t : s.trials) {
    correct += t.human_initial_correct() ? 1 : 0;
    ++uses[t.human_initial.confidence.bin()];
  }
  v.accuracy = static_cast<double>(correct) / static_cast<double>(s.trials.size());
  v.max_same_confidence = *std::max_element(uses.begin(), uses.end());
  v.retained = v.accuracy >= config.exclusion_min_accuracy && v.max_same_confidence <= config.exclusion_same_conf_max;
  return v;
}

std::vector<SessionRecords> apply_exclusions(std::span<const SessionRecords> sessions, const SessionConfig& config) {
  std::vector<SessionRecords> kept;
  for (const auto& s : sessions) {
    if (exclusion_verdict(s, config).retained) {
      kept.push_back(s);
    }
  }
  return kept;
}

std::vector<SessionRecords> group_by_session(std::span<const TrialRecord> records) {
  std::vector<SessionRecords> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.try_emplace(r.session_id, out.size());
    if (inserted) {
      out.push_back({r.session_id, {}});
    }
    out[it->second].trials.push_back(r);
  }
  return out;
}

}  // namespace confslate::session
