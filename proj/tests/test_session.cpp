#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "confslate/error.hpp"
#include "confslate/experiment.hpp"
#include "confslate/session.hpp"

using namespace confslate;
using namespace confslate::session;

namespace {

std::string fixed_clock() {
  return "2026-01-01T00:00:00.000Z";
}

SessionConfig small_config(std::uint64_t seed, int practice = 2, int trials = 12) {
  SessionConfig c;
  c.seed = seed;
  c.n_practice = practice;
  c.n_trials = trials;
  return c;
}

experiment::SyntheticRun synthetic(std::uint64_t seed, int trials = 12, Calibration cal = Calibration::Well) {
  return experiment::run_synthetic_session("t1", small_config(seed, 2, trials), builtin_dss(cal), SyntheticOperator{},
                                           seed + 1);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

std::string csv_of(std::span<const TrialRecord> records) {
  std::ostringstream out;
  write_records_csv(out, records);
  return out.str();
}

TrialRecord fixture_trial(const std::string& session, int i, bool correct, int confidence) {
  TrialRecord r;
  r.session_id = session;
  r.trial_index = i;
  r.truth = RobotId::A;
  r.human_initial = {correct ? RobotId::A : RobotId::B, LikertConfidence(confidence)};
  r.human_final = r.human_initial;
  r.ai = {RobotId::A, LikertConfidence(2)};
  return r;
}

SessionRecords fixture_session(const std::string& id, int n_correct, int same_conf_uses) {
  SessionRecords s{id, {}};
  for (int i = 0; i < 100; ++i) {
    const int conf = i < same_conf_uses ? 2 : 1 + (i % 3 == 0 ? 2 : i % 2 == 0 ? 3 : 0);
    s.trials.push_back(fixture_trial(id, i, i < n_correct, conf));
  }
  return s;
}

}  // namespace

TEST(SessionFlow, PhaseOrder) {
  Session s("p1", small_config(1), builtin_dss(Calibration::Well), fixed_clock);
  EXPECT_EQ(s.phase(), Phase::TeleopA);
  EXPECT_TRUE(s.practice());
  EXPECT_EQ(s.trial_number(), 1);
  s.advance(SegmentComplete{});
  EXPECT_EQ(s.phase(), Phase::TeleopB);
  s.advance(SegmentComplete{});
  EXPECT_EQ(s.phase(), Phase::InitialInference);
  s.advance(InitialInference{{RobotId::A, LikertConfidence(3)}});
  EXPECT_EQ(s.phase(), Phase::AiReveal);
  ASSERT_TRUE(s.ai_inference().has_value());
  s.advance(RevealAcknowledged{});
  EXPECT_EQ(s.phase(), Phase::ChangeDecision);
  s.advance(ChangeRequested{});
  EXPECT_EQ(s.phase(), Phase::FinalInference);
  s.advance(FinalInference{{RobotId::B, LikertConfidence(2)}});
  EXPECT_EQ(s.phase(), Phase::Resolution);
  ASSERT_TRUE(s.last_resolution().has_value());
  EXPECT_TRUE(s.last_resolution()->changed);
  s.advance(NextTrial{});
  EXPECT_EQ(s.phase(), Phase::TeleopA);
  EXPECT_EQ(s.trial_number(), 2);
  EXPECT_TRUE(s.records().empty());
  EXPECT_EQ(s.practice_records().size(), 1u);
}

TEST(SessionFlow, OutOfPhaseInputs) {
  Session s("p2", small_config(1), builtin_dss(Calibration::Well), fixed_clock);
  EXPECT_EQ(code_of([&] { s.advance(InitialInference{{RobotId::A, LikertConfidence(3)}}); }),
            ErrorCode::ProtocolViolation);
  EXPECT_EQ(code_of([&] { s.advance(FinalInference{{RobotId::A, LikertConfidence(3)}}); }),
            ErrorCode::ProtocolViolation);
  EXPECT_EQ(code_of([&] { s.advance(NextTrial{}); }), ErrorCode::ProtocolViolation);
  EXPECT_EQ(s.phase(), Phase::TeleopA);
  s.advance(SegmentComplete{});
  s.advance(SegmentComplete{});
  EXPECT_EQ(code_of([&] { s.advance(Command{0, 0.5, 0.0}); }), ErrorCode::ProtocolViolation);
  EXPECT_EQ(code_of([&] { s.advance(KeepDecision{}); }), ErrorCode::ProtocolViolation);
  EXPECT_EQ(code_of([] { inference_from_json({{"choice", "A"}, {"confidence", 5}}); }),
            ErrorCode::InvalidConfidence);
  EXPECT_EQ(code_of([] { inference_from_json({{"choice", "C"}, {"confidence", 2}}); }),
            ErrorCode::ValidationError);
}

TEST(SessionFlow, CommandsDriveActiveRobot) {
  Session s("p3", small_config(1), builtin_dss(Calibration::Well), fixed_clock);
  s.advance(Command{0, 1.0, 0.0});
  s.advance(Tick{200});
  const auto* seg = s.active_segment();
  ASSERT_NE(seg, nullptr);
  EXPECT_EQ(seg->tick(), 200);
  EXPECT_NE(seg->pose(), s.arena().start);
  EXPECT_EQ(code_of([&] { s.advance(Command{100, 1.0, 0.0}); }), ErrorCode::OutOfOrderCommand);
  EXPECT_EQ(code_of([&] { s.advance(Command{200, 2.0, 0.0}); }), ErrorCode::InvalidCommand);
}

TEST(SessionFlow, RecordsAndInvariants) {
  const auto run = synthetic(5, 40);
  ASSERT_EQ(run.records.size(), 40u);
  staircase::StaircaseState st;
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const auto& r = run.records[i];
    EXPECT_EQ(r.trial_index, static_cast<int>(i));
    EXPECT_EQ(r.truth, r.delays.lower);
    EXPECT_EQ(r.truth == RobotId::A, r.delays.delay_a_ms < r.delays.delay_b_ms);
    EXPECT_EQ(r.delays.differential_ms(), st.differential_ms) << "trial " << i;
    EXPECT_EQ(r.level, staircase::difficulty_bin(st.differential_ms));
    EXPECT_EQ(r.changed, !(r.human_final == r.human_initial));
    for (auto id : kTrialStrategies) {
      ASSERT_TRUE(r.results.contains(id));
      EXPECT_EQ(r.results.at(id).correct, r.results.at(id).choice == r.truth);
    }
    if (!r.disagreement()) {
      for (auto id : {fusion::StrategyId::Mcs, fusion::StrategyId::Dlc, fusion::StrategyId::Dr,
                      fusion::StrategyId::Ts}) {
        EXPECT_EQ(r.results.at(id).choice, r.human_initial.choice);
      }
    }
    st = staircase::update(st, r.human_initial_correct());
  }
  EXPECT_EQ(run.log.events().back().kind, "session_done");
}

TEST(SessionFlow, EnvironmentScheduleCyclesThroughAll) {
  for (std::uint64_t seed : {1ULL, 99ULL}) {
    for (int cycle = 0; cycle < 3; ++cycle) {
      std::set<int> seen;
      for (int k = 0; k < 24; ++k) seen.insert(Session::scheduled_environment(seed, cycle * 24 + k));
      EXPECT_EQ(seen.size(), 24u);
    }
  }
  EXPECT_NE(Session::scheduled_environment(1, 0) * 100 + Session::scheduled_environment(1, 1),
            Session::scheduled_environment(2, 0) * 100 + Session::scheduled_environment(2, 1));
}

TEST(Records, CsvRoundTrip) {
  const auto run = synthetic(9, 15);
  const auto text = csv_of(run.records);
  std::istringstream in(text);
  const auto back = read_records_csv(in);
  ASSERT_EQ(back.size(), run.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], run.records[i]);
  EXPECT_EQ(text.substr(0, text.find('\n')), records_csv_header());
}

TEST(Records, CsvSchemaErrors) {
  std::istringstream bad_header("session_id,trial\ns,0\n");
  EXPECT_EQ(code_of([&] { read_records_csv(bad_header); }), ErrorCode::SchemaError);
  const auto run = synthetic(9, 3);
  auto text = csv_of(run.records);
  text += "s,1,2\n";
  std::istringstream short_row(text);
  EXPECT_EQ(code_of([&] { read_records_csv(short_row); }), ErrorCode::SchemaError);
}

TEST(Determinism, SameSeedSameBytes) {
  const auto a = synthetic(21, 30);
  const auto b = synthetic(21, 30);
  EXPECT_EQ(csv_of(a.records), csv_of(b.records));
  EXPECT_EQ(records_hash(a.records), records_hash(b.records));
  std::ostringstream la;
  std::ostringstream lb;
  a.log.write_jsonl(la);
  b.log.write_jsonl(lb);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_NE(records_hash(a.records), records_hash(synthetic(22, 30).records));
}

TEST(Determinism, GoldenHash) {
  const auto run = synthetic(7, 20);
  EXPECT_EQ(hex64(records_hash(run.records)), "c69ac2ab77b02e79");
}

TEST(Replay, EqualsLiveRecords) {
  const auto run = synthetic(31, 25, Calibration::Poor);
  std::ostringstream out;
  run.log.write_jsonl(out);
  std::istringstream in(out.str());
  const auto log = EventLog::read_jsonl(in);
  const auto records = replay(log);
  ASSERT_EQ(records.size(), run.records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(records[i], run.records[i]);
}

TEST(Replay, TruncatedLog) {
  const auto run = synthetic(31, 5);
  EventLog cut;
  for (std::size_t i = 0; i + 3 < run.log.events().size(); ++i) cut.append(run.log.events()[i]);
  EXPECT_EQ(code_of([&] { replay(cut); }), ErrorCode::CorruptLog);
  EXPECT_EQ(code_of([&] { replay(EventLog{}); }), ErrorCode::CorruptLog);
}

TEST(Replay, EditedConfidenceDetected) {
  const auto run = synthetic(31, 8);
  EventLog edited;
  bool done = false;
  for (auto e : run.log.events()) {
    if (!done && e.kind == "inference_initial") {
      const int c = e.payload.at("confidence").get<int>();
      e.payload["confidence"] = c == 4 ? 1 : c + 1;
      done = true;
    }
    edited.append(e);
  }
  ASSERT_TRUE(done);
  try {
    replay(edited);
    FAIL() << "edit went unnoticed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptLog);
    EXPECT_NE(std::string(e.what()).find("diverges"), std::string::npos) << e.what();
  }
}

TEST(EventLogTest, SeqGap) {
  EventLog log;
  log.append({0, "t", "s", "x", {}});
  log.append({1, "t", "s", "x", {}});
  EXPECT_EQ(code_of([&] { log.append({3, "t", "s", "x", {}}); }), ErrorCode::SeqGap);
  EXPECT_EQ(code_of([&] { log.append({1, "t", "s", "x", {}}); }), ErrorCode::SeqGap);
  std::istringstream gap(R"({"seq":0,"ts":"t","session":"s","kind":"x","payload":{}}
{"seq":2,"ts":"t","session":"s","kind":"x","payload":{}}
)");
  EXPECT_EQ(code_of([&] { EventLog::read_jsonl(gap); }), ErrorCode::CorruptLog);
  std::istringstream garbage("{not json\n");
  EXPECT_EQ(code_of([&] { EventLog::read_jsonl(garbage); }), ErrorCode::CorruptLog);
}

TEST(EventLogTest, JsonShape) {
  const auto run = synthetic(3, 2);
  std::ostringstream out;
  run.log.write_jsonl(out);
  std::istringstream in(out.str());
  std::string line;
  std::uint64_t seq = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("seq").get<std::uint64_t>(), seq++);
    EXPECT_TRUE(j.at("ts").is_string());
    EXPECT_EQ(j.at("session"), "t1");
    EXPECT_TRUE(j.at("kind").is_string());
    EXPECT_TRUE(j.at("payload").is_object());
  }
  EXPECT_EQ(format_iso8601(experiment::kVirtualEpochMs + 1234), "2026-01-01T00:00:01.234Z");
}

TEST(Exclusions, Fixtures) {
  const auto low = fixture_session("low", 60, 0);
  const auto edge = fixture_session("edge", 65, 0);
  const auto flat = fixture_session("flat", 80, 96);
  const auto ninety_five = fixture_session("ok95", 80, 95);
  EXPECT_FALSE(exclusion_verdict(low).retained);
  EXPECT_DOUBLE_EQ(exclusion_verdict(low).accuracy, 0.60);
  EXPECT_TRUE(exclusion_verdict(edge).retained);
  EXPECT_FALSE(exclusion_verdict(flat).retained);
  EXPECT_EQ(exclusion_verdict(flat).max_same_confidence, 96);
  EXPECT_TRUE(exclusion_verdict(ninety_five).retained);
  const std::vector<SessionRecords> all{low, edge, flat, ninety_five};
  const auto kept = apply_exclusions(all);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].session_id, "edge");
  EXPECT_EQ(kept[1].session_id, "ok95");
}

TEST(Config, JsonRoundTripAndValidation) {
  SessionConfig c = small_config(77);
  c.tie_policy = fusion::TiePolicy::Random;
  c.staircase_driver = StaircaseDriver::Final;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(code_of([] { config_from_json({{"n_trials", 0}}); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { config_from_json({{"tie_policy", "coin"}}); }), ErrorCode::ValidationError);
}
