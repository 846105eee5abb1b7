#include "confslate/experiment.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "confslate/error.hpp"
#include "confslate/metrics.hpp"
#include "confslate/pilot.hpp"

namespace confslate::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using session::Session;

namespace {

constexpr std::int64_t kDecisionMs = 1000;
constexpr int kPilotPeriodTicks = 20;

std::string_view dss_label(DssChoice d) {
  switch (d) {
    case DssChoice::Well: return "well";
    case DssChoice::Poor: return "poor";
    case DssChoice::Mixed: return "mixed";
    case DssChoice::Table: return "table";
  }
  return "well";
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_sessions < 1) {
    throw Error(ErrorCode::ValidationError, "n_sessions must be at least 1");
  }
  op.validate();
  if (target_auroc2 && !(std::isfinite(*target_auroc2))) {
    throw Error(ErrorCode::ValidationError, "target_auroc2 must be finite");
  }
  if (!(dss_accuracy > 0.0 && dss_accuracy < 1.0)) {
    throw Error(ErrorCode::ValidationError, "dss_accuracy must lie in (0, 1)");
  }
  if (dss == DssChoice::Table && dss_table_file.empty()) {
    throw Error(ErrorCode::ValidationError, "a table DSS needs a table file");
  }
  if (strategies.empty()) {
    throw Error(ErrorCode::ValidationError, "strategies must not be empty");
  }
  if (threads < 1) {
    throw Error(ErrorCode::ValidationError, "threads must be at least 1");
  }
  session.validate();
}

ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> known{"n_sessions", "seed",       "operator", "dss_calibration", "dss_accuracy",
                                           "strategies", "output_dir", "session",  "threads"};
  if (!j.is_object()) {
    throw Error(ErrorCode::ValidationError, "experiment config must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorCode::ValidationError, fmt::format("unknown config key \"{}\"", key));
    }
  }
  ExperimentConfig c;
  try {
    c.n_sessions = j.value("n_sessions", c.n_sessions);
    c.seed = j.value("seed", c.seed);
    c.dss_accuracy = j.value("dss_accuracy", c.dss_accuracy);
    c.threads = j.value("threads", c.threads);
    if (j.contains("operator")) {
      const auto& o = j.at("operator");
      c.op.midpoint_ms = o.value("midpoint_ms", c.op.midpoint_ms);
      c.op.slope_ms = o.value("slope_ms", c.op.slope_ms);
      c.op.informativeness = o.value("informativeness", c.op.informativeness);
      c.op.deference = o.value("deference", c.op.deference);
      if (o.contains("target_auroc2")) {
        if (o.contains("informativeness")) {
          throw Error(ErrorCode::ValidationError, "give either operator.informativeness or operator.target_auroc2");
        }
        c.target_auroc2 = o.at("target_auroc2").get<double>();
      }
    }
    if (j.contains("dss_calibration")) {
      const auto& d = j.at("dss_calibration");
      if (d.is_object()) {
        c.dss = DssChoice::Table;
        c.dss_table_file = resolve(d.at("table_file").get<std::string>(), base_dir);
      } else {
        const auto s = d.get<std::string>();
        if (s == "well") {
          c.dss = DssChoice::Well;
        } else if (s == "poor") {
          c.dss = DssChoice::Poor;
        } else if (s == "mixed") {
          c.dss = DssChoice::Mixed;
        } else {
          throw Error(ErrorCode::ValidationError,
                      fmt::format("dss_calibration must be well, poor, mixed or {{\"table_file\": ...}}, not \"{}\"", s));
        }
      }
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) {
        const auto id = fusion::parse_strategy(s.get<std::string>());
        if (!id) {
          throw Error(ErrorCode::ValidationError, fmt::format("unknown strategy \"{}\"", s.get<std::string>()));
        }
        c.strategies.push_back(*id);
      }
    }
    if (j.contains("output_dir")) {
      c.output_dir = resolve(j.at("output_dir").get<std::string>(), base_dir);
    } else {
      c.output_dir = resolve(c.output_dir, base_dir);
    }
    if (j.contains("session")) {
      c.session = session::config_from_json(j.at("session"), c.session);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationError, fmt::format("bad experiment config: {}", e.what()));
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json strategies = json::array();
  for (auto s : c.strategies) strategies.push_back(std::string(fusion::to_string(s)));
  json op = {{"midpoint_ms", c.op.midpoint_ms}, {"slope_ms", c.op.slope_ms}, {"deference", c.op.deference}};
  if (c.target_auroc2) {
    op["target_auroc2"] = *c.target_auroc2;
  } else {
    op["informativeness"] = c.op.informativeness;
  }
  json dss = c.dss == DssChoice::Table ? json{{"table_file", c.dss_table_file.string()}}
                                       : json(std::string(dss_label(c.dss)));
  return {{"n_sessions", c.n_sessions},   {"seed", c.seed},
          {"operator", op},               {"dss_calibration", dss},
          {"dss_accuracy", c.dss_accuracy}, {"strategies", strategies},
          {"output_dir", c.output_dir.string()}, {"session", session::to_json(c.session)},
          {"threads", c.threads}};
}

SyntheticRun run_synthetic_session(const std::string& id, const session::SessionConfig& config, const AiDssModel& dss,
                                   const SyntheticOperator& op, std::uint64_t operator_seed) {
  std::int64_t now_ms = kVirtualEpochMs;
  Session s(id, config, dss, [&now_ms] { return session::format_iso8601(now_ms); });

  while (s.phase() != session::Phase::Done) {
    const auto k = static_cast<std::uint64_t>(s.trial_counter());

    for (int robot = 0; robot < 2; ++robot) {
      sim::WaypointPilot pilot(s.arena(), kPilotPeriodTicks);
      const std::int64_t start_ms = now_ms;
      while (!s.active_segment()->finished()) {
        const auto* seg = s.active_segment();
        const auto tick = seg->tick();
        now_ms = start_ms + tick * sim::kTickMs;
        if (auto choice = pilot.decide(tick, seg->pose())) {
          s.advance(session::Command{tick, choice->first, choice->second});
        }
        s.advance(session::Tick{tick + kPilotPeriodTicks});
      }
      now_ms = start_ms + s.active_segment()->tick() * sim::kTickMs;
      s.advance(session::SegmentComplete{});
    }

    const auto differential = static_cast<double>(s.delays().differential_ms());
    auto choice_rng = RandomStream::derive(operator_seed, {stream_purpose::operator_choice, k});
    const Inference initial = synthetic_infer(op, differential, s.truth(), choice_rng);
    now_ms += kDecisionMs;
    s.advance(session::InitialInference{initial});
    now_ms += kDecisionMs;
    s.advance(session::RevealAcknowledged{});

    auto change_rng = RandomStream::derive(operator_seed, {stream_purpose::operator_change, k});
    const Inference revised = synthetic_revise(op, initial, *s.ai_inference(), s.truth(), change_rng);
    now_ms += kDecisionMs;
    if (revised == initial) {
      s.advance(session::KeepDecision{});
    } else {
      s.advance(session::ChangeRequested{});
      now_ms += kDecisionMs;
      s.advance(session::FinalInference{revised});
    }
    now_ms += kDecisionMs;
    s.advance(session::NextTrial{});
  }
  return {s.records(), s.log()};
}

AiDssModel load_dss_table(const fs::path& path, double accuracy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, fmt::format("cannot read {}", path.string()));
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, fmt::format("{}: {}", path.string(), e.what()));
  }
  auto [table, label] = table_from_json(j);
  AiDssModel m{accuracy, table, label};
  m.validate();
  return m;
}

AiDssModel session_dss(const ExperimentConfig& config, int index) {
  switch (config.dss) {
    case DssChoice::Well: return builtin_dss(Calibration::Well, config.dss_accuracy);
    case DssChoice::Poor: return builtin_dss(Calibration::Poor, config.dss_accuracy);
    case DssChoice::Mixed:
      return builtin_dss(index % 2 == 0 ? Calibration::Well : Calibration::Poor, config.dss_accuracy);
    case DssChoice::Table: return load_dss_table(config.dss_table_file, config.dss_accuracy);
  }
  return builtin_dss(Calibration::Well, config.dss_accuracy);
}

ExperimentOutput run_experiment(const ExperimentConfig& input) {
  input.validate();
  ExperimentConfig config = input;
  if (config.target_auroc2) {
    config.op.informativeness = fit_operator_informativeness(*config.target_auroc2, config.seed);
  }

  const fs::path logs = config.output_dir / "logs";
  const fs::path records_dir = config.output_dir / "records";
  const fs::path summary = config.output_dir / "summary";
  std::error_code ec;
  for (const auto& d : {logs, records_dir, summary}) {
    fs::create_directories(d, ec);
    if (ec) {
      throw Error(ErrorCode::IoError, fmt::format("cannot create {}: {}", d.string(), ec.message()));
    }
  }

  const auto n = static_cast<std::size_t>(config.n_sessions);
  std::vector<std::vector<session::TrialRecord>> per_session(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const std::string id = fmt::format("s{:03}", i);
        auto cfg = config.session;
        cfg.seed = RandomStream::derive(config.seed, {stream_purpose::assignment, i}).next_u64();
        const auto op_seed = RandomStream::derive(config.seed, {stream_purpose::operator_choice, i}).next_u64();
        auto run = run_synthetic_session(id, cfg, session_dss(config, static_cast<int>(i)), config.op, op_seed);
        {
          auto out = open_out(logs / (id + ".jsonl"));
          run.log.write_jsonl(out);
        }
        {
          auto out = open_out(records_dir / (id + ".csv"));
          session::write_records_csv(out, run.records);
        }
        per_session[i] = std::move(run.records);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.threads), n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ExperimentOutput output;
  for (std::size_t i = 0; i < n; ++i) {
    output.files.push_back(logs / fmt::format("s{:03}.jsonl", i));
    output.files.push_back(records_dir / fmt::format("s{:03}.csv", i));
    output.records.insert(output.records.end(), per_session[i].begin(), per_session[i].end());
  }
  analysis::AnalyzeOptions options;
  options.seed = config.seed;
  options.strategies = config.strategies;
  options.exclusion_config = config.session;
  const auto tables = analysis::analyze_records(output.records, summary, options);
  output.files.insert(output.files.end(), tables.begin(), tables.end());

  auto out = open_out(config.output_dir / "config.json");
  out << to_json(config).dump(2) << '\n';
  output.files.push_back(config.output_dir / "config.json");
  return output;
}

std::vector<fs::path> ingest(const fs::path& csv_path, const fs::path& out_dir) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, fmt::format("cannot read {}", csv_path.string()));
  }
  const auto rows = read_dataset_csv(in);
  if (rows.empty()) {
    throw Error(ErrorCode::EmptyDataset, fmt::format("{} has no trials", csv_path.string()));
  }
  std::map<std::string, ParticipantData> participants;
  for (const auto& r : rows) {
    participants[r.participant_id].data.push_back(r.datum);
  }
  for (auto& [_, p] : participants) {
    metrics::RatingCounts counts;
    for (const auto& d : p.data) counts.add(d.confidence.value(), d.correct);
    p.auroc2 = metrics::auroc2(counts);
  }
  const auto partition = partition_by_calibration(participants);

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const auto write_table = [&](const std::vector<TrialDatum>& data, Calibration label) {
    if (data.empty()) return;
    const auto path = out_dir / fmt::format("{}.json", to_string(label));
    auto out = open_out(path);
    out << to_json(build_tables(data), label).dump(2) << '\n';
    written.push_back(path);
  };
  write_table(partition.well, Calibration::Well);
  write_table(partition.poor, Calibration::Poor);

  const auto path = out_dir / "participants.csv";
  auto out = open_out(path);
  out << "participant_id,n_trials,auroc2,partition\n";
  const std::set<std::string> well(partition.well_ids.begin(), partition.well_ids.end());
  const std::set<std::string> poor(partition.poor_ids.begin(), partition.poor_ids.end());
  for (const auto& [id, p] : participants) {
    const char* where = well.contains(id) ? "well" : poor.contains(id) ? "poor" : "none";
    out << fmt::format("{},{},{},{}\n", id, p.data.size(), p.auroc2 ? fmt::format("{:.6f}", *p.auroc2) : "NA", where);
  }
  written.push_back(path);
  return written;
}

}  // namespace confslate::experiment
