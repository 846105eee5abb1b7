#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "confslate/agents.hpp"
#include "confslate/analysis.hpp"
#include "confslate/fusion.hpp"
#include "confslate/session.hpp"

namespace confslate::experiment {

/// Which decision-support model each synthetic session is paired with.
/// `Mixed` alternates well/poor by session index; `Table` loads a file
/// written by `ingest`.
enum class DssChoice { Well, Poor, Mixed, Table };

struct ExperimentConfig {
  int n_sessions = 10;
  std::uint64_t seed = 7;
  SyntheticOperator op{};
  // When set, op.informativeness is fitted to this AUROC2 before running.
  std::optional<double> target_auroc2;
  DssChoice dss = DssChoice::Well;
  std::filesystem::path dss_table_file;
  double dss_accuracy = 0.70;
  std::vector<fusion::StrategyId> strategies{fusion::kAllStrategies.begin(), fusion::kAllStrategies.end()};
  std::filesystem::path output_dir = "out";
  session::SessionConfig session{};
  int threads = 1;

  /// Throws ValidationError.
  void validate() const;
};

/// Relative paths (output_dir, table file) resolve against `base_dir`.
/// Throws ValidationError on unknown keys or bad values.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& c);

struct SyntheticRun {
  std::vector<session::TrialRecord> records;
  session::EventLog log;
};

/// Epoch of the virtual clock used by headless sessions (2026-01-01T00:00:00Z).
inline constexpr std::int64_t kVirtualEpochMs = 1767225600000;

/// One session driven end to end: the waypoint pilot teleoperates both robots
/// tick by tick and the synthetic operator answers every decision prompt.
/// Timestamps come from a virtual clock, so the log is a pure function of the
/// arguments.
SyntheticRun run_synthetic_session(const std::string& id, const session::SessionConfig& config,
                                   const AiDssModel& dss, const SyntheticOperator& op, std::uint64_t operator_seed);

/// The model for session `index` under `config`.
AiDssModel session_dss(const ExperimentConfig& config, int index);

struct ExperimentOutput {
  std::vector<session::TrialRecord> records;
  std::vector<std::filesystem::path> files;
};

/// Writes logs/<id>.jsonl, records/<id>.csv and summary/*.csv under the
/// output directory. Identical configs produce identical files.
ExperimentOutput run_experiment(const ExperimentConfig& config);

/// Reads a dataset CSV, partitions participants by AUROC2 and writes
/// well.json / poor.json (tables) plus participants.csv into `out_dir`.
/// A partition without participants gets no table file.
std::vector<std::filesystem::path> ingest(const std::filesystem::path& csv_path,
                                          const std::filesystem::path& out_dir);

/// Loads a table file written by `ingest`.
AiDssModel load_dss_table(const std::filesystem::path& path, double accuracy = 0.70);

}  // namespace confslate::experiment
