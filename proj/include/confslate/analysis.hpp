#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "confslate/agents.hpp"
#include "confslate/fusion.hpp"
#include "confslate/session.hpp"

namespace confslate::analysis {

using session::TrialRecord;

struct ChangeStats {
  long long n_positive = 0;
  long long n_negative = 0;
  long long n_changes = 0;
  // Undefined (nullopt) when nothing changed.
  std::optional<double> positive_pct;
  std::optional<double> negative_pct;
};

/// Positive: initial incorrect -> final correct; negative: the reverse. A
/// change of confidence alone counts toward n_changes only.
ChangeStats change_stats(std::span<const TrialRecord> records);

struct StrategyOutcome {
  fusion::StrategyId strategy = fusion::StrategyId::Mcs;
  long long n_trials = 0;
  long long n_correct = 0;
  std::optional<double> accuracy;  // undefined on an empty subset
};

/// Accuracy of one strategy over all records or the disagreement subset. HP
/// and LP resolve per session: the individual (human initial vs AI) with the
/// higher accuracy over that session's records.
StrategyOutcome strategy_accuracy(std::span<const TrialRecord> records, fusion::StrategyId strategy,
                                  bool disagreement_only);

/// Per-trial correctness of a strategy, in record order (HP/LP as above).
std::vector<double> strategy_correctness(std::span<const TrialRecord> records, fusion::StrategyId strategy,
                                         bool disagreement_only);

/// Confidence distribution per difficulty level (1..5); levels without trials
/// are absent.
using LevelDistributions = std::map<int, ConfidenceVector>;

enum class Rater { HumanInitial, Ai };
LevelDistributions confidence_by_level(std::span<const TrialRecord> records, Rater rater);

/// Mean JSD over levels present on both sides; nullopt without overlap.
std::optional<double> participant_alignment(const LevelDistributions& human, const LevelDistributions& ai);

/// Pairs `dss` with every human trial (at that trial's level) and scores
/// MCS, DLC, DR, HP and LP. Dyads are per participant. Throws EmptyDataset.
std::vector<StrategyOutcome> virtual_pairing(const AiDssModel& dss, std::span<const DatasetRow> human_dataset,
                                             RandomStream& rng);

/// Human-side dataset rows (session as participant, initial inference).
std::vector<DatasetRow> human_dataset(std::span<const TrialRecord> records);

struct AnalyzeOptions {
  AiDssModel virtual_dss = builtin_dss(Calibration::Poor);
  std::uint64_t seed = 7;
  bool apply_exclusions = true;
  std::vector<fusion::StrategyId> strategies{fusion::kAllStrategies.begin(), fusion::kAllStrategies.end()};
  session::SessionConfig exclusion_config{};
};

/// Loads every trial-record CSV in `records_dir` (files with the record
/// header, by name order). Throws EmptyInput when there are none.
std::vector<TrialRecord> load_records_dir(const std::filesystem::path& records_dir);

/// Writes the figure-analogue tables into `out_dir` and returns their paths.
std::vector<std::filesystem::path> analyze_records(std::span<const TrialRecord> records,
                                                   const std::filesystem::path& out_dir,
                                                   const AnalyzeOptions& options = {});

std::vector<std::filesystem::path> analyze(const std::filesystem::path& records_dir,
                                           const std::filesystem::path& out_dir, const AnalyzeOptions& options = {});

}  // namespace confslate::analysis
