#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "confslate/random.hpp"
#include "confslate/staircase.hpp"

namespace confslate {

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 4;
inline constexpr std::size_t kLikertBins = 4;

/// Four-point confidence rating; 1 is lowest.
class LikertConfidence {
 public:
  constexpr LikertConfidence() = default;
  /// Throws InvalidConfidence outside 1..4.
  explicit LikertConfidence(int value);

  [[nodiscard]] constexpr int value() const noexcept { return value_; }
  [[nodiscard]] constexpr std::size_t bin() const noexcept { return static_cast<std::size_t>(value_ - 1); }

  friend constexpr auto operator<=>(const LikertConfidence&, const LikertConfidence&) = default;

 private:
  int value_ = kLikertMin;
};

struct Inference {
  RobotId choice = RobotId::A;
  LikertConfidence confidence{};

  friend bool operator==(const Inference&, const Inference&) = default;
};

struct TrialDatum {
  staircase::DifficultyLevel level{};
  bool correct = false;
  LikertConfidence confidence{};
};

using ConfidenceVector = std::array<double, kLikertBins>;

enum class Calibration { Well, Poor };

std::string_view to_string(Calibration c) noexcept;
/// Throws ValidationError for anything but "well" / "poor".
Calibration parse_calibration(std::string_view text);

/// Discrete confidence distributions per (difficulty level, correctness).
class ConfidenceTable {
 public:
  ConfidenceTable();

  /// Sets one cell; throws InvalidDistribution unless non-negative and summing to 1.
  void set(int level, bool correct, const ConfidenceVector& probabilities);
  [[nodiscard]] const ConfidenceVector& cell(int level, bool correct) const;

  /// Same vectors in every level.
  static ConfidenceTable uniform_over_levels(const ConfidenceVector& correct, const ConfidenceVector& incorrect);

  friend bool operator==(const ConfidenceTable&, const ConfidenceTable&) = default;

 private:
  std::array<std::array<ConfidenceVector, 2>, 5> cells_{};
};

void validate_distribution(std::span<const double> p, double tolerance = 1e-9);

nlohmann::json to_json(const ConfidenceTable& table, Calibration label);
/// Throws SchemaError on malformed input.
std::pair<ConfidenceTable, Calibration> table_from_json(const nlohmann::json& j);

struct AiDssModel {
  double accuracy = 0.70;
  ConfidenceTable tables;
  Calibration calibration = Calibration::Well;

  /// Throws ValidationError unless 0 < accuracy < 1 (1.0 allowed for tests of
  /// the degenerate case via `allow_degenerate`).
  void validate(bool allow_degenerate = false) const;
};

/// Psychometric stand-in for a participant.
struct SyntheticOperator {
  double midpoint_ms = 35.0;
  double slope_ms = 15.0;
  double informativeness = 1.0;  // lambda in [0, 1]
  // Probability scale for switching to the AI's choice on disagreement.
  double deference = 0.5;

  void validate() const;
};

/// The informative confidence shape of the synthetic family.
ConfidenceVector informative_confidence(bool correct) noexcept;
/// lambda * informative + (1 - lambda) * uniform.
ConfidenceVector mixture_confidence(double informativeness, bool correct) noexcept;
/// Level-independent table drawn from the mixture family.
ConfidenceTable synthetic_table(double informativeness);

/// Built-in decision-support models: well = lambda 1, poor = lambda 0.
AiDssModel builtin_dss(Calibration calibration, double accuracy = 0.70);

/// Per-cell normalized histograms with add-one smoothing below 5 observations
/// and pooled fallback for empty cells. Throws EmptyDataset.
ConfidenceTable build_tables(std::span<const TrialDatum> data);

struct ParticipantData {
  std::optional<double> auroc2;
  std::vector<TrialDatum> data;
};

inline constexpr double kWellCalibratedMin = 0.65;
inline constexpr double kPoorlyCalibratedMax = 0.55;

struct CalibrationPartition {
  std::vector<std::string> well_ids;
  std::vector<std::string> poor_ids;
  std::vector<TrialDatum> well;
  std::vector<TrialDatum> poor;
};

/// AUROC2 >= 0.65 -> well, <= 0.55 -> poor, otherwise neither. Participants
/// without a defined AUROC2 are also left out.
CalibrationPartition partition_by_calibration(const std::map<std::string, ParticipantData>& participants);

Inference ai_infer(const AiDssModel& model, RobotId truth, const staircase::DifficultyLevel& level,
                   RandomStream& rng);

/// P(correct) of the logistic observer at a differential.
double psychometric(const SyntheticOperator& op, double differential_ms) noexcept;

Inference synthetic_infer(const SyntheticOperator& op, double differential_ms, RobotId truth, RandomStream& rng);

/// Final inference after seeing the AI. On disagreement the operator switches
/// with probability deference * c_ai / (c_ai + c_human) and re-rates; otherwise
/// keeps the initial inference.
Inference synthetic_revise(const SyntheticOperator& op, const Inference& initial, const Inference& ai, RobotId truth,
                           RandomStream& rng);

/// Bisection on lambda against Monte-Carlo AUROC2 (`trials` per evaluation)
/// until within 0.01 of the target. Throws Unachievable outside [0.5, 0.75].
double fit_operator_informativeness(double target_auroc2, std::uint64_t seed = 0x5eed, int trials = 50000);

/// Monte-Carlo AUROC2 of the synthetic family at one lambda.
double simulate_operator_auroc2(double informativeness, std::uint64_t seed, int trials);

struct DatasetRow {
  std::string participant_id;
  TrialDatum datum;
};

/// `participant_id,level,correct,confidence` with a header row. Throws
/// SchemaError naming the 1-based line.
std::vector<DatasetRow> read_dataset_csv(std::istream& in);

}  // namespace confslate
