#include "confslate/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "confslate/error.hpp"
#include "confslate/metrics.hpp"

namespace confslate {

namespace {

constexpr ConfidenceVector kUniform{0.25, 0.25, 0.25, 0.25};
constexpr ConfidenceVector kInformativeCorrect{0.1, 0.2, 0.3, 0.4};
constexpr ConfidenceVector kInformativeIncorrect{0.4, 0.3, 0.2, 0.1};

// Cells below this many observations get add-one smoothing.
constexpr long long kSmoothingThreshold = 5;

void check_level(int level) {
  if (level < 1 || level > 5) {
    throw Error(ErrorCode::InvalidDifferential, fmt::format("difficulty level {} not in 1..5", level));
  }
}

ConfidenceVector normalize_counts(const std::array<long long, kLikertBins>& counts) {
  const long long n = std::accumulate(counts.begin(), counts.end(), 0LL);
  ConfidenceVector out{};
  if (n == 0) {
    return kUniform;
  }
  const bool smooth = n < kSmoothingThreshold;
  const double denom = static_cast<double>(smooth ? n + static_cast<long long>(kLikertBins) : n);
  for (std::size_t i = 0; i < kLikertBins; ++i) {
    out[i] = static_cast<double>(counts[i] + (smooth ? 1 : 0)) / denom;
  }
  return out;
}

LikertConfidence sample_confidence(const ConfidenceVector& p, RandomStream& rng) {
  return LikertConfidence(static_cast<int>(rng.categorical(p)) + kLikertMin);
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    fields.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

int parse_int(const std::string& text, std::size_t line, const char* column) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) {
      return v;
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::SchemaError, fmt::format("line {}: {} '{}' is not an integer", line, column, text));
}

}  // namespace

LikertConfidence::LikertConfidence(int value) : value_(value) {
  if (value < kLikertMin || value > kLikertMax) {
    throw Error(ErrorCode::InvalidConfidence, fmt::format("confidence {} not in {}..{}", value, kLikertMin, kLikertMax));
  }
}

std::string_view to_string(Calibration c) noexcept {
  return c == Calibration::Well ? "well" : "poor";
}

Calibration parse_calibration(std::string_view text) {
  if (text == "well") {
    return Calibration::Well;
  }
  if (text == "poor") {
    return Calibration::Poor;
  }
  throw Error(ErrorCode::ValidationError, fmt::format("calibration must be \"well\" or \"poor\", got \"{}\"", text));
}

void validate_distribution(std::span<const double> p, double tolerance) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidDistribution, "distribution has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw Error(ErrorCode::InvalidDistribution, fmt::format("distribution sums to {}", total));
  }
}

ConfidenceTable::ConfidenceTable() {
  for (auto& level : cells_) {
    level = {kUniform, kUniform};
  }
}

void ConfidenceTable::set(int level, bool correct, const ConfidenceVector& probabilities) {
  check_level(level);
  validate_distribution(probabilities);
  cells_[static_cast<std::size_t>(level - 1)][correct ? 1 : 0] = probabilities;
}

const ConfidenceVector& ConfidenceTable::cell(int level, bool correct) const {
  check_level(level);
  return cells_[static_cast<std::size_t>(level - 1)][correct ? 1 : 0];
}

ConfidenceTable ConfidenceTable::uniform_over_levels(const ConfidenceVector& correct,
                                                     const ConfidenceVector& incorrect) {
  ConfidenceTable t;
  for (int level = 1; level <= 5; ++level) {
    t.set(level, true, correct);
    t.set(level, false, incorrect);
  }
  return t;
}

nlohmann::json to_json(const ConfidenceTable& table, Calibration label) {
  nlohmann::json cells = nlohmann::json::array();
  for (int level = 1; level <= 5; ++level) {
    cells.push_back({{"level", level},
                     {"correct", table.cell(level, true)},
                     {"incorrect", table.cell(level, false)}});
  }
  return {{"v", 1}, {"calibration", std::string(to_string(label))}, {"cells", cells}};
}

std::pair<ConfidenceTable, Calibration> table_from_json(const nlohmann::json& j) {
  try {
    if (j.at("v").get<int>() != 1) {
      throw Error(ErrorCode::SchemaError, "unsupported confidence table version");
    }
    const Calibration label = parse_calibration(j.at("calibration").get<std::string>());
    ConfidenceTable table;
    std::array<bool, 5> seen{};
    for (const auto& cell : j.at("cells")) {
      const int level = cell.at("level").get<int>();
      check_level(level);
      table.set(level, true, cell.at("correct").get<ConfidenceVector>());
      table.set(level, false, cell.at("incorrect").get<ConfidenceVector>());
      seen[static_cast<std::size_t>(level - 1)] = true;
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
      throw Error(ErrorCode::SchemaError, "confidence table must list all five levels");
    }
    return {table, label};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, fmt::format("malformed confidence table: {}", e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) {
      throw;
    }
    throw Error(ErrorCode::SchemaError, fmt::format("invalid confidence table: {}", e.what()));
  }
}

void AiDssModel::validate(bool allow_degenerate) const {
  const bool ok = allow_degenerate ? (accuracy >= 0.0 && accuracy <= 1.0) : (accuracy > 0.0 && accuracy < 1.0);
  if (!ok) {
    throw Error(ErrorCode::ValidationError, fmt::format("decision-support accuracy {} out of range", accuracy));
  }
}

void SyntheticOperator::validate() const {
  if (!(slope_ms > 0.0) || !std::isfinite(midpoint_ms)) {
    throw Error(ErrorCode::ValidationError, "operator slope must be positive and midpoint finite");
  }
  if (!(informativeness >= 0.0 && informativeness <= 1.0)) {
    throw Error(ErrorCode::ValidationError, "operator informativeness must be in [0, 1]");
  }
  if (!(deference >= 0.0 && deference <= 1.0)) {
    throw Error(ErrorCode::ValidationError, "operator deference must be in [0, 1]");
  }
}

ConfidenceVector informative_confidence(bool correct) noexcept {
  return correct ? kInformativeCorrect : kInformativeIncorrect;
}

ConfidenceVector mixture_confidence(double informativeness, bool correct) noexcept {
  const auto& informative = correct ? kInformativeCorrect : kInformativeIncorrect;
  ConfidenceVector out{};
  for (std::size_t i = 0; i < kLikertBins; ++i) {
    out[i] = informativeness * informative[i] + (1.0 - informativeness) * kUniform[i];
  }
  return out;
}

ConfidenceTable synthetic_table(double informativeness) {
  return ConfidenceTable::uniform_over_levels(mixture_confidence(informativeness, true),
                                              mixture_confidence(informativeness, false));
}

AiDssModel builtin_dss(Calibration calibration, double accuracy) {
  AiDssModel model;
  model.accuracy = accuracy;
  model.calibration = calibration;
  model.tables = synthetic_table(calibration == Calibration::Well ? 1.0 : 0.0);
  return model;
}

ConfidenceTable build_tables(std::span<const TrialDatum> data) {
  if (data.empty()) {
    throw Error(ErrorCode::EmptyDataset, "cannot build confidence tables from an empty dataset");
  }
  using Counts = std::array<long long, kLikertBins>;
  std::array<std::array<Counts, 2>, 5> cells{};
  std::array<Counts, 2> pooled{};
  for (const auto& d : data) {
    check_level(d.level.level);
    const std::size_t c = d.correct ? 1 : 0;
    ++cells[static_cast<std::size_t>(d.level.level - 1)][c][d.confidence.bin()];
    ++pooled[c][d.confidence.bin()];
  }
  ConfidenceTable table;
  for (int level = 1; level <= 5; ++level) {
    for (bool correct : {false, true}) {
      const auto& counts = cells[static_cast<std::size_t>(level - 1)][correct ? 1 : 0];
      const bool empty = std::all_of(counts.begin(), counts.end(), [](long long n) { return n == 0; });
      table.set(level, correct, normalize_counts(empty ? pooled[correct ? 1 : 0] : counts));
    }
  }
  return table;
}

CalibrationPartition partition_by_calibration(const std::map<std::string, ParticipantData>& participants) {
  CalibrationPartition out;
  for (const auto& [id, p] : participants) {
    if (!p.auroc2) {
      continue;
    }
    if (!std::isfinite(*p.auroc2)) {
      throw Error(ErrorCode::ValidationError, fmt::format("participant {} has a non-finite AUROC2", id));
    }
    if (*p.auroc2 >= kWellCalibratedMin) {
      out.well_ids.push_back(id);
      out.well.insert(out.well.end(), p.data.begin(), p.data.end());
    } else if (*p.auroc2 <= kPoorlyCalibratedMax) {
      out.poor_ids.push_back(id);
      out.poor.insert(out.poor.end(), p.data.begin(), p.data.end());
    }
  }
  return out;
}

Inference ai_infer(const AiDssModel& model, RobotId truth, const staircase::DifficultyLevel& level,
                   RandomStream& rng) {
  const bool correct = rng.bernoulli(model.accuracy);
  const RobotId choice = correct ? truth : other(truth);
  return {choice, sample_confidence(model.tables.cell(level.level, correct), rng)};
}

double psychometric(const SyntheticOperator& op, double differential_ms) noexcept {
  return 0.5 + 0.5 / (1.0 + std::exp(-(differential_ms - op.midpoint_ms) / op.slope_ms));
}

Inference synthetic_infer(const SyntheticOperator& op, double differential_ms, RobotId truth, RandomStream& rng) {
  const bool correct = rng.bernoulli(psychometric(op, differential_ms));
  const RobotId choice = correct ? truth : other(truth);
  return {choice, sample_confidence(mixture_confidence(op.informativeness, correct), rng)};
}

Inference synthetic_revise(const SyntheticOperator& op, const Inference& initial, const Inference& ai, RobotId truth,
                           RandomStream& rng) {
  if (ai.choice == initial.choice) {
    return initial;
  }
  const double c_ai = ai.confidence.value();
  const double c_h = initial.confidence.value();
  if (!rng.bernoulli(op.deference * c_ai / (c_ai + c_h))) {
    return initial;
  }
  const bool correct = ai.choice == truth;
  return {ai.choice, sample_confidence(mixture_confidence(op.informativeness, correct), rng)};
}

double simulate_operator_auroc2(double informativeness, std::uint64_t seed, int trials) {
  SyntheticOperator op;
  op.informativeness = informativeness;
  RandomStream rng(seed);
  metrics::RatingCounts counts;
  for (int i = 0; i < trials; ++i) {
    const Inference inf = synthetic_infer(op, op.midpoint_ms, RobotId::A, rng);
    counts.add(inf.confidence.value(), inf.choice == RobotId::A);
  }
  return metrics::auroc2(counts).value_or(0.5);
}

double fit_operator_informativeness(double target_auroc2, std::uint64_t seed, int trials) {
  constexpr double kTolerance = 0.01;
  constexpr double kFamilyMin = 0.5;
  constexpr double kFamilyMax = 0.75;
  if (!(target_auroc2 >= kFamilyMin && target_auroc2 <= kFamilyMax)) {
    throw Error(ErrorCode::Unachievable,
                fmt::format("AUROC2 {} outside the synthetic family's range [{}, {}]", target_auroc2, kFamilyMin,
                            kFamilyMax));
  }
  trials = std::max(trials, 50000);
  if (std::abs(simulate_operator_auroc2(0.0, seed, trials) - target_auroc2) <= kTolerance) {
    return 0.0;
  }
  if (std::abs(simulate_operator_auroc2(1.0, seed, trials) - target_auroc2) <= kTolerance) {
    return 1.0;
  }
  double lo = 0.0;
  double hi = 1.0;
  double mid = 0.5;
  for (int iter = 0; iter < 40; ++iter) {
    mid = 0.5 * (lo + hi);
    const double estimate = simulate_operator_auroc2(mid, seed, trials);
    if (std::abs(estimate - target_auroc2) <= kTolerance) {
      return mid;
    }
    (estimate < target_auroc2 ? lo : hi) = mid;
  }
  return mid;
}

std::vector<DatasetRow> read_dataset_csv(std::istream& in) {
  std::vector<DatasetRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (!header_seen) {
      const std::vector<std::string> expected{"participant_id", "level", "correct", "confidence"};
      if (fields != expected) {
        throw Error(ErrorCode::SchemaError,
                    fmt::format("line {}: expected header participant_id,level,correct,confidence", line_no));
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: expected 4 fields, got {}", line_no, fields.size()));
    }
    if (fields[0].empty()) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: empty participant_id", line_no));
    }
    const int level = parse_int(fields[1], line_no, "level");
    const int correct = parse_int(fields[2], line_no, "correct");
    const int confidence = parse_int(fields[3], line_no, "confidence");
    if (level < 1 || level > 5) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: level {} not in 1..5", line_no, level));
    }
    if (correct != 0 && correct != 1) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: correct {} not 0 or 1", line_no, correct));
    }
    if (confidence < kLikertMin || confidence > kLikertMax) {
      throw Error(ErrorCode::SchemaError, fmt::format("line {}: confidence {} not in 1..4", line_no, confidence));
    }
    rows.push_back({fields[0],
                    {staircase::level_from_index(level), correct == 1, LikertConfidence(confidence)}});
  }
  if (!header_seen) {
    throw Error(ErrorCode::SchemaError, "dataset is missing its header row");
  }
  return rows;
}

}  // namespace confslate
