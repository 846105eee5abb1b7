#include "confslate/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "confslate/error.hpp"
#include "confslate/metrics.hpp"

namespace confslate::analysis {

namespace fs = std::filesystem;
using fusion::StrategyId;

namespace {

std::string num(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) {
    return "NA";
  }
  return fmt::format("{:.6f}", *v);
}

std::string num(double v) {
  return num(std::optional<double>(v));
}

std::optional<double> se_of(std::span<const double> xs) {
  if (xs.size() < 2) {
    return std::nullopt;
  }
  return metrics::stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

std::optional<double> mean_of(std::span<const double> xs) {
  if (xs.empty()) {
    return std::nullopt;
  }
  return metrics::mean(xs);
}

// Which individual is the higher-performing one in each session.
std::map<std::string, bool> human_is_hp(std::span<const TrialRecord> records) {
  std::map<std::string, std::pair<long long, long long>> correct;  // human, ai
  for (const auto& r : records) {
    auto& c = correct[r.session_id];
    c.first += r.human_initial_correct() ? 1 : 0;
    c.second += r.ai_correct() ? 1 : 0;
  }
  std::map<std::string, bool> out;
  for (const auto& [id, c] : correct) {
    out[id] = c.first >= c.second;
  }
  return out;
}

bool outcome(const TrialRecord& r, StrategyId s, const std::map<std::string, bool>& hp_human) {
  if (s == StrategyId::Hp || s == StrategyId::Lp) {
    const bool human = hp_human.at(r.session_id) == (s == StrategyId::Hp);
    return human ? r.human_initial_correct() : r.ai_correct();
  }
  const auto it = r.results.find(s);
  if (it == r.results.end()) {
    throw Error(ErrorCode::ValidationError,
                fmt::format("record {}#{} lacks a {} outcome", r.session_id, r.trial_index, fusion::to_string(s)));
  }
  return it->second.correct;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  }
  return out;
}

}  // namespace

ChangeStats change_stats(std::span<const TrialRecord> records) {
  ChangeStats s;
  for (const auto& r : records) {
    if (!r.changed) {
      continue;
    }
    ++s.n_changes;
    const bool before = r.human_initial_correct();
    const bool after = r.human_final_correct();
    if (!before && after) {
      ++s.n_positive;
    } else if (before && !after) {
      ++s.n_negative;
    }
  }
  if (s.n_changes > 0) {
    s.positive_pct = 100.0 * static_cast<double>(s.n_positive) / static_cast<double>(s.n_changes);
    s.negative_pct = 100.0 * static_cast<double>(s.n_negative) / static_cast<double>(s.n_changes);
  }
  return s;
}

std::vector<double> strategy_correctness(std::span<const TrialRecord> records, StrategyId strategy,
                                         bool disagreement_only) {
  const auto hp_human = human_is_hp(records);
  std::vector<double> out;
  for (const auto& r : records) {
    if (disagreement_only && !r.disagreement()) {
      continue;
    }
    out.push_back(outcome(r, strategy, hp_human) ? 1.0 : 0.0);
  }
  return out;
}

StrategyOutcome strategy_accuracy(std::span<const TrialRecord> records, StrategyId strategy, bool disagreement_only) {
  const auto c = strategy_correctness(records, strategy, disagreement_only);
  StrategyOutcome o;
  o.strategy = strategy;
  o.n_trials = static_cast<long long>(c.size());
  o.n_correct = static_cast<long long>(std::count(c.begin(), c.end(), 1.0));
  if (o.n_trials > 0) {
    o.accuracy = static_cast<double>(o.n_correct) / static_cast<double>(o.n_trials);
  }
  return o;
}

LevelDistributions confidence_by_level(std::span<const TrialRecord> records, Rater rater) {
  std::map<int, std::array<long long, kLikertBins>> counts;
  for (const auto& r : records) {
    const auto& inf = rater == Rater::HumanInitial ? r.human_initial : r.ai;
    ++counts[r.level.level][inf.confidence.bin()];
  }
  LevelDistributions out;
  for (const auto& [level, c] : counts) {
    double n = 0.0;
    for (auto v : c) n += static_cast<double>(v);
    ConfidenceVector p{};
    for (std::size_t i = 0; i < kLikertBins; ++i) {
      p[i] = static_cast<double>(c[i]) / n;
    }
    out[level] = p;
  }
  return out;
}

std::optional<double> participant_alignment(const LevelDistributions& human, const LevelDistributions& ai) {
  double total = 0.0;
  int n = 0;
  for (const auto& [level, p] : human) {
    const auto it = ai.find(level);
    if (it == ai.end()) {
      continue;
    }
    total += metrics::jsd(p, it->second);
    ++n;
  }
  if (n == 0) {
    return std::nullopt;
  }
  return total / n;
}

std::vector<DatasetRow> human_dataset(std::span<const TrialRecord> records) {
  std::vector<DatasetRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    rows.push_back({r.session_id, {r.level, r.human_initial_correct(), r.human_initial.confidence}});
  }
  return rows;
}

std::vector<StrategyOutcome> virtual_pairing(const AiDssModel& dss, std::span<const DatasetRow> human_dataset,
                                             RandomStream& rng) {
  if (human_dataset.empty()) {
    throw Error(ErrorCode::EmptyDataset, "virtual pairing needs human trials");
  }
  struct Trial {
    std::string participant;
    bool human_correct;
    bool ai_correct;
    bool mcs;
    bool dlc;
    bool dr;
  };
  std::vector<Trial> trials;
  trials.reserve(human_dataset.size());
  for (const auto& row : human_dataset) {
    const RobotId truth = RobotId::A;
    const Inference human{row.datum.correct ? truth : other(truth), row.datum.confidence};
    const Inference ai = ai_infer(dss, truth, row.datum.level, rng);
    const bool mcs = fusion::mcs(human, ai).inference.choice == truth;
    const bool dlc = fusion::dummy_low_confidence(human, ai).inference.choice == truth;
    const bool dr = fusion::dummy_random(human, ai, rng).inference.choice == truth;
    trials.push_back({row.participant_id, row.datum.correct, ai.choice == truth, mcs, dlc, dr});
  }

  std::map<std::string, std::pair<long long, long long>> per_dyad;
  for (const auto& t : trials) {
    auto& c = per_dyad[t.participant];
    c.first += t.human_correct ? 1 : 0;
    c.second += t.ai_correct ? 1 : 0;
  }

  std::array<long long, 5> correct{};
  for (const auto& t : trials) {
    const auto& c = per_dyad[t.participant];
    const bool human_hp = c.first >= c.second;
    correct[0] += t.mcs ? 1 : 0;
    correct[1] += t.dlc ? 1 : 0;
    correct[2] += t.dr ? 1 : 0;
    correct[3] += (human_hp ? t.human_correct : t.ai_correct) ? 1 : 0;
    correct[4] += (human_hp ? t.ai_correct : t.human_correct) ? 1 : 0;
  }
  const std::array<StrategyId, 5> ids{StrategyId::Mcs, StrategyId::Dlc, StrategyId::Dr, StrategyId::Hp,
                                      StrategyId::Lp};
  std::vector<StrategyOutcome> out;
  const auto n = static_cast<long long>(trials.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back({ids[i], n, correct[i], static_cast<double>(correct[i]) / static_cast<double>(n)});
  }
  return out;
}

std::vector<TrialRecord> load_records_dir(const fs::path& records_dir) {
  if (!fs::is_directory(records_dir)) {
    throw Error(ErrorCode::IoError, fmt::format("{} is not a directory", records_dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(records_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialRecord> records;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::string first;
    if (!std::getline(in, first)) {
      continue;
    }
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (first != session::records_csv_header()) {
      continue;
    }
    in.seekg(0);
    try {
      auto part = session::read_records_csv(in);
      records.insert(records.end(), part.begin(), part.end());
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, fmt::format("{}: {}", f.string(), e.what()));
    }
  }
  if (records.empty()) {
    throw Error(ErrorCode::EmptyInput, fmt::format("no trial-record CSVs in {}", records_dir.string()));
  }
  return records;
}

std::vector<fs::path> analyze_records(std::span<const TrialRecord> all_records, const fs::path& out_dir,
                                      const AnalyzeOptions& options) {
  if (all_records.empty()) {
    throw Error(ErrorCode::EmptyInput, "no trial records to analyze");
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  // Exclusions.
  const auto grouped = session::group_by_session(all_records);
  std::vector<session::SessionRecords> sessions;
  {
    const auto path = out_dir / "exclusions.csv";
    auto out = open_out(path);
    out << "session_id,accuracy,max_same_confidence,retained\n";
    for (const auto& s : grouped) {
      const auto v = session::exclusion_verdict(s, options.exclusion_config);
      out << fmt::format("{},{},{},{}\n", s.session_id, num(v.accuracy), v.max_same_confidence, v.retained ? 1 : 0);
      if (v.retained || !options.apply_exclusions) {
        sessions.push_back(s);
      }
    }
    written.push_back(path);
  }
  std::vector<TrialRecord> records;
  for (const auto& s : sessions) {
    records.insert(records.end(), s.trials.begin(), s.trials.end());
  }

  const auto calibration_of = [](const session::SessionRecords& s) { return s.trials.front().dss_calibration; };
  std::set<Calibration> calibrations;
  for (const auto& s : sessions) calibrations.insert(calibration_of(s));

  // Change dynamics, mean over sessions of per-session percentages.
  {
    const auto path = out_dir / "change_dynamics.csv";
    auto out = open_out(path);
    out << "calibration,n_sessions,n_sessions_defined,positive_pct_mean,positive_pct_se,negative_pct_mean,"
           "negative_pct_se,pooled_positive,pooled_negative,pooled_changes,pooled_positive_pct,pooled_negative_pct\n";
    const auto row = [&](std::string_view label, const std::vector<const session::SessionRecords*>& group) {
      std::vector<double> pos;
      std::vector<double> neg;
      std::vector<TrialRecord> pooled;
      for (const auto* s : group) {
        const auto cs = change_stats(s->trials);
        if (cs.positive_pct) {
          pos.push_back(*cs.positive_pct);
          neg.push_back(*cs.negative_pct);
        }
        pooled.insert(pooled.end(), s->trials.begin(), s->trials.end());
      }
      const auto total = change_stats(pooled);
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", label, group.size(), pos.size(), num(mean_of(pos)),
                         num(se_of(pos)), num(mean_of(neg)), num(se_of(neg)), total.n_positive, total.n_negative,
                         total.n_changes, num(total.positive_pct), num(total.negative_pct));
    };
    std::vector<const session::SessionRecords*> everyone;
    for (const auto& s : sessions) everyone.push_back(&s);
    for (auto c : calibrations) {
      std::vector<const session::SessionRecords*> group;
      for (const auto& s : sessions) {
        if (calibration_of(s) == c) group.push_back(&s);
      }
      row(to_string(c), group);
    }
    row("all", everyone);
    written.push_back(path);
  }

  // Alignment vs human-initiative accuracy, one point per session.
  {
    const auto path = out_dir / "alignment_scatter.csv";
    auto out = open_out(path);
    out << "session_id,calibration,mean_jsd,human_initiative_accuracy\n";
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& s : sessions) {
      const auto alignment = participant_alignment(confidence_by_level(s.trials, Rater::HumanInitial),
                                                   confidence_by_level(s.trials, Rater::Ai));
      const auto acc = strategy_accuracy(s.trials, StrategyId::HumanInitiative, false).accuracy;
      out << fmt::format("{},{},{},{}\n", s.session_id, to_string(calibration_of(s)), num(alignment), num(acc));
      if (alignment && acc) {
        xs.push_back(*alignment);
        ys.push_back(*acc);
      }
    }
    written.push_back(path);

    const auto fit_path = out_dir / "alignment_fit.csv";
    auto fit_out = open_out(fit_path);
    fit_out << "n,slope,intercept,r_squared,t_stat,p_value\n";
    try {
      const auto fit = metrics::ols_fit(xs, ys);
      fit_out << fmt::format("{},{},{},{},{},{}\n", fit.n, num(fit.slope), num(fit.intercept), num(fit.r_squared),
                             num(fit.t_stat), num(fit.p_value));
    } catch (const Error&) {
      fit_out << fmt::format("{},NA,NA,NA,NA,NA\n", xs.size());
    }
    written.push_back(fit_path);
  }

  // Strategy accuracy (all trials and disagreement trials).
  {
    const auto path = out_dir / "strategy_accuracy.csv";
    auto out = open_out(path);
    out << "strategy,subset,n_trials,n_correct,accuracy\n";
    for (bool disagreement : {false, true}) {
      const char* subset = disagreement ? "disagreement" : "all";
      for (auto id : options.strategies) {
        const auto o = strategy_accuracy(records, id, disagreement);
        out << fmt::format("{},{},{},{},{}\n", fusion::to_string(id), subset, o.n_trials, o.n_correct, num(o.accuracy));
      }
      long long n = 0;
      long long human = 0;
      long long ai = 0;
      for (const auto& r : records) {
        if (disagreement && !r.disagreement()) continue;
        ++n;
        human += r.human_initial_correct() ? 1 : 0;
        ai += r.ai_correct() ? 1 : 0;
      }
      const auto acc = [&](long long c) {
        return n == 0 ? std::optional<double>{} : std::optional<double>{static_cast<double>(c) / static_cast<double>(n)};
      };
      out << fmt::format("HUMAN_ALONE,{},{},{},{}\n", subset, n, human, num(acc(human)));
      out << fmt::format("AI_ALONE,{},{},{},{}\n", subset, n, ai, num(acc(ai)));
    }
    written.push_back(path);

    const auto tests_path = out_dir / "strategy_tests.csv";
    auto tests = open_out(tests_path);
    tests << "comparison,subset,t,df,p\n";
    const auto mcs = strategy_correctness(records, StrategyId::Mcs, true);
    for (auto other_id : {StrategyId::HumanInitiative, StrategyId::Ts, StrategyId::Dr}) {
      const auto other_c = strategy_correctness(records, other_id, true);
      try {
        const auto t = metrics::t_test(mcs, other_c);
        tests << fmt::format("MCS_vs_{},disagreement,{},{},{}\n", fusion::to_string(other_id), num(t.t), num(t.df),
                             num(t.p));
      } catch (const Error&) {
        tests << fmt::format("MCS_vs_{},disagreement,NA,NA,NA\n", fusion::to_string(other_id));
      }
    }
    written.push_back(tests_path);
  }

  // Calibration split: per-calibration MCS and human-initiative accuracy.
  {
    const auto path = out_dir / "calibration_split.csv";
    auto out = open_out(path);
    out << "calibration,strategy,subset,n_sessions,n_trials,accuracy,session_mean,session_se\n";
    std::map<Calibration, std::vector<double>> mcs_session_acc;
    for (auto c : calibrations) {
      for (auto id : {StrategyId::Mcs, StrategyId::HumanInitiative}) {
        for (bool disagreement : {false, true}) {
          std::vector<TrialRecord> pooled;
          std::vector<double> per_session;
          long long n_sessions = 0;
          for (const auto& s : sessions) {
            if (calibration_of(s) != c) continue;
            ++n_sessions;
            pooled.insert(pooled.end(), s.trials.begin(), s.trials.end());
            if (auto a = strategy_accuracy(s.trials, id, disagreement).accuracy) per_session.push_back(*a);
          }
          const auto o = strategy_accuracy(pooled, id, disagreement);
          out << fmt::format("{},{},{},{},{},{},{},{}\n", to_string(c), fusion::to_string(id),
                             disagreement ? "disagreement" : "all", n_sessions, o.n_trials, num(o.accuracy),
                             num(mean_of(per_session)), num(se_of(per_session)));
          if (id == StrategyId::Mcs && !disagreement) {
            mcs_session_acc[c] = per_session;
          }
        }
      }
    }
    written.push_back(path);

    const auto tests_path = out_dir / "calibration_tests.csv";
    auto tests = open_out(tests_path);
    tests << "comparison,t,df,p\n";
    const auto& well = mcs_session_acc[Calibration::Well];
    const auto& poor = mcs_session_acc[Calibration::Poor];
    try {
      const auto t = metrics::t_test(well, poor);
      tests << fmt::format("MCS_well_vs_poor,{},{},{}\n", num(t.t), num(t.df), num(t.p));
    } catch (const Error&) {
      tests << "MCS_well_vs_poor,NA,NA,NA\n";
    }
    written.push_back(tests_path);
  }

  // Virtual pairing of the poorly calibrated model with every human trial.
  {
    const auto path = out_dir / "virtual_pairing.csv";
    auto out = open_out(path);
    out << "strategy,n_trials,n_correct,accuracy\n";
    auto rng = RandomStream::derive(options.seed, {stream_purpose::virtual_pairing});
    const auto dataset = human_dataset(records);
    if (!dataset.empty()) {
      for (const auto& o : virtual_pairing(options.virtual_dss, dataset, rng)) {
        out << fmt::format("{},{},{},{}\n", fusion::to_string(o.strategy), o.n_trials, o.n_correct, num(o.accuracy));
      }
    }
    written.push_back(path);
  }
  return written;
}

std::vector<fs::path> analyze(const fs::path& records_dir, const fs::path& out_dir, const AnalyzeOptions& options) {
  const auto records = load_records_dir(records_dir);
  return analyze_records(records, out_dir, options);
}

}  // namespace confslate::analysis
