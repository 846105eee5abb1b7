// Headless acceptance gate: one PASS/FAIL line per criterion, exit status is
// the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "confslate/agents.hpp"
#include "confslate/analysis.hpp"
#include "confslate/experiment.hpp"
#include "confslate/fusion.hpp"
#include "confslate/metrics.hpp"
#include "confslate/pilot.hpp"
#include "confslate/random.hpp"
#include "confslate/session.hpp"
#include "confslate/sim.hpp"
#include "confslate/staircase.hpp"

using namespace confslate;
using fusion::StrategyId;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// P(c+ > c-) + 1/2 P(c+ = c-) by enumerating every pair.
double brute_pairwise(const std::vector<metrics::Rating>& sample) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : sample) {
    if (!p.correct) continue;
    for (const auto& q : sample) {
      if (q.correct) continue;
      wins += p.confidence > q.confidence ? 1.0 : p.confidence == q.confidence ? 0.5 : 0.0;
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

double pairwise_from_vectors(const ConfidenceVector& pos, const ConfidenceVector& neg) {
  double v = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < neg.size(); ++j) {
      v += pos[i] * neg[j] * (i > j ? 1.0 : i == j ? 0.5 : 0.0);
    }
  }
  return v;
}

Outcome c1_auroc2_oracle() {
  const auto t0 = Clock::now();
  RandomStream rng(101);
  double worst = 0.0;
  int checked = 0;
  while (checked < 1000) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 199);
    std::vector<metrics::Rating> sample;
    for (int i = 0; i < n; ++i) {
      sample.push_back({1 + static_cast<int>(rng.next_u64() % 4), rng.bernoulli(0.6)});
    }
    const auto a = metrics::auroc2(sample);
    const bool both = std::any_of(sample.begin(), sample.end(), [](auto r) { return r.correct; }) &&
                      std::any_of(sample.begin(), sample.end(), [](auto r) { return !r.correct; });
    if (!both) {
      if (a.has_value()) return {false, "defined on a one-class sample"};
      continue;
    }
    worst = std::max(worst, std::abs(*a - brute_pairwise(sample)));
    ++checked;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, fmt::format("max |diff| {:.2e} over 1000 samples, {:.2f} s", worst, secs)};
}

Outcome c2_operator_endpoints() {
  const double hi = simulate_operator_auroc2(1.0, 202, 100000);
  const double lo = simulate_operator_auroc2(0.0, 202, 100000);
  const double hi_oracle = pairwise_from_vectors(mixture_confidence(1.0, true), mixture_confidence(1.0, false));
  const double lo_oracle = pairwise_from_vectors(mixture_confidence(0.0, true), mixture_confidence(0.0, false));
  const bool ok = std::abs(hi - 0.75) <= 0.01 && std::abs(lo - 0.50) <= 0.01 && std::abs(hi_oracle - 0.75) < 1e-12 &&
                  std::abs(lo_oracle - 0.5) < 1e-12;
  return {ok, fmt::format("lambda=1 {:.4f} (oracle {:.4f}), lambda=0 {:.4f} (oracle {:.4f})", hi, hi_oracle, lo,
                          lo_oracle)};
}

Outcome c3_staircase() {
  const auto t0 = Clock::now();
  SyntheticOperator op;
  op.midpoint_ms = 40.0;
  op.slope_ms = 15.0;
  RandomStream rng(303);
  staircase::StaircaseState s;
  const std::set<int> grid(staircase::kReachable.begin(), staircase::kReachable.end());
  int correct = 0;
  bool on_grid = true;
  for (int i = 0; i < 1000; ++i) {
    on_grid = on_grid && grid.contains(s.differential_ms);
    const bool ok = rng.bernoulli(psychometric(op, s.differential_ms));
    if (i >= 500) correct += ok ? 1 : 0;
    s = staircase::update(s, ok);
  }
  const double acc = correct / 500.0;
  const double secs = seconds_since(t0);
  return {acc >= 0.65 && acc <= 0.76 && on_grid && secs < 10.0,
          fmt::format("last-500 accuracy {:.4f}, grid {}, {:.2f} s", acc, on_grid ? "ok" : "left", secs)};
}

Inference draw_agent(double accuracy, double lambda, RobotId truth, RandomStream& rng) {
  const bool correct = rng.bernoulli(accuracy);
  const auto conf = mixture_confidence(lambda, correct);
  return {correct ? truth : other(truth), LikertConfidence(1 + static_cast<int>(rng.categorical(conf)))};
}

Outcome c4_complementarity() {
  RandomStream rng(404);
  RandomStream coin(405);
  long long n = 10000;
  long long h = 0, a = 0, m = 0, dis = 0, m_dis = 0, dr_dis = 0;
  for (long long i = 0; i < n; ++i) {
    const RobotId truth = rng.bernoulli(0.5) ? RobotId::A : RobotId::B;
    const auto hi = draw_agent(0.7, 1.0, truth, rng);
    const auto ai = draw_agent(0.7, 1.0, truth, rng);
    h += hi.choice == truth;
    a += ai.choice == truth;
    const bool mcs = fusion::mcs(hi, ai).inference.choice == truth;
    m += mcs;
    if (hi.choice != ai.choice) {
      ++dis;
      m_dis += mcs;
      dr_dis += fusion::dummy_random(hi, ai, coin).inference.choice == truth;
    }
  }
  const double best = std::max(h, a) / static_cast<double>(n);
  const double mcs = m / static_cast<double>(n);
  const double mcs_d = m_dis / static_cast<double>(dis);
  const double dr_d = dr_dis / static_cast<double>(dis);
  return {mcs - best >= 0.02 && mcs_d - dr_d >= 0.10,
          fmt::format("MCS {:.4f} vs best {:.4f}; disagreement MCS {:.4f} vs DR {:.4f} (n={})", mcs, best, mcs_d, dr_d,
                      dis)};
}

std::vector<double> per_session_mcs(Calibration cal, int sessions, std::uint64_t seed) {
  std::vector<double> out;
  for (int i = 0; i < sessions; ++i) {
    session::SessionConfig c;
    c.seed = RandomStream::derive(seed, {stream_purpose::assignment, static_cast<std::uint64_t>(i)}).next_u64();
    c.n_practice = 0;
    const auto run = experiment::run_synthetic_session(fmt::format("s{:03}", i), c, builtin_dss(cal),
                                                       SyntheticOperator{}, seed * 1000 + i);
    out.push_back(*analysis::strategy_accuracy(run.records, StrategyId::Mcs, false).accuracy);
  }
  return out;
}

Outcome c5_calibration_sensitivity() {
  const auto well = per_session_mcs(Calibration::Well, 50, 505);
  const auto poor = per_session_mcs(Calibration::Poor, 50, 506);
  const auto t = metrics::t_test(well, poor, metrics::TTestMode::Pooled);
  const double mw = metrics::mean(well);
  const double mp = metrics::mean(poor);
  return {mw > mp && t.p < 0.05, fmt::format("MCS well {:.4f} vs poor {:.4f}, t={:.3f}, p={:.2e}", mw, mp, t.t, t.p)};
}

Outcome c6_poor_calibration() {
  SyntheticOperator op;
  op.informativeness = 1.0;
  RandomStream rng(606);
  std::vector<DatasetRow> rows;
  // 100 participants x 100 trials, each driven by its own staircase.
  for (int p = 0; p < 100; ++p) {
    staircase::StaircaseState st;
    for (int i = 0; i < 100; ++i) {
      const auto inf = synthetic_infer(op, st.differential_ms, RobotId::A, rng);
      const bool ok = inf.choice == RobotId::A;
      rows.push_back({fmt::format("p{:03}", p), {staircase::difficulty_bin(st.differential_ms), ok, inf.confidence}});
      st = staircase::update(st, ok);
    }
  }
  RandomStream pair_rng = RandomStream::derive(606, {stream_purpose::virtual_pairing});
  const auto out = analysis::virtual_pairing(builtin_dss(Calibration::Poor), rows, pair_rng);
  double hp = 0.0, mcs = 0.0;
  for (const auto& o : out) {
    if (o.strategy == StrategyId::Hp) hp = *o.accuracy;
    if (o.strategy == StrategyId::Mcs) mcs = *o.accuracy;
  }
  return {hp >= mcs, fmt::format("HP {:.4f} vs MCS {:.4f} over {} paired trials", hp, mcs, rows.size())};
}

Outcome c7_delay_semantics() {
  const sim::Arena arena = sim::make_environment(1, 2);
  for (int delay : {0, 20, 35, 40, 60, 100, 135}) {
    const std::int64_t t0 = 23;
    const std::vector<sim::VelocityCommand> cmds{{0.5, 0.0, t0}};
    const auto t = sim::run_trial_segment(arena, delay, cmds, 1000);
    const auto horizon = t0 + (delay + 4) / 5;
    if (t.samples[horizon - 1].linear != 0.0 || t.samples[horizon].linear != 0.5) {
      return {false, fmt::format("delay {} ms: first effect not at tick {}", delay, horizon)};
    }
  }
  const sim::Arena open = sim::make_environment(0, 3);
  const auto stream = pilot_commands(open, 20);
  const auto fast = sim::run_trial_segment(open, 20, stream);
  const auto slow = sim::run_trial_segment(open, 100, stream);
  const std::int64_t shift = 16;
  if (slow.samples.size() < fast.samples.size() + shift) return {false, "shifted run too short"};
  for (std::size_t k = 0; k < fast.samples.size(); ++k) {
    if (!(slow.samples[k + shift].pose == fast.samples[k].pose)) {
      return {false, fmt::format("shift breaks at sample {}", k)};
    }
  }
  return {true, fmt::format("first effect at t+ceil(d/5) for 7 delays; 20->100 ms shift exact over {} samples",
                            fast.samples.size())};
}

Outcome c8_replay() {
  constexpr const char* kGolden = "c69ac2ab77b02e79";
  session::SessionConfig c;
  c.seed = 7;
  c.n_practice = 2;
  c.n_trials = 20;
  const auto run = [&] {
    return experiment::run_synthetic_session("t1", c, builtin_dss(Calibration::Well), SyntheticOperator{}, 8);
  };
  const auto a = run();
  const auto b = run();
  std::ostringstream ca, cb, log;
  session::write_records_csv(ca, a.records);
  session::write_records_csv(cb, b.records);
  a.log.write_jsonl(log);
  std::istringstream in(log.str());
  const auto replayed = session::replay(session::EventLog::read_jsonl(in));
  std::ostringstream cr;
  session::write_records_csv(cr, replayed);
  const auto hash = session::hex64(session::records_hash(a.records));
  const bool ok = ca.str() == cb.str() && cr.str() == ca.str() && replayed == a.records && hash == kGolden;
  return {ok, fmt::format("hash {} (golden {}), replay {}", hash, kGolden, replayed == a.records ? "equal" : "differs")};
}

Outcome c9_jsd() {
  RandomStream rng(909);
  double worst_sym = 0.0, worst_self = 0.0;
  bool bounded = true;
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 4> p{}, q{};
    double sp = 0.0, sq = 0.0;
    for (int k = 0; k < 4; ++k) {
      p[k] = rng.uniform() * (rng.bernoulli(0.2) ? 0.0 : 1.0);
      q[k] = rng.uniform() * (rng.bernoulli(0.2) ? 0.0 : 1.0);
      sp += p[k];
      sq += q[k];
    }
    if (sp == 0.0 || sq == 0.0) continue;
    for (int k = 0; k < 4; ++k) p[k] /= sp, q[k] /= sq;
    const double pq = metrics::jsd(p, q);
    worst_sym = std::max(worst_sym, std::abs(pq - metrics::jsd(q, p)));
    worst_self = std::max(worst_self, std::abs(metrics::jsd(p, p)));
    bounded = bounded && pq >= -1e-12 && pq <= 1.0 + 1e-12;
  }
  const std::array<double, 4> a{0.5, 0.5, 0.0, 0.0};
  const std::array<double, 4> b{0.25, 0.25, 0.25, 0.25};
  const double worked = metrics::jsd(a, b);
  return {worst_sym <= 1e-12 && worst_self <= 1e-12 && bounded && std::abs(worked - 0.311278) <= 1e-6,
          fmt::format("symmetry {:.1e}, self {:.1e}, worked value {:.6f}", worst_sym, worst_self, worked)};
}

Outcome c10_statistics() {
  std::vector<double> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(i * 0.5);
    ys.push_back(3.0 - 2.0 * i * 0.5);
  }
  const auto fit = metrics::ols_fit(xs, ys);
  const std::vector<double> s{1.0, 2.0, 4.0, 7.0, 11.0};
  const auto same = metrics::t_test(s, s);
  const double p = metrics::student_t_two_sided_p(2.0, 10.0);
  return {fit.r_squared == 1.0 && same.t == 0.0 && same.p == 1.0 && std::abs(p - 0.0734) <= 5e-4,
          fmt::format("line r2={}, identical t={} p={}, t(2,10) p={:.4f}", fit.r_squared, same.t, same.p, p)};
}

Outcome c11_bandit() {
  long long human = 0;
  long long total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomStream outcomes = RandomStream::derive(1100 + seed, {1});
    RandomStream draws = RandomStream::derive(1100 + seed, {stream_purpose::bandit});
    fusion::BanditState st;
    for (int i = 0; i < 1000; ++i) {
      const auto pick = fusion::ts_select(st, draws);
      if (i >= 800) {
        human += pick == fusion::Source::Human;
        ++total;
      }
      st = fusion::ts_update(st, outcomes.bernoulli(0.8), outcomes.bernoulli(0.6));
    }
  }
  const double share = human / static_cast<double>(total);
  return {share > 0.85, fmt::format("human arm share {:.4f} in last 200 of 1000, 100 seeds", share)};
}

session::SessionRecords fixture(const std::string& id, int n_correct, int identical) {
  session::SessionRecords s{id, {}};
  for (int i = 0; i < 100; ++i) {
    session::TrialRecord r;
    r.session_id = id;
    r.trial_index = i;
    r.truth = RobotId::A;
    const int conf = i < identical ? 2 : (i % 2 == 0 ? 1 : 4);
    r.human_initial = {i < n_correct ? RobotId::A : RobotId::B, LikertConfidence(conf)};
    r.human_final = r.human_initial;
    r.ai = {RobotId::A, LikertConfidence(3)};
    s.trials.push_back(r);
  }
  return s;
}

Outcome c12_exclusions() {
  const bool low = !session::exclusion_verdict(fixture("a", 60, 0)).retained;
  const bool edge = session::exclusion_verdict(fixture("b", 65, 0)).retained;
  const bool flat = !session::exclusion_verdict(fixture("c", 90, 96)).retained;
  return {low && edge && flat, fmt::format("0.60 excluded={}, 0.65 retained={}, 96 identical excluded={}", low, edge,
                                           flat)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AUROC2 matches pairwise oracle", c1_auroc2_oracle},
      {"synthetic operator AUROC2 endpoints", c2_operator_endpoints},
      {"staircase converges near 70%", c3_staircase},
      {"MCS complementarity", c4_complementarity},
      {"MCS sensitive to DSS calibration", c5_calibration_sensitivity},
      {"HP >= MCS with poorly calibrated DSS", c6_poor_calibration},
      {"delay semantics", c7_delay_semantics},
      {"determinism and replay", c8_replay},
      {"JSD properties", c9_jsd},
      {"regression and t statistics", c10_statistics},
      {"bandit converges to better arm", c11_bandit},
      {"exclusion rules", c12_exclusions},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("[{}] {:2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
