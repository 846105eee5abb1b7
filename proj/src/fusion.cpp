#include "confslate/fusion.hpp"

#include <cmath>

#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::fusion {

namespace {

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::InvalidProbability, fmt::format("probability {} outside [0, 1]", p));
  }
}

Selection pick(const Inference& human, const Inference& ai, Source source) {
  return {source == Source::Human ? human : ai, source};
}

}  // namespace

std::string_view to_string(StrategyId id) noexcept {
  switch (id) {
    case StrategyId::Mcs: return "MCS";
    case StrategyId::HumanInitiative: return "HUMAN_INITIATIVE";
    case StrategyId::Dlc: return "DLC";
    case StrategyId::Dr: return "DR";
    case StrategyId::Ts: return "TS";
    case StrategyId::Hp: return "HP";
    case StrategyId::Lp: return "LP";
  }
  return "?";
}

std::optional<StrategyId> parse_strategy(std::string_view text) noexcept {
  for (auto id : kAllStrategies) {
    if (to_string(id) == text) {
      return id;
    }
  }
  return std::nullopt;
}

std::string_view to_string(Source s) noexcept {
  return s == Source::Human ? "human" : "ai";
}

int threshold_decision(double p) {
  check_probability(p);
  return p < 0.5 ? 0 : 1;
}

Selection mcs(const Inference& human, const Inference& ai, TiePolicy policy) {
  if (policy == TiePolicy::Random) {
    throw Error(ErrorCode::ValidationError, "random MCS tie policy needs a random stream");
  }
  if (human.confidence != ai.confidence) {
    return pick(human, ai, human.confidence > ai.confidence ? Source::Human : Source::Ai);
  }
  return pick(human, ai, policy == TiePolicy::PreferAi ? Source::Ai : Source::Human);
}

Selection mcs(const Inference& human, const Inference& ai, TiePolicy policy, RandomStream& rng) {
  if (policy != TiePolicy::Random) {
    return mcs(human, ai, policy);
  }
  if (human.confidence != ai.confidence) {
    return pick(human, ai, human.confidence > ai.confidence ? Source::Human : Source::Ai);
  }
  return pick(human, ai, rng.bernoulli(0.5) ? Source::Human : Source::Ai);
}

int mcs_probabilistic(double p_human, double p_ai) {
  check_probability(p_human);
  check_probability(p_ai);
  const double dh = std::abs(p_human - 0.5);
  const double da = std::abs(p_ai - 0.5);
  return threshold_decision(da > dh ? p_ai : p_human);
}

Selection dummy_low_confidence(const Inference& human, const Inference& ai) {
  if (human.confidence == ai.confidence) {
    return pick(human, ai, Source::Human);
  }
  return pick(human, ai, human.confidence < ai.confidence ? Source::Human : Source::Ai);
}

Selection dummy_random(const Inference& human, const Inference& ai, RandomStream& rng) {
  return pick(human, ai, rng.bernoulli(0.5) ? Source::Human : Source::Ai);
}

Source ts_select(const BanditState& state, RandomStream& rng) {
  const double theta_h = rng.beta(state.alpha_h, state.beta_h);
  const double theta_a = rng.beta(state.alpha_a, state.beta_a);
  return theta_a > theta_h ? Source::Ai : Source::Human;
}

BanditState ts_update(BanditState state, bool human_correct, bool ai_correct) noexcept {
  (human_correct ? state.alpha_h : state.beta_h) += 1.0;
  (ai_correct ? state.alpha_a : state.beta_a) += 1.0;
  return state;
}

}  // namespace confslate::fusion
