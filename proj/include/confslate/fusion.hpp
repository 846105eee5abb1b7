#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "confslate/agents.hpp"
#include "confslate/random.hpp"

namespace confslate::fusion {

enum class StrategyId { Mcs, HumanInitiative, Dlc, Dr, Ts, Hp, Lp };

inline constexpr std::array<StrategyId, 7> kAllStrategies{StrategyId::Mcs, StrategyId::HumanInitiative,
                                                          StrategyId::Dlc, StrategyId::Dr,
                                                          StrategyId::Ts,  StrategyId::Hp,
                                                          StrategyId::Lp};

/// "MCS", "HUMAN_INITIATIVE", "DLC", "DR", "TS", "HP", "LP".
std::string_view to_string(StrategyId id) noexcept;
std::optional<StrategyId> parse_strategy(std::string_view text) noexcept;

enum class Source { Human, Ai };
std::string_view to_string(Source s) noexcept;

enum class TiePolicy { PreferHuman, PreferAi, Random };

struct Selection {
  Inference inference;
  Source source = Source::Human;
};

struct ArbitrationInput {
  Inference human_initial;
  Inference human_final;  // equals human_initial when unchanged
  Inference ai;
  RobotId truth = RobotId::A;
};

/// Binary label from a calibrated probability; 0.5 maps to 1.
int threshold_decision(double p);

/// Inference with strictly higher confidence wins; ties follow `policy`.
/// TiePolicy::Random needs the stream overload.
Selection mcs(const Inference& human, const Inference& ai, TiePolicy policy = TiePolicy::PreferHuman);
Selection mcs(const Inference& human, const Inference& ai, TiePolicy policy, RandomStream& rng);

/// Probability form: the agent furthest from 0.5 decides; equal distance -> human.
int mcs_probabilistic(double p_human, double p_ai);

/// Mirror of MCS: lower confidence wins, ties go to the human.
Selection dummy_low_confidence(const Inference& human, const Inference& ai);

/// Fair coin between the two agents. The coin is drawn even when they agree.
Selection dummy_random(const Inference& human, const Inference& ai, RandomStream& rng);

/// Beta posteriors over each arm's accuracy.
struct BanditState {
  double alpha_h = 1.0;
  double beta_h = 1.0;
  double alpha_a = 1.0;
  double beta_a = 1.0;

  friend bool operator==(const BanditState&, const BanditState&) = default;
};

/// Thompson draw from both posteriors; larger draw wins, ties -> human.
Source ts_select(const BanditState& state, RandomStream& rng);

/// Full-information conjugate update of both arms.
BanditState ts_update(BanditState state, bool human_correct, bool ai_correct) noexcept;

}  // namespace confslate::fusion
