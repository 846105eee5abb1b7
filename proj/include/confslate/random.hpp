#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

#include <boost/random/mersenne_twister.hpp>

namespace confslate {

/// Seeded pseudo-random stream. Every stochastic operation in the library
/// takes one of these explicitly; nothing reads global random state.
///
/// Streams are derived from a root seed plus a path of integers (session,
/// trial, purpose, ...) so that independent consumers never share a sequence
/// and a replay can regenerate any draw without re-running earlier ones.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  static RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  bool bernoulli(double p);
  /// Index drawn proportionally to `weights` (non-negative, not all zero).
  std::size_t categorical(std::span<const double> weights);
  double beta(double alpha, double beta);

 private:
  boost::random::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Purposes used as the last component of a derivation path.
namespace stream_purpose {
inline constexpr std::uint64_t schedule = 1;
inline constexpr std::uint64_t delays = 2;
inline constexpr std::uint64_t ai = 3;
inline constexpr std::uint64_t tie = 4;
inline constexpr std::uint64_t dummy_random = 5;
inline constexpr std::uint64_t bandit = 6;
inline constexpr std::uint64_t operator_choice = 7;
inline constexpr std::uint64_t operator_change = 8;
inline constexpr std::uint64_t assignment = 9;
inline constexpr std::uint64_t virtual_pairing = 10;
}  // namespace stream_purpose

}  // namespace confslate
