#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "confslate/random.hpp"

using confslate::RandomStream;

TEST(RandomStream, GoldenSequence) {
  RandomStream r(42);
  EXPECT_EQ(r.next_u64(), 2576493707698874361ULL);
  EXPECT_EQ(r.next_u64(), 17880808640956396325ULL);
  EXPECT_EQ(RandomStream::derive(7, {1, 2, 3}).next_u64(), 6258397200835334355ULL);
}

TEST(RandomStream, DerivedStreamsDiffer) {
  auto a = RandomStream::derive(7, {1, 0});
  auto b = RandomStream::derive(7, {1, 1});
  auto c = RandomStream::derive(7, {0, 1});
  const auto va = a.next_u64();
  EXPECT_NE(va, b.next_u64());
  EXPECT_NE(va, c.next_u64());
  EXPECT_EQ(RandomStream::derive(7, {1, 0}).next_u64(), va);
}

TEST(RandomStream, UniformRange) {
  RandomStream r(3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(RandomStream, CategoricalFrequencies) {
  RandomStream r(5);
  const std::array<double, 4> w{0.1, 0.2, 0.3, 0.4};
  std::array<int, 4> hits{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++hits[r.categorical(w)];
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(hits[k] / static_cast<double>(n), w[k], 0.005);
  }
  const std::array<double, 3> point{0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r.categorical(point), 1u);
}

TEST(RandomStream, BetaMean) {
  RandomStream r(9);
  double sum = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) sum += r.beta(2.0, 5.0);
  EXPECT_NEAR(sum / n, 2.0 / 7.0, 0.005);
}
