#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "abfp/rng.hpp"

using namespace abfp;

TEST(Philox, KnownAnswers) {
  using W = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterStream, IsUniformRandomBitGenerator) {
  static_assert(std::uniform_random_bit_generator<CounterStream>);
  CounterStream s(1, {});
  std::uniform_int_distribution<int> d(0, 9);
  const int v = d(s);
  EXPECT_GE(v, 0);
  EXPECT_LE(v, 9);
}

TEST(CounterStream, SameCoordinatesSamePrefix) {
  CounterStream a = derive_stream(42, {1, 2, 3, 4});
  CounterStream b = derive_stream(42, {1, 2, 3, 4});
  for (int k = 0; k < 64; ++k) ASSERT_EQ(a.next_u32(), b.next_u32());
}

TEST(CounterStream, DistinctCoordinatesDiffer) {
  const StreamCoordinates base{1, 2, 3, 4};
  std::vector<StreamCoordinates> others{{2, 2, 3, 4}, {1, 3, 3, 4}, {1, 2, 4, 4}, {1, 2, 3, 5}};
  auto prefix = [](std::uint64_t seed, StreamCoordinates c) {
    CounterStream s = derive_stream(seed, c);
    std::vector<std::uint32_t> v(64);
    for (auto& x : v) x = s.next_u32();
    return v;
  };
  const auto ref = prefix(42, base);
  for (const auto& c : others) EXPECT_NE(prefix(42, c), ref);
  EXPECT_NE(prefix(43, base), ref);
}

TEST(CounterStream, UniformInUnitInterval) {
  CounterStream s(7, {});
  double sum = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(CounterStream, UniformIndexBoundedAndCoversRange) {
  CounterStream s(8, {});
  std::set<std::uint64_t> seen;
  for (int k = 0; k < 10000; ++k) {
    const auto v = s.uniform_index(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(CounterStream, NormalAndLaplaceMoments) {
  CounterStream s(9, {});
  const int n = 400000;
  double m1 = 0, m2 = 0, l1 = 0, l2 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = s.normal();
    m1 += z;
    m2 += z * z;
    const double l = s.laplace();
    l1 += l;
    l2 += l * l;
  }
  EXPECT_NEAR(m1 / n, 0.0, 0.01);
  EXPECT_NEAR(m2 / n, 1.0, 0.02);
  EXPECT_NEAR(l1 / n, 0.0, 0.02);
  EXPECT_NEAR(l2 / n, 2.0, 0.05);
}

TEST(Seeds, CombineAndMixAreDeterministicAndSpread) {
  EXPECT_EQ(mix64(5), mix64(5));
  EXPECT_NE(mix64(5), mix64(6));
  EXPECT_EQ(combine_seed(1, 2), combine_seed(1, 2));
  EXPECT_NE(combine_seed(1, 2), combine_seed(2, 1));
}
