#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "stackcast/rng.hpp"

using stackcast::CounterRng;

TEST(CounterRng, SameSeedAndStreamRepeat) {
  CounterRng a(7, 3), b(7, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterRng, StreamsDiffer) {
  CounterRng a(7, 0), b(7, 1);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(CounterRng, UniformInUnitInterval) {
  CounterRng r(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(CounterRng, BelowIsUnbiasedEnough) {
  CounterRng r(5);
  std::array<int, 3> hits{};
  for (int i = 0; i < 30000; ++i) ++hits[r.below(3)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 400);
}

TEST(CounterRng, ShuffleIsPermutation) {
  CounterRng r(11);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[std::size_t(i)], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}
