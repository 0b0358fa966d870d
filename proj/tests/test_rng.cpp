#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "mext/parallel.hpp"
#include "mext/rng.hpp"

using namespace mext;

TEST(Rng, Reproducible) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(Rng, StreamsDiffer) {
  auto a = stream(1, 0), b = stream(1, 1), c = stream(1, 0, 1), d = stream(2, 0);
  auto x = a();
  EXPECT_NE(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Rng, UniformRange) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Parallel, SlotsIndependentOfThreads) {
  auto run = [](int threads) {
    set_max_threads(threads);
    std::vector<double> out(257);
    parallel_for(out.size(), [&](std::size_t i) {
      auto r = stream(3, i);
      out[i] = r.normal();
    });
    set_max_threads(0);
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(Parallel, RethrowsLowestIndex) {
  set_max_threads(3);
  try {
    parallel_for(100, [](std::size_t i) {
      if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "17");
  }
  set_max_threads(0);
}
