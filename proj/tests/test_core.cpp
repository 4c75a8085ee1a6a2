#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "noisylab/core.hpp"
#include "noisylab/format.hpp"

using namespace noisylab;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 100; ++t) seen.insert(derive_seed(7, {t}));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
}

TEST(Rng, UniformMoments) {
  Rng r(1);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 2e-3);
}

TEST(Rng, NormalMoments) {
  Rng r(2);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 0.1);
}

TEST(Rng, BelowIsUniform) {
  Rng r(3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n / 7.0));
  EXPECT_THROW(r.below(0), InputError);
}

TEST(Rng, PermutationIsBijection) {
  Rng r(4);
  const auto p = r.permutation(1000);
  std::set<std::uint32_t> s(p.begin(), p.end());
  EXPECT_EQ(s.size(), 1000u);
  EXPECT_EQ(*s.rbegin(), 999u);
  EXPECT_TRUE(r.permutation(0).empty());
}

TEST(Dense, Helpers) {
  const Vector a{3, 4}, b{1, 2};
  EXPECT_DOUBLE_EQ(dot(a, b), 11.0);
  EXPECT_DOUBLE_EQ(norm(a), 5.0);
  Vector y = b;
  axpy(2.0, a, y);
  EXPECT_EQ(y, (Vector{7, 10}));
  EXPECT_EQ(difference(a, b), (Vector{2, 2}));
  EXPECT_DOUBLE_EQ(max_abs(Vector{-3, 2}), 3.0);
  EXPECT_DOUBLE_EQ(relative_error(a, a), 0.0);
}

TEST(Format, RoundTrip) {
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.normal() * std::pow(10.0, r.uniform(-30, 30));
    ASSERT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(256), "256");
  EXPECT_TRUE(std::isnan(parse_double(format_double(NAN))));
  EXPECT_THROW(parse_double("1.5x"), InputError);
  EXPECT_EQ(parse_u64("18446744073709551615"), 18446744073709551615ULL);
  EXPECT_THROW(parse_u64("-1"), InputError);
}

TEST(Format, Hash) {
  // FNV-1a reference values
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
