#include <doctest.h>

#include <cmath>
#include <vector>

#include "tbal/rng.hpp"

TEST_CASE("same seed gives the same stream") {
  tbal::Rng a(42);
  tbal::Rng b(42);
  tbal::Rng c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differs = differs || va != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("bounded stays in range and is roughly uniform") {
  tbal::Rng rng(7);
  CHECK(rng.bounded(1) == 0);
  std::vector<double> counts(6, 0.0);
  const int draws = 600000;
  for (int i = 0; i < draws; ++i) {
    const auto v = rng.bounded(6);
    REQUIRE(v < 6);
    counts[v] += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - draws / 6.0) * (c - draws / 6.0) / (draws / 6.0);
  CHECK(chi2 < 20.515);  // chi-square(5), p = 0.001
}

TEST_CASE("uniform01 lies in [0, 1)") {
  tbal::Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 100000 - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / 100000));
}

TEST_CASE("normal has unit variance") {
  tbal::Rng rng(11);
  const int n = 1000000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("a pair of normals consumes exactly two engine outputs") {
  tbal::Rng a(5);
  tbal::Rng b(5);
  a.normal();
  a.normal();
  b.next_u64();
  b.next_u64();
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("hash64 separates one-character changes") {
  CHECK(tbal::hash64("fig1_linear") != tbal::hash64("fig1_linea"));
  CHECK(tbal::hash64("abc") != tbal::hash64("abd"));
  CHECK(tbal::hash64("abc") == tbal::hash64("abc"));
}
