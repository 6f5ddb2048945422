#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tvq/model.hpp"
#include "tvq/streams.hpp"

using namespace tvq;

TEST_CASE("identical (seed, rep, lane) reproduces the sequence") {
  RandomStream a(42, 7, Lane::arrivals);
  RandomStream b(42, 7, Lane::arrivals);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct lanes and replications differ") {
  RandomStream a(42, 7, Lane::arrivals), b(42, 7, Lane::marks), c(42, 8, Lane::arrivals);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    std::uint64_t va = a.next_u64();
    if (va == b.next_u64()) ++same_ab;
    if (va == c.next_u64()) ++same_ac;
  }
  CHECK(same_ab == 0);
  CHECK(same_ac == 0);
}

TEST_CASE("lane cross-correlation is noise") {
  RandomStream a(5, 0, Lane::arrivals), b(5, 0, Lane::acceptance);
  const int n = 1000000;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    double x = a.next_uniform(), y = b.next_uniform();
    sx += x;
    sy += y;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  double cov = sxy / n - (sx / n) * (sy / n);
  double corr = cov / std::sqrt((sxx / n - (sx / n) * (sx / n)) * (syy / n - (sy / n) * (sy / n)));
  CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("uniform variates live in the right intervals") {
  RandomStream s(1, 0, Lane::auxiliary);
  for (int i = 0; i < 10000; ++i) {
    double u = s.next_uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    double v = s.next_uniform_open();
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("exponential mean") {
  RandomStream s(9, 0, Lane::auxiliary);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += s.next_exponential(2.0);
  double m = acc / n;
  // Exp(2): mean 0.5, sd 0.5
  CHECK(std::abs(m - 0.5) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("thinning with full acceptance is Exp(lambda_h)") {
  const double lh = 1.0;
  auto rate = [&](double) { return lh; };
  const int n = 100000;
  std::vector<double> gaps;
  RandomStream arr(3, 0, Lane::arrivals), acc(3, 0, Lane::acceptance);
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    auto nx = next_arrival(arr, acc, rate, lh, t, 1e18);
    REQUIRE(nx.has_value());
    gaps.push_back(*nx - t);
    t = *nx;
  }
  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= n;
  CHECK(std::abs(mean - 1.0) < 3.0 / std::sqrt(static_cast<double>(n)));

  // KS against Exp(1)
  std::sort(gaps.begin(), gaps.end());
  double d = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    double f = -std::expm1(-gaps[i]);
    double lo = static_cast<double>(i) / n, hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(f - lo), std::abs(f - hi)});
  }
  double crit = 1.628 / std::sqrt(static_cast<double>(n));  // alpha = 0.01
  CHECK(d < crit);
}

TEST_CASE("zero rate never produces an arrival") {
  auto rate = [](double) { return 0.0; };
  RandomStream arr(4, 0, Lane::arrivals), acc(4, 0, Lane::acceptance);
  CHECK_FALSE(next_arrival(arr, acc, rate, 1.0, 0.0, 1000.0).has_value());
}

TEST_CASE("degenerate lambda_h returns none") {
  auto rate = [](double) { return 0.0; };
  RandomStream arr(4, 0, Lane::arrivals), acc(4, 0, Lane::acceptance);
  CHECK_FALSE(next_arrival(arr, acc, rate, 0.0, 0.0, 10.0).has_value());
}

TEST_CASE("sinusoidal thinning: accepted count mean and Poisson dispersion") {
  RateFunction r = RateFunction::sinusoid(0.5, 0.5, 1.0, 1.0);
  const int reps = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    RandomStream arr(11, rep, Lane::arrivals), acc(11, rep, Lane::acceptance);
    int count = 0;
    double t = 0.0;
    while (true) {
      auto nx = next_arrival(arr, acc, r, 1.0, t, 1.0);
      if (!nx) break;
      ++count;
      t = *nx;
    }
    sum += count;
    sum2 += static_cast<double>(count) * count;
  }
  double mean = sum / reps;
  double var = sum2 / reps - mean * mean;
  // integral of the rate over one period is 0.5
  CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(var / reps));
  CHECK(var / mean > 0.97);
  CHECK(var / mean < 1.03);
}
