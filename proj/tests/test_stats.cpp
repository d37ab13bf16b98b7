#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "panda/stats.hpp"

using namespace panda::stats;

namespace {

// P(min(W+, W-) <= t) by enumerating every sign pattern of ranks 1..n.
double brute_force_p(int n, double t) {
  long hits = 0;
  const long total = 1L << n;
  const double all = n * (n + 1) / 2.0;
  for (long mask = 0; mask < total; ++mask) {
    double plus = 0;
    for (int r = 1; r <= n; ++r)
      if (mask & (1L << (r - 1))) plus += r;
    if (std::min(plus, all - plus) <= t + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("midranks average tied groups") {
  const std::vector<double> v{10, 20, 20, 5, 20};
  std::vector<int> ties;
  CHECK(midranks(v, &ties) == std::vector<double>{2, 4, 4, 1, 4});
  CHECK(ties == std::vector<int>{3});
  const std::vector<double> near{0.3, 0.1 + 0.2};  // differ only by rounding
  CHECK(midranks(near) == std::vector<double>{1.5, 1.5});
}

TEST_CASE("rank-sum counts") {
  CHECK(signed_rank_counts(3) == std::vector<double>{1, 1, 1, 2, 1, 1, 1});
  const auto c = signed_rank_counts(12);
  CHECK(std::accumulate(c.begin(), c.end(), 0.0) == 4096.0);
  CHECK(std::equal(c.begin(), c.end(), c.rbegin()));
}

TEST_CASE("exact test on three positive differences") {
  const std::vector<double> x{1, 2, 3}, y{0, 0, 0};
  const auto r = wilcoxon_signed_rank(x, y);
  CHECK(r.statistic == 0.0);
  CHECK(r.w_plus == 6.0);
  CHECK(r.p_value == doctest::Approx(0.25));
  CHECK(r.method == Method::Exact);
  CHECK(r.n == 3);
}

TEST_CASE("exact p-values agree with enumeration") {
  std::mt19937_64 rng(2024);
  for (int n = 3; n <= 10; ++n) {
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int rep = 0; rep < 20; ++rep) {
      // distinct magnitudes, random signs
      std::vector<double> mags(static_cast<std::size_t>(n));
      std::iota(mags.begin(), mags.end(), 1.0);
      std::shuffle(mags.begin(), mags.end(), rng);
      for (int i = 0; i < n; ++i) {
        y[i] = 10.0;
        x[i] = 10.0 + ((rng() & 1) ? mags[i] : -mags[i]) * 0.37;
      }
      const auto r = wilcoxon_signed_rank(x, y);
      CAPTURE(n);
      CHECK(r.method == Method::Exact);
      CHECK(r.p_value == doctest::Approx(brute_force_p(n, r.statistic)).epsilon(1e-12));
      CHECK(r.w_plus + r.w_minus == n * (n + 1) / 2.0);
    }
  }
}

TEST_CASE("swapping the samples leaves the result unchanged") {
  const std::vector<double> x{5.1, 3.2, 6.8, 4.4, 7.0, 2.5}, y{4.0, 3.9, 5.2, 4.1, 6.1, 3.3};
  const auto a = wilcoxon_signed_rank(x, y);
  const auto b = wilcoxon_signed_rank(y, x);
  CHECK(a.statistic == b.statistic);
  CHECK(a.p_value == b.p_value);
  CHECK(a.w_plus == b.w_minus);
}

TEST_CASE("degenerate and malformed Wilcoxon inputs") {
  const std::vector<double> x{1, 2, 3};
  CHECK_THROWS_AS(wilcoxon_signed_rank(x, x), UndefinedTest);
  CHECK_THROWS_AS(wilcoxon_signed_rank(x, std::vector<double>{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("ties switch to the tie-corrected normal approximation") {
  // differences 1, 1, 2, -3, 4: one tied pair
  const std::vector<double> x{1, 1, 2, -3, 4}, y(5, 0.0);
  const auto r = wilcoxon_signed_rank(x, y);
  CHECK(r.method == Method::NormalApprox);
  CHECK(r.w_minus == 4.0);
  const double n = 5, mean = n * (n + 1) / 4;
  const double var = n * (n + 1) * (2 * n + 1) / 24 - (8 - 2) / 48.0;
  const double z = (4.0 - mean) / std::sqrt(var);
  CHECK(r.p_value == doctest::Approx(std::erfc(-z / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("large samples use the normal approximation") {
  std::vector<double> x(30), y(30, 0.0);
  for (int i = 0; i < 30; ++i) x[i] = (i % 3 == 0 ? -1 : 1) * (i + 1.0);
  const auto r = wilcoxon_signed_rank(x, y);
  CHECK(r.method == Method::NormalApprox);
  const double n = 30, z = (r.statistic - n * (n + 1) / 4) / std::sqrt(n * (n + 1) * (2 * n + 1) / 24);
  CHECK(r.p_value == doctest::Approx(std::erfc(-z / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("Friedman on two consistent blocks") {
  const auto r = friedman_test({{1, 1}, {2, 2}, {3, 3}});
  CHECK(r.statistic == doctest::Approx(4.0));
  CHECK(r.p_value == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(r.method == Method::ChiSquare);
}

TEST_CASE("Friedman with no differences") {
  const auto r = friedman_test({{4, 2, 7}, {4, 2, 7}, {4, 2, 7}});
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("Friedman depends only on within-block ranks") {
  const std::vector<std::vector<double>> g{{5.0, 2.0, 8.0, 1.0}, {6.0, 2.0, 3.0, 4.0}, {7.5, 9.0, 3.0, 1.0}};
  auto warped = g;
  for (auto& col : warped)
    for (double& v : col) v = std::exp(v) + 3.0;
  const auto a = friedman_test(g);
  const auto b = friedman_test(warped);
  CHECK(a.statistic == doctest::Approx(b.statistic));
  CHECK(a.p_value == doctest::Approx(b.p_value));
}

TEST_CASE("Friedman input validation") {
  CHECK_THROWS_AS(friedman_test({{1, 2, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(friedman_test({{1}, {2}}), std::invalid_argument);
  CHECK_THROWS_AS(friedman_test({{1, 2}, {2, 3, 4}}), std::invalid_argument);
}

TEST_CASE("distribution tails") {
  CHECK(chi_square_sf(2.0, 2.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(chi_square_sf(0.0, 3.0) == 1.0);
  CHECK(normal_sf(0.0) == doctest::Approx(0.5));
  CHECK(normal_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));
}
