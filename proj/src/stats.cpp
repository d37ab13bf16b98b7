#include "panda/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace panda::stats {

namespace {

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= kTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

constexpr int kExactLimit = 25;

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::NormalApprox: return "normal-approx";
    case Method::ChiSquare: return "chi-square";
  }
  return "unknown";
}

std::vector<double> midranks(std::span<const double> values, std::vector<int>* tie_sizes) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  if (tie_sizes) tie_sizes->clear();
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && nearly_equal(values[order[j]], values[order[i]])) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    if (tie_sizes && j - i > 1) tie_sizes->push_back(static_cast<int>(j - i));
    i = j;
  }
  return ranks;
}

std::vector<double> signed_rank_counts(int n) {
  const int max_sum = n * (n + 1) / 2;
  std::vector<double> c(static_cast<std::size_t>(max_sum) + 1, 0.0);
  c[0] = 1.0;
  for (int r = 1; r <= n; ++r)
    for (int s = max_sum; s >= r; --s) c[static_cast<std::size_t>(s)] += c[static_cast<std::size_t>(s - r)];
  return c;
}

double signed_rank_exact_p(int n, double t) {
  const auto counts = signed_rank_counts(n);
  const int limit = static_cast<int>(std::floor(t + 1e-9));
  double tail = 0.0;
  for (int s = 0; s <= limit && s < static_cast<int>(counts.size()); ++s) tail += counts[static_cast<std::size_t>(s)];
  // The events W+ <= t and W- <= t are disjoint unless t >= n(n+1)/4, where
  // the doubled tail exceeds one anyway.
  return std::min(1.0, 2.0 * tail / std::ldexp(1.0, n));
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

StatResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: samples must have equal length");
  if (x.empty()) throw std::invalid_argument("wilcoxon: samples are empty");

  std::vector<double> d, mag;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (nearly_equal(x[i], y[i])) continue;
    d.push_back(diff);
    mag.push_back(std::abs(diff));
  }
  if (d.empty()) throw UndefinedTest("wilcoxon: all differences are zero");

  std::vector<int> ties;
  const auto ranks = midranks(mag, &ties);
  StatResult r;
  r.n = static_cast<int>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.statistic = std::min(r.w_plus, r.w_minus);

  if (ties.empty() && r.n <= kExactLimit) {
    r.method = Method::Exact;
    r.p_value = signed_rank_exact_p(r.n, r.statistic);
    return r;
  }
  r.method = Method::NormalApprox;
  const double n = r.n;
  const double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  for (int t : ties) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = (r.statistic - mean) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  return r;
}

StatResult friedman_test(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("friedman: need at least two treatments");
  const std::size_t n = groups.front().size();
  for (const auto& g : groups)
    if (g.size() != n) throw std::invalid_argument("friedman: treatments have different block counts");
  if (n < 2) throw std::invalid_argument("friedman: need at least two blocks");

  std::vector<double> rank_sums(k, 0.0);
  double tie_term = 0.0;
  std::vector<double> block(k);
  std::vector<int> ties;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) block[j] = groups[j][i];
    const auto r = midranks(block, &ties);
    for (std::size_t j = 0; j < k; ++j) rank_sums[j] += r[j];
    for (int t : ties) tie_term += static_cast<double>(t) * t * t - t;
  }
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  double ss = 0.0;
  for (double R : rank_sums) ss += R * R;
  const double raw = 12.0 / (nd * kd * (kd + 1.0)) * ss - 3.0 * nd * (kd + 1.0);
  const double correction = 1.0 - tie_term / (nd * (kd * kd * kd - kd));

  StatResult res;
  res.n = static_cast<int>(n);
  res.method = Method::ChiSquare;
  if (correction <= 1e-12) {
    // every block fully tied: no evidence of any treatment effect
    res.statistic = 0.0;
    res.p_value = 1.0;
    return res;
  }
  res.statistic = std::max(0.0, raw / correction);
  res.p_value = chi_square_sf(res.statistic, kd - 1.0);
  return res;
}

}  // namespace panda::stats
