#pragma once

#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace panda::stats {

class UndefinedTest : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Method { Exact, NormalApprox, ChiSquare };
std::string_view to_string(Method m);

struct StatResult {
  double statistic = 0.0;  // T for Wilcoxon, Fr for Friedman
  double p_value = 1.0;
  int n = 0;  // effective sample size (Wilcoxon: after dropping zero differences)
  Method method = Method::Exact;
  double w_plus = 0.0;  // Wilcoxon only
  double w_minus = 0.0;
};

/// Values closer than this (relative to magnitude) count as ties or zeros, so
/// that decimal inputs like 2.2-1.9 and 3.9-3.6 rank together.
inline constexpr double kTieTolerance = 1e-9;

/// Mid-ranks (1-based) of `values`; tied groups share their average rank.
/// `tie_sizes` receives the size of every tied group with more than one member.
std::vector<double> midranks(std::span<const double> values, std::vector<int>* tie_sizes = nullptr);

/// Number of subsets of {1..n} for each possible rank sum 0..n(n+1)/2.
std::vector<double> signed_rank_counts(int n);

/// Two-sided exact p-value P(min(W+, W-) <= t) for the tie-free statistic.
double signed_rank_exact_p(int n, double t);

/// Paired two-sided Wilcoxon signed-rank test on d = x - y. Zero differences
/// are dropped. Exact null distribution when there are no ties and n <= 25,
/// otherwise the normal approximation with tie-corrected variance.
StatResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

/// Friedman test over k treatments (groups) observed on the same n blocks.
/// groups[j][i] is treatment j in block i. Tie-corrected; chi-square p-value
/// with k-1 degrees of freedom.
StatResult friedman_test(const std::vector<std::vector<double>>& groups);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);
double normal_sf(double z);

}  // namespace panda::stats
