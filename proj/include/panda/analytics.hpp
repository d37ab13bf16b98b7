#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "panda/agent.hpp"
#include "panda/harness.hpp"
#include "panda/oracle.hpp"
#include "panda/stats.hpp"
#include "panda/trajectory.hpp"
#include "panda/world.hpp"

namespace panda {

class AnalyticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Score criteria

struct TraitCriteria {
  TraitId trait{};
  int cnt = 0;       // games with s(up) > s(NP) and s(down) < s(NP)
  int cnt_down = 0;  // games with s(down) > s(NP) and s(up) < s(NP)
  double avg_up = 0.0;
  double avg_np = 0.0;
  double avg_down = 0.0;
  double diff = 0.0;  // avg_up - avg_down
};

struct CriteriaResult {
  int games = 0;
  std::array<TraitCriteria, kAllTraits.size()> traits{};

  const TraitCriteria& of(TraitId t) const { return traits[trait_index(t)]; }
};

/// Requires the "NP" column and both directions of every trait.
CriteriaResult compute_criteria(const ScoreMatrix& matrix);

struct TraitStats {
  TraitId trait{};
  stats::StatResult up_np;    // (A_up, A_NP)
  stats::StatResult np_down;  // (A_NP, A_down)
  stats::StatResult up_down;  // (A_up, A_down)
  stats::StatResult friedman;  // (A_up, A_NP, A_down)
  std::vector<std::string> undefined;  // pairs whose test was undefined (all differences zero)
};

/// The three paired Wilcoxon tests and the Friedman test for every trait.
std::vector<TraitStats> compute_trait_stats(const ScoreMatrix& matrix);

// Trajectory metrics

struct TrajectoryMetrics {
  std::size_t episodes = 0;
  double traj_len = 0.0;
  double visit_com = 0.0;
  double visit_unc = 0.0;
  double visit_total = 0.0;
  // Mean first-arrival step; absent when no episode reached such a place.
  std::optional<double> avg_step_com;
  std::optional<double> avg_step_unc;
  std::optional<double> avg_step_total;
};

/// Places with depth < threshold are common, the rest uncommon. A place's
/// arrival step is the `t` of the first record located there. Per episode the
/// arrival steps are averaged over the places of a class, then over the
/// episodes where that class was reached.
TrajectoryMetrics trajectory_metrics(std::span<const Trajectory> episodes, const std::map<std::string, int>& depths,
                                     int threshold);

// Alignment

enum class Window { Init50, Fin50 };
Window parse_window(const std::string& s);
std::string to_string(Window w);

/// Trajectories of the first or last 50 complete episodes of a run.
std::vector<Trajectory> window_trajectories(const RunLog& log, Window w, std::size_t count = 50);

struct ActionCounts {
  long high = 0;
  long low = 0;
};

/// Counts actions annotated +1 / -1 for `trait`; throws if any step lacks the annotation.
ActionCounts count_trait_actions(std::span<const Trajectory> episodes, TraitId trait);

struct AlignmentResult {
  ActionCounts agent;
  ActionCounts np;
  std::optional<double> r_up;    // relative change of high-valence actions vs. NP
  std::optional<double> r_down;  // same for low-valence actions
  std::optional<double> ratio;   // r_up - r_down, present when both terms are
};

AlignmentResult alignment_ratio(std::span<const Trajectory> agent, std::span<const Trajectory> np, TraitId trait);

/// (n_agent - n_np) / n_np, absent when n_np = 0.
std::optional<double> relative_change(long n_agent, long n_np);

// Model-based analyses

struct RewardActionStats {
  std::optional<double> q_mean;  // mean Q(s, a) over rewarded steps
  double count_mean = 0.0;       // rewarded steps per episode
  std::size_t episodes = 0;
};

RewardActionStats reward_action_stats(const QModel& model, std::span<const Trajectory> episodes);

/// Last-50 statistics of a persisted run; the model must be the run's checkpoint.
RewardActionStats reward_action_stats(const QModel& model, const RunLog& log, std::size_t count = 50);

/// Softmax probability of `label` under `values`.
double selection_probability(std::span<const double> values, std::size_t label);

struct Probe {
  std::string observation;
  std::vector<std::string> candidates;
  std::size_t label = 0;
  std::vector<int> valences;  // optional per-candidate valence for the shaping trait
};

/// Shaped values of `candidates`. Valences come from the oracle when one is
/// given, else from `valences` (empty means all neutral).
std::vector<double> shaped_values(const QModel& model, const ShapingConfig& shaping, const std::string& observation,
                                  std::span<const std::string> candidates, ValenceOracle* oracle = nullptr,
                                  std::span<const int> valences = {});

/// Mean selection probability of the labeled candidates, in percent.
double selection_probability(const QModel& model, const ShapingConfig& shaping, std::span<const Probe> probes,
                             ValenceOracle* oracle = nullptr);

using Chooser = std::function<std::size_t(const StepRecord&)>;

/// Percentage of reference records whose `chosen` index equals the chooser's.
/// Free-form reference steps (chosen < 0) are rejected.
double concordance_rate(std::span<const Trajectory> reference, const Chooser& choose);

/// Greedy choice over shaped values.
double concordance_rate(std::span<const Trajectory> reference, const QModel& model, const ShapingConfig& shaping,
                        ValenceOracle* oracle = nullptr);

/// Throws AnalyticsError when a reference record's candidates differ from the
/// world's candidates at that point of a replay.
void check_reference_candidates(const WorldSpec& world, const Trajectory& reference);

// Annotation agreement

using CorrelationMatrix = std::array<std::array<std::optional<double>, kAllTraits.size()>, kAllTraits.size()>;

/// Phi coefficient per trait pair over actions where both valences are
/// non-zero. Absent when fewer than two such actions exist or either trait is
/// constant over them. Missing annotations count as neutral.
CorrelationMatrix trait_correlation(std::span<const std::map<TraitId, int>> annotated);
CorrelationMatrix trait_correlation(std::span<const Trajectory> episodes);

struct WalkthroughProfile {
  std::size_t actions = 0;
  std::array<double, kAllTraits.size()> pct_high{};
  std::array<double, kAllTraits.size()> pct_low{};
};

WalkthroughProfile annotate_walkthrough(const WorldSpec& world, ValenceOracle& oracle);

// Reports

nlohmann::json to_json(const CriteriaResult& r);
nlohmann::json to_json(const stats::StatResult& r);
nlohmann::json to_json(const std::vector<TraitStats>& s);
nlohmann::json to_json(const TrajectoryMetrics& m);
nlohmann::json to_json(const AlignmentResult& a);
nlohmann::json to_json(const RewardActionStats& s);
nlohmann::json to_json(const CorrelationMatrix& m);
nlohmann::json to_json(const WalkthroughProfile& p);

std::string format_criteria(const CriteriaResult& r);
std::string format_trait_stats(const std::vector<TraitStats>& s);
std::string format_trajectory_metrics(const std::vector<std::pair<std::string, TrajectoryMetrics>>& rows);
std::string format_correlation(const CorrelationMatrix& m);
std::string format_walkthrough(const WalkthroughProfile& p);

}  // namespace panda
