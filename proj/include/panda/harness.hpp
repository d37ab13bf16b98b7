#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "panda/agent.hpp"
#include "panda/oracle.hpp"
#include "panda/world.hpp"

namespace panda {

struct TrainConfig {
  double discount = 0.9;
  int batch = 64;
  double grad_clip = 5.0;
  int steps_per_episode = 100;
  long max_steps = 15000;
  long early_stop = 5000;  // steps without a new best 50-episode average
  int n_envs = 8;
  std::uint64_t seed = 1;

  double learning_rate = 1e-2;
  std::size_t replay_capacity = 10000;
  double replay_priority = 0.5;
  int hash_dim = QModel::kDefaultHashDim;
  int hidden_dim = QModel::kDefaultHiddenDim;
  int update_every = 1;  // environment steps between TD updates
  bool sample_shaped = true;  // softmax over Q' (true) or plain Q (false)

  void validate() const;
};

enum class PolicyKind { Learned, Uniform };
enum class OracleFailure { Abort, Neutral };

/// Labels: "NP", "<Trait>_up", "<Trait>_down", and "random" for the
/// uniform-policy reference.
struct AgentConfig {
  std::string label;
  ShapingConfig shaping;
  TrainConfig train;
  PolicyKind policy = PolicyKind::Learned;
  OracleFailure on_oracle_failure = OracleFailure::Abort;
};

AgentConfig parse_agent(const std::string& label, double weight_magnitude = 2.0);
std::string agent_label(const ShapingConfig& shaping);

/// NP plus up/down for every trait, in table column order.
std::vector<std::string> standard_agent_labels();

struct EpisodeSummary {
  int index = 0;  // completion order within the run
  int env = 0;
  int score = 0;
  int length = 0;
  long end_step = 0;  // global environment step at which the episode ended
  bool truncated = false;  // cut off by the step budget rather than finished
};

struct RunLog {
  std::string world_id;
  std::string agent;
  std::uint64_t seed = 0;
  std::vector<EpisodeSummary> episodes;
  std::vector<std::pair<long, double>> curve;
  long total_steps = 0;
  bool early_stopped = false;
  std::uint64_t oracle_queries = 0;
  std::string model_fingerprint;

  /// Trajectories of `episodes`, same order. Not part of runlog.json.
  std::vector<Trajectory> trajectories;

  /// Complete (non-truncated) episodes in completion order.
  std::vector<std::size_t> complete_indices() const;
};

nlohmann::json to_json(const RunLog& log);
RunLog runlog_from_json(const nlohmann::json& j);

struct TrainingResult {
  RunLog log;
  QModel model;
};

struct TrainingOptions {
  std::optional<std::filesystem::path> run_dir;  // persist runlog, episodes and checkpoint here
  std::function<void(const EpisodeSummary&)> on_episode;
};

/// Runs n_envs episode streams in lockstep until max_steps environment steps
/// or early stop. `oracle` may be null when the agent has no trait.
TrainingResult run_training(const WorldSpec& world, const AgentConfig& agent, ValenceOracle* oracle,
                            const TrainingOptions& options = {});

std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& world,
                                    const std::string& agent, std::uint64_t seed);

/// Loads runlog.json and every episode file of a persisted run.
RunLog load_run(const std::filesystem::path& run_dir);

/// Mean score of episodes completed within each interval; empty intervals
/// carry the previous value forward.
std::vector<std::pair<long, double>> learning_curve(const RunLog& log, long interval = 100);

/// Indices of the first / last `count` complete episodes (fewer if unavailable).
std::vector<std::size_t> first_episodes(const RunLog& log, std::size_t count = 50);
std::vector<std::size_t> last_episodes(const RunLog& log, std::size_t count = 50);

double mean_last_scores(const RunLog& log, std::size_t count = 50);

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoreMatrix {
  std::vector<std::string> games;
  std::vector<std::string> agents;
  std::vector<std::vector<double>> mean;  // [game][agent]
  std::vector<std::vector<double>> std;   // population std across seeds
  std::vector<std::vector<bool>> flagged;  // some run had fewer than 50 episodes

  std::size_t column(const std::string& agent) const;
  std::optional<std::size_t> find_column(const std::string& agent) const;
  std::vector<double> column_values(const std::string& agent) const;
};

ScoreMatrix aggregate_scores(const std::vector<RunLog>& logs, std::size_t window = 50);

/// CSV with a header row "game,<agent>,...". Lines starting with '#' are comments.
std::string score_matrix_to_csv(const ScoreMatrix& m);
ScoreMatrix parse_score_matrix_csv(const std::string& text);
ScoreMatrix load_score_matrix(const std::filesystem::path& path);

}  // namespace panda
