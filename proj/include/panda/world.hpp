#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "panda/trajectory.hpp"

namespace panda {

/// Raised for malformed world files, dangling references and walkthrough failures.
class WorldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kAnyPlace = "any";
inline constexpr const char* kInventory = "inventory";
inline constexpr const char* kNowhere = "nowhere";
inline constexpr const char* kNothingHappens = "Nothing happens.";

struct Exit {
  std::string target;
  std::optional<std::string> guard;  // flag that must be set to pass
};

/// Extra sentence appended to a place description while `flag` is set.
struct PlaceDetail {
  std::string flag;
  std::string text;
};

struct Place {
  std::string id;
  std::string description;
  std::map<std::string, Exit> exits;  // direction -> exit
  std::vector<PlaceDetail> details;
};

struct GameObject {
  std::string id;
  std::string name;
  bool portable = true;
  std::string initial_place;  // place id, "inventory" or "nowhere"
};

struct Preconditions {
  std::string place = kAnyPlace;
  std::set<std::string> flags;
  std::set<std::string> absent_flags;
  std::set<std::string> inventory;
};

struct Effects {
  std::optional<std::string> move_to;
  std::set<std::string> set_flags;
  std::set<std::string> clear_flags;
  std::vector<std::string> take;     // object must be in the current place
  std::vector<std::string> drop;     // object must be carried
  std::vector<std::string> reveal;   // nowhere -> current place
  std::vector<std::string> destroy;  // anywhere -> nowhere
  std::string text;
};

struct Reward {
  std::string id;
  int points = 0;
  bool once = true;
};

struct ActionRule {
  std::string text;
  Preconditions pre;
  Effects effects;
  std::optional<Reward> reward;
};

struct WorldSpec {
  std::string id;
  std::vector<Place> places;
  std::vector<GameObject> objects;
  std::vector<ActionRule> rules;
  std::string start_place;
  int max_score = 0;
  std::vector<std::string> walkthrough;
  std::map<std::string, std::vector<std::string>> distractors;  // place -> no-op actions

  const Place& place(const std::string& id) const;
  const GameObject& object(const std::string& id) const;
  bool has_place(const std::string& id) const;
  bool has_object(const std::string& id) const;

  /// Rebuilds the id lookup tables. Called by parse/validate.
  void index();

 private:
  std::unordered_map<std::string, std::size_t> place_index_;
  std::unordered_map<std::string, std::size_t> object_index_;
};

struct GameState {
  std::string place;
  std::set<std::string> flags;
  std::set<std::string> inventory;
  std::map<std::string, std::string> object_at;  // non-carried objects -> place or "nowhere"
  int step = 0;
  std::set<std::string> claimed_rewards;
  int score = 0;
  std::uint64_t seed = 0;  // orders candidates

  friend bool operator==(const GameState&, const GameState&) = default;
};

struct Observation {
  std::string text;
  std::vector<std::string> candidates;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  GameState state;
  Observation observation;
  int reward = 0;
  bool done = false;
  bool matched = false;  // false when the action was an in-band no-op
};

inline constexpr int kUnlimitedSteps = std::numeric_limits<int>::max();
inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Parses and validates a world document. Throws WorldError.
WorldSpec parse_world(const nlohmann::json& doc);
WorldSpec load_world(const std::filesystem::path& path);
nlohmann::json world_to_json(const WorldSpec& world);

/// Checks every structural invariant and replays the walkthrough.
void validate_world(const WorldSpec& world);

std::pair<GameState, Observation> reset(const WorldSpec& world, std::uint64_t seed);

StepResult step(const WorldSpec& world, const GameState& state, const std::string& action,
                int steps_per_episode = kUnlimitedSteps);

std::vector<std::string> candidates(const WorldSpec& world, const GameState& state);

std::string observe(const WorldSpec& world, const GameState& state, const std::string& event);

struct WalkthroughReplay {
  int score = 0;
  Trajectory trajectory;
};

/// Replays the walkthrough from reset(seed 0). Throws WorldError naming the
/// first step that is a no-op.
WalkthroughReplay replay_walkthrough(const WorldSpec& world);

/// Breadth-first distance from start_place over exits, ignoring guards.
std::map<std::string, int> place_depths(const WorldSpec& world);

/// Convenience wrapper owning one episode stream.
class Environment {
 public:
  Environment(std::shared_ptr<const WorldSpec> world, int steps_per_episode);

  const Observation& reset(std::uint64_t seed);
  StepResult step(const std::string& action);

  const GameState& state() const { return state_; }
  const Observation& observation() const { return obs_; }
  const WorldSpec& world() const { return *world_; }
  bool done() const { return done_; }

 private:
  std::shared_ptr<const WorldSpec> world_;
  int steps_per_episode_;
  GameState state_;
  Observation obs_;
  bool done_ = false;
};

}  // namespace panda
