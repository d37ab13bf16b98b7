#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "panda/trait.hpp"

namespace panda {

class TrajectoryFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One line of a trajectory file. Agent runs, walkthrough replays and human
/// sessions all write this record; only `source` tells them apart.
struct StepRecord {
  int t = 0;
  std::string place;  // where the action was taken
  std::string obs_hash;
  std::string observation;
  std::vector<std::string> candidates;
  int chosen = -1;  // index into candidates, -1 for free-form input
  std::string action;
  std::map<TraitId, int> valences;
  int reward = 0;
  int score = 0;  // cumulative, after this step
  std::string source = "agent";

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

using Trajectory = std::vector<StepRecord>;

std::string observation_hash(const std::string& observation);

nlohmann::json to_json(const StepRecord& rec);
StepRecord step_record_from_json(const nlohmann::json& j);

/// Writes one compact JSON object per line.
void write_jsonl(std::ostream& out, const Trajectory& traj);
std::string to_jsonl(const Trajectory& traj);
void save_jsonl(const std::filesystem::path& path, const Trajectory& traj);

Trajectory read_jsonl(std::istream& in);
Trajectory parse_jsonl(const std::string& text);
Trajectory load_jsonl(const std::filesystem::path& path);

/// Loads every *.jsonl file in a directory, sorted by file name.
std::vector<Trajectory> load_jsonl_dir(const std::filesystem::path& dir);

}  // namespace panda
