#include "panda/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "panda/text.hpp"

namespace panda {

using nlohmann::json;

std::string observation_hash(const std::string& observation) {
  return hex64(fnv1a(observation));
}

json to_json(const StepRecord& rec) {
  json vals = json::object();
  for (const auto& [trait, v] : rec.valences) vals[std::string(to_string(trait))] = v;
  return json{{"t", rec.t},
              {"place", rec.place},
              {"obs_hash", rec.obs_hash},
              {"observation", rec.observation},
              {"candidates", rec.candidates},
              {"chosen", rec.chosen},
              {"action", rec.action},
              {"valences", vals},
              {"reward", rec.reward},
              {"score", rec.score},
              {"source", rec.source}};
}

StepRecord step_record_from_json(const json& j) {
  if (!j.is_object()) throw TrajectoryFormatError("step record must be a JSON object");
  StepRecord rec;
  try {
    rec.t = j.at("t").get<int>();
    rec.place = j.at("place").get<std::string>();
    rec.obs_hash = j.at("obs_hash").get<std::string>();
    rec.candidates = j.at("candidates").get<std::vector<std::string>>();
    rec.chosen = j.at("chosen").get<int>();
    rec.reward = j.at("reward").get<int>();
    rec.score = j.at("score").get<int>();
    for (const auto& [key, v] : j.at("valences").items()) {
      const int value = v.get<int>();
      if (value < -1 || value > 1) throw TrajectoryFormatError("valence out of range: " + key);
      rec.valences[trait_from_string(key)] = value;
    }
    rec.observation = j.value("observation", std::string{});
    rec.source = j.value("source", std::string{"agent"});
    rec.action = j.value("action", std::string{});
  } catch (const json::exception& e) {
    throw TrajectoryFormatError(std::string("bad step record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw TrajectoryFormatError(std::string("bad step record: ") + e.what());
  }
  if (rec.chosen < -1 || rec.chosen >= static_cast<int>(rec.candidates.size()))
    throw TrajectoryFormatError("chosen index out of range at t=" + std::to_string(rec.t));
  if (rec.action.empty() && rec.chosen >= 0) rec.action = rec.candidates[rec.chosen];
  return rec;
}

void write_jsonl(std::ostream& out, const Trajectory& traj) {
  for (const auto& rec : traj) out << to_json(rec).dump() << '\n';
}

std::string to_jsonl(const Trajectory& traj) {
  std::ostringstream os;
  write_jsonl(os, traj);
  return os.str();
}

void save_jsonl(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_jsonl(out, traj);
}

Trajectory read_jsonl(std::istream& in) {
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TrajectoryFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    traj.push_back(step_record_from_json(j));
  }
  return traj;
}

Trajectory parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  return read_jsonl(in);
}

Trajectory load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_jsonl(in);
}

std::vector<Trajectory> load_jsonl_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_jsonl(f));
  return out;
}

}  // namespace panda
