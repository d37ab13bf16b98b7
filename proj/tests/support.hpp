#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "json.hpp"
#include "panda/oracle.hpp"
#include "panda/world.hpp"

namespace panda::test {

inline std::filesystem::path data_dir() { return PANDA_TEST_DATA_DIR; }

// hall(0) -> study(1) -> attic(2); hall -> vault(1) once the vault is unlocked.
inline nlohmann::json tiny_world_json() {
  return nlohmann::json::parse(R"({
    "id": "tiny",
    "start_place": "hall",
    "max_score": 6,
    "places": [
      {"id": "hall", "description": "A bare hall.",
       "exits": {"north": "study", "east": {"to": "vault", "guard": "vault_open"}}},
      {"id": "study", "description": "A dusty study.", "exits": {"south": "hall", "north": "attic"}},
      {"id": "attic", "description": "A cramped attic.", "exits": {"south": "study"}},
      {"id": "vault", "description": "A cold vault.", "exits": {"west": "hall"}}
    ],
    "objects": [{"id": "key", "name": "a brass key", "portable": true, "initial_place": "study"}],
    "rules": [
      {"text": "take key", "preconditions": {"place": "study"},
       "effects": {"take": ["key"], "text": "Taken."}, "reward": {"id": "key", "points": 1}},
      {"text": "unlock vault", "preconditions": {"place": "hall", "inventory": ["key"], "absent_flags": ["vault_open"]},
       "effects": {"set_flags": ["vault_open"], "text": "The vault door swings open."},
       "reward": {"id": "vault", "points": 2}},
      {"text": "open chest", "preconditions": {"place": "vault", "absent_flags": ["chest_open"]},
       "effects": {"set_flags": ["chest_open"], "text": "Gold!"}, "reward": {"id": "chest", "points": 3}}
    ],
    "walkthrough": ["go north", "take key", "go south", "unlock vault", "go east", "open chest"],
    "distractors": {"hall": ["wait"], "attic": ["take a nap"]}
  })");
}

inline WorldSpec tiny_world() { return parse_world(tiny_world_json()); }

inline nlohmann::json tiny_lexicon_json() {
  nlohmann::json doc = {{"threshold", 1}};
  for (TraitId t : kAllTraits) {
    const std::string name(to_string(t));
    doc[name] = {{{"pattern", "never" + name}, {"weight", 1}}};
  }
  doc["Ope"] = {{{"pattern", "go"}, {"weight", 1}},
                {{"pattern", "open"}, {"weight", 1}},
                {{"pattern", "wait"}, {"weight", -1}},
                {{"pattern", "take a nap"}, {"weight", -1}}};
  doc["Con"] = {{{"pattern", "take"}, {"weight", 1}}, {{"pattern", "nap"}, {"weight", -1}}};
  doc["Psy"] = {{{"pattern", "gold"}, {"weight", 1}, {"context", true}}};
  return doc;
}

/// Backend answering from a lexicon and counting calls.
class CountingBackend final : public OracleBackend {
 public:
  explicit CountingBackend(LexiconRules rules) : rules_(std::move(rules)) {}
  Valence classify(const OracleQuery& q) override {
    ++calls;
    return lexicon_valence(rules_, q);
  }
  std::string name() const override { return "counting"; }
  std::atomic<int> calls{0};

 private:
  LexiconRules rules_;
};

/// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("panda-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace panda::test
