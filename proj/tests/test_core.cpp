#include "doctest.h"

#include <random>
#include <sstream>

#include "panda/text.hpp"
#include "panda/trait.hpp"
#include "panda/trajectory.hpp"

using namespace panda;

TEST_CASE("trait names parse case-insensitively") {
  CHECK(parse_trait("ope") == TraitId::Ope);
  CHECK(parse_trait("NAR") == TraitId::Nar);
  CHECK(parse_trait("Psy.") == TraitId::Psy);
  CHECK_FALSE(parse_trait("Foo").has_value());
  CHECK_THROWS_AS(trait_from_string("openness!"), std::invalid_argument);
  for (TraitId t : kAllTraits) CHECK(trait_from_string(to_string(t)) == t);
}

TEST_CASE("valence is restricted to -1, 0, +1") {
  CHECK(Valence::high().value() == 1);
  CHECK(Valence::low().value() == -1);
  CHECK(Valence().value() == 0);
  CHECK_THROWS_AS(Valence(2), std::invalid_argument);
  CHECK_THROWS_AS(Valence(-3), std::invalid_argument);
}

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  CHECK(tokenize("Open the Window!") == std::vector<std::string>{"open", "the", "window"});
  CHECK(tokenize("  go-north  ") == std::vector<std::string>{"go", "north"});
  CHECK(tokenize("...").empty());
}

TEST_CASE("hashing is stable") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(mix64(1) == mix64(1));
  CHECK(mix64(1) != mix64(2));
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("uniform draws stay in range") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(uniform_index(rng, 3) < 3);
  }
}

namespace {

StepRecord sample_record(int t) {
  StepRecord r;
  r.t = t;
  r.place = "hall";
  r.observation = "A bare hall.";
  r.obs_hash = observation_hash(r.observation);
  r.candidates = {"go north", "wait"};
  r.chosen = 1;
  r.action = "wait";
  r.valences = {{TraitId::Ope, -1}, {TraitId::Con, 0}};
  r.reward = 0;
  r.score = 3;
  return r;
}

}  // namespace

TEST_CASE("trajectories survive a JSONL round trip") {
  Trajectory traj;
  for (int t = 0; t < 5; ++t) traj.push_back(sample_record(t));
  traj[2].source = "human";
  traj[3].chosen = -1;
  traj[3].action = "xyzzy";
  const auto text = to_jsonl(traj);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(parse_jsonl(text) == traj);
  CHECK(parse_jsonl("").empty());
}

TEST_CASE("the wire format carries the shared step fields") {
  const auto j = to_json(sample_record(0));
  for (const char* key : {"t", "place", "obs_hash", "candidates", "chosen", "valences", "reward", "score"})
    CHECK(j.contains(key));
  CHECK(j["valences"]["Ope"] == -1);
}

TEST_CASE("malformed step records are rejected") {
  auto j = to_json(sample_record(0));
  SUBCASE("chosen out of range") {
    j["chosen"] = 2;
    CHECK_THROWS_AS(step_record_from_json(j), TrajectoryFormatError);
  }
  SUBCASE("missing field") {
    j.erase("score");
    CHECK_THROWS_AS(step_record_from_json(j), TrajectoryFormatError);
  }
  SUBCASE("unknown trait") {
    j["valences"]["Foo"] = 1;
    CHECK_THROWS_AS(step_record_from_json(j), TrajectoryFormatError);
  }
  SUBCASE("valence out of range") {
    j["valences"]["Ope"] = 3;
    CHECK_THROWS_AS(step_record_from_json(j), TrajectoryFormatError);
  }
  SUBCASE("bad json line") { CHECK_THROWS_AS(parse_jsonl("{\"t\": 0\n"), TrajectoryFormatError); }
}
