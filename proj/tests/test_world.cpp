#include "doctest.h"

#include <algorithm>

#include "panda/world.hpp"
#include "support.hpp"

using namespace panda;
using panda::test::tiny_world;
using panda::test::tiny_world_json;

namespace {

std::string error_of(const nlohmann::json& doc) {
  try {
    parse_world(doc);
  } catch (const WorldError& e) {
    return e.what();
  }
  return "";
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("tiny world parses and its walkthrough reaches max score") {
  const auto w = tiny_world();
  CHECK(w.id == "tiny");
  CHECK(w.places.size() == 4);
  const auto replay = replay_walkthrough(w);
  CHECK(replay.score == w.max_score);
  CHECK(replay.trajectory.size() == w.walkthrough.size());
  CHECK(replay.trajectory.back().score == 6);
  for (const auto& rec : replay.trajectory) {
    CHECK(rec.source == "walkthrough");
    CHECK(rec.chosen >= 0);
  }
}

TEST_CASE("empty walkthrough replays to nothing") {
  auto doc = tiny_world_json();
  doc["walkthrough"] = nlohmann::json::array();
  const auto w = parse_world(doc);
  const auto r = replay_walkthrough(w);
  CHECK(r.score == 0);
  CHECK(r.trajectory.empty());
}

TEST_CASE("validation names the offending item") {
  auto doc = tiny_world_json();
  SUBCASE("dangling exit") {
    doc["places"][0]["exits"]["west"] = "cellar";
    CHECK(error_of(doc).find("cellar") != std::string::npos);
  }
  SUBCASE("duplicate place") {
    doc["places"].push_back(doc["places"][1]);
    CHECK(error_of(doc).find("study") != std::string::npos);
  }
  SUBCASE("missing start place") {
    doc["start_place"] = "garden";
    CHECK(error_of(doc).find("garden") != std::string::npos);
  }
  SUBCASE("unknown object in a rule") {
    doc["rules"][0]["effects"]["take"] = {"lamp"};
    CHECK(error_of(doc).find("lamp") != std::string::npos);
  }
  SUBCASE("flag nobody sets") {
    doc["rules"][2]["preconditions"]["flags"] = {"lights_on"};
    CHECK(error_of(doc).find("lights_on") != std::string::npos);
  }
  SUBCASE("rewards cannot cover max score") {
    doc["max_score"] = 7;
    CHECK_FALSE(error_of(doc).empty());
  }
  SUBCASE("walkthrough typo reports its index") {
    doc["walkthrough"][3] = "unlok vault";
    CHECK(error_of(doc).find("3") != std::string::npos);
  }
  SUBCASE("walkthrough short of max score") {
    doc["walkthrough"].erase(doc["walkthrough"].size() - 1);
    CHECK_FALSE(error_of(doc).empty());
  }
  SUBCASE("not an object") { CHECK_FALSE(error_of(nlohmann::json::array()).empty()); }
}

TEST_CASE("candidates are exits, rules located here and distractors") {
  auto doc = tiny_world_json();
  doc["distractors"]["study"] = {"sit down", "Take Key"};
  const auto w = parse_world(doc);
  auto s = reset(w, 0).first;
  s = step(w, s, "go north").state;
  // exits south and north, one rule, one new distractor; the case-variant duplicate is dropped
  CHECK(sorted(candidates(w, s)) == std::vector<std::string>{"go north", "go south", "sit down", "take key"});
}

TEST_CASE("candidate order depends only on the seed") {
  const auto w = tiny_world();
  auto [s1, o1] = reset(w, 1);
  auto [s1b, o1b] = reset(w, 1);
  CHECK(o1 == o1b);
  CHECK(sorted(o1.candidates) == std::vector<std::string>{"go east", "go north", "unlock vault", "wait"});

  bool some_order_differs = false;
  for (std::uint64_t seed = 2; seed < 20 && !some_order_differs; ++seed)
    some_order_differs = reset(w, seed).second.candidates != o1.candidates;
  CHECK(some_order_differs);
}

TEST_CASE("guarded exits and unknown actions leave the world unchanged") {
  const auto w = tiny_world();
  auto [s, o] = reset(w, 0);
  auto r = step(w, s, "go east");
  CHECK_FALSE(r.matched);
  CHECK(r.state.place == "hall");
  CHECK(r.state.step == 1);
  CHECK(r.reward == 0);
  CHECK(r.observation.text.find(kNothingHappens) != std::string::npos);

  auto r2 = step(w, s, "dance wildly");
  CHECK_FALSE(r2.matched);
  CHECK(r2.state.flags == s.flags);
}

TEST_CASE("rewards are paid once and the episode cap ends the episode") {
  const auto w = tiny_world();
  auto s = reset(w, 0).first;
  s = step(w, s, "go north").state;
  auto taken = step(w, s, "take key");
  CHECK(taken.reward == 1);
  CHECK(taken.state.inventory.count("key") == 1);
  // still offered in the study, but taking it again does nothing
  auto again = step(w, taken.state, "take key");
  CHECK_FALSE(again.matched);
  CHECK(again.reward == 0);
  CHECK(again.state.score == 1);

  auto a = reset(w, 0).first;
  StepResult last;
  for (int i = 0; i < 5; ++i) {
    last = step(w, a, "wait", 5);
    a = last.state;
  }
  CHECK(last.done);
  CHECK(a.step == 5);
}

TEST_CASE("observations report place, details and inventory") {
  const auto w = tiny_world();
  auto s = reset(w, 0).first;
  s = step(w, s, "go north").state;
  const auto r = step(w, s, "take key");
  CHECK(r.observation.text.find("Taken.") != std::string::npos);
  CHECK(r.observation.text.find("brass key") != std::string::npos);
}

TEST_CASE("place depths follow exits ignoring guards") {
  const auto d = place_depths(tiny_world());
  CHECK(d.at("hall") == 0);
  CHECK(d.at("study") == 1);
  CHECK(d.at("vault") == 1);
  CHECK(d.at("attic") == 2);
}

TEST_CASE("serialized worlds parse back to the same behaviour") {
  const auto w = tiny_world();
  const auto again = parse_world(world_to_json(w));
  CHECK(replay_walkthrough(again).trajectory == replay_walkthrough(w).trajectory);
}

TEST_CASE("environment wrapper tracks state") {
  Environment env(std::make_shared<const WorldSpec>(tiny_world()), 100);
  env.reset(3);
  CHECK(env.state().place == "hall");
  const auto r = env.step("go north");
  CHECK(env.state().place == "study");
  CHECK_FALSE(env.done());
  CHECK(r.matched);
}

TEST_CASE("every bundled world validates") {
  for (const auto& e : std::filesystem::directory_iterator(panda::test::data_dir() / "worlds")) {
    CAPTURE(e.path().string());
    const auto w = load_world(e.path());
    CHECK(replay_walkthrough(w).score == w.max_score);
  }
}
