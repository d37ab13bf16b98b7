#include "doctest.h"

#include <thread>

#include "httplib.h"
#include "panda/oracle.hpp"
#include "support.hpp"

using namespace panda;
using namespace std::chrono_literals;
using panda::test::CountingBackend;
using panda::test::tiny_lexicon_json;

namespace {

Valence classify(const LexiconRules& r, TraitId t, const std::string& action, const std::string& obs = "") {
  return lexicon_valence(r, OracleQuery{t, obs, action});
}

/// /valence endpoint on a free port, answering with `reply` and `status`.
struct FakeClassifier {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  FakeClassifier(std::string reply, int status = 200) {
    server.Post("/v1/valence", [this, reply, status](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      const auto body = nlohmann::json::parse(req.body);
      if (reply == "echo") {
        // high for anything containing "open", low otherwise
        const int v = body.at("action").get<std::string>().find("open") != std::string::npos ? 1 : -1;
        res.set_content(nlohmann::json{{"valence", v}}.dump(), "application/json");
      } else {
        res.set_content(reply, "application/json");
      }
      res.status = status;
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeClassifier() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

}  // namespace

TEST_CASE("lexicon matches whole tokens and phrases") {
  const auto r = parse_lexicon(tiny_lexicon_json());
  CHECK(classify(r, TraitId::Ope, "go north") == Valence::high());
  CHECK(classify(r, TraitId::Ope, "open chest") == Valence::high());
  CHECK(classify(r, TraitId::Ope, "wait") == Valence::low());
  CHECK(classify(r, TraitId::Ope, "take a nap") == Valence::low());
  CHECK(classify(r, TraitId::Ope, "take nap") == Valence::neutral());  // phrase must be contiguous
  CHECK(classify(r, TraitId::Ope, "reopen") == Valence::neutral());    // no partial-token hits
  CHECK(classify(r, TraitId::Con, "take a nap") == Valence::neutral());  // +1 and -1 cancel
  CHECK(classify(r, TraitId::Ext, "go north") == Valence::neutral());
}

TEST_CASE("context patterns also look at the observation") {
  const auto r = parse_lexicon(tiny_lexicon_json());
  CHECK(classify(r, TraitId::Psy, "look", "Gold glitters here.") == Valence::high());
  CHECK(classify(r, TraitId::Psy, "look", "An empty room.") == Valence::neutral());
  CHECK(classify(r, TraitId::Ope, "look", "You could go north.") == Valence::neutral());
}

TEST_CASE("threshold gates weak evidence") {
  auto doc = tiny_lexicon_json();
  doc["threshold"] = 2;
  const auto r = parse_lexicon(doc);
  CHECK(classify(r, TraitId::Ope, "go") == Valence::neutral());
  CHECK(classify(r, TraitId::Ope, "go open") == Valence::high());
}

TEST_CASE("malformed lexicons are rejected") {
  auto doc = tiny_lexicon_json();
  SUBCASE("missing trait") { doc.erase("Mac"); }
  SUBCASE("zero weight") { doc["Ope"][0]["weight"] = 0; }
  SUBCASE("duplicate pattern") { doc["Ope"].push_back({{"pattern", "GO"}, {"weight", -1}}); }
  SUBCASE("bad threshold") { doc["threshold"] = 0; }
  SUBCASE("wrong type") { doc["Ope"][0]["weight"] = "one"; }
  CHECK_THROWS_AS(parse_lexicon(doc), OracleError);
}

TEST_CASE("bundled lexicon loads") {
  const auto r = load_lexicon(panda::test::data_dir() / "lexicons" / "default.lexicon.json");
  for (TraitId t : kAllTraits) CHECK_FALSE(r.of(t).empty());
  CHECK(classify(r, TraitId::Ope, "open window") == Valence::high());
}

TEST_CASE("the cache answers repeated queries without the backend") {
  auto backend = std::make_shared<CountingBackend>(parse_lexicon(tiny_lexicon_json()));
  ValenceOracle oracle(backend);
  for (int i = 0; i < 3; ++i) {
    oracle.classify(TraitId::Ope, "A bare hall.", "go north");
    oracle.classify(TraitId::Ope, "A bare hall.", "wait");
  }
  oracle.classify(TraitId::Con, "A bare hall.", "wait");     // different trait
  oracle.classify(TraitId::Ope, "A dusty study.", "wait");  // different observation
  CHECK(backend->calls == 4);
  CHECK(oracle.backend_calls() == 4);
  CHECK(oracle.cache_hits() == 4);
  CHECK(oracle.cache_size() == 4);

  oracle.set_cache_enabled(false);
  oracle.classify(TraitId::Ope, "A bare hall.", "go north");
  CHECK(backend->calls == 5);
}

TEST_CASE("concurrent lookups agree with the backend") {
  auto backend = std::make_shared<CountingBackend>(parse_lexicon(tiny_lexicon_json()));
  ValenceOracle oracle(backend);
  std::vector<std::thread> pool;
  std::atomic<int> wrong{0};
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        const std::string obs = "room " + std::to_string(i % 17);
        if (oracle.classify(TraitId::Ope, obs, "go north") != Valence::high()) ++wrong;
        if (oracle.classify(TraitId::Ope, obs, "wait") != Valence::low()) ++wrong;
      }
    });
  for (auto& th : pool) th.join();
  CHECK(wrong == 0);
  CHECK(oracle.cache_size() == 34);
  CHECK(oracle.backend_calls() >= 34);
}

TEST_CASE("queries need an action") {
  ValenceOracle oracle(std::make_shared<LexiconBackend>(parse_lexicon(tiny_lexicon_json())));
  CHECK_THROWS_AS(oracle.classify(TraitId::Ope, "obs", ""), OracleError);
  CHECK_THROWS_AS(make_oracle("magic:8ball"), OracleError);
  CHECK_THROWS_AS(make_oracle("lexicon:/no/such/file.json"), OracleError);
}

TEST_CASE("annotation fills the requested traits only") {
  ValenceOracle oracle(std::make_shared<LexiconBackend>(parse_lexicon(tiny_lexicon_json())));
  Trajectory traj(2);
  traj[0].candidates = {"go north", "wait"};
  traj[0].chosen = 0;
  traj[0].action = "go north";
  traj[1].candidates = {"take a nap"};
  traj[1].chosen = 0;
  traj[1].action = "take a nap";
  const std::array traits{TraitId::Ope, TraitId::Con};
  const auto out = annotate_trajectory(oracle, traj, traits);
  CHECK(out[0].valences.size() == 2);
  CHECK(out[0].valences.at(TraitId::Ope) == 1);
  CHECK(out[1].valences.at(TraitId::Ope) == -1);
  CHECK(out[1].valences.at(TraitId::Con) == 0);
  CHECK(annotate_trajectory(oracle, out, traits) == out);
}

TEST_CASE("remote backend speaks the valence protocol") {
  FakeClassifier fake("echo");
  auto oracle = make_oracle("remote:" + fake.url());
  CHECK(oracle->classify(TraitId::Ope, "A hall.", "open door") == Valence::high());
  CHECK(oracle->classify(TraitId::Ope, "A hall.", "sleep") == Valence::low());
  CHECK(oracle->classify(TraitId::Ope, "A hall.", "open door") == Valence::high());
  CHECK(fake.hits == 2);
}

TEST_CASE("remote protocol errors are not retried") {
  SUBCASE("server error") {
    FakeClassifier fake(R"({"valence": 1})", 500);
    RemoteBackend backend(fake.url());
    CHECK_THROWS_AS(backend.classify({TraitId::Ope, "o", "a"}), ProtocolError);
    CHECK(fake.hits == 1);
  }
  SUBCASE("malformed reply") {
    FakeClassifier fake(R"({"label": "high"})");
    RemoteBackend backend(fake.url());
    CHECK_THROWS_AS(backend.classify({TraitId::Ope, "o", "a"}), ProtocolError);
  }
  SUBCASE("valence out of range") {
    FakeClassifier fake(R"({"valence": 4})");
    RemoteBackend backend(fake.url());
    CHECK_THROWS_AS(backend.classify({TraitId::Ope, "o", "a"}), ProtocolError);
  }
}

TEST_CASE("unreachable remote fails after bounded retries") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }  // closed again: nothing listens here
  RemoteOptions opts;
  opts.timeout = 200ms;
  opts.backoff = 1ms;
  RemoteBackend backend("http://127.0.0.1:" + std::to_string(port), opts);
  try {
    backend.classify({TraitId::Ope, "o", "a"});
    FAIL("expected an OracleError");
  } catch (const ProtocolError&) {
    FAIL("transport failures are not protocol errors");
  } catch (const OracleError& e) {
    CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
  }
}
