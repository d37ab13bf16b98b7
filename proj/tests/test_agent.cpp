#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "panda/agent.hpp"

using namespace panda;

namespace {

TransitionPtr terminal(std::string obs, std::string action, double reward) {
  auto t = std::make_shared<Transition>();
  t->obs = std::move(obs);
  t->action = std::move(action);
  t->reward = reward;
  t->done = true;
  return t;
}

}  // namespace

TEST_CASE("shaping adds the weighted valence") {
  CHECK(shape_q(5.0, Valence::high(), 2.0) == 7.0);
  CHECK(shape_q(5.0, Valence::high(), -2.0) == 3.0);
  CHECK(shape_q(5.0, Valence::neutral(), -2.0) == 5.0);
  CHECK(shape_q(-1.5, Valence::low(), 2.0) == -3.5);
  CHECK_THROWS_AS(ShapingConfig::toward(TraitId::Ope, 0.0), std::invalid_argument);
  CHECK_FALSE(ShapingConfig::none().trait.has_value());
}

TEST_CASE("softmax is stable and normalized") {
  const std::vector<double> v{2.0, 0.0};
  const auto p = softmax(v);
  CHECK(p[0] == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.119203).epsilon(1e-6));

  const std::vector<double> huge{1000.0, 1000.0, 999.0};
  const auto q = softmax(huge);
  CHECK(q[0] == doctest::Approx(q[1]));
  CHECK(q[0] + q[1] + q[2] == doctest::Approx(1.0));
  CHECK_THROWS(softmax(std::vector<double>{}));
}

TEST_CASE("greedy selection breaks ties toward the lowest index") {
  std::mt19937_64 rng(1);
  const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  CHECK(argmax(v) == 1);
  CHECK(select_action(v, rng, Selection::Greedy) == 1);
}

TEST_CASE("sampling follows the softmax") {
  std::mt19937_64 rng(7);
  const std::vector<double> v{std::log(3.0), 0.0};  // 3:1
  int first = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) first += select_action(v, rng) == 0;
  CHECK(first / double(n) == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("encodings are sparse, sorted and unit length") {
  const QModel m(64, 4);
  const auto f = m.encode("Open the door, open it!");
  CHECK(f.norm() == doctest::Approx(1.0));
  for (std::size_t i = 1; i < f.entries.size(); ++i) CHECK(f.entries[i - 1].first < f.entries[i].first);
  CHECK(m.encode("").entries.empty());
  CHECK(m.encode("OPEN door").entries == m.encode("open door").entries);
}

TEST_CASE("analytic gradient matches finite differences") {
  auto m = QModel::random(3, 32, 8);
  const auto obs = m.encode("a cold vault with a chest");
  const auto act = m.encode("open chest");
  std::vector<double> grad(m.params().size(), 0.0);
  m.accumulate_gradient(obs, act, 1.0, grad);

  const double h = 1e-6;
  const std::vector<std::size_t> probes{m.obs_weight(obs.entries[0].first, 2), m.act_weight(act.entries[0].first, 5),
                                        m.hidden_bias(0), m.hidden_bias(7), m.out_weight(3), m.out_bias()};
  for (std::size_t i : probes) {
    const double saved = m.params()[i];
    m.params()[i] = saved + h;
    const double up = m.q_value(obs, act);
    m.params()[i] = saved - h;
    const double down = m.q_value(obs, act);
    m.params()[i] = saved;
    CAPTURE(i);
    CHECK(grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("TD updates converge on a single terminal transition") {
  auto m = QModel::random(11);
  const std::vector<TransitionPtr> batch{terminal("A dusty study.", "take key", 1.0)};
  TdParams p;
  double loss = 0.0;
  for (int i = 0; i < 500; ++i) loss = td_update(m, batch, p);
  CHECK(loss < 1e-3);
  CHECK(m.q_value("A dusty study.", "take key") == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("non-terminal targets bootstrap from the best next action") {
  auto m = QModel::random(5, 64, 16);
  auto t = std::make_shared<Transition>();
  t->obs = "hall";
  t->action = "go north";
  t->next_obs = "study";
  t->next_candidates = {"take key", "go south"};
  const std::vector<TransitionPtr> batch{t};
  const double target = 0.9 * std::max(m.q_value("study", "take key"), m.q_value("study", "go south"));
  const double err = m.q_value("hall", "go north") - target;
  CHECK(td_update(m, batch, TdParams{}) == doctest::Approx(err * err));
}

TEST_CASE("non-finite losses abort the update") {
  auto m = QModel::random(2, 32, 4);
  const std::vector<TransitionPtr> batch{terminal("o", "a", std::numeric_limits<double>::quiet_NaN())};
  const auto before = m;
  CHECK_THROWS_AS(td_update(m, batch, TdParams{}), NonFiniteLoss);
  CHECK(m == before);
}

TEST_CASE("replay keeps the newest items") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(Transition{"o" + std::to_string(i), "a", i == 0 ? 1.0 : 0.0, "", {}, true});
  CHECK(buf.size() == 3);
  CHECK(buf.reward_count() == 0);  // the rewarded item was evicted
  std::mt19937_64 rng(1);
  for (const auto& t : buf.sample(50, rng)) CHECK(t->obs >= "o2");
}

TEST_CASE("replay oversamples rewarded transitions") {
  ReplayBuffer buf(1000, 0.5);
  for (int i = 0; i < 1000; ++i) buf.push(Transition{"o", "a", i % 10 == 0 ? 1.0 : 0.0, "", {}, true});
  CHECK(buf.reward_count() == 100);
  std::mt19937_64 rng(42);
  std::size_t rewarded = 0, total = 0;
  for (int i = 0; i < 400; ++i)
    for (const auto& t : buf.sample(32, rng)) {
      rewarded += t->reward != 0.0;
      ++total;
    }
  // half the draws are forced, the rest hit rewards at the base rate 0.1
  CHECK(rewarded / double(total) == doctest::Approx(0.5 + 0.5 * 0.1).epsilon(0.05));

  ReplayBuffer dry(10);
  for (int i = 0; i < 10; ++i) dry.push(Transition{"o", "a", 0.0, "", {}, true});
  CHECK(dry.sample(8, rng).size() == 8);
  CHECK_THROWS_AS(ReplayBuffer(4).sample(3, rng), std::logic_error);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const auto m = QModel::random(9, 64, 8);
  std::stringstream first;
  write_checkpoint(first, m);
  const auto back = read_checkpoint(first);
  CHECK(back == m);
  CHECK(back.fingerprint() == m.fingerprint());
  std::stringstream second;
  write_checkpoint(second, back);
  CHECK(second.str() == first.str());

  std::string bytes = first.str();
  bytes[0] ^= 0x5a;
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
  std::stringstream cut(first.str().substr(0, 40));
  CHECK_THROWS_AS(read_checkpoint(cut), CheckpointError);
}

TEST_CASE("fingerprints separate different weights") {
  CHECK(QModel::random(1).fingerprint() != QModel::random(2).fingerprint());
  CHECK(QModel::random(1).fingerprint() == QModel::random(1).fingerprint());
}
