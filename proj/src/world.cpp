#include "panda/world.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include "panda/text.hpp"

namespace panda {

using nlohmann::json;

namespace {

std::string normalize_action(const std::string& text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::string movement_action(const std::string& direction) { return "go " + direction; }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

std::set<std::string> string_set(const json& j, const char* key) {
  return get_or(j, key, std::set<std::string>{});
}

std::vector<std::string> string_list(const json& j, const char* key) {
  return get_or(j, key, std::vector<std::string>{});
}

json set_json(const std::set<std::string>& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

bool preconditions_hold(const WorldSpec& world, const GameState& state, const ActionRule& rule) {
  const auto& pre = rule.pre;
  if (pre.place != kAnyPlace && pre.place != state.place) return false;
  for (const auto& f : pre.flags)
    if (!state.flags.contains(f)) return false;
  for (const auto& f : pre.absent_flags)
    if (state.flags.contains(f)) return false;
  for (const auto& o : pre.inventory)
    if (!state.inventory.contains(o)) return false;
  for (const auto& o : rule.effects.take) {
    auto it = state.object_at.find(o);
    if (it == state.object_at.end() || it->second != state.place) return false;
    if (!world.object(o).portable) return false;
  }
  for (const auto& o : rule.effects.drop)
    if (!state.inventory.contains(o)) return false;
  for (const auto& o : rule.effects.reveal) {
    auto it = state.object_at.find(o);
    if (it == state.object_at.end() || it->second != kNowhere) return false;
  }
  return true;
}

int apply_rule(const ActionRule& rule, GameState& s) {
  const auto& fx = rule.effects;
  for (const auto& f : fx.clear_flags) s.flags.erase(f);
  for (const auto& f : fx.set_flags) s.flags.insert(f);
  for (const auto& o : fx.take) {
    s.object_at.erase(o);
    s.inventory.insert(o);
  }
  for (const auto& o : fx.drop) {
    s.inventory.erase(o);
    s.object_at[o] = s.place;
  }
  for (const auto& o : fx.reveal) s.object_at[o] = s.place;
  for (const auto& o : fx.destroy) {
    s.inventory.erase(o);
    s.object_at[o] = kNowhere;
  }
  if (fx.move_to) s.place = *fx.move_to;

  if (!rule.reward) return 0;
  const auto& r = *rule.reward;
  if (r.once && s.claimed_rewards.contains(r.id)) return 0;
  s.claimed_rewards.insert(r.id);
  s.score += r.points;
  return r.points;
}

}  // namespace

// --- WorldSpec ------------------------------------------------------------

void WorldSpec::index() {
  place_index_.clear();
  object_index_.clear();
  for (std::size_t i = 0; i < places.size(); ++i) {
    if (!place_index_.emplace(places[i].id, i).second)
      throw WorldError("duplicate place id '" + places[i].id + "'");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!object_index_.emplace(objects[i].id, i).second)
      throw WorldError("duplicate object id '" + objects[i].id + "'");
  }
}

const Place& WorldSpec::place(const std::string& id) const {
  auto it = place_index_.find(id);
  if (it == place_index_.end()) throw WorldError("unknown place '" + id + "'");
  return places[it->second];
}

const GameObject& WorldSpec::object(const std::string& id) const {
  auto it = object_index_.find(id);
  if (it == object_index_.end()) throw WorldError("unknown object '" + id + "'");
  return objects[it->second];
}

bool WorldSpec::has_place(const std::string& id) const { return place_index_.contains(id); }
bool WorldSpec::has_object(const std::string& id) const { return object_index_.contains(id); }

// --- parsing --------------------------------------------------------------

WorldSpec parse_world(const json& doc) {
  WorldSpec w;
  try {
    if (!doc.is_object()) throw WorldError("world document must be a JSON object");
    w.id = doc.at("id").get<std::string>();
    w.start_place = doc.at("start_place").get<std::string>();
    w.max_score = doc.at("max_score").get<int>();
    w.walkthrough = doc.at("walkthrough").get<std::vector<std::string>>();

    for (const auto& jp : doc.at("places")) {
      Place p;
      p.id = jp.at("id").get<std::string>();
      p.description = jp.at("description").get<std::string>();
      if (auto it = jp.find("exits"); it != jp.end()) {
        for (const auto& [dir, je] : it->items()) {
          Exit e;
          if (je.is_string()) {
            e.target = je.get<std::string>();
          } else {
            e.target = je.at("to").get<std::string>();
            if (auto g = je.find("guard"); g != je.end() && !g->is_null()) e.guard = g->get<std::string>();
          }
          p.exits.emplace(dir, std::move(e));
        }
      }
      if (auto it = jp.find("details"); it != jp.end()) {
        for (const auto& jd : *it)
          p.details.push_back({jd.at("flag").get<std::string>(), jd.at("text").get<std::string>()});
      }
      w.places.push_back(std::move(p));
    }

    for (const auto& jo : doc.at("objects")) {
      GameObject o;
      o.id = jo.at("id").get<std::string>();
      o.name = jo.at("name").get<std::string>();
      o.portable = get_or(jo, "portable", true);
      o.initial_place = jo.at("initial_place").get<std::string>();
      w.objects.push_back(std::move(o));
    }

    for (const auto& jr : doc.at("rules")) {
      ActionRule r;
      r.text = jr.at("text").get<std::string>();
      if (auto it = jr.find("preconditions"); it != jr.end()) {
        const auto& jp = *it;
        r.pre.place = get_or(jp, "place", std::string(kAnyPlace));
        r.pre.flags = string_set(jp, "flags");
        r.pre.absent_flags = string_set(jp, "absent_flags");
        r.pre.inventory = string_set(jp, "inventory");
      }
      if (auto it = jr.find("effects"); it != jr.end()) {
        const auto& je = *it;
        if (auto m = je.find("move_to"); m != je.end() && !m->is_null()) r.effects.move_to = m->get<std::string>();
        r.effects.set_flags = string_set(je, "set_flags");
        r.effects.clear_flags = string_set(je, "clear_flags");
        r.effects.take = string_list(je, "take");
        r.effects.drop = string_list(je, "drop");
        r.effects.reveal = string_list(je, "reveal");
        r.effects.destroy = string_list(je, "destroy");
        r.effects.text = get_or(je, "text", std::string{});
      }
      if (auto it = jr.find("reward"); it != jr.end() && !it->is_null()) {
        Reward rw;
        rw.id = it->at("id").get<std::string>();
        rw.points = it->at("points").get<int>();
        rw.once = get_or(*it, "once", true);
        r.reward = std::move(rw);
      }
      w.rules.push_back(std::move(r));
    }

    if (auto it = doc.find("distractors"); it != doc.end() && !it->is_null())
      w.distractors = it->get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw WorldError(std::string("world parse error: ") + e.what());
  }
  validate_world(w);
  w.index();
  return w;
}

WorldSpec load_world(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WorldError("cannot open world file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw WorldError("world parse error in " + path.string() + ": " + e.what());
  }
  return parse_world(doc);
}

json world_to_json(const WorldSpec& w) {
  json places = json::array();
  for (const auto& p : w.places) {
    json exits = json::object();
    for (const auto& [dir, e] : p.exits) {
      json je{{"to", e.target}};
      if (e.guard) je["guard"] = *e.guard;
      exits[dir] = je;
    }
    json jp{{"id", p.id}, {"description", p.description}, {"exits", exits}};
    if (!p.details.empty()) {
      json details = json::array();
      for (const auto& d : p.details) details.push_back({{"flag", d.flag}, {"text", d.text}});
      jp["details"] = details;
    }
    places.push_back(jp);
  }
  json objects = json::array();
  for (const auto& o : w.objects)
    objects.push_back({{"id", o.id}, {"name", o.name}, {"portable", o.portable}, {"initial_place", o.initial_place}});
  json rules = json::array();
  for (const auto& r : w.rules) {
    json pre{{"place", r.pre.place},
             {"flags", set_json(r.pre.flags)},
             {"absent_flags", set_json(r.pre.absent_flags)},
             {"inventory", set_json(r.pre.inventory)}};
    json fx{{"set_flags", set_json(r.effects.set_flags)},
            {"clear_flags", set_json(r.effects.clear_flags)},
            {"take", r.effects.take},
            {"drop", r.effects.drop},
            {"reveal", r.effects.reveal},
            {"destroy", r.effects.destroy},
            {"text", r.effects.text}};
    if (r.effects.move_to) fx["move_to"] = *r.effects.move_to;
    json jr{{"text", r.text}, {"preconditions", pre}, {"effects", fx}};
    if (r.reward) jr["reward"] = {{"id", r.reward->id}, {"points", r.reward->points}, {"once", r.reward->once}};
    rules.push_back(jr);
  }
  return json{{"id", w.id},
              {"places", places},
              {"objects", objects},
              {"rules", rules},
              {"start_place", w.start_place},
              {"max_score", w.max_score},
              {"walkthrough", w.walkthrough},
              {"distractors", w.distractors}};
}

// --- validation -----------------------------------------------------------

void validate_world(const WorldSpec& world) {
  WorldSpec w = world;
  if (w.id.empty()) throw WorldError("world id is empty");
  if (w.places.empty()) throw WorldError("world '" + w.id + "' has no places");
  w.index();

  if (!w.has_place(w.start_place))
    throw WorldError("dangling reference: start_place '" + w.start_place + "' does not exist");

  std::set<std::string> settable;
  for (const auto& r : w.rules) settable.insert(r.effects.set_flags.begin(), r.effects.set_flags.end());
  auto check_flag = [&](const std::string& flag, const std::string& where) {
    if (!settable.contains(flag))
      throw WorldError("dangling reference: flag '" + flag + "' used by " + where + " is never set");
  };
  auto check_place = [&](const std::string& id, const std::string& where) {
    if (!w.has_place(id)) throw WorldError("dangling reference: place '" + id + "' used by " + where);
  };
  auto check_object = [&](const std::string& id, const std::string& where) {
    if (!w.has_object(id)) throw WorldError("dangling reference: object '" + id + "' used by " + where);
  };

  for (const auto& p : w.places) {
    if (p.description.empty()) throw WorldError("place '" + p.id + "' has an empty description");
    for (const auto& [dir, e] : p.exits) {
      check_place(e.target, "exit '" + dir + "' of place '" + p.id + "'");
      if (e.guard) check_flag(*e.guard, "exit '" + dir + "' of place '" + p.id + "'");
    }
    for (const auto& d : p.details) check_flag(d.flag, "details of place '" + p.id + "'");
  }
  for (const auto& o : w.objects) {
    if (o.initial_place != kInventory && o.initial_place != kNowhere)
      check_place(o.initial_place, "object '" + o.id + "'");
  }

  std::map<std::string, int> reward_points;
  for (const auto& r : w.rules) {
    if (normalize_action(r.text).empty()) throw WorldError("rule with empty text");
    const std::string where = "rule '" + r.text + "'";
    if (r.pre.place != kAnyPlace) check_place(r.pre.place, where);
    for (const auto& f : r.pre.flags) check_flag(f, where);
    for (const auto& o : r.pre.inventory) check_object(o, where);
    if (r.effects.move_to) check_place(*r.effects.move_to, where);
    for (const auto* list : {&r.effects.take, &r.effects.drop, &r.effects.reveal, &r.effects.destroy})
      for (const auto& o : *list) check_object(o, where);
    if (r.reward) {
      if (r.reward->points < 0) throw WorldError(where + " has negative reward points");
      if (r.reward->id.empty()) throw WorldError(where + " has a reward without id");
      auto [it, fresh] = reward_points.emplace(r.reward->id, r.reward->points);
      if (!fresh && it->second != r.reward->points)
        throw WorldError("reward '" + r.reward->id + "' declared with conflicting points");
    }
  }
  for (const auto& [place, list] : w.distractors) {
    check_place(place, "distractors");
    for (const auto& d : list)
      if (normalize_action(d).empty()) throw WorldError("empty distractor at place '" + place + "'");
  }

  int total = 0;
  for (const auto& [id, pts] : reward_points) total += pts;
  if (w.max_score < 0) throw WorldError("max_score must be non-negative");
  if (total < w.max_score)
    throw WorldError("reward points (" + std::to_string(total) + ") cannot reach max_score " +
                     std::to_string(w.max_score));

  if (!w.walkthrough.empty()) {
    const auto replay = replay_walkthrough(w);
    if (replay.score != w.max_score)
      throw WorldError("walkthrough scores " + std::to_string(replay.score) + " but max_score is " +
                       std::to_string(w.max_score));
  }
}

// --- dynamics -------------------------------------------------------------

std::string observe(const WorldSpec& world, const GameState& state, const std::string& event) {
  const Place& p = world.place(state.place);
  std::string text = p.description;
  for (const auto& d : p.details)
    if (state.flags.contains(d.flag)) text += " " + d.text;

  std::vector<std::string> visible;
  for (const auto& o : world.objects) {
    auto it = state.object_at.find(o.id);
    if (it != state.object_at.end() && it->second == state.place) visible.push_back(o.name);
  }
  auto join = [](const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) s += ", ";
      s += names[i];
    }
    return s;
  };
  if (!visible.empty()) text += "\nYou can see " + join(visible) + ".";
  if (!state.inventory.empty()) {
    std::vector<std::string> carried;
    for (const auto& o : world.objects)
      if (state.inventory.contains(o.id)) carried.push_back(o.name);
    text += "\nYou are carrying " + join(carried) + ".";
  }
  if (!event.empty()) text += "\n" + event;
  return text;
}

std::vector<std::string> candidates(const WorldSpec& world, const GameState& state) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& action) {
    if (seen.insert(normalize_action(action)).second) out.push_back(action);
  };
  for (const auto& [dir, exit] : world.place(state.place).exits) add(movement_action(dir));
  for (const auto& r : world.rules)
    if (r.pre.place == state.place || r.pre.place == kAnyPlace) add(r.text);
  if (auto it = world.distractors.find(state.place); it != world.distractors.end())
    for (const auto& d : it->second) add(d);

  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  keyed.reserve(out.size());
  for (auto& a : out) keyed.emplace_back(mix64(state.seed ^ fnv1a(normalize_action(a))), std::move(a));
  std::sort(keyed.begin(), keyed.end());
  out.clear();
  for (auto& [k, a] : keyed) out.push_back(std::move(a));
  return out;
}

std::pair<GameState, Observation> reset(const WorldSpec& world, std::uint64_t seed) {
  GameState s;
  s.place = world.start_place;
  s.seed = seed;
  for (const auto& o : world.objects) {
    if (o.initial_place == kInventory)
      s.inventory.insert(o.id);
    else
      s.object_at[o.id] = o.initial_place;
  }
  Observation obs{observe(world, s, ""), candidates(world, s)};
  return {std::move(s), std::move(obs)};
}

StepResult step(const WorldSpec& world, const GameState& state, const std::string& action,
                int steps_per_episode) {
  StepResult res;
  res.state = state;
  GameState& s = res.state;
  const std::string norm = normalize_action(action);
  std::string event;

  const Place& here = world.place(s.place);
  for (const auto& [dir, exit] : here.exits) {
    if (norm != normalize_action(movement_action(dir))) continue;
    if (!exit.guard || s.flags.contains(*exit.guard)) {
      s.place = exit.target;
      res.matched = true;
    }
    break;
  }
  if (!res.matched) {
    for (const auto& rule : world.rules) {
      if (normalize_action(rule.text) != norm || !preconditions_hold(world, s, rule)) continue;
      res.reward = apply_rule(rule, s);
      event = rule.effects.text;
      res.matched = true;
      break;
    }
  }
  if (!res.matched) event = kNothingHappens;

  ++s.step;
  res.observation = Observation{observe(world, s, event), candidates(world, s)};
  res.done = s.step >= steps_per_episode || res.observation.candidates.empty();
  return res;
}

WalkthroughReplay replay_walkthrough(const WorldSpec& world) {
  WalkthroughReplay out;
  auto [state, obs] = reset(world, 0);
  for (std::size_t i = 0; i < world.walkthrough.size(); ++i) {
    const auto& action = world.walkthrough[i];
    StepRecord rec;
    rec.t = static_cast<int>(i);
    rec.place = state.place;
    rec.observation = obs.text;
    rec.obs_hash = observation_hash(obs.text);
    rec.candidates = obs.candidates;
    rec.action = action;
    const auto norm = normalize_action(action);
    for (std::size_t c = 0; c < obs.candidates.size(); ++c)
      if (normalize_action(obs.candidates[c]) == norm) rec.chosen = static_cast<int>(c);
    rec.source = "walkthrough";

    auto res = step(world, state, action);
    if (!res.matched)
      throw WorldError("walkthrough step " + std::to_string(i) + " ('" + action + "') is a no-op in world '" +
                       world.id + "'");
    rec.reward = res.reward;
    rec.score = res.state.score;
    out.trajectory.push_back(std::move(rec));
    state = std::move(res.state);
    obs = std::move(res.observation);
  }
  out.score = state.score;
  return out;
}

std::map<std::string, int> place_depths(const WorldSpec& world) {
  std::map<std::string, int> depth;
  for (const auto& p : world.places) depth[p.id] = kUnreachable;
  std::deque<std::string> queue{world.start_place};
  depth[world.start_place] = 0;
  while (!queue.empty()) {
    const auto cur = queue.front();
    queue.pop_front();
    for (const auto& [dir, exit] : world.place(cur).exits) {
      int& d = depth[exit.target];
      if (d == kUnreachable) {
        d = depth[cur] + 1;
        queue.push_back(exit.target);
      }
    }
  }
  return depth;
}

// --- Environment ----------------------------------------------------------

Environment::Environment(std::shared_ptr<const WorldSpec> world, int steps_per_episode)
    : world_(std::move(world)), steps_per_episode_(steps_per_episode) {}

const Observation& Environment::reset(std::uint64_t seed) {
  auto [s, o] = panda::reset(*world_, seed);
  state_ = std::move(s);
  obs_ = std::move(o);
  done_ = obs_.candidates.empty();
  return obs_;
}

StepResult Environment::step(const std::string& action) {
  auto res = panda::step(*world_, state_, action, steps_per_episode_);
  state_ = res.state;
  obs_ = res.observation;
  done_ = res.done;
  return res;
}

}  // namespace panda
