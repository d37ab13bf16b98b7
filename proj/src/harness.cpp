#include "panda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "panda/text.hpp"

namespace panda {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in (0, 1)");
  if (batch <= 0 || grad_clip <= 0.0 || steps_per_episode <= 0 || max_steps <= 0 || early_stop <= 0 ||
      n_envs <= 0 || learning_rate <= 0.0 || replay_capacity == 0 || update_every <= 0)
    throw std::invalid_argument("training hyperparameters must be positive");
}

AgentConfig parse_agent(const std::string& label, double weight_magnitude) {
  AgentConfig a;
  a.label = label;
  if (label == "NP") return a;
  if (label == "random") {
    a.policy = PolicyKind::Uniform;
    return a;
  }
  const auto us = label.find('_');
  if (us != std::string::npos) {
    const auto trait = parse_trait(label.substr(0, us));
    const auto dir = label.substr(us + 1);
    if (trait && (dir == "up" || dir == "down")) {
      a.shaping = ShapingConfig::toward(*trait, dir == "up" ? weight_magnitude : -weight_magnitude);
      a.label = agent_label(a.shaping);
      return a;
    }
  }
  throw std::invalid_argument("unknown agent label '" + label + "' (expected NP, random or <Trait>_up/_down)");
}

std::string agent_label(const ShapingConfig& shaping) {
  if (!shaping.trait) return "NP";
  return std::string(to_string(*shaping.trait)) + (shaping.weight > 0 ? "_up" : "_down");
}

std::vector<std::string> standard_agent_labels() {
  std::vector<std::string> out{"NP"};
  for (TraitId t : kAllTraits) {
    out.push_back(std::string(to_string(t)) + "_up");
    out.push_back(std::string(to_string(t)) + "_down");
  }
  return out;
}

std::vector<std::size_t> RunLog::complete_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < episodes.size(); ++i)
    if (!episodes[i].truncated) out.push_back(i);
  return out;
}

// --- serialization --------------------------------------------------------

namespace {
std::string episode_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.jsonl", index);
  return buf;
}
}  // namespace

json to_json(const RunLog& log) {
  json episodes = json::array();
  for (const auto& e : log.episodes)
    episodes.push_back({{"index", e.index},
                        {"env", e.env},
                        {"score", e.score},
                        {"length", e.length},
                        {"end_step", e.end_step},
                        {"truncated", e.truncated},
                        {"file", "episodes/" + episode_file(e.index)}});
  json curve = json::array();
  for (const auto& [s, v] : log.curve) curve.push_back({s, v});
  return json{{"world", log.world_id},
              {"agent", log.agent},
              {"seed", log.seed},
              {"total_steps", log.total_steps},
              {"early_stopped", log.early_stopped},
              {"oracle_queries", log.oracle_queries},
              {"model_fingerprint", log.model_fingerprint},
              {"episodes", episodes},
              {"curve", curve}};
}

RunLog runlog_from_json(const json& j) {
  RunLog log;
  log.world_id = j.at("world").get<std::string>();
  log.agent = j.at("agent").get<std::string>();
  log.seed = j.at("seed").get<std::uint64_t>();
  log.total_steps = j.at("total_steps").get<long>();
  log.early_stopped = j.value("early_stopped", false);
  log.oracle_queries = j.value("oracle_queries", std::uint64_t{0});
  log.model_fingerprint = j.value("model_fingerprint", std::string{});
  for (const auto& je : j.at("episodes")) {
    EpisodeSummary e;
    e.index = je.at("index").get<int>();
    e.env = je.value("env", 0);
    e.score = je.at("score").get<int>();
    e.length = je.at("length").get<int>();
    e.end_step = je.at("end_step").get<long>();
    e.truncated = je.value("truncated", false);
    log.episodes.push_back(e);
  }
  for (const auto& p : j.at("curve")) log.curve.emplace_back(p.at(0).get<long>(), p.at(1).get<double>());
  return log;
}

std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& world,
                                    const std::string& agent, std::uint64_t seed) {
  return root / world / agent / std::to_string(seed);
}

RunLog load_run(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "runlog.json");
  if (!in) throw std::runtime_error("missing runlog.json in " + run_dir.string());
  RunLog log = runlog_from_json(json::parse(in));
  for (const auto& e : log.episodes) log.trajectories.push_back(load_jsonl(run_dir / "episodes" / episode_file(e.index)));
  return log;
}

// --- training -------------------------------------------------------------

namespace {

struct Stream {
  Environment env;
  std::mt19937_64 rng;
  Trajectory traj;
  int episodes_started = 0;
};

std::uint64_t episode_seed(std::uint64_t run_seed, int env, int episode) {
  return mix64(mix64(run_seed) ^ mix64(static_cast<std::uint64_t>(env) << 32 | static_cast<std::uint32_t>(episode)));
}

}  // namespace

TrainingResult run_training(const WorldSpec& world, const AgentConfig& agent, ValenceOracle* oracle,
                            const TrainingOptions& options) {
  const TrainConfig& cfg = agent.train;
  cfg.validate();
  if (agent.shaping.trait && !oracle) throw std::invalid_argument("agent " + agent.label + " needs an oracle");

  TrainingResult result{RunLog{}, QModel::random(mix64(cfg.seed ^ 0x51ed), cfg.hash_dim, cfg.hidden_dim)};
  RunLog& log = result.log;
  QModel& model = result.model;
  log.world_id = world.id;
  log.agent = agent.label;
  log.seed = cfg.seed;

  std::optional<std::filesystem::path> episodes_dir;
  if (options.run_dir) {
    episodes_dir = *options.run_dir / "episodes";
    std::filesystem::create_directories(*episodes_dir);
  }

  auto world_ptr = std::make_shared<const WorldSpec>(world);
  std::vector<Stream> streams;
  streams.reserve(static_cast<std::size_t>(cfg.n_envs));
  for (int e = 0; e < cfg.n_envs; ++e) {
    streams.push_back(Stream{Environment(world_ptr, cfg.steps_per_episode), std::mt19937_64(episode_seed(cfg.seed, e, -1)), {}, 0});
    streams.back().env.reset(episode_seed(cfg.seed, e, 0));
    streams.back().episodes_started = 1;
  }

  ReplayBuffer replay(cfg.replay_capacity, cfg.replay_priority);
  std::mt19937_64 replay_rng(mix64(cfg.seed ^ 0xbadc0ffee));
  FeatureCache features(model);
  const TdParams td{cfg.discount, cfg.grad_clip, cfg.learning_rate};
  const std::uint64_t oracle_calls_before = oracle ? oracle->backend_calls() : 0;

  std::vector<int> complete_scores;
  double best_avg = -std::numeric_limits<double>::infinity();
  long last_improvement = 0;
  bool have_avg = false;

  auto finish_episode = [&](Stream& s, int env_index, bool truncated) {
    EpisodeSummary e;
    e.index = static_cast<int>(log.episodes.size());
    e.env = env_index;
    e.length = static_cast<int>(s.traj.size());
    e.score = s.traj.empty() ? 0 : s.traj.back().score;
    e.end_step = log.total_steps;
    e.truncated = truncated;
    if (episodes_dir) save_jsonl(*episodes_dir / episode_file(e.index), s.traj);
    log.episodes.push_back(e);
    log.trajectories.push_back(std::move(s.traj));
    s.traj.clear();
    if (options.on_episode) options.on_episode(e);
    if (truncated) return;

    complete_scores.push_back(e.score);
    if (complete_scores.size() >= 50) {
      const double avg =
          std::accumulate(complete_scores.end() - 50, complete_scores.end(), 0.0) / 50.0;
      if (!have_avg || avg > best_avg) {
        best_avg = avg;
        last_improvement = log.total_steps;
        have_avg = true;
      }
    }
  };

  auto valence_of = [&](const std::string& obs, const std::string& action) -> Valence {
    try {
      return oracle->classify(*agent.shaping.trait, obs, action);
    } catch (const OracleError&) {
      if (agent.on_oracle_failure == OracleFailure::Neutral) return Valence::neutral();
      throw;
    }
  };

  std::vector<double> q, values;
  bool stop = false;
  while (!stop && log.total_steps < cfg.max_steps) {
    for (int e = 0; e < cfg.n_envs && !stop; ++e) {
      if (log.total_steps >= cfg.max_steps) break;
      Stream& s = streams[static_cast<std::size_t>(e)];
      const Observation obs = s.env.observation();
      const auto& cands = obs.candidates;

      StepRecord rec;
      rec.t = s.env.state().step;
      rec.place = s.env.state().place;
      rec.observation = obs.text;
      rec.obs_hash = observation_hash(obs.text);
      rec.candidates = cands;

      std::size_t choice = 0;
      if (agent.policy == PolicyKind::Uniform) {
        choice = uniform_index(s.rng, cands.size());
      } else {
        const Features& of = features.get(obs.text);
        q.resize(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i) q[i] = model.q_value(of, features.get(cands[i]));
        values = q;
        if (agent.shaping.trait) {
          for (std::size_t i = 0; i < cands.size(); ++i) {
            const Valence v = valence_of(obs.text, cands[i]);
            values[i] = shape_q(q[i], v, agent.shaping.weight);
          }
        }
        choice = select_action(cfg.sample_shaped ? std::span<const double>(values) : std::span<const double>(q), s.rng);
      }
      rec.chosen = static_cast<int>(choice);
      rec.action = cands[choice];
      if (agent.shaping.trait) rec.valences[*agent.shaping.trait] = valence_of(obs.text, rec.action).value();

      const StepResult res = s.env.step(rec.action);
      ++log.total_steps;
      rec.reward = res.reward;
      rec.score = res.state.score;
      s.traj.push_back(std::move(rec));

      if (agent.policy == PolicyKind::Learned) {
        replay.push(Transition{obs.text, cands[choice], static_cast<double>(res.reward), res.observation.text,
                               res.observation.candidates, res.done});
        if (log.total_steps % cfg.update_every == 0 && replay.size() >= static_cast<std::size_t>(cfg.batch)) {
          const auto batch = replay.sample(static_cast<std::size_t>(cfg.batch), replay_rng);
          td_update(model, batch, td, &features);
        }
      }

      if (res.done) {
        finish_episode(s, e, false);
        s.env.reset(episode_seed(cfg.seed, e, s.episodes_started++));
      }
      if (have_avg && log.total_steps - last_improvement >= cfg.early_stop) {
        log.early_stopped = true;
        stop = true;
      }
    }
  }
  for (int e = 0; e < cfg.n_envs; ++e) {
    Stream& s = streams[static_cast<std::size_t>(e)];
    if (!s.traj.empty()) finish_episode(s, e, true);
  }

  log.oracle_queries = oracle ? oracle->backend_calls() - oracle_calls_before : 0;
  log.model_fingerprint = hex64(model.fingerprint());
  log.curve = learning_curve(log, 100);

  if (options.run_dir) {
    std::ofstream out(*options.run_dir / "runlog.json");
    out << to_json(log).dump(2) << '\n';
    if (agent.policy == PolicyKind::Learned) save_checkpoint(*options.run_dir / "checkpoint.bin", model);
  }
  return result;
}

// --- curves and windows ---------------------------------------------------

std::vector<std::pair<long, double>> learning_curve(const RunLog& log, long interval) {
  if (interval <= 0) throw std::invalid_argument("curve interval must be positive");
  std::vector<std::pair<long, double>> out;
  double last = 0.0;
  std::size_t next = 0;
  std::vector<const EpisodeSummary*> done;
  for (const auto& e : log.episodes)
    if (!e.truncated) done.push_back(&e);
  std::stable_sort(done.begin(), done.end(), [](auto* a, auto* b) { return a->end_step < b->end_step; });
  for (long b = interval; b <= log.total_steps; b += interval) {
    double sum = 0.0;
    int n = 0;
    while (next < done.size() && done[next]->end_step <= b) {
      sum += done[next]->score;
      ++n;
      ++next;
    }
    if (n > 0) last = sum / n;
    out.emplace_back(b, last);
  }
  return out;
}

std::vector<std::size_t> first_episodes(const RunLog& log, std::size_t count) {
  auto idx = log.complete_indices();
  if (idx.size() > count) idx.resize(count);
  return idx;
}

std::vector<std::size_t> last_episodes(const RunLog& log, std::size_t count) {
  auto idx = log.complete_indices();
  if (idx.size() > count) idx.erase(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(count));
  return idx;
}

double mean_last_scores(const RunLog& log, std::size_t count) {
  auto idx = last_episodes(log, count);
  if (idx.empty()) {
    // only truncated episodes: fall back to whatever exists
    for (std::size_t i = 0; i < log.episodes.size(); ++i) idx.push_back(i);
    if (idx.size() > count) idx.erase(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(count));
  }
  if (idx.empty()) throw AggregationError("run " + log.world_id + "/" + log.agent + " has no episodes");
  double s = 0.0;
  for (auto i : idx) s += log.episodes[i].score;
  return s / static_cast<double>(idx.size());
}

// --- aggregation ----------------------------------------------------------

std::optional<std::size_t> ScoreMatrix::find_column(const std::string& agent) const {
  auto it = std::find(agents.begin(), agents.end(), agent);
  if (it == agents.end()) return std::nullopt;
  return static_cast<std::size_t>(it - agents.begin());
}

std::size_t ScoreMatrix::column(const std::string& agent) const {
  if (auto c = find_column(agent)) return *c;
  throw AggregationError("score matrix has no column '" + agent + "'");
}

std::vector<double> ScoreMatrix::column_values(const std::string& agent) const {
  const auto c = column(agent);
  std::vector<double> out;
  out.reserve(games.size());
  for (const auto& row : mean) out.push_back(row[c]);
  return out;
}

ScoreMatrix aggregate_scores(const std::vector<RunLog>& logs, std::size_t window) {
  if (logs.empty()) throw AggregationError("no runs to aggregate");
  std::set<std::string> games, agents;
  std::set<std::uint64_t> seeds;
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, const RunLog*>> cells;
  for (const auto& l : logs) {
    games.insert(l.world_id);
    agents.insert(l.agent);
    seeds.insert(l.seed);
    if (!cells[{l.world_id, l.agent}].emplace(l.seed, &l).second)
      throw AggregationError("duplicate run for (" + l.world_id + ", " + l.agent + ", seed " + std::to_string(l.seed) + ")");
  }

  ScoreMatrix m;
  m.games.assign(games.begin(), games.end());
  // standard label order first, then anything else alphabetically
  for (const auto& label : standard_agent_labels())
    if (agents.erase(label)) m.agents.push_back(label);
  m.agents.insert(m.agents.end(), agents.begin(), agents.end());

  for (const auto& g : m.games) {
    std::vector<double> means, stds;
    std::vector<bool> flags;
    for (const auto& a : m.agents) {
      auto it = cells.find({g, a});
      if (it == cells.end() || it->second.size() != seeds.size())
        throw AggregationError("missing runs for cell (" + g + ", " + a + ")");
      std::vector<double> per_seed;
      bool flagged = false;
      for (const auto& [seed, log] : it->second) {
        per_seed.push_back(mean_last_scores(*log, window));
        flagged = flagged || log->complete_indices().size() < window;
      }
      const double mu = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / static_cast<double>(per_seed.size());
      double var = 0.0;
      for (double x : per_seed) var += (x - mu) * (x - mu);
      var /= static_cast<double>(per_seed.size());
      means.push_back(mu);
      stds.push_back(std::sqrt(var));
      flags.push_back(flagged);
    }
    m.mean.push_back(std::move(means));
    m.std.push_back(std::move(stds));
    m.flagged.push_back(std::move(flags));
  }
  return m;
}

std::string score_matrix_to_csv(const ScoreMatrix& m) {
  std::ostringstream os;
  os << "game";
  for (const auto& a : m.agents) os << ',' << a;
  os << '\n';
  char buf[64];
  for (std::size_t g = 0; g < m.games.size(); ++g) {
    os << m.games[g];
    for (double v : m.mean[g]) {
      std::snprintf(buf, sizeof buf, "%.6g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

ScoreMatrix parse_score_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ScoreMatrix m;
  bool header = false;
  int lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream cs(s);
    while (std::getline(cs, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (!header) {
      if (cells.size() < 2) throw AggregationError("score matrix header needs at least one agent column");
      m.agents.assign(cells.begin() + 1, cells.end());
      header = true;
      continue;
    }
    if (cells.size() != m.agents.size() + 1)
      throw AggregationError("score matrix line " + std::to_string(lineno) + " is not rectangular");
    m.games.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[i], &used));
        if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
      } catch (const std::exception&) {
        throw AggregationError("bad number '" + cells[i] + "' on score matrix line " + std::to_string(lineno));
      }
    }
    m.mean.push_back(std::move(row));
    m.std.emplace_back(m.agents.size(), 0.0);
    m.flagged.emplace_back(m.agents.size(), false);
  }
  if (!header) throw AggregationError("score matrix is empty");
  return m;
}

ScoreMatrix load_score_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AggregationError("cannot read score matrix " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_score_matrix_csv(ss.str());
}

}  // namespace panda
