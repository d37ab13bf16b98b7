#include "panda/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "panda/analytics.hpp"
#include "panda/harness.hpp"
#include "panda/oracle.hpp"
#include "panda/session.hpp"
#include "panda/world.hpp"

#ifndef PANDA_DATA_DIR
#define PANDA_DATA_DIR "."
#endif

namespace panda {

namespace fs = std::filesystem;

namespace {

fs::path env_or(const char* var, const fs::path& fallback) {
  const char* v = std::getenv(var);
  return v && *v ? fs::path(v) : fallback;
}

fs::path default_worlds_dir() { return env_or("PANDA_WORLDS_DIR", fs::path(PANDA_DATA_DIR) / "worlds"); }

std::string default_oracle() {
  return "lexicon:" + (fs::path(PANDA_DATA_DIR) / "lexicons" / "default.lexicon.json").string();
}

WorldSpec resolve_world(const std::string& arg, const fs::path& worlds_dir) {
  if (fs::is_regular_file(arg)) return load_world(arg);
  const auto named = worlds_dir / (arg + ".world.json");
  if (fs::is_regular_file(named)) return load_world(named);
  if (fs::is_directory(worlds_dir)) {
    auto all = load_world_dir(worlds_dir);
    if (auto it = all.find(arg); it != all.end()) return *it->second;
  }
  throw WorldError("unknown world '" + arg + "' (not a file, and not found in " + worlds_dir.string() + ")");
}

/// A single .jsonl file or every .jsonl file in a directory (recursively).
std::vector<Trajectory> load_trajectories(const fs::path& p) {
  if (fs::is_regular_file(p)) return {load_jsonl(p)};
  if (!fs::is_directory(p)) throw std::runtime_error("no such trajectory file or directory: " + p.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> out;
  for (const auto& f : files) out.push_back(load_jsonl(f));
  return out;
}

std::vector<std::uint64_t> seeds_present(const fs::path& agent_dir) {
  std::vector<std::uint64_t> seeds;
  if (!fs::is_directory(agent_dir)) return seeds;
  for (const auto& e : fs::directory_iterator(agent_dir))
    if (e.is_directory() && fs::exists(e.path() / "runlog.json")) seeds.push_back(std::stoull(e.path().filename()));
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

std::vector<std::string> agents_present(const fs::path& world_dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(world_dir)) return out;
  std::set<std::string> found;
  for (const auto& e : fs::directory_iterator(world_dir))
    if (e.is_directory()) found.insert(e.path().filename().string());
  for (const auto& l : standard_agent_labels())
    if (found.erase(l)) out.push_back(l);
  if (found.erase("random")) out.push_back("random");
  out.insert(out.end(), found.begin(), found.end());
  return out;
}

std::vector<RunLog> load_runs(const fs::path& root, const std::string& world, const std::string& agent,
                              const std::vector<std::uint64_t>& seeds) {
  std::vector<RunLog> logs;
  const auto use = seeds.empty() ? seeds_present(root / world / agent) : seeds;
  for (auto s : use) logs.push_back(load_run(run_directory(root, world, agent, s)));
  if (logs.empty()) throw std::runtime_error("no runs found for " + world + "/" + agent + " under " + root.string());
  return logs;
}

std::vector<Trajectory> pooled_window(const std::vector<RunLog>& logs, Window w) {
  std::vector<Trajectory> out;
  for (const auto& l : logs) {
    auto part = window_trajectories(l, w);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

struct TrainJob {
  std::string agent;
  std::uint64_t seed;
};

struct Common {
  fs::path runs;
  fs::path worlds_dir;
  std::string oracle;
  bool json = false;
};

}  // namespace

fs::path default_runs_root() { return env_or("PANDA_RUNS_DIR", "runs"); }

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"panda: personality-shaped text-game agents workbench", "panda"};
  app.set_version_flag("--version", std::string("panda ") + PANDA_VERSION);
  app.require_subcommand(1);

  Common c;
  c.runs = default_runs_root();
  c.worlds_dir = default_worlds_dir();
  c.oracle = default_oracle();

  auto add_runs = [&](CLI::App* s) { s->add_option("--runs", c.runs, "runs root (default $PANDA_RUNS_DIR or ./runs)"); };
  auto add_worlds_dir = [&](CLI::App* s) { s->add_option("--worlds-dir", c.worlds_dir, "directory of *.world.json"); };
  auto add_oracle = [&](CLI::App* s) {
    s->add_option("--oracle", c.oracle, "valence oracle: lexicon:<path> | remote:<url>");
  };
  auto add_json = [&](CLI::App* s) { s->add_flag("--json", c.json, "print a JSON report"); };

  // validate
  auto* validate = app.add_subcommand("validate", "check world files");
  std::vector<std::string> validate_paths;
  validate->add_option("worlds", validate_paths, "world files")->required();

  // train
  auto* train = app.add_subcommand("train", "train agents and persist run directories");
  std::string world_arg;
  std::vector<std::string> agents;
  std::vector<std::uint64_t> seeds;
  long steps = 0;
  double lr = 0.0;
  bool all = false;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string on_failure = "abort";
  train->add_option("--world", world_arg, "world id or path")->required();
  train->add_option("--agent", agents, "agent label (NP, random, <Trait>_up, <Trait>_down); repeatable");
  train->add_option("--seed", seeds, "seed; repeatable (default 1)");
  train->add_option("--steps", steps, "environment steps per run")->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber);
  train->add_flag("--all", all, "all 17 standard agents over seeds 1,2,3 (unless --seed given)");
  train->add_option("--jobs", jobs, "parallel runs for --all")->check(CLI::PositiveNumber);
  train->add_option("--on-oracle-failure", on_failure, "abort | neutral")->check(CLI::IsMember({"abort", "neutral"}));
  train->add_option("--out", c.runs, "runs root (default $PANDA_RUNS_DIR or ./runs)");
  add_worlds_dir(train);
  add_oracle(train);

  // serve
  auto* serve = app.add_subcommand("serve", "run the /v1 session HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path sessions_dir;
  fs::path static_dir;
  int cap = SessionStore::kDefaultActionCap;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port")->check(CLI::Range(1, 65535));
  serve->add_option("--sessions-dir", sessions_dir, "session persistence directory (default <runs>/sessions)");
  serve->add_option("--static", static_dir, "directory served at / (play client bundle)");
  serve->add_option("--cap", cap, "actions per session")->check(CLI::PositiveNumber);
  add_worlds_dir(serve);
  add_runs(serve);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "analyses over score matrices and trajectories");
  analyze->require_subcommand(1);
  fs::path matrix_path;
  int threshold = 2;
  std::string window_arg;
  std::string trait_arg;
  fs::path reference, checkpoint_path, input_path;

  auto* a_criteria = analyze->add_subcommand("criteria", "Avg/Cnt/Diff per trait");
  auto* a_stats = analyze->add_subcommand("stats", "Wilcoxon and Friedman tests per trait");
  for (auto* s : {a_criteria, a_stats}) {
    s->add_option("--matrix", matrix_path, "score matrix CSV (default: aggregate runs under --runs)");
    add_runs(s);
    add_json(s);
  }

  auto* a_traj = analyze->add_subcommand("trajectory", "visit counts and first-arrival steps");
  a_traj->add_option("--world", world_arg, "world id or path")->required();
  a_traj->add_option("--agent", agents, "agent labels (default: all present)");
  a_traj->add_option("--seed", seeds, "seeds (default: all present)");
  a_traj->add_option("--threshold", threshold, "depth below which a place is common")->check(CLI::NonNegativeNumber);
  a_traj->add_option("--window", window_arg, "init50 | fin50 (default fin50)");
  add_runs(a_traj);
  add_worlds_dir(a_traj);
  add_json(a_traj);

  auto* a_align = analyze->add_subcommand("alignment", "trait-action counts relative to NP");
  a_align->add_option("--world", world_arg, "world id or path")->required();
  a_align->add_option("--agent", agents, "trait agents (default: all present)");
  a_align->add_option("--seed", seeds, "seeds (default: all present)");
  a_align->add_option("--window", window_arg, "init50 | fin50 (default: both)");
  add_runs(a_align);
  add_worlds_dir(a_align);
  add_oracle(a_align);
  add_json(a_align);

  auto* a_conc = analyze->add_subcommand("concordance", "agreement of greedy agent choices with reference choices");
  a_conc->add_option("--reference", reference, "reference trajectory file or directory")->required();
  a_conc->add_option("--checkpoint", checkpoint_path, "model checkpoint (default: the run's checkpoint)");
  a_conc->add_option("--world", world_arg, "world id or path; locates the run and checks candidates");
  a_conc->add_option("--agent", agents, "agent label")->expected(1);
  a_conc->add_option("--seed", seeds, "seed")->expected(1);
  add_runs(a_conc);
  add_worlds_dir(a_conc);
  add_oracle(a_conc);
  add_json(a_conc);

  auto* a_corr = analyze->add_subcommand("correlation", "phi correlation between trait annotations");
  a_corr->add_option("--input", input_path, "trajectory file or directory")->required();
  add_oracle(a_corr);
  add_json(a_corr);

  auto* a_walk = analyze->add_subcommand("walkthrough", "share of high/low actions per trait in the walkthrough");
  a_walk->add_option("--world", world_arg, "world id or path")->required();
  add_worlds_dir(a_walk);
  add_oracle(a_walk);
  add_json(a_walk);

  auto* a_rewards = analyze->add_subcommand("rewards", "Q-values and counts of rewarded actions (last 50 episodes)");
  a_rewards->add_option("--world", world_arg, "world id or path")->required();
  a_rewards->add_option("--agent", agents, "agent labels (default: all present)");
  a_rewards->add_option("--seed", seeds, "seeds (default: all present)");
  add_runs(a_rewards);
  add_worlds_dir(a_rewards);
  add_json(a_rewards);

  // replay
  auto* replay = app.add_subcommand("replay", "replay the walkthrough or a trajectory file");
  fs::path replay_traj;
  replay->add_option("--world", world_arg, "world id or path")->required();
  replay->add_option("--trajectory", replay_traj, "trajectory to replay instead of the walkthrough");
  add_worlds_dir(replay);

  // play
  auto* play = app.add_subcommand("play", "play a world in the terminal");
  std::uint64_t play_seed = 0;
  fs::path play_out;
  play->add_option("--world", world_arg, "world id or path")->required();
  play->add_option("--seed", play_seed, "candidate-order seed");
  play->add_option("--out", play_out, "write the trajectory here");
  play->add_option("--cap", cap, "maximum actions")->check(CLI::PositiveNumber);
  add_worlds_dir(play);

  // annotate
  auto* annotate = app.add_subcommand("annotate", "label trajectory actions with trait valences");
  fs::path annotate_out;
  std::vector<std::string> trait_args;
  annotate->add_option("--input", input_path, "trajectory file")->required()->check(CLI::ExistingFile);
  annotate->add_option("--output", annotate_out, "output file (default: stdout)");
  annotate->add_option("--trait", trait_args, "traits (default: all eight)");
  add_oracle(annotate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (validate->parsed()) {
      int bad = 0;
      for (const auto& p : validate_paths) {
        try {
          const auto w = load_world(p);
          out << "ok " << p << ": " << w.id << ", " << w.places.size() << " places, max_score " << w.max_score
              << ", walkthrough " << w.walkthrough.size() << " steps\n";
        } catch (const std::exception& e) {
          err << "invalid " << p << ": " << e.what() << "\n";
          ++bad;
        }
      }
      return bad ? 1 : 0;
    }

    if (train->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      if (all && agents.empty()) agents = standard_agent_labels();
      if (agents.empty()) throw std::runtime_error("train: give --agent or --all");
      if (seeds.empty()) seeds = all ? std::vector<std::uint64_t>{1, 2, 3} : std::vector<std::uint64_t>{1};
      std::vector<TrainJob> todo;
      for (const auto& a : agents) {
        parse_agent(a);  // reject bad labels before any work starts
        for (auto s : seeds) todo.push_back({a, s});
      }

      std::vector<RunLog> logs(todo.size());
      std::atomic<std::size_t> next{0};
      std::mutex out_mu;
      std::exception_ptr failure;
      auto worker = [&] {
        for (std::size_t i; (i = next++) < todo.size();) {
          try {
            auto cfg = parse_agent(todo[i].agent);
            cfg.train.seed = todo[i].seed;
            if (steps > 0) cfg.train.max_steps = steps;
            if (lr > 0) cfg.train.learning_rate = lr;
            cfg.on_oracle_failure = on_failure == "neutral" ? OracleFailure::Neutral : OracleFailure::Abort;
            std::shared_ptr<ValenceOracle> oracle;
            if (cfg.shaping.trait) oracle = make_oracle(c.oracle);
            const auto dir = run_directory(c.runs, world.id, cfg.label, cfg.train.seed);
            fs::remove_all(dir);
            auto result = run_training(world, cfg, oracle.get(), {dir, {}});
            std::lock_guard lock(out_mu);
            out << world.id << " " << cfg.label << " seed " << cfg.train.seed << ": "
                << result.log.episodes.size() << " episodes, " << result.log.total_steps << " steps, last-50 mean "
                << mean_last_scores(result.log) << (result.log.early_stopped ? " (early stop)" : "") << " -> "
                << dir.string() << "\n";
            logs[i] = std::move(result.log);
          } catch (...) {
            std::lock_guard lock(out_mu);
            if (!failure) failure = std::current_exception();
            next = todo.size();
          }
        }
      };
      std::vector<std::thread> pool;
      const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(todo.size()));
      for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
      if (all) {
        const auto csv = c.runs / world.id / "scores.csv";
        std::ofstream(csv) << score_matrix_to_csv(aggregate_scores(logs));
        out << "score matrix -> " << csv.string() << "\n";
      }
      return 0;
    }

    if (serve->parsed()) {
      SessionStore store(load_world_dir(c.worlds_dir), sessions_dir.empty() ? c.runs / "sessions" : sessions_dir, cap);
      SessionServer server(store, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir));
      out << "serving " << store.world_ids().size() << " worlds on http://" << host << ":" << port << "/v1\n";
      out.flush();
      server.listen(host, port);
      return 0;
    }

    if (a_criteria->parsed() || a_stats->parsed()) {
      ScoreMatrix m;
      if (!matrix_path.empty()) {
        m = load_score_matrix(matrix_path);
      } else {
        std::vector<RunLog> logs;
        if (fs::is_directory(c.runs))
          for (const auto& w : fs::directory_iterator(c.runs)) {
            if (!w.is_directory() || w.path().filename() == "sessions") continue;
            for (const auto& a : agents_present(w.path()))
              for (auto s : seeds_present(w.path() / a)) {
                auto log = runlog_from_json(nlohmann::json::parse(
                    std::ifstream(run_directory(c.runs, w.path().filename().string(), a, s) / "runlog.json")));
                logs.push_back(std::move(log));
              }
          }
        if (logs.empty()) throw std::runtime_error("no --matrix given and no runs under " + c.runs.string());
        m = aggregate_scores(logs);
      }
      if (a_criteria->parsed()) {
        const auto r = compute_criteria(m);
        out << (c.json ? to_json(r).dump(2) + "\n" : format_criteria(r));
      } else {
        const auto r = compute_trait_stats(m);
        out << (c.json ? to_json(r).dump(2) + "\n" : format_trait_stats(r));
      }
      return 0;
    }

    if (a_traj->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      const auto depths = place_depths(world);
      const Window w = window_arg.empty() ? Window::Fin50 : parse_window(window_arg);
      if (agents.empty()) agents = agents_present(c.runs / world.id);
      if (agents.empty()) throw std::runtime_error("no runs found for world " + world.id);
      std::vector<std::pair<std::string, TrajectoryMetrics>> rows;
      for (const auto& a : agents)
        rows.emplace_back(a, trajectory_metrics(pooled_window(load_runs(c.runs, world.id, a, seeds), w), depths, threshold));
      if (c.json) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [a, m] : rows) j[a] = to_json(m);
        out << j.dump(2) << "\n";
      } else {
        out << format_trajectory_metrics(rows);
      }
      return 0;
    }

    if (a_align->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      if (agents.empty())
        for (const auto& a : agents_present(c.runs / world.id))
          if (a != "NP" && a != "random") agents.push_back(a);
      std::vector<Window> windows{Window::Init50, Window::Fin50};
      if (!window_arg.empty()) windows = {parse_window(window_arg)};
      auto oracle = make_oracle(c.oracle);
      const auto np_logs = load_runs(c.runs, world.id, "NP", seeds);
      nlohmann::json report = nlohmann::json::object();
      std::ostringstream table;
      table << "agent       window    r_up  r_down   ratio\n";
      for (const auto& a : agents) {
        const auto cfg = parse_agent(a);
        if (!cfg.shaping.trait) throw std::runtime_error("alignment needs a trait agent, got '" + a + "'");
        const TraitId t = *cfg.shaping.trait;
        const std::array<TraitId, 1> traits{t};
        const auto logs = load_runs(c.runs, world.id, a, seeds);
        for (Window w : windows) {
          auto agent_eps = pooled_window(logs, w);
          auto np_eps = pooled_window(np_logs, w);
          for (auto& e : agent_eps) e = annotate_trajectory(*oracle, e, traits);
          for (auto& e : np_eps) e = annotate_trajectory(*oracle, e, traits);
          const auto r = alignment_ratio(agent_eps, np_eps, t);
          report[a][to_string(w)] = to_json(r);
          auto f = [](const std::optional<double>& v) {
            char buf[32];
            if (!v) return std::string("      -");
            std::snprintf(buf, sizeof buf, "%7.2f", *v);
            return std::string(buf);
          };
          char head[32];
          std::snprintf(head, sizeof head, "%-11s %-7s", a.c_str(), to_string(w).c_str());
          table << head << f(r.r_up) << " " << f(r.r_down) << " " << f(r.ratio) << "\n";
        }
      }
      out << (c.json ? report.dump(2) + "\n" : table.str());
      return 0;
    }

    if (a_conc->parsed()) {
      const auto refs = load_trajectories(reference);
      std::optional<WorldSpec> world;
      if (!world_arg.empty()) {
        world = resolve_world(world_arg, c.worlds_dir);
        for (const auto& r : refs) check_reference_candidates(*world, r);
      }
      const std::string agent = agents.empty() ? "NP" : agents.front();
      const auto cfg = parse_agent(agent);
      if (cfg.policy != PolicyKind::Learned) throw std::runtime_error("concordance needs a learned agent");
      fs::path ckpt = checkpoint_path;
      if (ckpt.empty()) {
        if (!world) throw std::runtime_error("give --checkpoint, or --world/--agent/--seed to locate a run");
        ckpt = run_directory(c.runs, world->id, agent, seeds.empty() ? 1 : seeds.front()) / "checkpoint.bin";
      }
      const auto model = load_checkpoint(ckpt);
      std::shared_ptr<ValenceOracle> oracle;
      if (cfg.shaping.trait) oracle = make_oracle(c.oracle);
      const double rate = concordance_rate(refs, model, cfg.shaping, oracle.get());
      if (c.json)
        out << nlohmann::json{{"agent", agent}, {"checkpoint", ckpt.string()}, {"concordance", rate}}.dump(2) << "\n";
      else
        out << agent << " concordance " << rate << "%\n";
      return 0;
    }

    if (a_corr->parsed()) {
      auto trajs = load_trajectories(input_path);
      std::shared_ptr<ValenceOracle> oracle;
      for (auto& t : trajs) {
        bool complete = std::all_of(t.begin(), t.end(), [](const StepRecord& r) { return r.valences.size() == kAllTraits.size(); });
        if (!complete) {
          if (!oracle) oracle = make_oracle(c.oracle);
          t = annotate_trajectory(*oracle, t, kAllTraits);
        }
      }
      const auto m = trait_correlation(trajs);
      out << (c.json ? to_json(m).dump(2) + "\n" : format_correlation(m));
      return 0;
    }

    if (a_walk->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      auto oracle = make_oracle(c.oracle);
      const auto p = annotate_walkthrough(world, *oracle);
      out << (c.json ? to_json(p).dump(2) + "\n" : format_walkthrough(p));
      return 0;
    }

    if (a_rewards->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      if (agents.empty())
        for (const auto& a : agents_present(c.runs / world.id))
          if (a != "random") agents.push_back(a);
      nlohmann::json report = nlohmann::json::object();
      std::ostringstream table;
      table << "agent       seed   q_mean  rewarded/ep\n";
      for (const auto& a : agents) {
        const auto use = seeds.empty() ? seeds_present(c.runs / world.id / a) : seeds;
        for (auto s : use) {
          const auto dir = run_directory(c.runs, world.id, a, s);
          const auto log = load_run(dir);
          const auto st = reward_action_stats(load_checkpoint(dir / "checkpoint.bin"), log);
          report[a][std::to_string(s)] = to_json(st);
          char line[96];
          std::snprintf(line, sizeof line, "%-11s %4llu %8s %12.2f\n", a.c_str(), static_cast<unsigned long long>(s),
                        st.q_mean ? std::to_string(*st.q_mean).substr(0, 8).c_str() : "-", st.count_mean);
          table << line;
        }
      }
      out << (c.json ? report.dump(2) + "\n" : table.str());
      return 0;
    }

    if (replay->parsed()) {
      const auto world = resolve_world(world_arg, c.worlds_dir);
      if (replay_traj.empty()) {
        const auto r = replay_walkthrough(world);
        for (const auto& rec : r.trajectory)
          out << rec.t << "\t" << rec.place << "\t" << rec.action << "\t+" << rec.reward << "\t" << rec.score << "\n";
        out << "walkthrough score " << r.score << " / " << world.max_score << "\n";
        return r.score == world.max_score ? 0 : 1;
      }
      auto state = reset(world, 0).first;
      int mismatches = 0;
      for (const auto& rec : load_jsonl(replay_traj)) {
        auto res = step(world, state, rec.action);
        const bool same = res.reward == rec.reward && res.state.score == rec.score;
        if (!same) ++mismatches;
        out << rec.t << "\t" << rec.action << "\t+" << res.reward << "\t" << res.state.score
            << (same ? "" : "\t(recorded " + std::to_string(rec.score) + ")") << "\n";
        state = std::move(res.state);
      }
      out << "final score " << state.score << (mismatches ? ", " + std::to_string(mismatches) + " mismatches" : "")
          << "\n";
      return mismatches ? 1 : 0;
    }

    if (play->parsed()) {
      auto world = std::make_shared<const WorldSpec>(resolve_world(world_arg, c.worlds_dir));
      SessionStore store({{world->id, world}}, std::nullopt, cap);
      auto s = store.create(world->id, play_seed);
      const std::string id = s["id"];
      auto show = [&](const nlohmann::json& view) {
        out << "\n" << view["observation"].get<std::string>() << "\n";
        const auto& cands = view["candidates"];
        for (std::size_t i = 0; i < cands.size(); ++i) out << "  [" << i << "] " << cands[i].get<std::string>() << "\n";
      };
      show(s);
      bool done = s["status"] == "finished";
      std::string line;
      while (!done) {
        out << "> " << std::flush;
        if (!std::getline(in, line) || line == "q" || line == "quit") break;
        long idx = -1;
        try {
          idx = std::stol(line);
        } catch (const std::exception&) {
          out << "enter a candidate number, or q to quit\n";
          continue;
        }
        try {
          auto r = store.post_action(id, idx);
          if (r["reward"].get<int>() > 0) out << "(+" << r["reward"].get<int>() << " points)\n";
          show(r);
          out << "score " << r["score"].get<int>() << " / " << world->max_score << "\n";
          done = r["done"].get<bool>();
        } catch (const SessionError& e) {
          out << e.what() << "\n";
        }
      }
      if (!play_out.empty()) {
        save_jsonl(play_out, store.trajectory(id));
        out << "trajectory -> " << play_out.string() << "\n";
      }
      return 0;
    }

    if (annotate->parsed()) {
      std::vector<TraitId> traits;
      for (const auto& t : trait_args) traits.push_back(trait_from_string(t));
      if (traits.empty()) traits.assign(kAllTraits.begin(), kAllTraits.end());
      auto oracle = make_oracle(c.oracle);
      const auto annotated = annotate_trajectory(*oracle, load_jsonl(input_path), traits);
      if (annotate_out.empty())
        write_jsonl(out, annotated);
      else
        save_jsonl(annotate_out, annotated);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "panda: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace panda
