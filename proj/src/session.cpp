#include "panda/session.hpp"

#include <chrono>
#include <ctime>
#include <algorithm>
#include <fstream>
#include <random>

#include "httplib.h"
#include "panda/text.hpp"

namespace panda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

StepRecord make_record(const GameState& before, const Observation& obs, long index, const StepResult& res) {
  StepRecord rec;
  rec.t = before.step;
  rec.place = before.place;
  rec.observation = obs.text;
  rec.obs_hash = observation_hash(obs.text);
  rec.candidates = obs.candidates;
  rec.chosen = static_cast<int>(index);
  rec.action = obs.candidates[static_cast<std::size_t>(index)];
  rec.reward = res.reward;
  rec.score = res.state.score;
  rec.source = "human";
  return rec;
}

}  // namespace

int SessionError::http_status() const {
  switch (kind_) {
    case Kind::NotFound: return 404;
    case Kind::BadRequest: return 400;
    case Kind::OutOfRange: return 422;
    case Kind::Conflict: return 409;
  }
  return 500;
}

SessionStore::SessionStore(std::map<std::string, std::shared_ptr<const WorldSpec>> worlds,
                           std::optional<fs::path> persist_dir, int action_cap)
    : worlds_(std::move(worlds)), dir_(std::move(persist_dir)), action_cap_(action_cap),
      id_state_(std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)) {
  if (action_cap_ <= 0) throw std::invalid_argument("action cap must be positive");
  if (dir_) {
    fs::create_directories(*dir_);
    load_persisted();
  }
}

std::vector<std::string> SessionStore::world_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, w] : worlds_) ids.push_back(id);
  return ids;
}

std::string SessionStore::new_id() {
  // caller holds mu_ exclusively
  std::string id;
  do {
    id_state_ += 0x9e3779b97f4a7c15ULL;
    id = hex64(mix64(id_state_));
  } while (sessions_.count(id));
  return id;
}

const WorldSpec& SessionStore::world_of(const Session& s) const { return *worlds_.at(s.world_id); }

std::shared_ptr<Session> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionError(SessionError::Kind::NotFound, "unknown session '" + id + "'");
  return it->second;
}

json SessionStore::summary_locked(const Session& s) const {
  return {{"id", s.id},
          {"world", s.world_id},
          {"seed", s.seed},
          {"status", s.finished ? "finished" : "active"},
          {"step", s.state.step},
          {"score", s.state.score},
          {"max_score", world_of(s).max_score},
          {"action_cap", action_cap_},
          {"created", s.created},
          {"updated", s.updated},
          {"observation", s.observation.text},
          {"candidates", s.observation.candidates}};
}

void SessionStore::persist_meta(const Session& s) const {
  if (!dir_) return;
  const json meta = {{"id", s.id},           {"world", s.world_id}, {"seed", s.seed},
                     {"created", s.created}, {"updated", s.updated}, {"finished", s.finished}};
  write_atomic(*dir_ / s.id / "meta.json", meta.dump(2) + "\n");
}

void SessionStore::load_persisted() {
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    const auto meta_path = entry.path() / "meta.json";
    if (!entry.is_directory() || !fs::exists(meta_path)) continue;
    std::ifstream in(meta_path);
    const json meta = json::parse(in);
    auto s = std::make_shared<Session>();
    s->id = meta.at("id").get<std::string>();
    s->world_id = meta.at("world").get<std::string>();
    s->seed = meta.at("seed").get<std::uint64_t>();
    s->created = meta.value("created", "");
    s->updated = meta.value("updated", "");
    auto wit = worlds_.find(s->world_id);
    if (wit == worlds_.end()) continue;  // world no longer served
    std::tie(s->state, s->observation) = reset(*wit->second, s->seed);
    const auto traj_path = entry.path() / "trajectory.jsonl";
    if (fs::exists(traj_path)) {
      for (const auto& rec : load_jsonl(traj_path)) {
        if (rec.chosen < 0 || static_cast<std::size_t>(rec.chosen) >= s->observation.candidates.size() ||
            s->observation.candidates[static_cast<std::size_t>(rec.chosen)] != rec.action)
          throw std::runtime_error("persisted session " + s->id + " diverges from its world at step " +
                                   std::to_string(rec.t));
        auto res = step(*wit->second, s->state, rec.action, action_cap_);
        s->state = res.state;
        s->observation = res.observation;
        s->finished = res.done;
        s->trajectory.push_back(rec);
      }
    }
    s->finished = s->finished || meta.value("finished", false) || s->observation.candidates.empty();
    sessions_[s->id] = s;
  }
}

json SessionStore::create(const std::string& world_id, std::uint64_t seed) {
  auto wit = worlds_.find(world_id);
  if (wit == worlds_.end()) throw SessionError(SessionError::Kind::NotFound, "unknown world '" + world_id + "'");
  auto s = std::make_shared<Session>();
  s->world_id = world_id;
  s->seed = seed;
  std::tie(s->state, s->observation) = reset(*wit->second, seed);
  s->finished = s->observation.candidates.empty();
  s->created = s->updated = utc_now();
  {
    std::unique_lock lock(mu_);
    s->id = new_id();
    sessions_[s->id] = s;
  }
  if (dir_) {
    fs::create_directories(*dir_ / s->id);
    std::ofstream(*dir_ / s->id / "trajectory.jsonl", std::ios::trunc);
    persist_meta(*s);
  }
  std::lock_guard lock(s->mu);
  return summary_locked(*s);
}

json SessionStore::summary(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return summary_locked(*s);
}

json SessionStore::post_action(const std::string& id, long index, std::optional<long> expected_step) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->finished) throw SessionError(SessionError::Kind::Conflict, "session '" + id + "' is finished");
  if (expected_step && *expected_step != s->state.step)
    throw SessionError(SessionError::Kind::Conflict, "stale step " + std::to_string(*expected_step) +
                                                         " (session is at step " + std::to_string(s->state.step) + ")");
  const auto n = s->observation.candidates.size();
  if (index < 0 || static_cast<std::size_t>(index) >= n)
    throw SessionError(SessionError::Kind::OutOfRange,
                       "candidate index " + std::to_string(index) + " out of range [0, " + std::to_string(n) + ")");

  const auto& action = s->observation.candidates[static_cast<std::size_t>(index)];
  auto res = step(world_of(*s), s->state, action, action_cap_);
  auto rec = make_record(s->state, s->observation, index, res);
  if (dir_) {
    std::ofstream out(*dir_ / s->id / "trajectory.jsonl", std::ios::app | std::ios::binary);
    write_jsonl(out, Trajectory{rec});
    out.flush();
    if (!out) throw std::runtime_error("cannot append to the trajectory of session " + s->id);
  }
  s->trajectory.push_back(std::move(rec));
  s->state = std::move(res.state);
  s->observation = std::move(res.observation);
  s->finished = res.done;
  s->updated = utc_now();
  persist_meta(*s);

  return {{"observation", s->observation.text},
          {"candidates", s->observation.candidates},
          {"reward", res.reward},
          {"score", s->state.score},
          {"done", s->finished},
          {"step", s->state.step}};
}

Trajectory SessionStore::trajectory(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->trajectory;
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

// --- HTTP -----------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const SessionError& e) {
    send_error(res, e.http_status(), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw SessionError(SessionError::Kind::BadRequest, "request body must be a JSON object");
  return j;
}

}  // namespace

void install_routes(httplib::Server& server, SessionStore& store) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});

  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/v1/worlds", [&store](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json list = json::array();
      for (const auto& id : store.world_ids()) list.push_back({{"id", id}});
      send_json(res, 200, list);
    });
  });

  server.Post("/v1/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      if (!body.contains("world") || !body["world"].is_string())
        throw SessionError(SessionError::Kind::BadRequest, "field 'world' (string) is required");
      const auto seed = body.value("seed", std::uint64_t{0});
      send_json(res, 201, store.create(body["world"].get<std::string>(), seed));
    });
  });

  server.Get("/v1/sessions/:id", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, store.summary(req.path_params.at("id"))); });
  });

  server.Post("/v1/sessions/:id/action", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      if (!body.contains("index") || !body["index"].is_number_integer())
        throw SessionError(SessionError::Kind::BadRequest, "field 'index' (integer) is required");
      std::optional<long> expected;
      if (body.contains("step")) {
        if (!body["step"].is_number_integer())
          throw SessionError(SessionError::Kind::BadRequest, "field 'step' must be an integer");
        expected = body["step"].get<long>();
      }
      send_json(res, 200, store.post_action(req.path_params.at("id"), body["index"].get<long>(), expected));
    });
  });

  server.Get("/v1/sessions/:id/trajectory", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(to_jsonl(store.trajectory(req.path_params.at("id"))), "application/x-ndjson");
    });
  });
}

SessionServer::SessionServer(SessionStore& store, std::optional<fs::path> static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  install_routes(*server_, store);
  if (static_dir && !server_->set_mount_point("/", static_dir->string()))
    throw std::runtime_error("static directory not found: " + static_dir->string());
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void SessionServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void SessionServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::map<std::string, std::shared_ptr<const WorldSpec>> load_world_dir(const fs::path& dir) {
  std::map<std::string, std::shared_ptr<const WorldSpec>> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().string().ends_with(".world.json")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto w = std::make_shared<const WorldSpec>(load_world(f));
    if (!out.emplace(w->id, w).second) throw WorldError("duplicate world id '" + w->id + "' in " + dir.string());
  }
  return out;
}

}  // namespace panda
