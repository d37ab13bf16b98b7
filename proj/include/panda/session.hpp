#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "panda/trajectory.hpp"
#include "panda/world.hpp"

namespace httplib {
class Server;
}

namespace panda {

class SessionError : public std::runtime_error {
 public:
  enum class Kind { NotFound, BadRequest, OutOfRange, Conflict };
  SessionError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  int http_status() const;

 private:
  Kind kind_;
};

struct Session {
  std::string id;
  std::string world_id;
  std::uint64_t seed = 0;
  GameState state;
  Observation observation;
  Trajectory trajectory;
  std::string created;
  std::string updated;
  bool finished = false;

  mutable std::mutex mu;  // serializes actions on this session
};

/// In-memory session registry with optional on-disk persistence. Each action
/// appends one line to <dir>/<id>/trajectory.jsonl and rewrites meta.json, so
/// a restarted store resumes every session by replaying its trajectory.
class SessionStore {
 public:
  static constexpr int kDefaultActionCap = 100;

  explicit SessionStore(std::map<std::string, std::shared_ptr<const WorldSpec>> worlds,
                        std::optional<std::filesystem::path> persist_dir = std::nullopt,
                        int action_cap = kDefaultActionCap);

  std::vector<std::string> world_ids() const;

  /// {id, world, seed, status, step, score, observation, candidates}
  nlohmann::json create(const std::string& world_id, std::uint64_t seed);
  nlohmann::json summary(const std::string& id) const;

  /// Applies candidate `index`. When `expected_step` is given it must equal
  /// the session's step count, so a retried request cannot act twice.
  /// Returns {observation, candidates, reward, score, done, step}.
  nlohmann::json post_action(const std::string& id, long index, std::optional<long> expected_step = std::nullopt);

  Trajectory trajectory(const std::string& id) const;
  std::size_t size() const;
  int action_cap() const { return action_cap_; }

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  const WorldSpec& world_of(const Session& s) const;
  nlohmann::json summary_locked(const Session& s) const;
  void persist_meta(const Session& s) const;
  void load_persisted();
  std::string new_id();

  std::map<std::string, std::shared_ptr<const WorldSpec>> worlds_;
  std::optional<std::filesystem::path> dir_;
  int action_cap_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_state_;
};

/// Registers the /v1 routes (with CORS headers) on `server`.
void install_routes(httplib::Server& server, SessionStore& store);

/// Owns an HTTP server running on a background thread.
class SessionServer {
 public:
  SessionServer(SessionStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds (port 0 picks a free port) and starts serving. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// Loads every *.world.json under `dir`, keyed by world id.
std::map<std::string, std::shared_ptr<const WorldSpec>> load_world_dir(const std::filesystem::path& dir);

}  // namespace panda
