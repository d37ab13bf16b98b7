#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "panda/trait.hpp"
#include "panda/trajectory.hpp"

namespace panda {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-200 reply from a remote classifier.
class ProtocolError : public OracleError {
 public:
  using OracleError::OracleError;
};

struct OracleQuery {
  TraitId trait = TraitId::Ope;
  std::string observation;
  std::string action;
};

struct LexiconEntry {
  std::string pattern;              // token or phrase, matched case-insensitively on token boundaries
  std::vector<std::string> tokens;  // tokenized pattern
  int weight = 0;
  bool context = false;  // also match against the observation text
};

struct LexiconRules {
  std::array<std::vector<LexiconEntry>, 8> entries;
  int threshold = 1;

  const std::vector<LexiconEntry>& of(TraitId t) const { return entries[trait_index(t)]; }
};

LexiconRules parse_lexicon(const nlohmann::json& doc);
LexiconRules load_lexicon(const std::filesystem::path& path);

/// Signed weight sum of matching entries; the sign when |sum| >= threshold, else 0.
Valence lexicon_valence(const LexiconRules& rules, const OracleQuery& query);

class OracleBackend {
 public:
  virtual ~OracleBackend() = default;
  virtual Valence classify(const OracleQuery& query) = 0;
  virtual std::string name() const = 0;
};

class LexiconBackend final : public OracleBackend {
 public:
  explicit LexiconBackend(LexiconRules rules) : rules_(std::move(rules)) {}
  Valence classify(const OracleQuery& query) override { return lexicon_valence(rules_, query); }
  std::string name() const override { return "lexicon"; }
  const LexiconRules& rules() const { return rules_; }

 private:
  LexiconRules rules_;
};

struct RemoteOptions {
  int max_attempts = 3;
  std::chrono::milliseconds timeout{2000};
  std::chrono::milliseconds backoff{50};
};

/// Speaks the POST /valence protocol. Safe to call from several threads; at
/// most kMaxInFlight requests are outstanding at once.
class RemoteBackend final : public OracleBackend {
 public:
  static constexpr std::ptrdiff_t kMaxInFlight = 4;

  explicit RemoteBackend(std::string url, RemoteOptions options = {});
  Valence classify(const OracleQuery& query) override;
  std::string name() const override { return "remote:" + url_; }

 private:
  std::string url_;
  std::string host_;  // scheme://host:port
  std::string path_;  // base path + /valence
  RemoteOptions options_;
  std::counting_semaphore<kMaxInFlight> in_flight_{kMaxInFlight};
};

/// Memoizing front end shared by every consumer of valences.
class ValenceOracle {
 public:
  explicit ValenceOracle(std::shared_ptr<OracleBackend> backend, bool cache_enabled = true);

  Valence classify(const OracleQuery& query);
  Valence classify(TraitId trait, const std::string& observation, const std::string& action) {
    return classify(OracleQuery{trait, observation, action});
  }

  void set_cache_enabled(bool enabled) { cache_enabled_ = enabled; }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }
  std::size_t cache_size() const;
  const OracleBackend& backend() const { return *backend_; }

 private:
  struct Key {
    TraitId trait;
    std::uint64_t obs_hash;
    std::string action;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };

  std::shared_ptr<OracleBackend> backend_;
  std::atomic<bool> cache_enabled_;
  mutable std::shared_mutex mu_;
  std::unordered_map<Key, Valence, KeyHash> cache_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

/// Builds an oracle from "lexicon:<path>" or "remote:<url>".
std::shared_ptr<ValenceOracle> make_oracle(const std::string& spec);

/// Attaches a valence for every requested trait to every step. Existing
/// valences for those traits are overwritten, so re-annotation is idempotent.
/// On backend failure nothing is modified and the error propagates.
Trajectory annotate_trajectory(ValenceOracle& oracle, const Trajectory& traj, std::span<const TraitId> traits);

}  // namespace panda
