#include "panda/oracle.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "httplib.h"
#include "panda/text.hpp"

namespace panda {

using nlohmann::json;

namespace {

bool contains_phrase(const std::vector<std::string>& haystack, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= haystack.size(); ++i) {
    if (std::equal(phrase.begin(), phrase.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

}  // namespace

LexiconRules parse_lexicon(const json& doc) {
  if (!doc.is_object()) throw OracleError("lexicon must be a JSON object");
  LexiconRules rules;
  try {
    rules.threshold = doc.value("threshold", 1);
    if (rules.threshold < 1) throw OracleError("lexicon threshold must be a positive integer");
    for (TraitId t : kAllTraits) {
      const std::string name(to_string(t));
      auto it = doc.find(name);
      if (it == doc.end()) throw OracleError("lexicon is missing trait '" + name + "'");
      if (!it->is_array() || it->empty()) throw OracleError("lexicon trait '" + name + "' has no rules");
      std::set<std::string> seen;
      for (const auto& je : *it) {
        LexiconEntry e;
        e.pattern = je.at("pattern").get<std::string>();
        e.weight = je.at("weight").get<int>();
        e.context = je.value("context", false);
        e.tokens = tokenize(e.pattern);
        if (e.tokens.empty()) throw OracleError("empty pattern under trait '" + name + "'");
        if (e.weight == 0) throw OracleError("zero-weight pattern '" + e.pattern + "' under trait '" + name + "'");
        std::string key;
        for (const auto& tok : e.tokens) key += tok + ' ';
        if (!seen.insert(key).second)
          throw OracleError("duplicate pattern '" + e.pattern + "' under trait '" + name + "'");
        rules.entries[trait_index(t)].push_back(std::move(e));
      }
    }
  } catch (const json::exception& e) {
    throw OracleError(std::string("lexicon parse error: ") + e.what());
  }
  return rules;
}

LexiconRules load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw OracleError("cannot open lexicon " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw OracleError("lexicon parse error in " + path.string() + ": " + e.what());
  }
  return parse_lexicon(doc);
}

Valence lexicon_valence(const LexiconRules& rules, const OracleQuery& query) {
  const auto action_tokens = tokenize(query.action);
  std::vector<std::string> context_tokens;
  bool context_ready = false;
  int sum = 0;
  for (const auto& e : rules.of(query.trait)) {
    bool hit = contains_phrase(action_tokens, e.tokens);
    if (!hit && e.context) {
      if (!context_ready) {
        context_tokens = tokenize(query.observation);
        context_ready = true;
      }
      hit = contains_phrase(context_tokens, e.tokens);
    }
    if (hit) sum += e.weight;
  }
  if (sum >= rules.threshold) return Valence::high();
  if (-sum >= rules.threshold) return Valence::low();
  return Valence::neutral();
}

// --- remote ---------------------------------------------------------------

RemoteBackend::RemoteBackend(std::string url, RemoteOptions options) : url_(std::move(url)), options_(options) {
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) throw OracleError("remote oracle url needs a scheme: " + url_);
  const auto path_start = url_.find('/', scheme_end + 3);
  host_ = url_.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : url_.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/valence";
}

Valence RemoteBackend::classify(const OracleQuery& query) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<kMaxInFlight>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const json body{{"trait", std::string(to_string(query.trait))},
                  {"observation", query.observation},
                  {"action", query.action}};
  const auto payload = body.dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff * attempt);
    httplib::Client cli(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    auto res = cli.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport failure: retry
    }
    if (res->status != 200)
      throw ProtocolError("remote oracle returned HTTP " + std::to_string(res->status));
    try {
      const auto reply = json::parse(res->body);
      const int v = reply.at("valence").get<int>();
      if (v < -1 || v > 1) throw ProtocolError("remote oracle valence out of range: " + std::to_string(v));
      return Valence(v);
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("malformed remote oracle reply: ") + e.what());
    }
  }
  throw OracleError("remote oracle unreachable at " + url_ + " after " + std::to_string(options_.max_attempts) +
                    " attempts: " + last_error);
}

// --- cache ----------------------------------------------------------------

std::size_t ValenceOracle::KeyHash::operator()(const Key& k) const {
  return static_cast<std::size_t>(mix64(k.obs_hash ^ (static_cast<std::uint64_t>(k.trait) << 56)) ^ fnv1a(k.action));
}

ValenceOracle::ValenceOracle(std::shared_ptr<OracleBackend> backend, bool cache_enabled)
    : backend_(std::move(backend)), cache_enabled_(cache_enabled) {
  if (!backend_) throw OracleError("oracle backend is null");
}

Valence ValenceOracle::classify(const OracleQuery& query) {
  if (query.action.empty()) throw OracleError("oracle query has an empty action");
  if (!cache_enabled_) {
    ++backend_calls_;
    return backend_->classify(query);
  }
  Key key{query.trait, fnv1a(query.observation), query.action};
  {
    std::shared_lock lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++cache_hits_;
      return it->second;
    }
  }
  ++backend_calls_;
  const Valence v = backend_->classify(query);
  std::unique_lock lock(mu_);
  cache_.emplace(std::move(key), v);
  return v;
}

std::size_t ValenceOracle::cache_size() const {
  std::shared_lock lock(mu_);
  return cache_.size();
}

std::shared_ptr<ValenceOracle> make_oracle(const std::string& spec) {
  if (spec.rfind("lexicon:", 0) == 0)
    return std::make_shared<ValenceOracle>(std::make_shared<LexiconBackend>(load_lexicon(spec.substr(8))));
  if (spec.rfind("remote:", 0) == 0)
    return std::make_shared<ValenceOracle>(std::make_shared<RemoteBackend>(spec.substr(7)));
  throw OracleError("oracle must be lexicon:<path> or remote:<url>, got '" + spec + "'");
}

Trajectory annotate_trajectory(ValenceOracle& oracle, const Trajectory& traj, std::span<const TraitId> traits) {
  Trajectory out = traj;
  for (auto& rec : out) {
    const std::string& action = rec.action.empty() && rec.chosen >= 0 ? rec.candidates[rec.chosen] : rec.action;
    for (TraitId t : traits) rec.valences[t] = oracle.classify(t, rec.observation, action).value();
  }
  return out;
}

}  // namespace panda
