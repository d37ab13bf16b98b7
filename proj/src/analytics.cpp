#include "panda/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "panda/text.hpp"

namespace panda {

namespace {

std::string up_label(TraitId t) { return std::string(to_string(t)) + "_up"; }
std::string down_label(TraitId t) { return std::string(to_string(t)) + "_down"; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> require_column(const ScoreMatrix& m, const std::string& label) {
  if (!m.find_column(label)) throw AnalyticsError("score matrix is missing column '" + label + "'");
  return m.column_values(label);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v, const char* spec = "%.2f") {
  return v ? fmt(spec, *v) : std::string("-");
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

CriteriaResult compute_criteria(const ScoreMatrix& matrix) {
  CriteriaResult r;
  r.games = static_cast<int>(matrix.games.size());
  const auto np = require_column(matrix, "NP");
  for (TraitId t : kAllTraits) {
    const auto up = require_column(matrix, up_label(t));
    const auto down = require_column(matrix, down_label(t));
    auto& c = r.traits[trait_index(t)];
    c.trait = t;
    for (std::size_t g = 0; g < np.size(); ++g) {
      if (up[g] > np[g] && down[g] < np[g]) ++c.cnt;
      if (down[g] > np[g] && up[g] < np[g]) ++c.cnt_down;
    }
    c.avg_up = mean_of(up);
    c.avg_np = mean_of(np);
    c.avg_down = mean_of(down);
    c.diff = c.avg_up - c.avg_down;
  }
  return r;
}

std::vector<TraitStats> compute_trait_stats(const ScoreMatrix& matrix) {
  const auto np = require_column(matrix, "NP");
  std::vector<TraitStats> out;
  for (TraitId t : kAllTraits) {
    const auto up = require_column(matrix, up_label(t));
    const auto down = require_column(matrix, down_label(t));
    TraitStats s;
    s.trait = t;
    auto pair = [&](const std::vector<double>& a, const std::vector<double>& b, const char* name) {
      try {
        return stats::wilcoxon_signed_rank(a, b);
      } catch (const stats::UndefinedTest&) {
        s.undefined.emplace_back(name);
        return stats::StatResult{};
      }
    };
    s.up_np = pair(up, np, "up_np");
    s.np_down = pair(np, down, "np_down");
    s.up_down = pair(up, down, "up_down");
    s.friedman = stats::friedman_test({up, np, down});
    out.push_back(std::move(s));
  }
  return out;
}

TrajectoryMetrics trajectory_metrics(std::span<const Trajectory> episodes, const std::map<std::string, int>& depths,
                                     int threshold) {
  TrajectoryMetrics m;
  m.episodes = episodes.size();
  if (episodes.empty()) return m;

  double len = 0, com = 0, unc = 0;
  double step_com = 0, step_unc = 0, step_total = 0;
  int n_com = 0, n_unc = 0, n_total = 0;
  for (const auto& ep : episodes) {
    len += static_cast<double>(ep.size());
    std::map<std::string, int> arrival;
    for (const auto& rec : ep) arrival.emplace(rec.place, rec.t);

    double sc = 0, su = 0;
    int vc = 0, vu = 0;
    for (const auto& [place, t] : arrival) {
      auto it = depths.find(place);
      if (it == depths.end()) throw AnalyticsError("place '" + place + "' is missing from the depth map");
      if (it->second < threshold) {
        ++vc;
        sc += t;
      } else {
        ++vu;
        su += t;
      }
    }
    com += vc;
    unc += vu;
    if (vc > 0) {
      step_com += sc / vc;
      ++n_com;
    }
    if (vu > 0) {
      step_unc += su / vu;
      ++n_unc;
    }
    if (vc + vu > 0) {
      step_total += (sc + su) / (vc + vu);
      ++n_total;
    }
  }
  const double n = static_cast<double>(episodes.size());
  m.traj_len = len / n;
  m.visit_com = com / n;
  m.visit_unc = unc / n;
  m.visit_total = (com + unc) / n;
  if (n_com) m.avg_step_com = step_com / n_com;
  if (n_unc) m.avg_step_unc = step_unc / n_unc;
  if (n_total) m.avg_step_total = step_total / n_total;
  return m;
}

Window parse_window(const std::string& s) {
  std::string lower;
  for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "init50") return Window::Init50;
  if (lower == "fin50") return Window::Fin50;
  throw AnalyticsError("unknown window '" + s + "' (expected init50 or fin50)");
}

std::string to_string(Window w) { return w == Window::Init50 ? "init50" : "fin50"; }

std::vector<Trajectory> window_trajectories(const RunLog& log, Window w, std::size_t count) {
  if (log.trajectories.size() != log.episodes.size())
    throw AnalyticsError("run log for " + log.agent + " has no loaded trajectories");
  const auto idx = w == Window::Init50 ? first_episodes(log, count) : last_episodes(log, count);
  std::vector<Trajectory> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(log.trajectories[i]);
  return out;
}

ActionCounts count_trait_actions(std::span<const Trajectory> episodes, TraitId trait) {
  ActionCounts c;
  for (const auto& ep : episodes)
    for (const auto& rec : ep) {
      auto it = rec.valences.find(trait);
      if (it == rec.valences.end())
        throw AnalyticsError("step " + std::to_string(rec.t) + " is not annotated for " + std::string(to_string(trait)));
      if (it->second > 0) ++c.high;
      if (it->second < 0) ++c.low;
    }
  return c;
}

std::optional<double> relative_change(long n_agent, long n_np) {
  if (n_np == 0) return std::nullopt;
  return static_cast<double>(n_agent - n_np) / static_cast<double>(n_np);
}

AlignmentResult alignment_ratio(std::span<const Trajectory> agent, std::span<const Trajectory> np, TraitId trait) {
  AlignmentResult a;
  a.agent = count_trait_actions(agent, trait);
  a.np = count_trait_actions(np, trait);
  a.r_up = relative_change(a.agent.high, a.np.high);
  a.r_down = relative_change(a.agent.low, a.np.low);
  if (a.r_up && a.r_down) a.ratio = *a.r_up - *a.r_down;
  return a;
}

RewardActionStats reward_action_stats(const QModel& model, std::span<const Trajectory> episodes) {
  RewardActionStats s;
  s.episodes = episodes.size();
  double q = 0;
  long rewarded = 0;
  for (const auto& ep : episodes)
    for (const auto& rec : ep)
      if (rec.reward > 0) {
        q += model.q_value(rec.observation, rec.action);
        ++rewarded;
      }
  if (rewarded > 0) s.q_mean = q / static_cast<double>(rewarded);
  if (!episodes.empty()) s.count_mean = static_cast<double>(rewarded) / static_cast<double>(episodes.size());
  return s;
}

RewardActionStats reward_action_stats(const QModel& model, const RunLog& log, std::size_t count) {
  if (!log.model_fingerprint.empty() && log.model_fingerprint != hex64(model.fingerprint()))
    throw AnalyticsError("checkpoint does not match run " + log.world_id + "/" + log.agent + "/" +
                         std::to_string(log.seed));
  const auto eps = window_trajectories(log, Window::Fin50, count);
  return reward_action_stats(model, eps);
}

double selection_probability(std::span<const double> values, std::size_t label) {
  if (label >= values.size()) throw AnalyticsError("labeled candidate index out of range");
  return softmax(values)[label];
}

std::vector<double> shaped_values(const QModel& model, const ShapingConfig& shaping, const std::string& observation,
                                  std::span<const std::string> candidates, ValenceOracle* oracle,
                                  std::span<const int> valences) {
  if (!valences.empty() && valences.size() != candidates.size())
    throw AnalyticsError("valence list does not match the candidate list");
  const auto obs = model.encode(observation);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double q = model.q_value(obs, model.encode(candidates[i]));
    if (shaping.trait) {
      Valence v = Valence::neutral();
      if (oracle)
        v = oracle->classify(*shaping.trait, observation, candidates[i]);
      else if (!valences.empty())
        v = Valence(valences[i]);
      q = shape_q(q, v, shaping.weight);
    }
    out.push_back(q);
  }
  return out;
}

double selection_probability(const QModel& model, const ShapingConfig& shaping, std::span<const Probe> probes,
                             ValenceOracle* oracle) {
  if (probes.empty()) throw AnalyticsError("no probes given");
  double total = 0;
  for (const auto& p : probes) {
    const auto values = shaped_values(model, shaping, p.observation, p.candidates, oracle, p.valences);
    total += selection_probability(values, p.label);
  }
  return 100.0 * total / static_cast<double>(probes.size());
}

double concordance_rate(std::span<const Trajectory> reference, const Chooser& choose) {
  long states = 0, agree = 0;
  for (const auto& ep : reference)
    for (const auto& rec : ep) {
      if (rec.chosen < 0 || static_cast<std::size_t>(rec.chosen) >= rec.candidates.size())
        throw AnalyticsError("reference step " + std::to_string(rec.t) + " has no chosen candidate");
      ++states;
      if (choose(rec) == static_cast<std::size_t>(rec.chosen)) ++agree;
    }
  if (states == 0) throw AnalyticsError("concordance is undefined for an empty reference");
  return 100.0 * static_cast<double>(agree) / static_cast<double>(states);
}

double concordance_rate(std::span<const Trajectory> reference, const QModel& model, const ShapingConfig& shaping,
                        ValenceOracle* oracle) {
  if (shaping.trait && !oracle) throw AnalyticsError("a shaped agent needs an oracle to score candidates");
  return concordance_rate(reference, [&](const StepRecord& rec) {
    return argmax(shaped_values(model, shaping, rec.observation, rec.candidates, oracle));
  });
}

void check_reference_candidates(const WorldSpec& world, const Trajectory& reference) {
  auto state = reset(world, 0).first;
  for (const auto& rec : reference) {
    auto expected = candidates(world, state);
    auto got = rec.candidates;
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    if (expected != got)
      throw AnalyticsError("candidate list mismatch at reference step " + std::to_string(rec.t));
    state = step(world, state, rec.action).state;
  }
}

CorrelationMatrix trait_correlation(std::span<const std::map<TraitId, int>> annotated) {
  CorrelationMatrix m;
  constexpr std::size_t K = kAllTraits.size();
  std::vector<std::array<int, K>> rows;
  rows.reserve(annotated.size());
  for (const auto& a : annotated) {
    std::array<int, K> row{};
    for (const auto& [t, v] : a) row[trait_index(t)] = v > 0 ? 1 : (v < 0 ? -1 : 0);
    rows.push_back(row);
  }
  for (std::size_t i = 0; i < K; ++i) {
    m[i][i] = 1.0;
    for (std::size_t j = i + 1; j < K; ++j) {
      double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (const auto& r : rows) {
        if (r[i] == 0 || r[j] == 0) continue;
        n += 1;
        sx += r[i];
        sy += r[j];
        sxx += r[i] * r[i];
        syy += r[j] * r[j];
        sxy += r[i] * r[j];
      }
      if (n < 2) continue;
      const double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
      if (vx <= 0 || vy <= 0) continue;
      const double rho = std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
      m[i][j] = m[j][i] = rho;
    }
  }
  return m;
}

CorrelationMatrix trait_correlation(std::span<const Trajectory> episodes) {
  std::vector<std::map<TraitId, int>> annotated;
  for (const auto& ep : episodes)
    for (const auto& rec : ep) annotated.push_back(rec.valences);
  return trait_correlation(annotated);
}

WalkthroughProfile annotate_walkthrough(const WorldSpec& world, ValenceOracle& oracle) {
  WalkthroughProfile p;
  const auto replay = replay_walkthrough(world);
  p.actions = replay.trajectory.size();
  if (p.actions == 0) return p;
  for (const auto& rec : replay.trajectory)
    for (TraitId t : kAllTraits) {
      const int v = oracle.classify(t, rec.observation, rec.action).value();
      if (v > 0) p.pct_high[trait_index(t)] += 1;
      if (v < 0) p.pct_low[trait_index(t)] += 1;
    }
  for (std::size_t i = 0; i < kAllTraits.size(); ++i) {
    p.pct_high[i] *= 100.0 / static_cast<double>(p.actions);
    p.pct_low[i] *= 100.0 / static_cast<double>(p.actions);
  }
  return p;
}

nlohmann::json to_json(const CriteriaResult& r) {
  nlohmann::json traits = nlohmann::json::object();
  for (const auto& c : r.traits)
    traits[std::string(to_string(c.trait))] = {{"cnt", c.cnt},       {"cnt_down", c.cnt_down}, {"avg_up", c.avg_up},
                                               {"avg_np", c.avg_np}, {"avg_down", c.avg_down}, {"diff", c.diff}};
  return {{"games", r.games}, {"traits", traits}};
}

nlohmann::json to_json(const stats::StatResult& r) {
  nlohmann::json j = {{"statistic", r.statistic},
                      {"p_value", r.p_value},
                      {"n", r.n},
                      {"method", std::string(stats::to_string(r.method))}};
  if (r.method != stats::Method::ChiSquare) {
    j["w_plus"] = r.w_plus;
    j["w_minus"] = r.w_minus;
  }
  return j;
}

nlohmann::json to_json(const std::vector<TraitStats>& s) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& t : s) {
    nlohmann::json j;
    auto put = [&](const char* name, const stats::StatResult& r) {
      const bool undef = std::find(t.undefined.begin(), t.undefined.end(), name) != t.undefined.end();
      j[name] = undef ? nlohmann::json(nullptr) : to_json(r);
    };
    put("up_np", t.up_np);
    put("np_down", t.np_down);
    put("up_down", t.up_down);
    j["friedman"] = to_json(t.friedman);
    out[std::string(to_string(t.trait))] = j;
  }
  return out;
}

nlohmann::json to_json(const TrajectoryMetrics& m) {
  return {{"episodes", m.episodes},           {"traj_len", m.traj_len},
          {"visit_com", m.visit_com},         {"visit_unc", m.visit_unc},
          {"visit_total", m.visit_total},     {"avg_step_com", opt_json(m.avg_step_com)},
          {"avg_step_unc", opt_json(m.avg_step_unc)}, {"avg_step_total", opt_json(m.avg_step_total)}};
}

nlohmann::json to_json(const AlignmentResult& a) {
  return {{"agent", {{"high", a.agent.high}, {"low", a.agent.low}}},
          {"np", {{"high", a.np.high}, {"low", a.np.low}}},
          {"r_up", opt_json(a.r_up)},
          {"r_down", opt_json(a.r_down)},
          {"ratio", opt_json(a.ratio)}};
}

nlohmann::json to_json(const RewardActionStats& s) {
  return {{"episodes", s.episodes}, {"q_mean", opt_json(s.q_mean)}, {"count_mean", s.count_mean}};
}

nlohmann::json to_json(const CorrelationMatrix& m) {
  nlohmann::json labels = nlohmann::json::array(), rows = nlohmann::json::array();
  for (TraitId t : kAllTraits) labels.push_back(std::string(to_string(t)));
  for (const auto& row : m) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& v : row) r.push_back(opt_json(v));
    rows.push_back(r);
  }
  return {{"traits", labels}, {"matrix", rows}};
}

nlohmann::json to_json(const WalkthroughProfile& p) {
  nlohmann::json traits = nlohmann::json::object();
  for (TraitId t : kAllTraits)
    traits[std::string(to_string(t))] = {{"high", p.pct_high[trait_index(t)]}, {"low", p.pct_low[trait_index(t)]}};
  return {{"actions", p.actions}, {"traits", traits}};
}

std::string format_criteria(const CriteriaResult& r) {
  std::ostringstream out;
  out << pad("", 6);
  for (TraitId t : kAllTraits) out << pad(std::string(to_string(t)), 22);
  out << "\n" << pad("", 6);
  for (std::size_t i = 0; i < kAllTraits.size(); ++i) out << pad("up", 8) << pad("NP", 7) << pad("down", 7);
  out << "\n" << pad("Avg.", 6);
  for (const auto& c : r.traits)
    out << pad(fmt("%.2f", c.avg_up), 8) << pad(fmt("%.2f", c.avg_np), 7) << pad(fmt("%.2f", c.avg_down), 7);
  out << "\n" << pad("Cnt.", 6);
  for (const auto& c : r.traits) out << pad(std::to_string(c.cnt), 8) << pad("", 7) << pad(std::to_string(c.cnt_down), 7);
  out << "\n" << pad("Diff.", 6);
  for (const auto& c : r.traits) out << pad(fmt("%+.2f", c.diff), 8) << pad("", 14);
  out << "\n";
  return out.str();
}

std::string format_trait_stats(const std::vector<TraitStats>& s) {
  std::ostringstream out;
  out << pad("trait", 6) << pad("T(up,NP)", 10) << pad("p", 8) << pad("T(NP,down)", 12) << pad("p", 8)
      << pad("T(up,down)", 12) << pad("p", 8) << pad("Fr", 8) << pad("p", 8) << "\n";
  for (const auto& t : s) {
    auto cell = [&](const char* name, const stats::StatResult& r, std::size_t w) {
      if (std::find(t.undefined.begin(), t.undefined.end(), name) != t.undefined.end())
        return pad("-", w) + pad("-", 8);
      return pad(fmt("%.1f", r.statistic), w) + pad(fmt("%.3f", r.p_value), 8);
    };
    out << pad(std::string(to_string(t.trait)), 6) << cell("up_np", t.up_np, 10) << cell("np_down", t.np_down, 12)
        << cell("up_down", t.up_down, 12) << pad(fmt("%.1f", t.friedman.statistic), 8)
        << pad(fmt("%.3f", t.friedman.p_value), 8) << "\n";
  }
  return out.str();
}

std::string format_trajectory_metrics(const std::vector<std::pair<std::string, TrajectoryMetrics>>& rows) {
  std::ostringstream out;
  out << pad("agent", 10) << pad("len", 8) << pad("v.com", 8) << pad("v.unc", 8) << pad("v.tot", 8)
      << pad("s.com", 8) << pad("s.unc", 8) << pad("s.tot", 8) << "\n";
  for (const auto& [label, m] : rows)
    out << pad(label, 10) << pad(fmt("%.2f", m.traj_len), 8) << pad(fmt("%.2f", m.visit_com), 8)
        << pad(fmt("%.2f", m.visit_unc), 8) << pad(fmt("%.2f", m.visit_total), 8) << pad(fmt_opt(m.avg_step_com), 8)
        << pad(fmt_opt(m.avg_step_unc), 8) << pad(fmt_opt(m.avg_step_total), 8) << "\n";
  return out.str();
}

std::string format_correlation(const CorrelationMatrix& m) {
  std::ostringstream out;
  out << pad("", 5);
  for (TraitId t : kAllTraits) out << pad(std::string(to_string(t)), 7);
  out << "\n";
  for (TraitId t : kAllTraits) {
    out << pad(std::string(to_string(t)), 5);
    for (const auto& v : m[trait_index(t)]) out << pad(fmt_opt(v), 7);
    out << "\n";
  }
  return out.str();
}

std::string format_walkthrough(const WalkthroughProfile& p) {
  std::ostringstream out;
  out << pad("", 6);
  for (TraitId t : kAllTraits) out << pad(std::string(to_string(t)), 7);
  out << "\n" << pad("high", 6);
  for (double v : p.pct_high) out << pad(fmt("%.1f", v), 7);
  out << "\n" << pad("low", 6);
  for (double v : p.pct_low) out << pad(fmt("%.1f", v), 7);
  out << "\n";
  return out.str();
}

}  // namespace panda
