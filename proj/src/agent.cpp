#include "panda/agent.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "panda/text.hpp"

namespace panda {

double shape_q(double q, Valence valence, double weight) { return q + weight * valence.value(); }

// --- features -------------------------------------------------------------

std::vector<double> Features::dense(std::size_t dim) const {
  std::vector<double> out(dim, 0.0);
  for (const auto& [i, v] : entries) out.at(i) = v;
  return out;
}

double Features::norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.second * e.second;
  return std::sqrt(s);
}

// --- model ----------------------------------------------------------------

QModel::QModel(int hash_dim, int hidden_dim) : hash_dim_(hash_dim), hidden_dim_(hidden_dim) {
  if (hash_dim <= 0 || hidden_dim <= 0) throw std::invalid_argument("model dimensions must be positive");
  const auto d = static_cast<std::size_t>(hash_dim), h = static_cast<std::size_t>(hidden_dim);
  params_.assign(2 * d * h + 2 * h + 1, 0.0);
}

QModel QModel::random(std::uint64_t seed, int hash_dim, int hidden_dim) {
  QModel m(hash_dim, hidden_dim);
  std::mt19937_64 rng(mix64(seed));
  auto uniform = [&](double a) { return (2.0 * uniform01(rng) - 1.0) * a; };
  const std::size_t first_layer = m.hidden_bias(0);
  for (std::size_t i = 0; i < first_layer; ++i) m.params_[i] = uniform(1.0);
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (int u = 0; u < hidden_dim; ++u) {
    m.params_[m.hidden_bias(u)] = uniform(0.1);
    m.params_[m.out_weight(u)] = uniform(a2);
  }
  return m;
}

std::size_t QModel::obs_weight(std::uint32_t feature, int unit) const {
  return static_cast<std::size_t>(feature) * hidden_dim_ + unit;
}
std::size_t QModel::act_weight(std::uint32_t feature, int unit) const {
  return static_cast<std::size_t>(hash_dim_ + feature) * hidden_dim_ + unit;
}
std::size_t QModel::hidden_bias(int unit) const {
  return 2 * static_cast<std::size_t>(hash_dim_) * hidden_dim_ + unit;
}
std::size_t QModel::out_weight(int unit) const { return hidden_bias(hidden_dim_) + unit; }
std::size_t QModel::out_bias() const { return out_weight(hidden_dim_); }

Features QModel::encode(std::string_view text) const {
  std::map<std::uint32_t, double> bins;
  for (const auto& tok : tokenize(text))
    bins[static_cast<std::uint32_t>(fnv1a(tok) % static_cast<std::uint64_t>(hash_dim_))] += 1.0;
  Features f;
  f.entries.assign(bins.begin(), bins.end());
  const double n = f.norm();
  if (n > 0.0)
    for (auto& e : f.entries) e.second /= n;
  return f;
}

double QModel::forward(const Features& obs, const Features& action, std::vector<double>* pre) const {
  const int H = hidden_dim_;
  std::vector<double> z(params_.begin() + static_cast<std::ptrdiff_t>(hidden_bias(0)),
                        params_.begin() + static_cast<std::ptrdiff_t>(hidden_bias(H)));
  for (const auto& [i, v] : obs.entries) {
    const double* w = &params_[obs_weight(i, 0)];
    for (int u = 0; u < H; ++u) z[u] += w[u] * v;
  }
  for (const auto& [i, v] : action.entries) {
    const double* w = &params_[act_weight(i, 0)];
    for (int u = 0; u < H; ++u) z[u] += w[u] * v;
  }
  double q = params_[out_bias()];
  const double* w2 = &params_[out_weight(0)];
  for (int u = 0; u < H; ++u)
    if (z[u] > 0.0) q += w2[u] * z[u];
  if (pre) *pre = std::move(z);
  return q;
}

double QModel::q_value(std::string_view obs, std::string_view action) const {
  return forward(encode(obs), encode(action), nullptr);
}

double QModel::q_value(const Features& obs, const Features& action) const { return forward(obs, action, nullptr); }

void QModel::accumulate_gradient(const Features& obs, const Features& action, double scale,
                                 std::vector<double>& grad) const {
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  std::vector<double> z;
  forward(obs, action, &z);
  const int H = hidden_dim_;
  grad[out_bias()] += scale;
  std::vector<double> dz(H, 0.0);
  for (int u = 0; u < H; ++u) {
    if (z[u] <= 0.0) continue;
    grad[out_weight(u)] += scale * z[u];
    dz[u] = scale * params_[out_weight(u)];
    grad[hidden_bias(u)] += dz[u];
  }
  for (const auto& [i, v] : obs.entries) {
    double* g = &grad[obs_weight(i, 0)];
    for (int u = 0; u < H; ++u) g[u] += dz[u] * v;
  }
  for (const auto& [i, v] : action.entries) {
    double* g = &grad[act_weight(i, 0)];
    for (int u = 0; u < H; ++u) g[u] += dz[u] * v;
  }
}

std::uint64_t QModel::fingerprint() const {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(hash_dim_) << 32 | static_cast<std::uint32_t>(hidden_dim_));
  for (double p : params_) h = mix64(h ^ std::bit_cast<std::uint64_t>(p));
  return h;
}

// --- checkpoint -----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'P', 'A', 'N', 'D', 'A', 'Q', 'M', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.write(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bits{};
  if (!in.read(reinterpret_cast<char*>(bits.data()), sizeof(T))) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}
}  // namespace

void write_checkpoint(std::ostream& out, const QModel& model) {
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hash_dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden_dim()));
  put_le<std::uint64_t>(out, model.params().size());
  for (double p : model.params()) put_le<double>(out, p);
}

QModel read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError("not a model checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto hash_dim = get_le<std::uint32_t>(in);
  const auto hidden = get_le<std::uint32_t>(in);
  const auto count = get_le<std::uint64_t>(in);
  QModel model(static_cast<int>(hash_dim), static_cast<int>(hidden));
  if (count != model.params().size()) throw CheckpointError("checkpoint parameter count does not match its shape");
  for (double& p : model.params()) p = get_le<double>(in);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const QModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(out, model);
}

QModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  return read_checkpoint(in);
}

// --- action selection -----------------------------------------------------

std::vector<double> softmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("softmax of an empty list");
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> p(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    p[i] = std::exp(values[i] - top);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t select_action(std::span<const double> values, std::mt19937_64& rng, Selection mode) {
  if (values.empty()) throw std::invalid_argument("cannot select from an empty candidate list");
  if (mode == Selection::Greedy) return argmax(values);
  const auto p = softmax(values);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

// --- replay ---------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, double priority_fraction)
    : capacity_(capacity), priority_fraction_(priority_fraction) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (!(priority_fraction >= 0.0 && priority_fraction <= 1.0))
    throw std::invalid_argument("replay priority fraction must lie in [0, 1]");
}

void ReplayBuffer::push(Transition t) {
  auto item = std::make_shared<const Transition>(std::move(t));
  std::lock_guard lock(mu_);
  if (items_.size() == capacity_) {
    if (!rewarded_.empty() && rewarded_.front() == items_.front()) rewarded_.pop_front();
    items_.pop_front();
  }
  if (item->reward != 0.0) rewarded_.push_back(item);
  items_.push_back(std::move(item));
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::size_t ReplayBuffer::reward_count() const {
  std::lock_guard lock(mu_);
  return rewarded_.size();
}

std::vector<TransitionPtr> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  std::lock_guard lock(mu_);
  if (items_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  std::vector<TransitionPtr> out;
  out.reserve(n);
  const auto prioritized = static_cast<std::size_t>(std::ceil(priority_fraction_ * static_cast<double>(n)));
  const auto& pool = rewarded_.empty() ? items_ : rewarded_;
  for (std::size_t i = 0; i < prioritized && i < n; ++i) out.push_back(pool[uniform_index(rng, pool.size())]);
  while (out.size() < n) out.push_back(items_[uniform_index(rng, items_.size())]);
  return out;
}

// --- learning -------------------------------------------------------------

const Features& FeatureCache::get(const std::string& text) {
  if (map_.size() > 200000) map_.clear();
  auto it = map_.find(text);
  if (it == map_.end()) it = map_.emplace(text, model_->encode(text)).first;
  return it->second;
}

double td_update(QModel& model, std::span<const TransitionPtr> batch, const TdParams& params, FeatureCache* cache) {
  if (batch.empty()) throw std::invalid_argument("td_update needs a non-empty batch");
  std::optional<FeatureCache> local;
  if (!cache) cache = &local.emplace(model);

  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad(model.params().size(), 0.0);
  double loss = 0.0;
  for (const auto& item : batch) {
    double target = item->reward;
    if (!item->done) {
      if (item->next_candidates.empty())
        throw std::invalid_argument("non-terminal transition without next candidates");
      const Features& next = cache->get(item->next_obs);
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& a : item->next_candidates) best = std::max(best, model.q_value(next, cache->get(a)));
      target += params.discount * best;
    }
    const Features& obs = cache->get(item->obs);
    const Features& act = cache->get(item->action);
    const double err = model.q_value(obs, act) - target;
    loss += err * err * scale;
    model.accumulate_gradient(obs, act, 2.0 * err * scale, grad);
  }
  if (!std::isfinite(loss)) throw NonFiniteLoss("TD loss became non-finite");

  const double norm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
  const double clip = norm > params.grad_clip && norm > 0.0 ? params.grad_clip / norm : 1.0;
  const double step = params.learning_rate * clip;
  auto p = model.params();
  for (std::size_t i = 0; i < grad.size(); ++i) p[i] -= step * grad[i];
  return loss;
}

}  // namespace panda
