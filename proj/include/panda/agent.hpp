#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "panda/trait.hpp"

namespace panda {

/// Target trait and signed weight for Q' = Q + weight * valence.
/// No trait means the unguided baseline; the weight is then ignored.
struct ShapingConfig {
  std::optional<TraitId> trait;
  double weight = 2.0;

  static ShapingConfig none() { return {}; }
  static ShapingConfig toward(TraitId t, double w) {
    if (w == 0.0) throw std::invalid_argument("shaping weight must be non-zero when a trait is set");
    return {t, w};
  }
};

double shape_q(double q, Valence valence, double weight);

/// Sparse L2-normalized bag of hashed tokens, sorted by index.
struct Features {
  std::vector<std::pair<std::uint32_t, double>> entries;

  std::vector<double> dense(std::size_t dim) const;
  double norm() const;
};

/// Two-layer value head over hashed bag-of-words encodings of the
/// observation and the action:
///   h = relu(W_obs^T phi(obs) + W_act^T phi(act) + b1),  q = w2 . h + b2
/// All parameters live in one flat vector so optimizers, gradient checks and
/// checkpoints can treat them uniformly.
class QModel {
 public:
  static constexpr int kDefaultHashDim = 512;
  static constexpr int kDefaultHiddenDim = 128;

  QModel(int hash_dim = kDefaultHashDim, int hidden_dim = kDefaultHiddenDim);

  /// Small uniform random initialization, deterministic in `seed`.
  static QModel random(std::uint64_t seed, int hash_dim = kDefaultHashDim, int hidden_dim = kDefaultHiddenDim);

  int hash_dim() const { return hash_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  Features encode(std::string_view text) const;

  double q_value(std::string_view obs, std::string_view action) const;
  double q_value(const Features& obs, const Features& action) const;

  /// Adds scale * dq/dtheta to `grad` (same layout as params()).
  void accumulate_gradient(const Features& obs, const Features& action, double scale,
                           std::vector<double>& grad) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Offsets into params() for each block.
  std::size_t obs_weight(std::uint32_t feature, int unit) const;
  std::size_t act_weight(std::uint32_t feature, int unit) const;
  std::size_t hidden_bias(int unit) const;
  std::size_t out_weight(int unit) const;
  std::size_t out_bias() const;

  /// 64-bit digest of shape and weights; identifies a checkpoint.
  std::uint64_t fingerprint() const;

  friend bool operator==(const QModel&, const QModel&) = default;

 private:
  double forward(const Features& obs, const Features& action, std::vector<double>* pre) const;

  int hash_dim_;
  int hidden_dim_;
  std::vector<double> params_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const QModel& model);
QModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const QModel& model);
QModel load_checkpoint(const std::filesystem::path& path);

/// Softmax over `values` after subtracting the max. Throws on empty input.
std::vector<double> softmax(std::span<const double> values);

enum class Selection { Sample, Greedy };

/// Samples an index from softmax(values), or the argmax with lowest-index
/// tie-break in greedy mode.
std::size_t select_action(std::span<const double> values, std::mt19937_64& rng, Selection mode = Selection::Sample);
std::size_t argmax(std::span<const double> values);

struct Transition {
  std::string obs;
  std::string action;
  double reward = 0.0;
  std::string next_obs;
  std::vector<std::string> next_candidates;
  bool done = false;
};

using TransitionPtr = std::shared_ptr<const Transition>;

/// Fixed-capacity FIFO of transitions. push() may be called concurrently.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000, double priority_fraction = 0.5);

  void push(Transition t);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::size_t reward_count() const;
  double priority_fraction() const { return priority_fraction_; }

  /// ceil(fraction * n) draws from reward-bearing items (uniform fallback when
  /// there are none) and the rest from all items, with replacement.
  std::vector<TransitionPtr> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  double priority_fraction_;
  mutable std::mutex mu_;
  std::deque<TransitionPtr> items_;
  std::deque<TransitionPtr> rewarded_;  // subset of items_, same FIFO order
};

inline std::vector<TransitionPtr> replay_sample(const ReplayBuffer& buffer, std::size_t batch, std::mt19937_64& rng) {
  return buffer.sample(batch, rng);
}

/// Memoizes encode() per text; not thread-safe, one per learner.
class FeatureCache {
 public:
  explicit FeatureCache(const QModel& model) : model_(&model) {}
  const Features& get(const std::string& text);

 private:
  const QModel* model_;
  std::unordered_map<std::string, Features> map_;
};

struct TdParams {
  double discount = 0.9;
  double grad_clip = 5.0;
  double learning_rate = 1e-2;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One SGD step on the mean squared TD error. Targets use unshaped Q:
/// y = r + discount * max_a' Q(s', a') for non-terminal items. The gradient
/// norm is clipped to grad_clip. Returns the loss before the update.
double td_update(QModel& model, std::span<const TransitionPtr> batch, const TdParams& params,
                 FeatureCache* cache = nullptr);

}  // namespace panda
