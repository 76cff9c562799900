#pragma once

// BPR training: uniform negative sampling, the pairwise loss with L2 on the
// parameters a batch touches, its exact gradient, sparse Adam, per-epoch
// node dropout and early stopping on Recall@K.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "akgan/evaluation.hpp"
#include "akgan/model.hpp"

namespace akgan {

enum class RegularizationScope { batch, full };

struct TrainConfig {
  double learning_rate = 1e-4;
  double l2 = 1e-5;
  double temperature = 0.1;
  int layers = 2;
  std::size_t batch_size = 1024;
  double node_dropout = 0.0;
  int patience = 10;
  int max_epochs = 1000;
  std::uint64_t seed = 2022;
  Variant variant = Variant::akgan;
  DimensionSchedule schedule;
  RegularizationScope regularization = RegularizationScope::batch;
  std::size_t eval_k = 20;
  // Fraction of each user's train items held out for early stopping; 0 uses the test set.
  double validation_fraction = 0.0;
  // Caps batches per epoch for smoke runs; 0 means a full epoch.
  std::size_t max_batches_per_epoch = 0;

  /// Throws ConfigError; warns for layer counts outside {1, 2, 3}.
  void validate() const;
};

struct TrainTriple {
  UserId user = 0;
  ItemId positive = 0;
  ItemId negative = 0;

  bool operator==(const TrainTriple&) const = default;
};

/// Draws (u, i+) uniformly from the observed train pairs and i- uniformly
/// from the items u has not interacted with.
class TripleSampler {
 public:
  explicit TripleSampler(const InteractionSet& data);

  std::vector<TrainTriple> sample(std::size_t batch_size, std::mt19937_64& rng) const;
  std::size_t positive_count() const { return offsets_.back(); }

 private:
  const InteractionSet& data_;
  std::vector<std::size_t> offsets_;  // prefix sums of train list sizes
};

std::vector<TrainTriple> sample_batch(const InteractionSet& data, std::size_t batch_size,
                                      std::mt19937_64& rng);

/// Everything the objective reads. means is the epoch snapshot and is a
/// constant of the objective.
struct ModelState {
  const ModelSpec& spec;
  const KnowledgeGraph& graph;
  const InteractionSet& data;
  const ParameterStore& params;
  const ItemBlockMeans& means;
  double l2 = 0.0;
  RegularizationScope regularization = RegularizationScope::batch;
};

/// sum over the batch of -ln sigmoid(y(u,i+) - y(u,i-)) + l2 * ||Theta_touched||^2.
double bpr_loss(std::span<const TrainTriple> batch, const ModelState& state);

/// Only the pairwise part of the loss.
double pairwise_loss(std::span<const TrainTriple> batch, const ModelState& state);

/// Exact gradient of bpr_loss into grads (cleared first). Returns the loss.
double gradients(std::span<const TrainTriple> batch, const ModelState& state,
                 GradientStore& grads);

/// -ln sigmoid(x), computed as softplus(-x).
double neg_log_sigmoid(double x);

/// Per-row Adam moments and step counts, allocated on first touch.
class AdamState {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const ParameterStore& params);

  struct Row {
    std::span<double> m;
    std::span<double> v;
    std::uint64_t& steps;
  };
  Row row(std::size_t table, std::size_t r);
  bool allocated(std::size_t table, std::size_t r) const;
  std::uint64_t steps(std::size_t table, std::size_t r) const;
  std::span<const double> first_moment(std::size_t table, std::size_t r) const;

  void save(std::ostream& out) const;
  void load(std::istream& in);
  bool operator==(const AdamState&) const = default;

 private:
  struct Table {
    std::size_t width = 0;
    std::vector<std::int32_t> slot;
    std::vector<double> m;
    std::vector<double> v;
    std::vector<std::uint64_t> steps;
    bool operator==(const Table&) const = default;
  };
  std::vector<Table> tables_;
};

/// One Adam update on the rows present in grads. Throws NumericError (and
/// leaves params untouched) when any gradient entry is not finite.
void adam_step(ParameterStore& params, const GradientStore& grads, AdamState& state, double lr);

/// Removes every entity with probability ratio from all neighbor sets.
KnowledgeGraph node_dropout(const KnowledgeGraph& g, double ratio, std::mt19937_64& rng);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double seconds = 0.0;
};

/// Stateful epoch loop. Resumable through save_state/load_state.
class Trainer {
 public:
  Trainer(TrainConfig config, const KnowledgeGraph& graph, const InteractionSet& data);

  EpochLog run_epoch();
  bool finished() const;

  const TrainConfig& config() const { return config_; }
  const ModelSpec& spec() const { return spec_; }
  const ParameterStore& params() const { return params_; }
  const ParameterStore& best_params() const { return best_params_; }
  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_recall() const { return best_metric_; }
  const std::vector<EpochLog>& log() const { return log_; }

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  std::mt19937_64 epoch_rng(int epoch, std::uint64_t stream) const;

  TrainConfig config_;
  const KnowledgeGraph& graph_;
  const InteractionSet& data_;
  InteractionSet fit_data_;         // train lists used for fitting
  InteractionSet validation_data_;  // early-stopping split (test = held-out part)
  ModelSpec spec_;
  ParameterStore params_;
  ParameterStore best_params_;
  AdamState adam_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_metric_ = -1.0;
  int stale_epochs_ = 0;
  std::vector<EpochLog> log_;
};

struct TrainResult {
  ModelSpec spec;
  ParameterStore best_params;
  ParameterStore final_params;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

TrainResult train(const TrainConfig& config, const KnowledgeGraph& graph,
                  const InteractionSet& data,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace akgan
