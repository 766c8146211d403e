#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsnet/cnf.hpp"
#include "nsnet/factor_graph.hpp"
#include "nsnet/marginals.hpp"
#include "nsnet/nsnet.hpp"
#include "nsnet/rng.hpp"

namespace nsnet {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { marginals, counting };

std::string to_string(Task task);
/// Accepts "marginals" or "counting".
Task parse_task(const std::string& name);

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  Task task = Task::marginals;
  double learning_rate = 1e-4;
  double weight_decay = 1e-10;
  /// Apply weight decay directly to the weights instead of as an L2 gradient term.
  bool decoupled_weight_decay = false;
  double clip_norm = 0.65;
  int batch_size = 16;
  int epochs = 1;
  std::uint64_t seed = 0;
  int iterations = kDefaultIterations;
  int d = kDefaultEmbeddingDim;
  int hidden = 64;
  /// Stop after this many optimizer steps (0 = no limit).
  long max_steps = 0;
  /// Cosine decays to zero over the run (max_steps, else epochs x batches).
  LrSchedule lr_schedule = LrSchedule::constant;
  /// Linear ramp of the learning rate over the first steps (0 = none).
  long warmup_steps = 0;
  /// Stop once the checkpoint metric reaches this value (0 = never).
  double target_loss = 0.0;
  /// Validate every this many epochs and after the last one; other epochs record no val_loss.
  int eval_every = 1;

  void validate() const;
};

/// A formula, its factor graph and the supervision for one task.
struct LabeledInstance {
  std::string id;
  CnfFormula formula;
  FactorGraph graph;
  std::optional<Marginals> marginals;
  std::optional<double> ln_count;

  static LabeledInstance make(std::string id, CnfFormula formula,
                              std::optional<Marginals> marginals,
                              std::optional<double> ln_count);
};

/// Mean over variables of KL(truth || pred); prediction probabilities floored at 1e-12.
double kl_loss(const Marginals& pred, const Marginals& truth);
/// (pred - truth)^2.
double mse_lnz_loss(double pred_ln_z, double true_ln_z);

inline constexpr double kProbabilityFloor = 1e-12;

ForwardOptions forward_options_for(const TrainConfig& config);

/// Learning rate for 1-based optimizer step `step` of a run of `total_steps`.
double scheduled_learning_rate(const TrainConfig& config, long step, long total_steps);
LrSchedule parse_lr_schedule(const std::string& name);
std::string to_string(LrSchedule schedule);

/// Loss of one instance under the configured task (forward only).
double instance_loss(const LabeledInstance& instance, const ModelParams& params,
                     const TrainConfig& config);
/// Mean loss over a set of instances (forward only). Empty set -> NaN.
double mean_loss(std::span<const LabeledInstance> instances, const ModelParams& params,
                 const TrainConfig& config);

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean batch loss and its exact gradient w.r.t. every parameter.
LossAndGrad grad(std::span<const LabeledInstance> batch, const ModelParams& params,
                 const TrainConfig& config);

struct OptimizerState {
  ModelParams m;
  ModelParams v;
  long step = 0;

  static OptimizerState for_params(const ModelParams& params);
};

double global_norm(ModelParams& grads);

/// Global-norm clip, then L2 weight decay, then one Adam update. `grads` is modified.
void adam_step(ModelParams& params, ModelParams& grads, OptimizerState& state,
               const TrainConfig& config);

template <typename T>
struct DatasetSplit {
  std::vector<T> train, val, test;
};

/// Deterministic shuffled split; the first two parts get floor(ratio * n).
template <typename T>
DatasetSplit<T> split_dataset(std::vector<T> items, std::array<double, 3> ratios,
                              std::uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("cannot split an empty dataset");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n = static_cast<double>(items.size());
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * n + 1e-9));
  const auto n_val = std::min(items.size() - n_train,
                              static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9)));
  DatasetSplit<T> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& item = items[order[i]];
    if (i < n_train) {
      out.train.push_back(std::move(item));
    } else if (i < n_train + n_val) {
      out.val.push_back(std::move(item));
    } else {
      out.test.push_back(std::move(item));
    }
  }
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams params;  // best checkpoint
  std::vector<EpochRecord> history;
  long steps = 0;
  int best_epoch = 0;  // 0 = initial parameters
  bool diverged = false;
  std::string divergence_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Shuffled mini-batch training. The checkpoint with the lowest validation loss
 * (training loss when `val` is empty) is returned. A non-finite loss stops
 * training and returns the last good checkpoint.
 */
TrainResult train_loop(std::span<const LabeledInstance> train,
                       std::span<const LabeledInstance> val, const TrainConfig& config,
                       const ModelParams* initial = nullptr, const EpochCallback& on_epoch = {});

/// Per-epoch history as CSV: epoch,train_loss,val_loss.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace nsnet
