#include "nsnet/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nsnet/logspace.hpp"
#include "nsnet/tape.hpp"

namespace nsnet {

std::string to_string(Task task) { return task == Task::marginals ? "marginals" : "counting"; }

Task parse_task(const std::string& name) {
  if (name == "marginals") return Task::marginals;
  if (name == "counting") return Task::counting;
  throw std::invalid_argument("unknown task '" + name + "' (expected marginals|counting)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (d < 1 || hidden < 1) throw std::invalid_argument("widths must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max steps must be >= 0");
  if (warmup_steps < 0) throw std::invalid_argument("warmup steps must be >= 0");
  if (!(target_loss >= 0.0)) throw std::invalid_argument("target loss must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval interval must be >= 1");
}

double scheduled_learning_rate(const TrainConfig& config, long step, long total_steps) {
  double lr = config.learning_rate;
  if (config.lr_schedule == LrSchedule::cosine && total_steps > 0) {
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    lr *= static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  return lr;
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown learning-rate schedule: " + name);
}

std::string to_string(LrSchedule schedule) {
  return schedule == LrSchedule::cosine ? "cosine" : "constant";
}

LabeledInstance LabeledInstance::make(std::string id, CnfFormula formula,
                                      std::optional<Marginals> marginals,
                                      std::optional<double> ln_count) {
  if (marginals) {
    if (marginals->num_vars() != formula.num_vars()) {
      throw TrainError(id + ": marginal label covers " + std::to_string(marginals->num_vars()) +
                       " variables, formula has " + std::to_string(formula.num_vars()));
    }
    for (double p : marginals->p1) {
      if (!(p >= 0.0 && p <= 1.0)) throw TrainError(id + ": marginal label outside [0,1]");
    }
  }
  if (ln_count && !std::isfinite(*ln_count)) throw TrainError(id + ": non-finite ln count label");
  FactorGraph graph = FactorGraph::build(formula);
  return LabeledInstance{std::move(id), std::move(formula), std::move(graph), std::move(marginals),
                         ln_count};
}

namespace {

double kl_term(double t, double p) {
  if (t <= 0.0) return 0.0;
  return t * (std::log(t) - std::log(std::max(p, kProbabilityFloor)));
}

const Marginals& marginal_label(const LabeledInstance& inst) {
  if (!inst.marginals) throw TrainError(inst.id + ": missing marginal label");
  return *inst.marginals;
}

double count_label(const LabeledInstance& inst) {
  if (!inst.ln_count) throw TrainError(inst.id + ": missing ln-count label");
  return *inst.ln_count;
}

}  // namespace

double kl_loss(const Marginals& pred, const Marginals& truth) {
  if (pred.num_vars() != truth.num_vars()) {
    throw std::invalid_argument("kl_loss: variable sets differ");
  }
  if (truth.num_vars() == 0) return 0.0;
  double total = 0.0;
  for (int v = 1; v <= truth.num_vars(); ++v) {
    total += kl_term(truth.b1(v), pred.b1(v)) + kl_term(truth.b0(v), pred.b0(v));
  }
  return total / truth.num_vars();
}

double mse_lnz_loss(double pred_ln_z, double true_ln_z) {
  if (!std::isfinite(pred_ln_z) || !std::isfinite(true_ln_z)) {
    throw std::invalid_argument("mse_lnz_loss: non-finite input");
  }
  const double diff = pred_ln_z - true_ln_z;
  return diff * diff;
}

ForwardOptions forward_options_for(const TrainConfig& config) {
  ForwardOptions options;
  options.iterations = config.iterations;
  options.factor_readout = config.task == Task::counting;
  return options;
}

double instance_loss(const LabeledInstance& instance, const ModelParams& params,
                     const TrainConfig& config) {
  const NsnetOutput out = forward(instance.graph, params, forward_options_for(config));
  if (config.task == Task::marginals) return kl_loss(out.marginals, marginal_label(instance));
  return mse_lnz_loss(*out.ln_z, count_label(instance));
}

double mean_loss(std::span<const LabeledInstance> instances, const ModelParams& params,
                 const TrainConfig& config) {
  if (instances.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& inst : instances) total += instance_loss(inst, params, config);
  return total / static_cast<double>(instances.size());
}

LossAndGrad grad(std::span<const LabeledInstance> batch, const ModelParams& params,
                 const TrainConfig& config) {
  if (batch.empty()) throw TrainError("empty batch");
  LossAndGrad result{0.0, params.zeros_like()};
  const double scale = 1.0 / static_cast<double>(batch.size());
  const ForwardOptions options = forward_options_for(config);
  for (const auto& inst : batch) {
    ForwardTape tape = forward_with_tape(inst.graph, params, options);
    OutputGradient seed;
    seed.d_var_log_belief.assign(static_cast<std::size_t>(2 * inst.graph.num_vars()), 0.0);
    double loss = 0.0;
    if (config.task == Task::marginals) {
      const Marginals& truth = marginal_label(inst);
      loss = kl_loss(tape.output.marginals, truth);
      const double n = truth.num_vars();
      for (int v = 0; v < truth.num_vars(); ++v) {
        for (int x = 0; x < 2; ++x) {
          const auto i = static_cast<std::size_t>(2 * v + x);
          const double t = x == 1 ? truth.b1(v + 1) : truth.b0(v + 1);
          const double p = logspace::safe_exp(tape.var_log_belief[i]);
          // d/d ln p of -t ln max(p, floor); flat where the floor is active.
          if (t > 0.0 && p >= kProbabilityFloor) seed.d_var_log_belief[i] = -t / n * scale;
        }
      }
    } else {
      const double pred = *tape.output.ln_z;
      const double truth = count_label(inst);
      if (!std::isfinite(pred)) throw TrainError(inst.id + ": non-finite ln Z estimate");
      loss = mse_lnz_loss(pred, truth);
      seed.d_ln_z = 2.0 * (pred - truth) * scale;
    }
    if (!std::isfinite(loss)) throw TrainError(inst.id + ": non-finite loss");
    result.loss += loss * scale;
    backward(inst.graph, params, tape, seed, result.grads);
  }
  for (const auto& block : result.grads.blocks()) {
    for (double g : block.values) {
      if (!std::isfinite(g)) throw TrainError("non-finite gradient in " + block.name);
    }
  }
  return result;
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  return OptimizerState{params.zeros_like(), params.zeros_like(), 0};
}

double global_norm(ModelParams& grads) {
  double sq = 0.0;
  for (const auto& block : grads.blocks()) {
    for (double g : block.values) sq += g * g;
  }
  return std::sqrt(sq);
}

void adam_step(ModelParams& params, ModelParams& grads, OptimizerState& state,
               const TrainConfig& config) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  auto p_blocks = params.blocks();
  auto g_blocks = grads.blocks();
  auto m_blocks = state.m.blocks();
  auto v_blocks = state.v.blocks();
  if (p_blocks.size() != g_blocks.size() || p_blocks.size() != m_blocks.size()) {
    throw std::invalid_argument("adam_step: parameter shapes differ");
  }

  const double norm = global_norm(grads);
  const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    auto p = p_blocks[b].values;
    auto g = g_blocks[b].values;
    auto m = m_blocks[b].values;
    auto v = v_blocks[b].values;
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
      throw std::invalid_argument("adam_step: shape mismatch in " + p_blocks[b].name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i] * clip;
      if (!config.decoupled_weight_decay) gi += config.weight_decay * p[i];
      g[i] = gi;
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      if (config.decoupled_weight_decay) p[i] -= config.learning_rate * config.weight_decay * p[i];
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

TrainResult train_loop(std::span<const LabeledInstance> train,
                       std::span<const LabeledInstance> val, const TrainConfig& config,
                       const ModelParams* initial, const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  ModelParams params = initial ? *initial : init_params(config.d, config.seed, config.hidden);
  result.params = params;
  if (config.epochs == 0) return result;
  if (train.empty()) throw TrainError("training set is empty");

  OptimizerState state = OptimizerState::for_params(params);
  Rng rng(derive_seed(config.seed, 1));
  double best = val.empty() ? std::numeric_limits<double>::infinity()
                            : mean_loss(val, params, config);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batches_per_epoch =
      static_cast<long>((train.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                        static_cast<std::size_t>(config.batch_size));
  const long total_steps = config.max_steps > 0 ? std::min(config.max_steps, config.epochs * batches_per_epoch)
                                                : config.epochs * batches_per_epoch;
  TrainConfig step_config = config;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    bool budget_hit = false;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<LabeledInstance> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      LossAndGrad lg;
      try {
        lg = grad(batch, params, config);
      } catch (const TrainError& e) {
        result.diverged = true;
        result.divergence_reason = e.what();
        spdlog::warn("training diverged at epoch {}: {}", epoch, e.what());
        return result;
      }
      loss_sum += lg.loss;
      ++batches;
      step_config.learning_rate = scheduled_learning_rate(config, result.steps + 1, total_steps);
      adam_step(params, lg.grads, state, step_config);
      ++result.steps;
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        budget_hit = true;
        break;
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / batches;
    const bool last_epoch = budget_hit || epoch == config.epochs;
    const bool evaluated = val.empty() || last_epoch || epoch % config.eval_every == 0;
    if (!val.empty() && evaluated) record.val_loss = mean_loss(val, params, config);
    const double metric = val.empty() ? record.train_loss : record.val_loss;
    if (!std::isfinite(record.train_loss) || (evaluated && !std::isfinite(metric))) {
      result.diverged = true;
      result.divergence_reason = "non-finite loss at epoch " + std::to_string(epoch);
      spdlog::warn("{}", result.divergence_reason);
      return result;
    }
    result.history.push_back(record);
    spdlog::info("epoch {} train_loss {:.6g} val_loss {:.6g}", epoch, record.train_loss,
                 record.val_loss);
    if (on_epoch) on_epoch(record);
    if (!evaluated) continue;
    if (metric < best) {
      best = metric;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (budget_hit) break;
    if (config.target_loss > 0.0 && metric <= config.target_loss) {
      spdlog::info("target loss {:.6g} reached at epoch {}", config.target_loss, epoch);
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',';
    if (std::isfinite(r.val_loss)) out << r.val_loss;
    out << '\n';
  }
  return out.str();
}

}  // namespace nsnet
