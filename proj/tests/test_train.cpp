#include <gtest/gtest.h>

#include <cmath>

#include "nsnet/oracle.hpp"
#include "nsnet/tape.hpp"
#include "nsnet/train.hpp"
#include "test_support.hpp"

using namespace nsnet;

namespace {

LabeledInstance labeled(const std::string& id, const CnfFormula& f) {
  const CountOutcome c = exact_count(f, 0, true);
  return LabeledInstance::make(id, f, c.result.marginals, c.result.ln_count);
}

// Same loss as the trainer, evaluated on the extended-precision forward pass.
long double reference_loss(const LabeledInstance& inst, const ModelParams& p,
                           const TrainConfig& config) {
  const ExtendedOutput out = forward_extended(inst.graph, p, forward_options_for(config));
  if (config.task == Task::counting) {
    const long double diff = *out.ln_z - static_cast<long double>(*inst.ln_count);
    return diff * diff;
  }
  const int n = inst.graph.num_vars();
  long double total = 0;
  for (int v = 0; v < n; ++v) {
    for (int x = 0; x < 2; ++x) {
      const long double t = x ? inst.marginals->b1(v + 1) : inst.marginals->b0(v + 1);
      if (t <= 0) continue;
      const long double p1 = std::exp(out.var_log_belief[static_cast<std::size_t>(2 * v + x)]);
      total += t * (std::log(t) - std::log(std::max(p1, static_cast<long double>(kProbabilityFloor))));
    }
  }
  return total / n;
}

double worst_relative_error(Task task, std::uint64_t seed, int samples_per_block) {
  const LabeledInstance inst =
      labeled("fd", CnfFormula(5, {{1, -2, 3}, {-1, 4}, {2, 5}, {5}, {-3, -4, 5}}));
  const std::vector<LabeledInstance> batch{inst};
  TrainConfig config;
  config.task = task;
  config.d = 3;
  config.hidden = 5;
  config.iterations = 2;
  ModelParams p = init_params(config.d, seed, config.hidden);
  LossAndGrad lg = grad(batch, p, config);
  auto pb = p.blocks();
  auto gb = lg.grads.blocks();
  Rng rng(seed);
  double worst = 0.0;
  constexpr double h = 1e-5;
  for (std::size_t k = 0; k < pb.size(); ++k) {
    for (int s = 0; s < samples_per_block; ++s) {
      const std::size_t i = rng.index(pb[k].values.size());
      const double old = pb[k].values[i];
      pb[k].values[i] = old + h;
      const long double up = reference_loss(inst, p, config);
      pb[k].values[i] = old - h;
      const long double down = reference_loss(inst, p, config);
      pb[k].values[i] = old;
      const double fd = static_cast<double>((up - down) / (2 * static_cast<long double>(h)));
      const double an = gb[k].values[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-8));
    }
  }
  return worst;
}

}  // namespace

TEST(KlLoss, Examples) {
  const Marginals truth({0.75, 0.5, 0.25});
  EXPECT_EQ(kl_loss(truth, truth), 0.0);
  EXPECT_NEAR(kl_loss(Marginals({0.5}), Marginals({1.0})), std::log(2.0), 1e-12);
  EXPECT_NEAR(kl_loss(Marginals({0.5}), Marginals({0.0})), std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isfinite(kl_loss(Marginals({0.0}), Marginals({1.0}))));
  EXPECT_THROW(kl_loss(Marginals({0.5}), Marginals({0.5, 0.5})), std::invalid_argument);
}

TEST(MseLoss, Examples) {
  EXPECT_EQ(mse_lnz_loss(2.0, 2.0), 0.0);
  EXPECT_NEAR(mse_lnz_loss(std::log(4.0), std::log(2.0)), 0.4804530139182014, 1e-12);
  EXPECT_EQ(mse_lnz_loss(0.0, 1.0), 1.0);
  EXPECT_THROW(mse_lnz_loss(NAN, 1.0), std::invalid_argument);
}

TEST(Gradient, MatchesFiniteDifferencesForBothTasks) {
  EXPECT_LE(worst_relative_error(Task::marginals, 3, 4), 1e-4);
  EXPECT_LE(worst_relative_error(Task::counting, 4, 4), 1e-4);
}

TEST(Gradient, StationaryAtUniformReadout) {
  const CnfFormula f(3, {{1, 2}, {2, 3}});
  const LabeledInstance inst = LabeledInstance::make("u", f, Marginals({0.5, 0.5, 0.5}), std::nullopt);
  TrainConfig config;
  config.d = 4;
  config.hidden = 6;
  config.iterations = 2;
  ModelParams p = init_params(config.d, 1, config.hidden);
  for (auto& layer : p.r_var.layers()) {
    layer.w.setZero();
    layer.b.setZero();
  }
  const std::vector<LabeledInstance> batch{inst};
  const LossAndGrad lg = grad(batch, p, config);
  EXPECT_NEAR(lg.loss, 0.0, 1e-15);
  EXPECT_NEAR(lg.grads.r_var.layers().back().b[0], 0.0, 1e-15);
}

TEST(Gradient, DuplicatingAnInstanceKeepsTheMean) {
  const LabeledInstance inst = labeled("a", nsnet::testing::f0());
  TrainConfig config;
  config.d = 4;
  config.hidden = 6;
  config.iterations = 3;
  const ModelParams p = init_params(config.d, 2, config.hidden);
  const std::vector<LabeledInstance> one{inst};
  const std::vector<LabeledInstance> two{inst, inst};
  LossAndGrad a = grad(one, p, config);
  LossAndGrad b = grad(two, p, config);
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  auto ab = a.grads.blocks();
  auto bb = b.grads.blocks();
  for (std::size_t k = 0; k < ab.size(); ++k) {
    for (std::size_t i = 0; i < ab[k].values.size(); ++i) {
      EXPECT_NEAR(ab[k].values[i], bb[k].values[i], 1e-14 * (1.0 + std::abs(ab[k].values[i])));
    }
  }
}

TEST(Gradient, MissingLabelIsAnError) {
  const LabeledInstance inst = LabeledInstance::make("x", nsnet::testing::f1(), std::nullopt, std::nullopt);
  TrainConfig config;
  config.d = 2;
  config.hidden = 4;
  const std::vector<LabeledInstance> batch{inst};
  EXPECT_THROW(grad(batch, init_params(2, 0, 4), config), TrainError);
  EXPECT_THROW(LabeledInstance::make("y", nsnet::testing::f1(), Marginals({0.5}), std::nullopt), TrainError);
}

namespace {

// One-parameter model: h1 holds the scalar, every other block is empty.
ModelParams scalar_params(double value) {
  ModelParams p;
  p.d = 1;
  p.h1 = Eigen::VectorXd::Constant(1, value);
  p.h2 = Eigen::VectorXd::Zero(0);
  return p;
}

}  // namespace

TEST(Adam, FirstStepIsLearningRateSized) {
  ModelParams p = scalar_params(0.0);
  ModelParams g = scalar_params(1.0);
  OptimizerState state = OptimizerState::for_params(p);
  TrainConfig config;
  config.learning_rate = 1e-4;
  config.weight_decay = 0.0;
  adam_step(p, g, state, config);
  // The unit gradient is clipped to norm 0.65 first; Adam then divides it by
  // its own magnitude plus epsilon.
  EXPECT_NEAR(p.h1[0], -1e-4 * 0.65 / (0.65 + 1e-8), 1e-18);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  const ModelParams start = init_params(3, 5, 4);
  ModelParams p = start;
  ModelParams g = p.zeros_like();
  OptimizerState state = OptimizerState::for_params(p);
  TrainConfig config;
  config.weight_decay = 0.0;
  adam_step(p, g, state, config);
  EXPECT_EQ(p, start);
}

TEST(Adam, GlobalNormClipping) {
  ModelParams p = scalar_params(0.0);
  p.h2 = Eigen::VectorXd::Zero(1);
  ModelParams g = p.zeros_like();
  g.h1[0] = 0.5;
  g.h2[0] = 1.2;
  EXPECT_NEAR(global_norm(g), 1.3, 1e-15);
  OptimizerState state = OptimizerState::for_params(p);
  TrainConfig config;
  config.weight_decay = 0.0;
  adam_step(p, g, state, config);
  EXPECT_NEAR(global_norm(g), 0.65, 1e-12);
  EXPECT_NEAR(g.h1[0], 0.25, 1e-12);
}

TEST(Adam, WeightDecayVariants) {
  TrainConfig config;
  config.weight_decay = 0.1;
  config.learning_rate = 1e-2;
  ModelParams p = scalar_params(2.0);
  ModelParams g = scalar_params(0.0);
  OptimizerState state = OptimizerState::for_params(p);
  adam_step(p, g, state, config);
  // Coupled: the decay term is the whole gradient, so the step is one lr.
  EXPECT_NEAR(p.h1[0], 2.0 - 1e-2, 1e-9);
  config.decoupled_weight_decay = true;
  ModelParams q = scalar_params(2.0);
  ModelParams gq = scalar_params(0.0);
  OptimizerState sq = OptimizerState::for_params(q);
  adam_step(q, gq, sq, config);
  EXPECT_NEAR(q.h1[0], 2.0 - 1e-2 * 0.1 * 2.0, 1e-12);
}

TEST(Split, SizesAndDeterminism) {
  std::vector<int> items(10);
  for (int i = 0; i < 10; ++i) items[static_cast<std::size_t>(i)] = i;
  const auto s = split_dataset(items, {0.6, 0.2, 0.2}, 4);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  const auto t = split_dataset(items, {0.6, 0.2, 0.2}, 4);
  EXPECT_EQ(s.train, t.train);
  EXPECT_EQ(s.val, t.val);
  EXPECT_EQ(s.test, t.test);
  const auto all = split_dataset(items, {1.0, 0.0, 0.0}, 4);
  EXPECT_EQ(all.train.size(), 10u);
  EXPECT_THROW(split_dataset(items, {0.5, 0.2, 0.2}, 4), std::invalid_argument);
  EXPECT_THROW(split_dataset(std::vector<int>{}, {1.0, 0.0, 0.0}, 4), std::invalid_argument);
}

TEST(TrainLoop, ZeroEpochsReturnsInitialParameters) {
  const std::vector<LabeledInstance> data{labeled("a", nsnet::testing::f0())};
  TrainConfig config;
  config.epochs = 0;
  config.d = 3;
  config.hidden = 4;
  const ModelParams init = init_params(3, 9, 4);
  const TrainResult r = train_loop(data, {}, config, &init);
  EXPECT_EQ(r.params, init);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.steps, 0);
}

TEST(TrainLoop, DeterministicAndImproving) {
  std::vector<LabeledInstance> data;
  Rng rng(12);
  while (data.size() < 6) {
    const CnfFormula f = nsnet::testing::random_cnf(rng, 5, 8, 2, 3);
    if (exact_count(f).result.model_count > 0) data.push_back(labeled(std::to_string(data.size()), f));
  }
  TrainConfig config;
  config.d = 4;
  config.hidden = 8;
  config.iterations = 3;
  config.batch_size = 2;
  config.epochs = 5;
  config.learning_rate = 1e-2;
  config.seed = 3;
  const TrainResult a = train_loop(data, {}, config);
  const TrainResult b = train_loop(data, {}, config);
  ASSERT_EQ(a.history.size(), 5u);
  EXPECT_EQ(a.steps, 15);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  const ModelParams init = init_params(4, 3, 8);
  EXPECT_LT(mean_loss(data, a.params, config), mean_loss(data, init, config));

  config.max_steps = 4;
  const TrainResult c = train_loop(data, {}, config);
  EXPECT_EQ(c.steps, 4);
  EXPECT_EQ(c.history.size(), 2u);
}

TEST(TrainLoop, TargetLossStopsEarly) {
  std::vector<LabeledInstance> data{labeled("a", nsnet::testing::f0()), labeled("b", nsnet::testing::f4())};
  TrainConfig config;
  config.d = 3;
  config.hidden = 4;
  config.iterations = 2;
  config.batch_size = 1;
  config.epochs = 10;
  config.target_loss = 1e9;
  const TrainResult r = train_loop(data, {}, config);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.steps, 2);
  config.target_loss = -1.0;
  EXPECT_THROW(train_loop(data, {}, config), std::invalid_argument);
}

TEST(TrainLoop, ValidatesEveryKEpochsAndAtTheEnd) {
  std::vector<LabeledInstance> data{labeled("a", nsnet::testing::f0()), labeled("b", nsnet::testing::f4())};
  TrainConfig config;
  config.d = 3;
  config.hidden = 4;
  config.iterations = 2;
  config.batch_size = 2;
  config.epochs = 7;
  config.eval_every = 3;
  const TrainResult r = train_loop(data, data, config);
  ASSERT_EQ(r.history.size(), 7u);
  for (const EpochRecord& e : r.history) {
    const bool expected = e.epoch % 3 == 0 || e.epoch == 7;
    EXPECT_EQ(std::isfinite(e.val_loss), expected) << "epoch " << e.epoch;
  }
  EXPECT_TRUE(r.best_epoch == 0 || r.best_epoch % 3 == 0 || r.best_epoch == 7);
  config.eval_every = 0;
  EXPECT_THROW(train_loop(data, data, config), std::invalid_argument);
}

TEST(LearningRate, SchedulesAndWarmup) {
  TrainConfig config;
  config.learning_rate = 0.4;
  EXPECT_EQ(scheduled_learning_rate(config, 7, 100), 0.4);
  config.lr_schedule = LrSchedule::cosine;
  EXPECT_NEAR(scheduled_learning_rate(config, 50, 100), 0.2, 1e-15);
  EXPECT_NEAR(scheduled_learning_rate(config, 100, 100), 0.0, 1e-15);
  EXPECT_NEAR(scheduled_learning_rate(config, 25, 100), 0.2 * (1 + std::sqrt(0.5)), 1e-15);
  config.lr_schedule = LrSchedule::constant;
  config.warmup_steps = 10;
  EXPECT_NEAR(scheduled_learning_rate(config, 5, 100), 0.2, 1e-15);
  EXPECT_EQ(scheduled_learning_rate(config, 10, 100), 0.4);
  EXPECT_EQ(parse_lr_schedule("cosine"), LrSchedule::cosine);
  EXPECT_EQ(to_string(LrSchedule::constant), "constant");
  EXPECT_THROW(parse_lr_schedule("step"), std::invalid_argument);
}

TEST(TrainLoop, HistoryCsvFormat) {
  std::vector<EpochRecord> h{{1, 0.5, 0.25}, {2, 0.125, std::nan("")}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,\n");
}

TEST(Task, Names) {
  EXPECT_EQ(parse_task("counting"), Task::counting);
  EXPECT_EQ(to_string(Task::marginals), "marginals");
  EXPECT_THROW(parse_task("solve"), std::invalid_argument);
}
