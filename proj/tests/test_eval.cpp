#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "nsnet/eval.hpp"
#include "nsnet/gen.hpp"
#include "nsnet/labels.hpp"
#include "nsnet/oracle.hpp"
#include "test_support.hpp"

using namespace nsnet;
using nsnet::testing::f0;
using nsnet::testing::TempDir;

namespace {

void write_dataset(const TempDir& dir, const std::vector<CnfFormula>& formulas,
                   LabelKinds kinds = LabelKinds::both) {
  std::filesystem::create_directories(dir.path() / "data");
  std::filesystem::create_directories(dir.path() / "labels");
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    const std::string id = "inst_" + std::to_string(100 + i);
    write_dimacs_file(formulas[i], dir.str("data/" + id + ".cnf"));
    write_label_file(compute_label(formulas[i], kinds), label_path(dir.str("labels"), id));
  }
}

}  // namespace

TEST(Rmse, Examples) {
  const std::vector<double> a{1.0, 3.0};
  const std::vector<double> b{2.0, 3.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(a, b), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(rmse(std::vector<double>{0.0}, std::vector<double>{2.0}), 2.0);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(rmse(a, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Labels, JsonRoundTripAndValidation) {
  const InstanceLabel label = compute_label(f0(), LabelKinds::both);
  EXPECT_EQ(label.model_count, std::optional<std::string>("4"));
  const std::string text = label_to_json(label);
  EXPECT_EQ(text.find("{\"satisfiable\":true,\"model_count\":\"4\",\"ln_count\":"), 0u);
  const InstanceLabel back = label_from_json(text, 3);
  EXPECT_EQ(back.satisfiable, std::optional<bool>(true));
  EXPECT_EQ(*back.ln_count, *label.ln_count);
  EXPECT_EQ(back.marginals->p1, label.marginals->p1);
  EXPECT_THROW(label_from_json(text, 4), std::runtime_error);
  EXPECT_THROW(label_from_json("{\"marginals\":{\"1\":1.5}}", 1), std::runtime_error);
  EXPECT_THROW(label_from_json("[1,2", 1), std::runtime_error);

  const InstanceLabel unsat = compute_label(CnfFormula(1, {{1}, {-1}}), LabelKinds::both);
  EXPECT_EQ(unsat.satisfiable, std::optional<bool>(false));
  EXPECT_EQ(unsat.model_count, std::optional<std::string>("0"));
  EXPECT_FALSE(unsat.marginals.has_value());
  EXPECT_FALSE(unsat.ln_count.has_value());

  const InstanceLabel counting = compute_label(f0(), LabelKinds::counting);
  EXPECT_FALSE(counting.marginals.has_value());
  EXPECT_TRUE(counting.ln_count.has_value());
}

TEST(Labels, DatasetLoadingIsSortedAndJoined) {
  TempDir dir("labels");
  write_dataset(dir, {f0(), nsnet::testing::f1(), nsnet::testing::f4()});
  const auto entries = load_dataset(dir.str("data"));
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[0].id, "inst_100");
  EXPECT_EQ(entries[2].id, "inst_102");
  const auto labeled = load_labeled(dir.str("data"), dir.str("labels"), Task::counting);
  ASSERT_EQ(labeled.size(), 3u);
  EXPECT_NEAR(*labeled[1].ln_count, std::log(3.0), 1e-12);
  EXPECT_THROW(load_dataset(dir.str("missing")), std::runtime_error);
}

TEST(EvalCount, ReductionIsExactOnTreesAndEqualsBp) {
  TempDir dir("count");
  Rng rng(15);
  std::vector<CnfFormula> trees;
  while (trees.size() < 50) {
    const CnfFormula f = nsnet::testing::random_tree_cnf(rng, 2 + static_cast<int>(rng.index(12)));
    if (exact_count(f).result.model_count > 0) trees.push_back(f);
  }
  write_dataset(dir, trees, LabelKinds::counting);
  InferenceSettings settings;
  settings.iterations = 30;
  const CountReport reduction = eval_count(dir.str("data"), dir.str("labels"), Estimator::reduction, settings, 1);
  const CountReport bp = eval_count(dir.str("data"), dir.str("labels"), Estimator::bp, settings, 2);
  ASSERT_TRUE(reduction.rmse.has_value());
  EXPECT_LE(*reduction.rmse, 1e-6);
  EXPECT_NEAR(*reduction.rmse, *bp.rmse, 1e-9);
  EXPECT_EQ(reduction.failures, 0);
  EXPECT_EQ(to_json(bp), to_json(eval_count(dir.str("data"), dir.str("labels"), Estimator::bp, settings, 1)));
  EXPECT_THROW(eval_count(dir.str("data"), dir.str("labels"), Estimator::model, settings, 1),
               std::invalid_argument);
}

TEST(EvalCount, EmptyDatasetIsAnError) {
  TempDir dir("empty");
  std::filesystem::create_directories(dir.path() / "data");
  EXPECT_THROW(eval_count(dir.str("data"), dir.str("data"), Estimator::bp, {}, 1), std::runtime_error);
}

TEST(EvalSolve, OracleMarginalsSolveFigureFormulaWithoutFlips) {
  TempDir dir("solve");
  write_dataset(dir, {f0()});
  SolveEvalOptions options;
  options.init = InitKind::file;
  options.labels_dir = dir.str("labels");
  const SolveReport r = eval_solve(dir.str("data"), options, 1);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.evaluated, 1);
  EXPECT_EQ(r.initial_accuracy_mean, 1.0);
  EXPECT_EQ(r.accuracy_mean, 1.0);
  EXPECT_EQ(r.rows[0].flips[0], 0);
  ASSERT_TRUE(r.mean_flips_solved.has_value());
  EXPECT_EQ(*r.mean_flips_solved, 0.0);
}

TEST(EvalSolve, UnsatisfiableInstancesAreExcluded) {
  TempDir dir("unsat");
  write_dataset(dir, {f0(), CnfFormula(2, {{1, 2}, {-1, 2}, {1, -2}, {-1, -2}})});
  SolveEvalOptions options;
  options.labels_dir = dir.str("labels");
  const SolveReport r = eval_solve(dir.str("data"), options, 1);
  EXPECT_EQ(r.evaluated, 1);
  EXPECT_EQ(r.excluded, 1);
  EXPECT_TRUE(r.rows[1].unsatisfiable);
  EXPECT_EQ(r.accuracy_mean, 1.0);
  // Without labels the instance is screened by the complete solver.
  options.labels_dir.clear();
  EXPECT_EQ(eval_solve(dir.str("data"), options, 1).excluded, 1);
}

TEST(EvalSolve, MoreFlipsNeverLowerAccuracy) {
  TempDir dir("budget");
  std::vector<CnfFormula> sat;
  for (std::uint64_t seed = 0; sat.size() < 15; ++seed) {
    const CnfFormula f = gen_random_3sat(30, 500 + seed);
    if (find_model(f).status == SatStatus::sat) sat.push_back(f);
  }
  write_dataset(dir, sat, LabelKinds::counting);
  double previous = -1.0;
  for (long flips : {10L, 20L, 40L, 80L}) {
    SolveEvalOptions options;
    options.sls.max_tries = 1;
    options.sls.max_flips = flips;
    options.sls.seed = 3;
    options.repeats = 2;
    const SolveReport r = eval_solve(dir.str("data"), options, 1);
    EXPECT_GE(r.accuracy_mean, previous);
    previous = r.accuracy_mean;
  }
}

TEST(EvalSolve, DeterministicAcrossThreadCounts) {
  TempDir dir("threads");
  std::vector<CnfFormula> sat;
  for (std::uint64_t seed = 0; sat.size() < 8; ++seed) {
    const CnfFormula f = gen_random_3sat(20, 900 + seed);
    if (find_model(f).status == SatStatus::sat) sat.push_back(f);
  }
  write_dataset(dir, sat);
  SolveEvalOptions options;
  options.init = InitKind::bp;
  options.repeats = 3;
  options.sls.seed = 11;
  options.labels_dir = dir.str("labels");
  EXPECT_EQ(to_json(eval_solve(dir.str("data"), options, 1)), to_json(eval_solve(dir.str("data"), options, 4)));
}

TEST(Names, EstimatorsAndInitializers) {
  EXPECT_EQ(parse_estimator("reduction"), Estimator::reduction);
  EXPECT_EQ(to_string(Estimator::model), "model");
  EXPECT_EQ(parse_init("file"), InitKind::file);
  EXPECT_THROW(parse_init("magic"), std::invalid_argument);
  EXPECT_THROW(parse_estimator("exact"), std::invalid_argument);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}
