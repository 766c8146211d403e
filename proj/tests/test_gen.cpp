#include <gtest/gtest.h>

#include <set>

#include "nsnet/gen.hpp"
#include "nsnet/oracle.hpp"

using namespace nsnet;

TEST(ClauseCount, PhaseTransitionFormula) {
  EXPECT_EQ(clause_count_3sat(10), 55);
  EXPECT_EQ(clause_count_3sat(100), 429);
  // 4.258 + 58.26 = 62.518 rounds to 63.
  EXPECT_EQ(clause_count_3sat(1), 63);
  EXPECT_EQ(clause_count_3sat(20), 93);
}

TEST(Random3Sat, Structure) {
  const CnfFormula f = gen_random_3sat(20, 1);
  EXPECT_EQ(f.num_vars(), 20);
  ASSERT_EQ(static_cast<int>(f.num_clauses()), clause_count_3sat(20));
  for (const auto& c : f.clauses()) {
    ASSERT_EQ(c.size(), 3u);
    const std::set<int> vars{lit_var(c[0]), lit_var(c[1]), lit_var(c[2])};
    EXPECT_EQ(vars.size(), 3u);
  }
  EXPECT_EQ(gen_random_3sat(20, 1), f);
  EXPECT_NE(gen_random_3sat(20, 2), f);
  EXPECT_THROW(gen_random_3sat(2, 0), std::invalid_argument);
}

TEST(Random3Sat, ThreeVariablesUseAllOfThem) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CnfFormula f = gen_random_3sat(3, seed);
    for (const auto& c : f.clauses()) {
      std::set<int> vars;
      for (Lit l : c) vars.insert(lit_var(l));
      EXPECT_EQ(vars, (std::set<int>{1, 2, 3}));
    }
  }
}

TEST(Sr, SatisfiableBoundedAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int n = 2 + static_cast<int>(seed % 15);
    const CnfFormula f = gen_sr(n, seed);
    EXPECT_EQ(find_model(f).status, SatStatus::sat);
    EXPECT_LE(f.max_clause_length(), 4u);
    for (const auto& c : f.clauses()) EXPECT_GE(c.size(), 1u);
    EXPECT_EQ(gen_sr(n, seed), f);
  }
}

TEST(Ca, MostClausesAreIntraCommunity) {
  GenConfig config;
  config.distribution = Distribution::ca;
  config.ca_min_communities = config.ca_max_communities = 3;
  config.ca_min_modularity = config.ca_max_modularity = 0.9;
  std::size_t total = 0;
  std::size_t intra = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    const CaInstance inst = gen_ca_detailed(30, seed, config);
    EXPECT_EQ(inst.communities, 3);
    for (const auto& c : inst.formula.clauses()) {
      ASSERT_EQ(c.size(), 3u);
      std::set<int> comms;
      for (Lit l : c) comms.insert(inst.community_of[static_cast<std::size_t>(lit_var(l) - 1)]);
      ++total;
      intra += comms.size() == 1 ? 1 : 0;
    }
  }
  EXPECT_GE(static_cast<double>(intra) / static_cast<double>(total), 0.8);
}

TEST(Ca, FullModularityKeepsEveryClauseInside) {
  GenConfig config;
  config.ca_min_modularity = config.ca_max_modularity = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CaInstance inst = gen_ca_detailed(40, seed, config);
    EXPECT_GE(inst.communities, 3);
    EXPECT_LE(inst.communities, 10);
    for (const auto& c : inst.formula.clauses()) {
      std::set<int> comms;
      for (Lit l : c) comms.insert(inst.community_of[static_cast<std::size_t>(lit_var(l) - 1)]);
      EXPECT_EQ(comms.size(), 1u);
    }
  }
}

TEST(Ca, DeterministicAndValidated) {
  GenConfig config;
  EXPECT_EQ(gen_ca(30, 5, config), gen_ca(30, 5, config));
  EXPECT_EQ(static_cast<int>(gen_ca(30, 5, config).num_clauses()), clause_count_3sat(30));
  EXPECT_THROW(gen_ca(5, 0, config), std::invalid_argument);
  GenConfig bad;
  bad.ca_min_modularity = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = GenConfig{};
  bad.min_vars = 5;
  bad.max_vars = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Generate, PureFunctionOfConfigAndSeed) {
  for (auto dist : {Distribution::random3sat, Distribution::sr, Distribution::ca}) {
    GenConfig config;
    config.distribution = dist;
    config.min_vars = 10;
    config.max_vars = 20;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const CnfFormula f = generate(config, seed);
      EXPECT_GE(f.num_vars(), 10);
      EXPECT_LE(f.num_vars(), 20);
      EXPECT_EQ(generate(config, seed), f);
    }
  }
  EXPECT_EQ(parse_distribution("sr"), Distribution::sr);
  EXPECT_EQ(to_string(Distribution::ca), "ca");
  EXPECT_THROW(parse_distribution("xyz"), std::invalid_argument);
}

TEST(FilterSatisfiable, KeepsSatisfiableInOrder) {
  const CnfFormula a(1, {{1}});
  const CnfFormula b(1, {{1}, {-1}});
  const auto out = filter_satisfiable({a, b}, oracle_checker());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], a);
  EXPECT_TRUE(filter_satisfiable({}, oracle_checker()).empty());
}

TEST(FilterSatisfiable, OutputsAreSatisfiable) {
  std::vector<CnfFormula> in;
  for (std::uint64_t seed = 0; seed < 100; ++seed) in.push_back(gen_random_3sat(20, seed));
  const auto out = filter_satisfiable(in, oracle_checker());
  EXPECT_FALSE(out.empty());
  EXPECT_LT(out.size(), in.size());
  for (const auto& f : out) EXPECT_GT(exact_count(f).result.model_count, 0);
}

TEST(FilterSatisfiable, BudgetExhaustionDropsWithWarning) {
  const SatChecker undecided = [](const CnfFormula&) { return std::optional<bool>{}; };
  std::vector<std::string> warnings;
  EXPECT_TRUE(filter_satisfiable({CnfFormula(1, {{1}})}, undecided, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);
}
