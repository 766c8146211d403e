#include "nsnet/gen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nsnet/oracle.hpp"
#include "nsnet/rng.hpp"

namespace nsnet {

namespace {

// `k` distinct variables from `pool`, each negated with probability 1/2.
Clause random_clause(Rng& rng, const std::vector<int>& pool, int k) {
  Clause clause;
  clause.reserve(static_cast<std::size_t>(k));
  while (static_cast<int>(clause.size()) < k) {
    const int var = pool[rng.index(pool.size())];
    const bool used = std::any_of(clause.begin(), clause.end(),
                                  [var](Lit l) { return lit_var(l) == var; });
    if (used) continue;
    clause.push_back(rng.bernoulli(0.5) ? -var : var);
  }
  return clause;
}

std::vector<int> all_vars(int n) {
  std::vector<int> vars(static_cast<std::size_t>(n));
  for (int v = 1; v <= n; ++v) vars[static_cast<std::size_t>(v - 1)] = v;
  return vars;
}

}  // namespace

std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::random3sat: return "3sat";
    case Distribution::sr: return "sr";
    case Distribution::ca: return "ca";
  }
  return "?";
}

Distribution parse_distribution(const std::string& name) {
  if (name == "3sat" || name == "random3sat") return Distribution::random3sat;
  if (name == "sr") return Distribution::sr;
  if (name == "ca") return Distribution::ca;
  throw std::invalid_argument("unknown distribution '" + name + "'");
}

void GenConfig::validate() const {
  if (min_vars < 1 || max_vars < min_vars) throw std::invalid_argument("bad variable range");
  if (ca_min_communities < 3 || ca_max_communities < ca_min_communities) {
    throw std::invalid_argument("bad community range (need 3 <= min <= max)");
  }
  if (!(ca_min_modularity > 0.0) || ca_max_modularity > 1.0 ||
      ca_max_modularity < ca_min_modularity) {
    throw std::invalid_argument("bad modularity range");
  }
  if (sr_max_clause_len < 1) throw std::invalid_argument("bad SR clause length cap");
}

int clause_count_3sat(int n) {
  if (n < 1) throw std::invalid_argument("clause_count_3sat requires n >= 1");
  const double m = 4.258 * n + 58.26 * std::pow(static_cast<double>(n), -2.0 / 3.0);
  return static_cast<int>(std::lround(m));
}

CnfFormula gen_random_3sat(int n, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("random 3-SAT requires n >= 3");
  Rng rng(seed);
  const auto pool = all_vars(n);
  const int m = clause_count_3sat(n);
  std::vector<Clause> clauses;
  clauses.reserve(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) clauses.push_back(random_clause(rng, pool, 3));
  return CnfFormula(n, std::move(clauses));
}

CnfFormula gen_sr(int n, std::uint64_t seed, int max_clause_len) {
  if (n < 2) throw std::invalid_argument("SR generation requires n >= 2");
  if (max_clause_len < 1) throw std::invalid_argument("SR clause length cap must be >= 1");
  Rng rng(seed);
  const auto pool = all_vars(n);
  std::vector<Clause> clauses;
  Assignment model(n);  // the empty formula is satisfied by anything
  for (;;) {
    int k = 1 + (rng.bernoulli(0.7) ? 1 : 0) + rng.geometric(0.4);
    k = std::min({k, max_clause_len, n});
    Clause clause = random_clause(rng, pool, k);
    const bool kept_model = std::any_of(clause.begin(), clause.end(),
                                        [&](Lit l) { return model.satisfies(l); });
    clauses.push_back(clause);
    if (kept_model) continue;
    auto outcome = find_model(CnfFormula(n, clauses));
    if (outcome.status != SatStatus::sat) {
      clauses.pop_back();
      return CnfFormula(n, std::move(clauses));
    }
    model = *outcome.model;
  }
}

CaInstance gen_ca_detailed(int n, std::uint64_t seed, const GenConfig& config) {
  config.validate();
  if (n < 3 * config.ca_min_communities) {
    throw std::invalid_argument("CA needs at least 3 variables per community: n=" +
                                std::to_string(n) + ", communities >= " +
                                std::to_string(config.ca_min_communities));
  }
  Rng rng(seed);
  CaInstance out;
  const int max_c = std::min(config.ca_max_communities, n / 3);
  out.communities = static_cast<int>(rng.uniform_int(config.ca_min_communities, max_c));
  out.modularity = config.ca_min_modularity == config.ca_max_modularity
                       ? config.ca_min_modularity
                       : rng.uniform(config.ca_min_modularity, config.ca_max_modularity);

  // Balanced partition: shuffled variables dealt round-robin.
  auto order = all_vars(n);
  rng.shuffle(order);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(out.communities));
  out.community_of.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto c = i % static_cast<std::size_t>(out.communities);
    members[c].push_back(order[i]);
    out.community_of[static_cast<std::size_t>(order[i] - 1)] = static_cast<int>(c);
  }

  const int m = clause_count_3sat(n);
  std::vector<Clause> clauses;
  clauses.reserve(static_cast<std::size_t>(m));
  std::vector<int> community_ids(static_cast<std::size_t>(out.communities));
  for (int c = 0; c < out.communities; ++c) community_ids[static_cast<std::size_t>(c)] = c;
  for (int j = 0; j < m; ++j) {
    if (rng.bernoulli(out.modularity)) {
      const auto& pool = members[rng.index(members.size())];
      clauses.push_back(random_clause(rng, pool, 3));
    } else {
      // Three distinct communities, one variable from each.
      std::vector<int> picked;
      while (picked.size() < 3) {
        const int c = community_ids[rng.index(community_ids.size())];
        if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
      }
      Clause clause;
      for (int c : picked) {
        const auto& pool = members[static_cast<std::size_t>(c)];
        const int var = pool[rng.index(pool.size())];
        clause.push_back(rng.bernoulli(0.5) ? -var : var);
      }
      clauses.push_back(std::move(clause));
    }
  }
  out.formula = CnfFormula(n, std::move(clauses));
  return out;
}

CnfFormula gen_ca(int n, std::uint64_t seed, const GenConfig& config) {
  return gen_ca_detailed(n, seed, config).formula;
}

CnfFormula generate(const GenConfig& config, std::uint64_t instance_seed) {
  config.validate();
  Rng rng(instance_seed);
  const int n = static_cast<int>(rng.uniform_int(config.min_vars, config.max_vars));
  const std::uint64_t seed = rng.next_u64();
  switch (config.distribution) {
    case Distribution::random3sat: return gen_random_3sat(n, seed);
    case Distribution::sr: return gen_sr(n, seed, config.sr_max_clause_len);
    case Distribution::ca: return gen_ca(n, seed, config);
  }
  throw std::logic_error("unreachable distribution");
}

SatChecker oracle_checker(std::uint64_t node_budget) {
  return [node_budget](const CnfFormula& f) -> std::optional<bool> {
    const auto outcome = find_model(f, node_budget);
    if (outcome.status == SatStatus::unknown) return std::nullopt;
    return outcome.status == SatStatus::sat;
  };
}

std::vector<CnfFormula> filter_satisfiable(const std::vector<CnfFormula>& formulas,
                                           const SatChecker& checker,
                                           std::vector<std::string>* warnings) {
  std::vector<CnfFormula> out;
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    const auto verdict = checker(formulas[i]);
    if (!verdict) {
      if (warnings) {
        warnings->push_back("instance " + std::to_string(i) +
                            " dropped: checker budget exceeded");
      }
      continue;
    }
    if (*verdict) out.push_back(formulas[i]);
  }
  return out;
}

}  // namespace nsnet
