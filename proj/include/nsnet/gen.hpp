#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsnet/cnf.hpp"

namespace nsnet {

enum class Distribution { random3sat, sr, ca };

std::string to_string(Distribution d);
Distribution parse_distribution(const std::string& name);

struct GenConfig {
  Distribution distribution = Distribution::random3sat;
  int min_vars = 10;
  int max_vars = 10;
  std::uint64_t seed = 0;
  int ca_min_communities = 3;
  int ca_max_communities = 10;
  double ca_min_modularity = 0.7;
  double ca_max_modularity = 0.9;
  int sr_max_clause_len = 4;

  /// Throws std::invalid_argument when a range is empty or out of bounds.
  void validate() const;
};

/// round(4.258 n + 58.26 n^(-2/3)), halves rounded away from zero.
int clause_count_3sat(int n);

/// Uniform random 3-SAT at the phase-transition clause count.
CnfFormula gen_random_3sat(int n, std::uint64_t seed);

/**
 * SR-style instance: clauses of length 1 + Bernoulli(0.7) + Geometric(0.4),
 * truncated to `max_clause_len`, are appended until the formula becomes
 * unsatisfiable; the satisfiable prefix is returned.
 */
CnfFormula gen_sr(int n, std::uint64_t seed, int max_clause_len = 4);

struct CaInstance {
  CnfFormula formula;
  std::vector<int> community_of;  // index var-1
  int communities = 0;
  double modularity = 0.0;
};

/// Community-attachment 3-SAT. Communities and modularity are drawn from the
/// configured ranges; each community must hold at least three variables.
CaInstance gen_ca_detailed(int n, std::uint64_t seed, const GenConfig& config);
CnfFormula gen_ca(int n, std::uint64_t seed, const GenConfig& config);

/// Draws n from the configured range and dispatches on the distribution.
CnfFormula generate(const GenConfig& config, std::uint64_t instance_seed);

/// Complete decision procedure: true/false, or nullopt when its budget runs out.
using SatChecker = std::function<std::optional<bool>(const CnfFormula&)>;

/// Oracle-backed checker with a per-instance DPLL node budget (0 = unlimited).
SatChecker oracle_checker(std::uint64_t node_budget = 0);

/// Keeps the satisfiable instances in order; budget-exhausted instances are
/// dropped with a warning appended to `warnings`.
std::vector<CnfFormula> filter_satisfiable(const std::vector<CnfFormula>& formulas,
                                           const SatChecker& checker,
                                           std::vector<std::string>* warnings = nullptr);

}  // namespace nsnet
