#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "nsnet/cnf.hpp"
#include "nsnet/marginals.hpp"
#include "nsnet/rng.hpp"

namespace nsnet {

/// x_i = 1 iff b_i(1) >= 0.5.
Assignment round_marginals(const Marginals& marginals);

struct SlsConfig {
  int max_tries = 100;
  /// Flip budget per try; 0 means 100 * n.
  long max_flips = 0;
  double noise = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  long flips_for(int num_vars) const { return max_flips > 0 ? max_flips : 100L * num_vars; }
};

struct SlsResult {
  bool solved = false;
  std::optional<Assignment> assignment;
  int tries_used = 0;
  long flips_total = 0;
  long flips_last_try = 0;
};

/// Starting assignment of try `try_index` (0-based), drawn from that try's stream.
using InitialSupplier = std::function<Assignment(int try_index, Rng& rng)>;

/// Uniformly random starting assignment on every try.
InitialSupplier random_initializer(int num_vars);

/// The guided assignment on the first try; afterwards each bit flipped with probability 0.5.
InitialSupplier guided_initializer(Assignment guided);

/**
 * WalkSAT with break counts: pick a random unsatisfied clause; with probability
 * `noise` flip a random variable in it, otherwise the variable with the fewest
 * breaks (ties uniform). Each try uses the stream derive_seed(seed, try).
 */
SlsResult sls_solve(const CnfFormula& formula, const SlsConfig& config,
                    const InitialSupplier& initial);

using MarginalProvider = std::function<Marginals(const CnfFormula&)>;

struct DecimationResult {
  std::optional<Assignment> assignment;
  std::string diagnostic;
  int provider_calls = 0;
};

/**
 * Repeatedly fixes the unfixed variable with the largest |b(1) - b(0)| (ties to
 * the lowest index) to its more likely value and simplifies the formula.
 * Variables absent from the residual formula count as b = 0.5.
 */
DecimationResult decimate(const CnfFormula& formula, const MarginalProvider& provider,
                          bool unit_propagate = false);

}  // namespace nsnet
