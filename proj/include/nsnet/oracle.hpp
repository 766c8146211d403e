#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nsnet/cnf.hpp"
#include "nsnet/marginals.hpp"

namespace nsnet {

using BigInt = boost::multiprecision::cpp_int;

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hard limit on variables for exhaustive enumeration.
inline constexpr int kEnumerationVarLimit = 30;

/// Natural log of a nonnegative big integer; -inf for zero.
double big_ln(const BigInt& value);

/// All models in lexicographic order (x1 most significant), capped at `limit`.
std::vector<Assignment> enumerate_models(const CnfFormula& formula,
                                         std::size_t limit = SIZE_MAX);

struct ExactResult {
  BigInt model_count = 0;
  double ln_count = 0.0;  // meaningful only when model_count > 0
  std::optional<Marginals> marginals;
};

enum class OracleStatus { ok, budget_exceeded };

struct CountOutcome {
  OracleStatus status = OracleStatus::ok;
  ExactResult result;
  std::uint64_t nodes = 0;
};

/// DPLL counting with unit propagation and free-variable multiplication.
/// A node budget of 0 means unlimited.
CountOutcome exact_count(const CnfFormula& formula, std::uint64_t node_budget = 0,
                         bool with_marginals = false);

/// b_i(1) = #models with x_i = 1 / #models, via the DPLL counter.
/// Throws OracleError on unsatisfiable input or budget exhaustion.
Marginals exact_marginals(const CnfFormula& formula, std::uint64_t node_budget = 0);

/// Marginals by averaging enumerated models (n <= kEnumerationVarLimit).
Marginals enumerated_marginals(const CnfFormula& formula);

enum class SatStatus { sat, unsat, unknown };

struct SatOutcome {
  SatStatus status = SatStatus::unknown;
  std::optional<Assignment> model;
};

/// Complete DPLL decision procedure with a node budget (0 = unlimited).
SatOutcome find_model(const CnfFormula& formula, std::uint64_t node_budget = 0);

}  // namespace nsnet
