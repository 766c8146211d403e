#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "nsnet/factor_graph.hpp"
#include "nsnet/logspace.hpp"
#include "nsnet/marginals.hpp"

namespace nsnet {

struct BpConfig {
  int max_iters = 10;
  double convergence_eps = 1e-8;
  /// new = damping * old + (1 - damping) * update, in the log domain.
  double damping = 0.0;
  /// Longest clause whose satisfying configurations are enumerated for ln Z.
  int factor_enum_cap = 10;

  void validate() const;
};

/// Log-domain messages, one entry per (incidence, value): index 2e + x.
struct BpState {
  std::vector<double> v2c;  // normalized per incidence
  std::vector<double> c2v;  // unnormalized
  bool converged = false;
  int iterations_run = 0;
};

class BpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incoming variable-to-clause pair from one other clause member.
struct MessagePair {
  double satisfying;
  double dissatisfying;
};

/**
 * Clause-to-variable message for one branch of the target variable.
 *
 * A satisfying branch leaves every completion allowed (log mass 0). A
 * dissatisfying branch needs some other literal true: ln(1 - prod p_unsat).
 * An empty or certainly-falsified completion set gives kLogZero.
 * Throws BpError when an incoming pair is not normalized.
 */
double clause_message(std::span<const MessagePair> others, bool satisfying_branch);

using BpObserver = std::function<void(int iteration, const BpState&)>;

/// Flooding schedule from uniform messages until convergence or max_iters.
/// The observer, when set, sees the state after every iteration.
BpState bp_run(const FactorGraph& graph, const BpConfig& config = {},
               const BpObserver& observer = {});

/// Variable beliefs; isolated variables get 0.5.
Marginals bp_marginals(const BpState& state, const FactorGraph& graph);

/// Bethe estimate of ln Z. Throws BpError when a clause exceeds the cap.
double bethe_ln_z(const BpState& state, const FactorGraph& graph, int factor_enum_cap = 10);

}  // namespace nsnet
