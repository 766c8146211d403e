#include "nsnet/search.hpp"

#include <cmath>
#include <stdexcept>

namespace nsnet {

Assignment round_marginals(const Marginals& marginals) {
  Assignment out(marginals.num_vars());
  for (int v = 1; v <= marginals.num_vars(); ++v) out.set(v, marginals.b1(v) >= 0.5);
  return out;
}

void SlsConfig::validate() const {
  if (max_tries < 1) throw std::invalid_argument("max tries must be >= 1");
  if (max_flips < 0) throw std::invalid_argument("max flips must be >= 0");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("noise must lie in [0,1]");
}

InitialSupplier random_initializer(int num_vars) {
  return [num_vars](int, Rng& rng) {
    Assignment a(num_vars);
    for (int v = 1; v <= num_vars; ++v) a.set(v, rng.bernoulli(0.5));
    return a;
  };
}

InitialSupplier guided_initializer(Assignment guided) {
  return [guided = std::move(guided)](int try_index, Rng& rng) {
    Assignment a = guided;
    if (try_index > 0) {
      for (int v = 1; v <= a.num_vars(); ++v) {
        if (rng.bernoulli(0.5)) a.flip(v);
      }
    }
    return a;
  };
}

namespace {

/// Incremental WalkSAT state over one formula.
class WalkState {
 public:
  explicit WalkState(const CnfFormula& formula) : formula_(formula) {
    const auto n = static_cast<std::size_t>(formula.num_vars());
    occurrences_.resize(n + 1);
    for (std::size_t c = 0; c < formula.num_clauses(); ++c) {
      for (Lit lit : formula.clause(c)) occurrences_[static_cast<std::size_t>(lit_var(lit))].push_back(static_cast<int>(c));
    }
    true_count_.resize(formula.num_clauses());
    unsat_pos_.resize(formula.num_clauses());
  }

  void reset(const Assignment& assignment) {
    assignment_ = assignment;
    unsat_.clear();
    for (std::size_t c = 0; c < formula_.num_clauses(); ++c) {
      int count = 0;
      for (Lit lit : formula_.clause(c)) count += assignment_.satisfies(lit) ? 1 : 0;
      true_count_[c] = count;
      if (count == 0) add_unsat(static_cast<int>(c));
    }
  }

  bool satisfied() const { return unsat_.empty(); }
  const Assignment& assignment() const { return assignment_; }

  int random_unsat_clause(Rng& rng) const { return unsat_[rng.index(unsat_.size())]; }

  /// Clauses that become unsatisfied if `var` flips.
  int break_count(int var) const {
    int count = 0;
    for (int c : occurrences_[static_cast<std::size_t>(var)]) {
      if (true_count_[static_cast<std::size_t>(c)] == 1 && literal_true(c, var)) ++count;
    }
    return count;
  }

  void flip(int var) {
    for (int c : occurrences_[static_cast<std::size_t>(var)]) {
      const auto ci = static_cast<std::size_t>(c);
      if (literal_true(c, var)) {
        if (--true_count_[ci] == 0) add_unsat(c);
      }
    }
    assignment_.flip(var);
    for (int c : occurrences_[static_cast<std::size_t>(var)]) {
      const auto ci = static_cast<std::size_t>(c);
      if (literal_true(c, var)) {
        if (true_count_[ci]++ == 0) remove_unsat(c);
      }
    }
  }

 private:
  bool literal_true(int c, int var) const {
    for (Lit lit : formula_.clause(static_cast<std::size_t>(c))) {
      if (lit_var(lit) == var) return assignment_.satisfies(lit);
    }
    return false;
  }

  void add_unsat(int c) {
    unsat_pos_[static_cast<std::size_t>(c)] = unsat_.size();
    unsat_.push_back(c);
  }

  void remove_unsat(int c) {
    const std::size_t pos = unsat_pos_[static_cast<std::size_t>(c)];
    const int last = unsat_.back();
    unsat_[pos] = last;
    unsat_pos_[static_cast<std::size_t>(last)] = pos;
    unsat_.pop_back();
  }

  const CnfFormula& formula_;
  std::vector<std::vector<int>> occurrences_;
  Assignment assignment_;
  std::vector<int> true_count_;
  std::vector<int> unsat_;
  std::vector<std::size_t> unsat_pos_;
};

}  // namespace

SlsResult sls_solve(const CnfFormula& formula, const SlsConfig& config,
                    const InitialSupplier& initial) {
  config.validate();
  SlsResult result;
  if (formula.is_unsat_marker()) return result;
  const long budget = config.flips_for(formula.num_vars());
  WalkState state(formula);
  std::vector<int> best_vars;
  for (int t = 0; t < config.max_tries; ++t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    Assignment start = initial(t, rng);
    if (start.num_vars() != formula.num_vars()) {
      throw std::invalid_argument("initial assignment does not match the formula's variables");
    }
    state.reset(start);
    ++result.tries_used;
    long flips = 0;
    while (!state.satisfied() && flips < budget) {
      const auto& clause = formula.clause(static_cast<std::size_t>(state.random_unsat_clause(rng)));
      int var;
      if (rng.bernoulli(config.noise)) {
        var = lit_var(clause[rng.index(clause.size())]);
      } else {
        int best = -1;
        best_vars.clear();
        for (Lit lit : clause) {
          const int b = state.break_count(lit_var(lit));
          if (best < 0 || b < best) {
            best = b;
            best_vars.clear();
          }
          if (b == best) best_vars.push_back(lit_var(lit));
        }
        var = best_vars.size() == 1 ? best_vars.front() : best_vars[rng.index(best_vars.size())];
      }
      state.flip(var);
      ++flips;
    }
    result.flips_total += flips;
    result.flips_last_try = flips;
    if (state.satisfied()) {
      result.solved = true;
      result.assignment = state.assignment();
      return result;
    }
  }
  return result;
}

DecimationResult decimate(const CnfFormula& formula, const MarginalProvider& provider,
                          bool unit_propagate) {
  DecimationResult result;
  const int n = formula.num_vars();
  PartialAssignment fixed(n);
  CnfFormula current = formula;
  if (unit_propagate) {
    SimplifyResult s = simplify(formula, fixed, true);
    current = std::move(s.formula);
    fixed = std::move(s.fixed);
  }
  while (static_cast<int>(fixed.num_assigned()) < n) {
    if (current.is_unsat_marker()) {
      result.diagnostic = "simplification derived the empty clause";
      return result;
    }
    if (current.num_clauses() == 0) {
      // Every remaining variable is unconstrained (b = 0.5) and the tie rule picks 1.
      result.assignment = fixed.complete(true);
      return result;
    }
    Marginals m;
    try {
      m = provider(current);
      ++result.provider_calls;
    } catch (const std::exception& e) {
      result.diagnostic = std::string("marginal provider failed: ") + e.what();
      return result;
    }
    if (m.num_vars() != n) {
      result.diagnostic = "marginal provider returned the wrong number of variables";
      return result;
    }
    std::vector<bool> present(static_cast<std::size_t>(n) + 1, false);
    for (const auto& clause : current.clauses()) {
      for (Lit lit : clause) present[static_cast<std::size_t>(lit_var(lit))] = true;
    }
    int pick = 0;
    double pick_gap = -1.0;
    double pick_b1 = 0.5;
    for (int v = 1; v <= n; ++v) {
      if (fixed.is_assigned(v)) continue;
      const double b1 = present[static_cast<std::size_t>(v)] ? m.b1(v) : 0.5;
      if (!std::isfinite(b1)) {
        result.diagnostic = "marginal provider returned a non-finite belief";
        return result;
      }
      const double gap = std::abs(b1 - (1.0 - b1));
      if (gap > pick_gap) {
        pick = v;
        pick_gap = gap;
        pick_b1 = b1;
      }
    }
    fixed.set(pick, pick_b1 >= 1.0 - pick_b1);
    SimplifyResult s = simplify(formula, fixed, unit_propagate);
    current = std::move(s.formula);
    fixed = std::move(s.fixed);
  }
  if (current.is_unsat_marker()) {
    result.diagnostic = "simplification derived the empty clause";
    return result;
  }
  result.assignment = fixed.complete(true);
  return result;
}

}  // namespace nsnet
