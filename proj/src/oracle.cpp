#include "nsnet/oracle.hpp"

#include <cmath>
#include <limits>

namespace nsnet {

namespace {

inline std::size_t lit_index(Lit lit) {
  return static_cast<std::size_t>(2 * (lit_var(lit) - 1) + (lit > 0 ? 0 : 1));
}

struct BudgetExceeded {};

// Clause database with incremental satisfied/free counters; shared by the
// enumerator, the counter and the decision procedure.
class SearchState {
 public:
  explicit SearchState(const CnfFormula& formula)
      : formula_(formula),
        num_vars_(formula.num_vars()),
        values_(static_cast<std::size_t>(num_vars_) + 1, -1),
        occurrences_(2 * static_cast<std::size_t>(num_vars_)),
        sat_count_(formula.num_clauses(), 0),
        free_count_(formula.num_clauses(), 0) {
    for (std::size_t c = 0; c < formula.num_clauses(); ++c) {
      const auto& clause = formula.clause(c);
      free_count_[c] = static_cast<int>(clause.size());
      if (clause.empty()) ++falsified_;
      for (Lit lit : clause) occurrences_[lit_index(lit)].push_back(c);
    }
  }

  int num_vars() const { return num_vars_; }
  int value(int var) const { return values_[static_cast<std::size_t>(var)]; }
  bool all_satisfied() const { return satisfied_ == formula_.num_clauses(); }
  bool has_conflict() const { return falsified_ > 0; }
  std::size_t trail_size() const { return trail_.size(); }
  const std::vector<int>& trail() const { return trail_; }

  void assign(Lit lit) {
    const int var = lit_var(lit);
    values_[static_cast<std::size_t>(var)] = lit > 0 ? 1 : 0;
    trail_.push_back(var);
    for (std::size_t c : occurrences_[lit_index(lit)]) {
      if (sat_count_[c]++ == 0) ++satisfied_;
      --free_count_[c];
    }
    for (std::size_t c : occurrences_[lit_index(-lit)]) {
      --free_count_[c];
      if (sat_count_[c] == 0) {
        if (free_count_[c] == 0) {
          ++falsified_;
        } else if (free_count_[c] == 1) {
          units_.push_back(c);
        }
      }
    }
  }

  void undo_to(std::size_t size) {
    while (trail_.size() > size) {
      const int var = trail_.back();
      trail_.pop_back();
      const Lit lit = values_[static_cast<std::size_t>(var)] ? var : -var;
      for (std::size_t c : occurrences_[lit_index(lit)]) {
        ++free_count_[c];
        if (--sat_count_[c] == 0) --satisfied_;
      }
      for (std::size_t c : occurrences_[lit_index(-lit)]) {
        if (sat_count_[c] == 0 && free_count_[c] == 0) --falsified_;
        ++free_count_[c];
      }
      values_[static_cast<std::size_t>(var)] = -1;
    }
    units_.clear();
  }

  /// Assigns forced literals until fixpoint; returns false on conflict.
  bool propagate() {
    if (falsified_ > 0) return false;
    // Unit clauses present before any assignment.
    if (!initial_units_scanned_) {
      initial_units_scanned_ = true;
      for (std::size_t c = 0; c < formula_.num_clauses(); ++c) {
        if (free_count_[c] == 1 && sat_count_[c] == 0) units_.push_back(c);
      }
    }
    while (!units_.empty()) {
      const std::size_t c = units_.back();
      units_.pop_back();
      if (sat_count_[c] > 0 || free_count_[c] != 1) continue;
      for (Lit lit : formula_.clause(c)) {
        if (value(lit_var(lit)) < 0) {
          assign(lit);
          break;
        }
      }
      if (falsified_ > 0) {
        units_.clear();
        return false;
      }
    }
    return true;
  }

  /// Unassigned variable with most occurrences in open clauses (lowest index on ties).
  int pick_branch_var() const {
    std::vector<int> score(static_cast<std::size_t>(num_vars_) + 1, 0);
    for (std::size_t c = 0; c < formula_.num_clauses(); ++c) {
      if (sat_count_[c] > 0) continue;
      for (Lit lit : formula_.clause(c)) {
        if (value(lit_var(lit)) < 0) ++score[static_cast<std::size_t>(lit_var(lit))];
      }
    }
    int best = 0;
    for (int v = 1; v <= num_vars_; ++v) {
      if (value(v) < 0 && (best == 0 || score[static_cast<std::size_t>(v)] >
                                            score[static_cast<std::size_t>(best)])) {
        best = v;
      }
    }
    return best;
  }

  int num_free() const {
    return num_vars_ - static_cast<int>(trail_.size());
  }

 private:
  const CnfFormula& formula_;
  int num_vars_;
  std::vector<int> values_;
  std::vector<std::vector<std::size_t>> occurrences_;
  std::vector<int> sat_count_;
  std::vector<int> free_count_;
  std::vector<int> trail_;
  std::vector<std::size_t> units_;
  std::size_t satisfied_ = 0;
  std::size_t falsified_ = 0;
  bool initial_units_scanned_ = false;
};

class Counter {
 public:
  Counter(const CnfFormula& formula, std::uint64_t budget, bool with_marginals)
      : state_(formula), budget_(budget), with_marginals_(with_marginals) {
    if (with_marginals_) positive_.assign(static_cast<std::size_t>(formula.num_vars()), 0);
  }

  BigInt run() { return count(); }
  const std::vector<BigInt>& positive_counts() const { return positive_; }
  std::uint64_t nodes() const { return nodes_; }

 private:
  BigInt count() {
    if (budget_ != 0 && nodes_ >= budget_) throw BudgetExceeded{};
    ++nodes_;
    const std::size_t mark = state_.trail_size();
    BigInt total = 0;
    if (state_.propagate()) {
      if (state_.all_satisfied()) {
        total = leaf();
      } else {
        const int var = state_.pick_branch_var();
        for (Lit lit : {-var, var}) {
          const std::size_t inner = state_.trail_size();
          state_.assign(lit);
          total += count();
          state_.undo_to(inner);
        }
      }
    }
    state_.undo_to(mark);
    return total;
  }

  BigInt leaf() {
    const int free = state_.num_free();
    BigInt weight = BigInt(1) << free;
    if (with_marginals_) {
      const BigInt half = free > 0 ? BigInt(1) << (free - 1) : BigInt(0);
      for (int v = 1; v <= state_.num_vars(); ++v) {
        const int val = state_.value(v);
        if (val == 1) {
          positive_[static_cast<std::size_t>(v - 1)] += weight;
        } else if (val < 0) {
          positive_[static_cast<std::size_t>(v - 1)] += half;
        }
      }
    }
    return weight;
  }

  SearchState state_;
  std::uint64_t budget_;
  bool with_marginals_;
  std::uint64_t nodes_ = 0;
  std::vector<BigInt> positive_;
};

double ratio(const BigInt& num, const BigInt& den) {
  if (num == den) return 1.0;
  if (num == 0) return 0.0;
  if (boost::multiprecision::msb(den) < 1000) {
    return num.convert_to<double>() / den.convert_to<double>();
  }
  return std::exp(big_ln(num) - big_ln(den));
}

}  // namespace

double big_ln(const BigInt& value) {
  if (value <= 0) return -std::numeric_limits<double>::infinity();
  const auto bits = boost::multiprecision::msb(value);
  if (bits < 1000) return std::log(value.convert_to<double>());
  const auto shift = bits - 60;
  const BigInt top = value >> shift;
  return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

std::vector<Assignment> enumerate_models(const CnfFormula& formula, std::size_t limit) {
  if (formula.num_vars() > kEnumerationVarLimit) {
    throw OracleError("enumeration limited to " + std::to_string(kEnumerationVarLimit) +
                      " variables, formula has " + std::to_string(formula.num_vars()));
  }
  std::vector<Assignment> models;
  if (limit == 0) return models;
  SearchState state(formula);
  if (state.has_conflict()) return models;
  const int n = formula.num_vars();
  Assignment current(n);

  // Depth-first over x1..xn, value 0 before 1: yields lexicographic order.
  auto recurse = [&](auto&& self, int var) -> bool {
    if (var > n) {
      models.push_back(current);
      return models.size() < limit;
    }
    for (int val : {0, 1}) {
      const std::size_t mark = state.trail_size();
      state.assign(val ? var : -var);
      bool keep_going = true;
      if (!state.has_conflict()) {
        current.set(var, val != 0);
        keep_going = self(self, var + 1);
      }
      state.undo_to(mark);
      if (!keep_going) return false;
    }
    return true;
  };
  recurse(recurse, 1);
  return models;
}

CountOutcome exact_count(const CnfFormula& formula, std::uint64_t node_budget,
                         bool with_marginals) {
  CountOutcome out;
  Counter counter(formula, node_budget, with_marginals);
  try {
    out.result.model_count = counter.run();
  } catch (const BudgetExceeded&) {
    out.status = OracleStatus::budget_exceeded;
    out.nodes = counter.nodes();
    return out;
  }
  out.nodes = counter.nodes();
  const BigInt& count = out.result.model_count;
  out.result.ln_count = big_ln(count);
  if (with_marginals && count > 0) {
    std::vector<double> p1;
    p1.reserve(counter.positive_counts().size());
    for (const auto& pos : counter.positive_counts()) p1.push_back(ratio(pos, count));
    out.result.marginals = Marginals(std::move(p1));
  }
  return out;
}

Marginals exact_marginals(const CnfFormula& formula, std::uint64_t node_budget) {
  auto outcome = exact_count(formula, node_budget, true);
  if (outcome.status == OracleStatus::budget_exceeded) {
    throw OracleError("node budget exceeded while computing marginals");
  }
  if (!outcome.result.marginals) {
    throw OracleError("marginals undefined: formula is unsatisfiable");
  }
  return *outcome.result.marginals;
}

Marginals enumerated_marginals(const CnfFormula& formula) {
  const auto models = enumerate_models(formula);
  if (models.empty()) throw OracleError("marginals undefined: formula is unsatisfiable");
  std::vector<double> ones(static_cast<std::size_t>(formula.num_vars()), 0.0);
  for (const auto& m : models) {
    for (int v = 1; v <= formula.num_vars(); ++v) {
      if (m.value(v)) ones[static_cast<std::size_t>(v - 1)] += 1.0;
    }
  }
  for (auto& x : ones) x /= static_cast<double>(models.size());
  return Marginals(std::move(ones));
}

SatOutcome find_model(const CnfFormula& formula, std::uint64_t node_budget) {
  SearchState state(formula);
  std::uint64_t nodes = 0;
  auto search = [&](auto&& self) -> bool {
    if (node_budget != 0 && nodes >= node_budget) throw BudgetExceeded{};
    ++nodes;
    const std::size_t mark = state.trail_size();
    if (state.propagate()) {
      if (state.all_satisfied()) return true;
      const int var = state.pick_branch_var();
      for (Lit lit : {var, -var}) {
        const std::size_t inner = state.trail_size();
        state.assign(lit);
        if (self(self)) return true;
        state.undo_to(inner);
      }
    }
    state.undo_to(mark);
    return false;
  };

  SatOutcome out;
  try {
    if (search(search)) {
      Assignment model(formula.num_vars());
      for (int v = 1; v <= formula.num_vars(); ++v) model.set(v, state.value(v) == 1);
      out.status = SatStatus::sat;
      out.model = std::move(model);
    } else {
      out.status = SatStatus::unsat;
    }
  } catch (const BudgetExceeded&) {
    out.status = SatStatus::unknown;
  }
  return out;
}

}  // namespace nsnet
