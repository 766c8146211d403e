#include "nsnet/factor_graph.hpp"

#include <algorithm>

namespace nsnet {

FactorGraph FactorGraph::build(const CnfFormula& formula) {
  if (formula.is_unsat_marker()) {
    throw CnfError("cannot build a factor graph for the unsatisfiable marker");
  }
  FactorGraph g;
  g.num_vars_ = formula.num_vars();
  g.num_clauses_ = static_cast<int>(formula.num_clauses());
  g.incidences_.reserve(formula.num_literals());
  g.clause_offsets_.reserve(formula.num_clauses() + 1);
  g.clause_offsets_.push_back(0);

  std::vector<int> degree(static_cast<std::size_t>(g.num_vars_), 0);
  for (int a = 0; a < g.num_clauses_; ++a) {
    const auto& clause = formula.clause(static_cast<std::size_t>(a));
    if (clause.empty()) throw CnfError("empty clause in factor graph input");
    for (std::size_t i = 0; i < clause.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (lit_var(clause[i]) == lit_var(clause[j])) {
          throw CnfError("clause " + std::to_string(a + 1) +
                         " mentions variable " + std::to_string(lit_var(clause[i])) +
                         " twice; normalize first");
        }
      }
      const int v = lit_var(clause[i]) - 1;
      g.incidences_.push_back({v, a, lit_positive(clause[i])});
      ++degree[static_cast<std::size_t>(v)];
    }
    g.clause_offsets_.push_back(static_cast<int>(g.incidences_.size()));
  }

  g.var_offsets_.assign(static_cast<std::size_t>(g.num_vars_) + 1, 0);
  for (int v = 0; v < g.num_vars_; ++v) {
    g.var_offsets_[static_cast<std::size_t>(v) + 1] =
        g.var_offsets_[static_cast<std::size_t>(v)] + degree[static_cast<std::size_t>(v)];
  }
  g.var_adjacency_.resize(g.incidences_.size());
  std::vector<int> fill(g.var_offsets_.begin(), g.var_offsets_.end() - 1);
  for (int e = 0; e < g.num_incidences(); ++e) {
    const int v = g.incidences_[static_cast<std::size_t>(e)].var;
    g.var_adjacency_[static_cast<std::size_t>(fill[static_cast<std::size_t>(v)]++)] = e;
  }
  return g;
}

int FactorGraph::max_clause_size() const {
  int best = 0;
  for (int a = 0; a < num_clauses_; ++a) best = std::max(best, clause_size(a));
  return best;
}

std::string FactorGraph::dump_edges() const {
  std::string out;
  for (const auto& inc : incidences_) {
    for (int value = 0; value < 2; ++value) {
      out += std::to_string(inc.var + 1) + ' ' + std::to_string(value) + ' ' +
             std::to_string(inc.clause + 1) + (inc.satisfies(value) ? " sat\n" : " unsat\n");
    }
  }
  return out;
}

}  // namespace nsnet
